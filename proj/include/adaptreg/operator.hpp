#pragma once

// Design grids, the empirical geometry they induce, and the forward operator
// projected onto the largest observation model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "adaptreg/errors.hpp"
#include "adaptreg/stats.hpp"

namespace adaptreg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Singular values below this fraction of the largest one count as zero.
inline constexpr double kRankTolerance = 1e-12;

/// Fixed design t_1 < ... < t_n.
class DesignGrid {
public:
    explicit DesignGrid(std::vector<double> points) : points_(std::move(points)) {
        if (points_.empty()) throw ParameterError("DesignGrid: need at least one point");
        for (std::size_t i = 1; i < points_.size(); ++i)
            if (!(points_[i] > points_[i - 1]))
                throw ParameterError("DesignGrid: points must be strictly increasing (index " +
                                     std::to_string(i) + ")");
    }

    /// t_i = (i - 1/2) / n, the grid on which the cosine basis is empirically orthogonal.
    static DesignGrid midpoint(std::size_t n) {
        if (n == 0) throw ParameterError("DesignGrid: need at least one point");
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = (double(i) + 0.5) / double(n);
        return DesignGrid(std::move(t));
    }

    std::size_t size() const { return points_.size(); }
    double operator[](std::size_t i) const { return points_[i]; }
    const std::vector<double>& points() const { return points_; }

private:
    std::vector<double> points_;
};

/// Basis of the observation space, evaluated as phi(j, t) with j starting at 1.
class BasisFamily {
public:
    enum class Kind { cosine, table };

    /// phi_1 = 1, phi_j(t) = sqrt(2) cos((j - 1) pi t) on [0, 1].
    static BasisFamily cosine() { return BasisFamily(Kind::cosine, {}, {}); }

    /// samples(i, j - 1) = phi_j(t_i); only evaluable on the points of `grid`.
    static BasisFamily table(const DesignGrid& grid, Matrix samples) {
        if (std::size_t(samples.rows()) != grid.size())
            throw DimensionError("BasisFamily::table: one row per grid point expected");
        if (!samples.allFinite()) throw ParameterError("BasisFamily::table: non-finite sample");
        return BasisFamily(Kind::table, grid.points(), std::move(samples));
    }

    Kind kind() const { return kind_; }

    std::size_t max_dim() const {
        return kind_ == Kind::cosine ? std::numeric_limits<std::size_t>::max() : std::size_t(table_.cols());
    }

    double operator()(std::size_t j, double t) const {
        if (j == 0 || j > max_dim()) throw DimensionError("BasisFamily: index " + std::to_string(j) + " out of range");
        if (kind_ == Kind::cosine)
            return j == 1 ? 1.0 : std::numbers::sqrt2 * std::cos(double(j - 1) * std::numbers::pi * t);
        auto it = std::lower_bound(points_.begin(), points_.end(), t);
        if (it == points_.end() || *it != t)
            throw ParameterError("BasisFamily: tabulated basis not defined at t = " + std::to_string(t));
        return table_(it - points_.begin(), Eigen::Index(j - 1));
    }

private:
    BasisFamily(Kind kind, std::vector<double> points, Matrix table)
        : kind_(kind), points_(std::move(points)), table_(std::move(table)) {}

    Kind kind_;
    std::vector<double> points_;
    Matrix table_;
};

/// G with G(j, i) = phi_j(t_i); full row rank.
struct DesignMatrix {
    Matrix G;

    std::size_t dim() const { return std::size_t(G.rows()); }
    std::size_t n() const { return std::size_t(G.cols()); }
};

namespace detail {

inline void check_full_row_rank(const Matrix& G, const char* who) {
    Eigen::JacobiSVD<Matrix> svd(G);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0 || s[s.size() - 1] <= kRankTolerance * s[0])
        throw DegenerateDesignError(std::string(who) + ": design matrix is rank deficient");
}

/// Symmetric square root and inverse square root of a positive definite matrix.
inline std::pair<Matrix, Matrix> sqrt_and_inverse_sqrt(const Matrix& K) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(K);
    const Vector& w = eig.eigenvalues();
    if (w.size() == 0 || w[0] <= kRankTolerance * w[w.size() - 1])
        throw DegenerateDesignError("normal matrix is singular");
    const Matrix& Q = eig.eigenvectors();
    Matrix root = Q * w.cwiseSqrt().asDiagonal() * Q.transpose();
    Matrix inv_root = Q * w.cwiseSqrt().cwiseInverse().asDiagonal() * Q.transpose();
    return {std::move(root), std::move(inv_root)};
}

/// Solves (G G^t) c = G y for every column of y.
inline Matrix normal_solve(const Matrix& G, const Matrix& y) {
    Matrix normal = G * G.transpose();
    Eigen::LLT<Matrix> llt(normal);
    if (llt.info() != Eigen::Success) throw DegenerateDesignError("normal matrix is not positive definite");
    const Vector d = llt.matrixLLT().diagonal();
    if (d.minCoeff() <= std::sqrt(kRankTolerance) * d.maxCoeff())
        throw DegenerateDesignError("normal matrix is numerically singular");
    return llt.solve(G * y);
}

}  // namespace detail

inline DesignMatrix build_design_matrix(const BasisFamily& basis, const DesignGrid& grid, std::size_t dim) {
    if (dim == 0) throw ParameterError("build_design_matrix: model dimension must be positive");
    if (dim > grid.size())
        throw DimensionError("build_design_matrix: model dimension " + std::to_string(dim) +
                             " exceeds the number of design points " + std::to_string(grid.size()));
    if (dim > basis.max_dim())
        throw DimensionError("build_design_matrix: basis has only " + std::to_string(basis.max_dim()) + " functions");
    DesignMatrix dm{Matrix(Eigen::Index(dim), Eigen::Index(grid.size()))};
    for (std::size_t j = 0; j < dim; ++j)
        for (std::size_t i = 0; i < grid.size(); ++i) dm.G(Eigen::Index(j), Eigen::Index(i)) = basis(j + 1, grid[i]);
    detail::check_full_row_rank(dm.G, "build_design_matrix");
    return dm;
}

/// ||v||_n = sqrt(mean of squares).
inline double empirical_norm(const Vector& v, const DesignGrid& grid) {
    if (std::size_t(v.size()) != grid.size()) throw DimensionError("empirical_norm: length mismatch");
    return std::sqrt(v.squaredNorm() / double(grid.size()));
}

/// <y, e>_n = (1/n) sum_i e_i y_i.
inline double empirical_scalar_product(const Vector& y, const Vector& e, const DesignGrid& grid) {
    if (std::size_t(y.size()) != grid.size() || std::size_t(e.size()) != grid.size())
        throw DimensionError("empirical_scalar_product: length mismatch");
    return y.dot(e) / double(grid.size());
}

/// Coefficients of the empirical least-squares projection of y onto span(phi_1..phi_d).
inline Vector empirical_projection(const Vector& y, const DesignMatrix& dm) {
    if (std::size_t(y.size()) != dm.n()) throw DimensionError("empirical_projection: length mismatch");
    return detail::normal_solve(dm.G, y);
}

/// Samples of sum_j c_j phi_j on the grid.
inline Vector reconstruct(const Vector& coefficients, const DesignMatrix& dm) {
    if (std::size_t(coefficients.size()) != dm.dim()) throw DimensionError("reconstruct: length mismatch");
    return dm.G.transpose() * coefficients;
}

/// T = identity between the coefficient space and the observation basis.
struct IdentityOperator {};

/// T acts diagonally on the basis with singular values j^(-p).
struct SpectralOperator {
    double p = 1.0;
};

/// Explicit samples images(i, j - 1) = (T phi_j)(t_i).
struct SampledOperator {
    Matrix images;
    std::optional<double> p;  // fitted from the singular values when absent
};

using OperatorSpec = std::variant<IdentityOperator, SpectralOperator, SampledOperator>;

/// The forward operator after projection onto the model Y_{m0}, held through its
/// SVD in the empirical geometry:
///   T_{m0} x  = Psi^t D V^t x   (samples on the grid)
///   T^t_{m0} u = V D Psi u / n
/// where the rows of Psi are the left singular functions sampled on the grid
/// (Psi Psi^t = n I) and the columns of V are the right singular vectors.
class DiscretizedOperator {
public:
    DiscretizedOperator(DesignGrid grid, DesignMatrix design, Vector singular_values, Matrix right, Matrix left,
                        double degree, bool aligned)
        : grid_(std::move(grid)),
          design_(std::move(design)),
          lambda_(std::move(singular_values)),
          right_(std::move(right)),
          left_(std::move(left)),
          degree_(degree),
          aligned_(aligned) {
        const auto d = lambda_.size();
        if (d == 0) throw DimensionError("DiscretizedOperator: empty spectrum");
        if (right_.rows() != d || right_.cols() != d || left_.rows() != d ||
            std::size_t(left_.cols()) != grid_.size() || std::size_t(design_.dim()) != std::size_t(d))
            throw DimensionError("DiscretizedOperator: inconsistent component sizes");
        for (Eigen::Index j = 1; j < d; ++j)
            if (lambda_[j] > lambda_[j - 1]) throw ParameterError("DiscretizedOperator: singular values must decrease");
        if (!(lambda_[d - 1] > kRankTolerance * lambda_[0])) throw RankError("DiscretizedOperator: zero singular value");
    }

    const DesignGrid& grid() const { return grid_; }
    const DesignMatrix& design() const { return design_; }
    std::size_t dim() const { return std::size_t(lambda_.size()); }
    std::size_t n() const { return grid_.size(); }
    const Vector& singular_values() const { return lambda_; }
    const Matrix& right_vectors() const { return right_; }
    const Matrix& left_samples() const { return left_; }
    double degree() const { return degree_; }
    /// True when the right singular vectors are the coordinate axes, so SVD
    /// coordinates coincide with the coefficient coordinates.
    bool svd_aligned() const { return aligned_; }

    Vector forward(const Vector& x) const {
        if (std::size_t(x.size()) != dim()) throw DimensionError("forward: coefficient length mismatch");
        return left_.transpose() * lambda_.cwiseProduct(right_.transpose() * x);
    }

    /// n x d matrix of forward samples.
    Matrix forward_matrix() const { return left_.transpose() * lambda_.asDiagonal() * right_.transpose(); }

    Vector adjoint(const Vector& u) const {
        if (std::size_t(u.size()) != n()) throw DimensionError("adjoint: sample length mismatch");
        return right_ * lambda_.cwiseProduct(left_ * u) / double(n());
    }

    /// Empirical coefficients Psi y / n of the samples on the left singular functions.
    Vector svd_coordinates(const Vector& y) const {
        if (std::size_t(y.size()) != n()) throw DimensionError("svd_coordinates: sample length mismatch");
        return left_ * y / double(n());
    }

    /// T^+_{m0} Pi^n y, the unregularized inverse.
    Vector pseudo_inverse(const Vector& y) const {
        return right_ * svd_coordinates(y).cwiseQuotient(lambda_);
    }

private:
    DesignGrid grid_;
    DesignMatrix design_;
    Vector lambda_;
    Matrix right_;
    Matrix left_;
    double degree_;
    bool aligned_;
};

namespace detail {

inline bool is_orthonormal_design(const DesignMatrix& dm) {
    const Matrix gram = dm.G * dm.G.transpose() / double(dm.n());
    return (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= 1e-10;
}

inline double fitted_degree(const Vector& lambda) {
    if (lambda.size() < 2) return 0.0;
    std::vector<double> j(std::size_t(lambda.size())), l(std::size_t(lambda.size()));
    for (Eigen::Index k = 0; k < lambda.size(); ++k) {
        j[std::size_t(k)] = double(k + 1);
        l[std::size_t(k)] = lambda[k];
    }
    return std::max(0.0, -log_log_fit(j, l).slope);
}

inline DiscretizedOperator from_images(const DesignGrid& grid, DesignMatrix dm, const Matrix& images,
                                       std::optional<double> degree) {
    if (std::size_t(images.rows()) != grid.size() || std::size_t(images.cols()) != dm.dim())
        throw DimensionError("discretize_operator: image samples must be n x d_m0");
    const double n = double(grid.size());
    // Y-coefficients of the projected images, then the same map in an
    // empirically orthonormal frame of Y_{m0}.
    const Matrix coeffs = normal_solve(dm.G, images);
    const auto [root, inv_root] = sqrt_and_inverse_sqrt(dm.G * dm.G.transpose() / n);
    Eigen::JacobiSVD<Matrix> svd(root * coeffs, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();
    if (s[0] <= 0.0 || s[s.size() - 1] <= kRankTolerance * s[0])
        throw RankError("discretize_operator: projected operator has a zero singular value");
    Matrix U = svd.matrixU();
    Matrix V = svd.matrixV();
    for (Eigen::Index j = 0; j < V.cols(); ++j) {
        Eigen::Index at;
        V.col(j).cwiseAbs().maxCoeff(&at);
        if (V(at, j) < 0) {
            V.col(j) *= -1.0;
            U.col(j) *= -1.0;
        }
    }
    Matrix left = U.transpose() * inv_root * dm.G;
    const double p = degree ? *degree : fitted_degree(s);
    const bool aligned = V.isIdentity(1e-14);
    return DiscretizedOperator(grid, std::move(dm), s, std::move(V), std::move(left), p, aligned);
}

}  // namespace detail

/// Projects the operator described by `spec` onto the first `dim` basis functions.
inline DiscretizedOperator discretize_operator(const OperatorSpec& spec, const BasisFamily& basis,
                                               const DesignGrid& grid, std::size_t dim) {
    DesignMatrix dm = build_design_matrix(basis, grid, dim);
    if (const auto* s = std::get_if<SpectralOperator>(&spec)) {
        if (!(s->p > 0)) throw ParameterError("discretize_operator: degree p must be positive");
        Vector lambda(static_cast<Eigen::Index>(dim));
        for (std::size_t j = 0; j < dim; ++j) lambda[Eigen::Index(j)] = std::pow(double(j + 1), -s->p);
        if (lambda[Eigen::Index(dim) - 1] <= kRankTolerance * lambda[0])
            throw RankError("discretize_operator: spectrum decays below the rank tolerance");
        if (detail::is_orthonormal_design(dm)) {
            Matrix left = dm.G;
            return DiscretizedOperator(grid, std::move(dm), std::move(lambda),
                                       Matrix::Identity(Eigen::Index(dim), Eigen::Index(dim)), std::move(left), s->p,
                                       true);
        }
        const Matrix images = dm.G.transpose() * lambda.asDiagonal();
        return detail::from_images(grid, std::move(dm), images, s->p);
    }
    if (std::holds_alternative<IdentityOperator>(spec)) {
        const Matrix images = dm.G.transpose();
        return detail::from_images(grid, std::move(dm), images, 0.0);
    }
    const auto& sampled = std::get<SampledOperator>(spec);
    if (!sampled.images.allFinite()) throw ParameterError("discretize_operator: non-finite image sample");
    return detail::from_images(grid, std::move(dm), sampled.images, sampled.p);
}

/// Smallest d_{m0} with d_{m0} >= n^(1/(2p+1)), capped at n.
inline std::size_t choose_m0(std::size_t n, double p) {
    if (n == 0) throw ParameterError("choose_m0: n must be positive");
    if (!(p > 0)) throw ParameterError("choose_m0: p must be positive");
    const double x = std::pow(double(n), 1.0 / (2.0 * p + 1.0));
    const double nearest = std::round(x);
    const double d = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
    return std::min<std::size_t>(n, std::max<std::size_t>(1, std::size_t(d)));
}

struct DiagnosticTolerances {
    double max_spread = 10.0;  // largest admissible k2/k1 and a2/a1
    double max_ratio = 10.0;   // largest admissible gamma^(m)/gamma_m
    double slack = 1e-10;      // relative slack on the ordering checks
};

struct ModelDiagnostics {
    std::size_t dim = 0;
    double gamma_upper = 0;  // ||(I - Pi^n_{Y_m}) T||
    double gamma_lower = 0;  // inf over unit v in Y_m of ||T_m^* v||
    double nu = 0;           // ||T_m^+ Pi^n_{Y_m}||
};

struct IllposednessDiagnostics {
    std::vector<ModelDiagnostics> models;
    double ratio_bound = 0;  // max gamma^(m)/gamma_m, an estimate of sqrt(U)
    double k1 = 0, k2 = 0;   // k1 j^-p <= lambda_j <= k2 j^-p over the supplied dims
    double a1 = 0, a2 = 0;   // a1 n <= eig(G G^t) <= a2 n
    bool sv_ok = false;
    bool sf_ok = false;
    bool as_ok = false;
    bool ordering_ok = false;    // nu_m >= gamma_m and gamma_{m+1} <= gamma^(m)
    bool monotone_upper = false; // gamma^(m) non-increasing along the dims
};

/// Ill-posedness constants of `op` on the nested models spanned by the first
/// d_m basis functions, for every d_m in `dims`. Violations are reported
/// through the flags.
inline IllposednessDiagnostics diagnostics(const DiscretizedOperator& op, std::vector<std::size_t> dims,
                                           const DiagnosticTolerances& tol = {}) {
    std::sort(dims.begin(), dims.end());
    dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
    for (auto d : dims)
        if (d == 0 || d > op.dim())
            throw DimensionError("diagnostics: model dimension " + std::to_string(d) + " outside [1, d_m0]");

    IllposednessDiagnostics out;
    const Matrix M = op.forward_matrix();
    const Matrix& G = op.design().G;
    const double n = double(op.n());
    const double p = op.degree();

    for (auto d : dims) {
        const Matrix Gm = G.topRows(Eigen::Index(d));
        const Matrix coeffs = detail::normal_solve(Gm, M);
        const Matrix residual = M - Gm.transpose() * coeffs;
        ModelDiagnostics md;
        md.dim = d;
        md.gamma_upper = Eigen::JacobiSVD<Matrix>(residual).singularValues()[0] / std::sqrt(n);
        const auto [root, inv_root] = detail::sqrt_and_inverse_sqrt(Gm * Gm.transpose() / n);
        const Matrix Bm = inv_root * Gm * M / n;
        const Vector s = Eigen::JacobiSVD<Matrix>(Bm).singularValues();
        md.gamma_lower = s[s.size() - 1];
        md.nu = 1.0 / md.gamma_lower;
        out.models.push_back(md);
    }

    out.ordering_ok = true;
    out.monotone_upper = true;
    for (std::size_t i = 0; i < out.models.size(); ++i) {
        const auto& m = out.models[i];
        if (m.gamma_upper > 0) out.ratio_bound = std::max(out.ratio_bound, m.gamma_upper / m.gamma_lower);
        if (m.nu < m.gamma_lower * (1 - tol.slack)) out.ordering_ok = false;
        if (i + 1 < out.models.size()) {
            const auto& next = out.models[i + 1];
            if (next.gamma_lower > m.gamma_upper * (1 + tol.slack) + tol.slack) out.ordering_ok = false;
            if (next.gamma_upper > m.gamma_upper * (1 + tol.slack) + tol.slack) out.monotone_upper = false;
        }
    }

    const Vector& lambda = op.singular_values();
    out.k1 = std::numeric_limits<double>::infinity();
    out.k2 = 0;
    for (auto d : dims) {
        const double k = lambda[Eigen::Index(d) - 1] * std::pow(double(d), p);
        out.k1 = std::min(out.k1, k);
        out.k2 = std::max(out.k2, k);
    }
    if (dims.empty()) out.k1 = 0;

    const Vector eig = Eigen::SelfAdjointEigenSolver<Matrix>(G * G.transpose() / n, Eigen::EigenvaluesOnly).eigenvalues();
    out.a1 = eig.minCoeff();
    out.a2 = eig.maxCoeff();

    out.sv_ok = !dims.empty() && out.k1 > 0 && out.k2 <= tol.max_spread * out.k1;
    out.sf_ok = out.a1 > 0 && out.a2 <= tol.max_spread * out.a1;
    out.as_ok = out.ratio_bound <= tol.max_ratio;
    return out;
}

}  // namespace adaptreg
