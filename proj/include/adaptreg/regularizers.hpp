#pragma once

// Regularization operators R_k = (D^2 + A_k^t A_k)^{-1} D (G G^t)^{-1} G realized
// as explicit d_m0 x n matrices, with their trace and spectral radius cached.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "adaptreg/errors.hpp"
#include "adaptreg/format.hpp"
#include "adaptreg/operator.hpp"

namespace adaptreg {

/// A_k = sqrt(alpha) I.
struct Tikhonov {
    double alpha = 1.0;
};

/// Keep the listed SVD coordinates (1-based), kill the others: a_jj = 0 on the
/// set and +infinity off it.
struct Projection {
    std::vector<std::size_t> indices;

    /// {1, ..., dim}
    static Projection prefix(std::size_t dim) {
        Projection p;
        for (std::size_t j = 1; j <= dim; ++j) p.indices.push_back(j);
        return p;
    }
};

/// Arbitrary diagonal A in the coefficient coordinates; entries may be +infinity.
struct DiagonalPenalty {
    std::vector<double> entries;
};

using RegularizerSpec = std::variant<Tikhonov, Projection, DiagonalPenalty>;

inline std::string kind_name(const RegularizerSpec& spec) {
    return std::visit(
        [](const auto& s) -> std::string {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Tikhonov>) return "tikhonov";
            else if constexpr (std::is_same_v<S, Projection>) return "projection";
            else return "diagonal";
        },
        spec);
}

/// alpha for Tikhonov, model size for projections, NaN otherwise.
inline double parameter_value(const RegularizerSpec& spec) {
    if (const auto* t = std::get_if<Tikhonov>(&spec)) return t->alpha;
    if (const auto* p = std::get_if<Projection>(&spec)) return double(p->indices.size());
    return std::numeric_limits<double>::quiet_NaN();
}

class Regularizer {
public:
    const RegularizerSpec& spec() const { return spec_; }
    const Matrix& matrix() const { return matrix_; }
    double trace_stat() const { return trace_; }
    double radius_stat() const { return radius_; }
    /// Spectral factors f_j = lambda_j / (lambda_j^2 + a_jj^2); empty on the dense path.
    const Vector& filter_values() const { return filter_; }
    /// lambda_j^2 / (lambda_j^2 + a_jj^2), the action of R T in SVD coordinates; empty on the dense path.
    const Vector& shrinkage() const { return shrink_; }
    bool diagonal_in_svd() const { return filter_.size() > 0; }
    bool is_projection() const { return std::holds_alternative<Projection>(spec_); }

private:
    friend Regularizer build_regularizer(const RegularizerSpec&, const DiscretizedOperator&);

    RegularizerSpec spec_;
    Matrix matrix_;
    double trace_ = 0;
    double radius_ = 0;
    Vector filter_;
    Vector shrink_;
};

namespace detail {

/// Squared penalty entries per coordinate; +infinity marks a killed coordinate.
inline std::vector<double> squared_penalties(const RegularizerSpec& spec, std::size_t dim) {
    std::vector<double> a2(dim);
    if (const auto* t = std::get_if<Tikhonov>(&spec)) {
        if (!(t->alpha > 0) || !std::isfinite(t->alpha))
            throw ParameterError("tikhonov regularizer: alpha must be positive and finite");
        std::fill(a2.begin(), a2.end(), t->alpha);
    } else if (const auto* p = std::get_if<Projection>(&spec)) {
        if (p->indices.empty()) throw ParameterError("projection regularizer: empty index set");
        std::fill(a2.begin(), a2.end(), std::numeric_limits<double>::infinity());
        for (auto j : p->indices) {
            if (j == 0 || j > dim)
                throw ParameterError("projection regularizer: index " + std::to_string(j) + " outside [1, d_m0]");
            a2[j - 1] = 0.0;
        }
    } else {
        const auto& d = std::get<DiagonalPenalty>(spec);
        if (d.entries.size() != dim) throw DimensionError("diagonal regularizer: need one entry per coefficient");
        bool any_finite = false;
        for (std::size_t j = 0; j < dim; ++j) {
            const double a = d.entries[j];
            if (std::isnan(a) || a < 0) throw ParameterError("diagonal regularizer: entries must lie in [0, +inf]");
            a2[j] = std::isinf(a) ? a : a * a;
            any_finite = any_finite || std::isfinite(a);
        }
        if (!any_finite) throw ParameterError("diagonal regularizer: at least one entry must be finite");
    }
    return a2;
}

}  // namespace detail

inline Regularizer build_regularizer(const RegularizerSpec& spec, const DiscretizedOperator& op) {
    const std::size_t d = op.dim();
    const double n = double(op.n());
    const auto a2 = detail::squared_penalties(spec, d);
    const Vector& lambda = op.singular_values();

    Regularizer reg;
    reg.spec_ = spec;
    const bool svd_path = !std::holds_alternative<DiagonalPenalty>(spec) || op.svd_aligned();
    if (svd_path) {
        reg.filter_.resize(Eigen::Index(d));
        reg.shrink_.resize(Eigen::Index(d));
        for (std::size_t j = 0; j < d; ++j) {
            const auto k = Eigen::Index(j);
            if (std::isinf(a2[j])) {
                // limit of the resolvent as a_jj -> infinity
                reg.filter_[k] = 0.0;
                reg.shrink_[k] = 0.0;
            } else {
                const double l2 = lambda[k] * lambda[k];
                reg.filter_[k] = lambda[k] / (l2 + a2[j]);
                reg.shrink_[k] = l2 / (l2 + a2[j]);
            }
        }
        reg.matrix_ = op.right_vectors() * reg.filter_.asDiagonal() * op.left_samples() / n;
        // R R^t = V diag(f^2 / n) V^t
        reg.trace_ = reg.filter_.squaredNorm() / n;
        reg.radius_ = reg.filter_.cwiseAbs2().maxCoeff() / n;
        return reg;
    }

    // A is diagonal in the raw coefficients but the SVD is rotated: solve the
    // normal equations restricted to the coordinates with finite penalty.
    std::vector<Eigen::Index> keep;
    for (std::size_t j = 0; j < d; ++j)
        if (std::isfinite(a2[j])) keep.push_back(Eigen::Index(j));
    const Matrix& V = op.right_vectors();
    const Matrix normal = V * lambda.cwiseAbs2().asDiagonal() * V.transpose();
    const Matrix rhs = V * lambda.asDiagonal() * op.left_samples() / n;
    const auto s = Eigen::Index(keep.size());
    Matrix K(s, s), b(s, rhs.cols());
    for (Eigen::Index i = 0; i < s; ++i) {
        b.row(i) = rhs.row(keep[std::size_t(i)]);
        for (Eigen::Index j = 0; j < s; ++j) K(i, j) = normal(keep[std::size_t(i)], keep[std::size_t(j)]);
        K(i, i) += a2[std::size_t(keep[std::size_t(i)])];
    }
    const Matrix sol = K.ldlt().solve(b);
    reg.matrix_ = Matrix::Zero(Eigen::Index(d), rhs.cols());
    for (Eigen::Index i = 0; i < s; ++i) reg.matrix_.row(keep[std::size_t(i)]) = sol.row(i);
    const Vector eig =
        Eigen::SelfAdjointEigenSolver<Matrix>(reg.matrix_ * reg.matrix_.transpose(), Eigen::EigenvaluesOnly)
            .eigenvalues();
    reg.trace_ = eig.sum();
    reg.radius_ = eig.maxCoeff();
    return reg;
}

/// (Tr(R^t R), rho^2(R)).
inline std::pair<double, double> trace_radius(const Regularizer& reg) { return {reg.trace_stat(), reg.radius_stat()}; }

/// x_hat_k = R_k y.
inline Vector apply_regularizer(const Regularizer& reg, const Vector& y) {
    if (y.size() != reg.matrix().cols()) throw DimensionError("apply_regularizer: sample length mismatch");
    return reg.matrix() * y;
}

/// x_k = R_k T x0, the noiseless image of x0 through the regularizer.
inline Vector regularized_truth(const Regularizer& reg, const DiscretizedOperator& op, const Vector& x0) {
    return apply_regularizer(reg, op.forward(x0));
}

enum class FamilyKind { tikhonov, projection, mixed };

inline std::string family_kind_name(FamilyKind k) {
    switch (k) {
        case FamilyKind::tikhonov: return "tikhonov";
        case FamilyKind::projection: return "projection";
        default: return "mixed";
    }
}

/// The candidate set {R_k, k in K_n}, all built on the same operator.
class RegularizerFamily {
public:
    RegularizerFamily() = default;
    explicit RegularizerFamily(std::vector<Regularizer> candidates) : candidates_(std::move(candidates)) {
        if (candidates_.empty()) throw ParameterError("RegularizerFamily: empty family");
        bool all_t = true, all_p = true;
        for (const auto& c : candidates_) {
            all_t = all_t && std::holds_alternative<Tikhonov>(c.spec());
            all_p = all_p && c.is_projection();
        }
        kind_ = all_t ? FamilyKind::tikhonov : all_p ? FamilyKind::projection : FamilyKind::mixed;
    }

    FamilyKind kind() const { return kind_; }
    std::size_t size() const { return candidates_.size(); }
    const Regularizer& operator[](std::size_t k) const { return candidates_[k]; }
    auto begin() const { return candidates_.begin(); }
    auto end() const { return candidates_.end(); }

private:
    std::vector<Regularizer> candidates_;
    FamilyKind kind_ = FamilyKind::mixed;
};

/// True when d_m0 >= alpha^(-1/(2p)), i.e. alpha >= d_m0^(-2p).
inline bool satisfies_grid_condition(double alpha, std::size_t dim, double p) {
    if (!(p > 0)) return true;
    return alpha >= std::pow(double(dim), -2.0 * p) * (1 - 1e-12);
}

/// alpha_k = alpha_max ratio^k, k = 0, 1, ..., stopped before alpha drops below
/// d_m0^(-2p) and after `count` values when count > 0.
inline std::vector<double> tikhonov_grid(double alpha_max, double ratio, std::size_t count, std::size_t dim,
                                         double p) {
    if (!(alpha_max > 0) || !std::isfinite(alpha_max)) throw ParameterError("tikhonov grid: alpha_max must be positive");
    if (!(ratio > 0 && ratio < 1)) throw ParameterError("tikhonov grid: ratio must lie in (0, 1)");
    if (!satisfies_grid_condition(alpha_max, dim, p))
        throw ParameterError("tikhonov grid: alpha_max below d_m0^(-2p); enlarge the model or alpha_max");
    std::vector<double> alphas;
    for (double a = alpha_max; satisfies_grid_condition(a, dim, p); a *= ratio) {
        alphas.push_back(a);
        if (count > 0 && alphas.size() == count) break;
        if (!(p > 0) && count == 0 && alphas.size() == 64) break;
    }
    return alphas;
}

/// Builds every spec on `op`. Tikhonov members must satisfy the grid condition.
inline RegularizerFamily make_family(const std::vector<RegularizerSpec>& specs, const DiscretizedOperator& op) {
    std::vector<Regularizer> regs;
    regs.reserve(specs.size());
    for (const auto& s : specs) {
        if (const auto* t = std::get_if<Tikhonov>(&s))
            if (!satisfies_grid_condition(t->alpha, op.dim(), op.degree()))
                throw ParameterError("make_family: alpha = " + format_number(t->alpha) +
                                     " violates d_m0 >= alpha^(-1/(2p))");
        regs.push_back(build_regularizer(s, op));
    }
    return RegularizerFamily(std::move(regs));
}

/// Geometric Tikhonov family, largest alpha first.
inline RegularizerFamily tikhonov_family(const DiscretizedOperator& op, double alpha_max = 1.0, double ratio = 0.5,
                                         std::size_t count = 0) {
    std::vector<RegularizerSpec> specs;
    for (double a : tikhonov_grid(alpha_max, ratio, count, op.dim(), op.degree())) specs.emplace_back(Tikhonov{a});
    return make_family(specs, op);
}

/// Nested prefixes {1..j} for j in dims (all of 1..d_m0 when dims is empty), smallest first.
inline RegularizerFamily projection_family(const DiscretizedOperator& op, std::vector<std::size_t> dims = {}) {
    if (dims.empty())
        for (std::size_t j = 1; j <= op.dim(); ++j) dims.push_back(j);
    std::sort(dims.begin(), dims.end());
    dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
    std::vector<RegularizerSpec> specs;
    for (auto j : dims) specs.emplace_back(Projection::prefix(j));
    return make_family(specs, op);
}

/// Structured-text family description (keys: kind, alpha_max, ratio, count | dims).
struct FamilySpec {
    FamilyKind kind = FamilyKind::tikhonov;
    double alpha_max = 1.0;
    double ratio = 0.5;
    std::size_t count = 0;
    std::vector<std::size_t> dims;
};

inline RegularizerFamily build_family(const FamilySpec& spec, const DiscretizedOperator& op) {
    switch (spec.kind) {
        case FamilyKind::tikhonov: return tikhonov_family(op, spec.alpha_max, spec.ratio, spec.count);
        case FamilyKind::projection: return projection_family(op, spec.dims);
        default: throw ParameterError("build_family: a mixed family has no default construction");
    }
}

/// One CSV row per candidate: k, kind, parameter, trace_stat, radius_stat.
inline void write_family_stats(std::ostream& os, const RegularizerFamily& family) {
    os << "k,kind,parameter,trace_stat,radius_stat\n";
    for (std::size_t k = 0; k < family.size(); ++k) {
        const auto& r = family[k];
        os << k << ',' << kind_name(r.spec()) << ',' << format_number(parameter_value(r.spec())) << ','
           << format_number(r.trace_stat()) << ',' << format_number(r.radius_stat()) << '\n';
    }
}

}  // namespace adaptreg
