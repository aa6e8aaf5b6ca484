#pragma once

// Suprema of linear forms of the noise and Monte Carlo checks of their tail
// and truncated-moment bounds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "adaptreg/errors.hpp"
#include "adaptreg/format.hpp"
#include "adaptreg/operator.hpp"
#include "adaptreg/random.hpp"
#include "adaptreg/selection.hpp"
#include "adaptreg/stats.hpp"

namespace adaptreg {

/// Centered noise laws with E eps^2 = sigma^2.
struct NoiseLaw {
    enum class Kind { gaussian, two_point };
    Kind kind = Kind::gaussian;
    double sigma = 1.0;

    static NoiseLaw gaussian(double sigma) { return {Kind::gaussian, sigma}; }
    /// +sigma or -sigma with probability 1/2 each.
    static NoiseLaw two_point(double sigma) { return {Kind::two_point, sigma}; }

    Vector sample(Rng& rng, Eigen::Index n) const {
        if (kind == Kind::gaussian) return sigma * standard_normal(rng, n);
        std::bernoulli_distribution coin(0.5);
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = coin(rng) ? sigma : -sigma;
        return v;
    }

    /// E |eps / sigma|^q.
    double absolute_moment(int q) const {
        if (kind == Kind::two_point) return 1.0;
        return std::pow(2.0, q / 2.0) * std::tgamma((q + 1) / 2.0) / std::sqrt(std::numbers::pi);
    }
};

inline const char* noise_name(const NoiseLaw& law) {
    return law.kind == NoiseLaw::Kind::gaussian ? "gaussian" : "two_point";
}

struct MomentCondition {
    int q = 0;
    double moment = 0;  // E|eps/sigma|^q
    double limit = 0;   // q!/2
    bool holds = false;
};

/// E|eps/sigma|^q against q!/2 for q in [q_min, q_max].
inline std::vector<MomentCondition> moment_conditions(const NoiseLaw& law, int q_min, int q_max) {
    std::vector<MomentCondition> out;
    for (int q = q_min; q <= q_max; ++q) {
        MomentCondition m;
        m.q = q;
        m.moment = law.absolute_moment(q);
        m.limit = std::tgamma(q + 1.0) / 2.0;
        m.holds = m.moment <= m.limit * (1 + 1e-12);  // equality at q = 2
        out.push_back(m);
    }
    return out;
}

struct QuadFormSpec {
    Matrix A;  // k x n
    NoiseLaw noise;
    std::size_t replications = 10000;
    std::uint64_t seed = 1;
    unsigned threads = 1;

    void validate() const {
        if (A.rows() == 0 || A.cols() == 0) throw DimensionError("QuadFormSpec: empty matrix");
        if (replications == 0) throw ParameterError("QuadFormSpec: need at least one replication");
        if (!(noise.sigma > 0)) throw ParameterError("QuadFormSpec: sigma must be positive");
    }
};

/// sup over unit u of sum_i eps_i (A^t u)_i, attained at u = A eps / ||A eps||.
inline double eta(const Matrix& A, const Vector& eps) {
    if (A.cols() != eps.size()) throw DimensionError("eta: noise length does not match the matrix");
    return (A * eps).norm();
}

/// (Tr(A^t A), rho(A^t A)).
inline std::pair<double, double> trace_and_radius(const Matrix& A) {
    const Vector eig =
        Eigen::SelfAdjointEigenSolver<Matrix>(A * A.transpose(), Eigen::EigenvaluesOnly).eigenvalues();
    return {A.squaredNorm(), eig.maxCoeff()};
}

/// Per-coordinate envelopes z_i = sum_j (A^t e_j)_i^2 / rho(A^t A); they sum to Tr/rho.
inline Vector z_envelopes(const Matrix& A) {
    const double rho = trace_and_radius(A).second;
    return A.colwise().squaredNorm().transpose() / rho;
}

struct IdentityCheck {
    double lhs = 0;  // sup over unit-norm y in Y_m of |<eps, y>_n|
    double rhs = 0;  // ||Pi^n eps||_n
    double gap = 0;
};

/// Compares the supremum of |<eps, y>_n| over the empirical unit sphere of Y_m
/// with ||Pi^n eps||_n. The supremum is evaluated at the maximizer
/// Pi^n eps / ||Pi^n eps||_n together with `probes` random unit directions.
inline IdentityCheck projection_identity_check(const Vector& eps, const DesignMatrix& dm, std::size_t probes = 256,
                                               std::uint64_t seed = 7) {
    if (std::size_t(eps.size()) != dm.n()) throw DimensionError("projection_identity_check: length mismatch");
    const double n = double(dm.n());
    auto norm_n = [&](const Vector& v) { return std::sqrt(v.squaredNorm() / n); };
    const Vector projected = reconstruct(empirical_projection(eps, dm), dm);
    IdentityCheck out;
    out.rhs = norm_n(projected);
    if (out.rhs == 0.0) return out;
    out.lhs = std::abs(eps.dot(projected / out.rhs) / n);
    Rng rng = make_stream(seed, 0x4c454d4d41, 0);
    for (std::size_t k = 0; k < probes; ++k) {
        const Vector y = reconstruct(standard_normal(rng, Eigen::Index(dm.dim())), dm);
        out.lhs = std::max(out.lhs, std::abs(eps.dot(y / norm_n(y)) / n));
    }
    out.gap = std::abs(out.lhs - out.rhs);
    return out;
}

struct IdentityTrial {
    std::size_t trial = 0;
    std::size_t n = 0;
    std::size_t dim = 0;
    bool midpoint = true;  // otherwise sorted uniform design points
    IdentityCheck check;
};

/// Random (eps, G) pairs: cosine design of size dim <= max_dim on n <= max_n
/// points, alternating between the midpoint grid and sorted uniform draws.
inline std::vector<IdentityTrial> identity_trials(std::size_t trials, std::size_t max_dim, std::size_t max_n,
                                                  std::uint64_t seed) {
    if (max_dim == 0 || max_n < max_dim) throw ParameterError("identity_trials: need 1 <= max_dim <= max_n");
    std::vector<IdentityTrial> out;
    for (std::size_t k = 0; k < trials; ++k) {
        Rng rng = make_stream(seed, 0x49444e54, k);
        IdentityTrial t;
        t.trial = k;
        t.dim = std::uniform_int_distribution<std::size_t>(1, max_dim)(rng);
        t.n = std::uniform_int_distribution<std::size_t>(std::max<std::size_t>(t.dim, 2), max_n)(rng);
        t.midpoint = k % 2 == 0;
        std::vector<double> pts(t.n);
        if (t.midpoint) {
            pts = DesignGrid::midpoint(t.n).points();
        } else {
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            for (;;) {
                for (auto& p : pts) p = unif(rng);
                std::sort(pts.begin(), pts.end());
                if (std::adjacent_find(pts.begin(), pts.end()) == pts.end()) break;
            }
        }
        const DesignMatrix dm = build_design_matrix(BasisFamily::cosine(), DesignGrid(pts), t.dim);
        t.check = projection_identity_check(standard_normal(rng, Eigen::Index(t.n)), dm, 64, seed + k);
        out.push_back(t);
    }
    return out;
}

/// Test matrices by name: "identity<d>", "harmonic<d>" = diag(1/j), and
/// "cosine_tikhonov", the 4 x 16 Tikhonov regularizer (alpha = 1/4) of the
/// spectral operator with p = 1 on the midpoint cosine design.
inline Matrix named_matrix(const std::string& name) {
    auto size_after = [&](const std::string& prefix) -> std::size_t {
        const std::string digits = name.substr(prefix.size());
        if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos || digits.size() > 4)
            throw ParameterError("named_matrix: bad size in '" + name + "'");
        const auto d = std::size_t(std::stoul(digits));
        if (d == 0) throw ParameterError("named_matrix: size must be positive");
        return d;
    };
    if (name.rfind("identity", 0) == 0) {
        const auto d = Eigen::Index(size_after("identity"));
        return Matrix::Identity(d, d);
    }
    if (name.rfind("harmonic", 0) == 0) {
        const auto d = Eigen::Index(size_after("harmonic"));
        Matrix A = Matrix::Zero(d, d);
        for (Eigen::Index j = 0; j < d; ++j) A(j, j) = 1.0 / double(j + 1);
        return A;
    }
    if (name == "cosine_tikhonov") {
        const auto op = discretize_operator(SpectralOperator{1.0}, BasisFamily::cosine(), DesignGrid::midpoint(16), 4);
        return build_regularizer(Tikhonov{0.25}, op).matrix();
    }
    throw ParameterError("named_matrix: unknown matrix '" + name + "'");
}

/// Threshold of the deviation event: sigma^2 [Tr + rho] r/2 (1 + L) + sigma^2 u.
inline double tail_event_level(double trace, double rho, double sigma2, double r, double level, double u) {
    return sigma2 * (trace + rho) * r / 2.0 * (1.0 + level) + sigma2 * u;
}

/// exp(-sqrt(d (u / rho + r/2 L [Tr/rho + 1]))), with u in units of sigma^2.
inline double tail_bound(double trace, double rho, double r, double level, double d, double u) {
    return std::exp(-std::sqrt(d * (u / rho + r / 2.0 * level * (trace / rho + 1.0))));
}

struct TailReport {
    std::vector<double> thresholds;  // u
    std::vector<double> event_levels;
    std::vector<double> empirical_tail;
    std::vector<double> stderr_tail;  // binomial standard error
    std::vector<double> theoretical_bound;
    std::vector<bool> violation;      // empirical - 2 stderr > bound
    std::size_t violations = 0;
    double trace = 0;
    double rho = 0;
    double level = 0;  // the L used
    double r = 0;
    double kraft_d = 0;
    double sigma = 0;
    std::size_t replications = 0;
    std::uint64_t seed = 0;
    std::string noise;
};

/// eta^2(A) for every replication; replication i draws from its own stream.
inline std::vector<double> sample_eta_squared(const QuadFormSpec& spec) {
    spec.validate();
    std::vector<double> out(spec.replications);
    parallel_for(spec.replications, spec.threads, [&](std::size_t i) {
        Rng rng = make_stream(spec.seed, 0x45544132, i);
        const double e = eta(spec.A, spec.noise.sample(rng, spec.A.cols()));
        out[i] = e * e;
    });
    return out;
}

/// The deviation bound is evaluated with L = cfg.weight(0).
inline TailReport tail_check(const QuadFormSpec& spec, const PenaltyConfig& cfg, const std::vector<double>& u_grid) {
    if (!(cfg.r > 2)) throw ParameterError("tail_check: r must exceed 2");
    const auto [trace, rho] = trace_and_radius(spec.A);
    const auto eta2 = sample_eta_squared(spec);
    const double sigma2 = spec.noise.sigma * spec.noise.sigma;
    const double N = double(spec.replications);

    TailReport rep;
    rep.trace = trace;
    rep.rho = rho;
    rep.level = cfg.weight(0);
    rep.r = cfg.r;
    rep.kraft_d = cfg.kraft_d;
    rep.sigma = spec.noise.sigma;
    rep.replications = spec.replications;
    rep.seed = spec.seed;
    rep.noise = noise_name(spec.noise);
    for (double u : u_grid) {
        const double level = tail_event_level(trace, rho, sigma2, cfg.r, rep.level, u);
        const auto hits = std::count_if(eta2.begin(), eta2.end(), [&](double v) { return v >= level; });
        const double p = double(hits) / N;
        const double se = std::sqrt(p * (1 - p) / N);
        const double bound = tail_bound(trace, rho, cfg.r, rep.level, cfg.kraft_d, u);
        const bool bad = p - 2 * se > bound;
        rep.thresholds.push_back(u);
        rep.event_levels.push_back(level);
        rep.empirical_tail.push_back(p);
        rep.stderr_tail.push_back(se);
        rep.theoretical_bound.push_back(bound);
        rep.violation.push_back(bad);
        rep.violations += bad ? 1 : 0;
    }
    return rep;
}

struct MomentReport {
    int q = 1;
    double empirical = 0;  // E[eta^2 - level]_+^q
    double stderr_empirical = std::numeric_limits<double>::quiet_NaN();
    double k1 = 0;
    double k2 = 0;
    double shape = std::numeric_limits<double>::quiet_NaN();  // k1^-q [k2^(q-1/2) + k2^(q-1)] e^-sqrt(k2)
    double ratio = std::numeric_limits<double>::quiet_NaN();  // empirical / shape, the implied C_q
    bool defined = false;                                     // false when L = 0
};

/// Truncated moment of eta^2 above the penalty level, with L = cfg.weight(0).
inline MomentReport moment_check(const QuadFormSpec& spec, const PenaltyConfig& cfg, int q) {
    if (q < 1) throw ParameterError("moment_check: q must be at least 1");
    const auto [trace, rho] = trace_and_radius(spec.A);
    const double sigma2 = spec.noise.sigma * spec.noise.sigma;
    const double L = cfg.weight(0);
    const double level = sigma2 * (trace + rho) * cfg.r / 2.0 * (1.0 + L);
    MeanAccumulator acc;
    for (double v : sample_eta_squared(spec)) acc.add(std::pow(std::max(0.0, v - level), q));

    MomentReport rep;
    rep.q = q;
    rep.empirical = acc.mean();
    rep.stderr_empirical = acc.stderr_of_mean();
    rep.k1 = cfg.kraft_d / (rho * sigma2);
    rep.k2 = cfg.kraft_d * cfg.r / 2.0 * L * (trace / rho + 1.0);
    rep.defined = L > 0;
    if (rep.defined) {
        rep.shape = std::pow(rep.k1, -q) * (std::pow(rep.k2, q - 0.5) + std::pow(rep.k2, q - 1.0)) *
                    std::exp(-std::sqrt(rep.k2));
        rep.ratio = rep.empirical / rep.shape;
    }
    return rep;
}

/// Header block of constants, then u, level, empirical, stderr, bound, violation.
inline void write_tail_csv(std::ostream& os, const TailReport& rep) {
    os << "# noise=" << rep.noise << '\n'
       << "# sigma=" << format_number(rep.sigma) << '\n'
       << "# replications=" << rep.replications << '\n'
       << "# seed=" << rep.seed << '\n'
       << "# r=" << format_number(rep.r) << '\n'
       << "# L=" << format_number(rep.level) << '\n'
       << "# kraft_d=" << format_number(rep.kraft_d) << '\n'
       << "# trace=" << format_number(rep.trace) << '\n'
       << "# rho=" << format_number(rep.rho) << '\n';
    os << "u,level,empirical,stderr,bound,violation\n";
    for (std::size_t i = 0; i < rep.thresholds.size(); ++i)
        os << format_number(rep.thresholds[i]) << ',' << format_number(rep.event_levels[i]) << ','
           << format_number(rep.empirical_tail[i]) << ',' << format_number(rep.stderr_tail[i]) << ','
           << format_number(rep.theoretical_bound[i]) << ',' << (rep.violation[i] ? 1 : 0) << '\n';
}

}  // namespace adaptreg
