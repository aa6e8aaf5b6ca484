#pragma once

// Synthetic problems satisfying the source, spectral and design conditions,
// and the Monte Carlo studies built on them: adaptive risk against the
// oracle, convergence-rate fits, projection error terms and trace scaling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "adaptreg/errors.hpp"
#include "adaptreg/format.hpp"
#include "adaptreg/operator.hpp"
#include "adaptreg/random.hpp"
#include "adaptreg/regularizers.hpp"
#include "adaptreg/selection.hpp"
#include "adaptreg/stats.hpp"

namespace adaptreg {

/// Shape of the source element omega before rescaling to norm rho.
///   boundary:    omega_j ~ (-1)^(j+1) j^(-1/2), the slowest decay the source set allows
///   alternating: omega_j ~ (-1)^(j+1)
enum class OmegaKind { boundary, alternating, explicit_vector, random };

struct SourceSpec {
    double nu = 0.5;
    double rho = 1.0;
    OmegaKind omega = OmegaKind::boundary;
    Vector explicit_omega;  // used when omega == explicit_vector
    std::uint64_t seed = 0; // used when omega == random
};

inline Vector spectral_values(double p, std::size_t count) {
    Vector l(static_cast<Eigen::Index>(count));
    for (std::size_t j = 0; j < count; ++j) l[Eigen::Index(j)] = std::pow(double(j + 1), -p);
    return l;
}

/// omega with ||omega|| = rho (an explicit vector is used as given and must satisfy ||omega|| <= rho).
inline Vector source_omega(const SourceSpec& src, std::size_t count) {
    if (!(src.rho > 0)) throw ParameterError("source: rho must be positive");
    Vector w(static_cast<Eigen::Index>(count));
    switch (src.omega) {
        case OmegaKind::explicit_vector:
            if (std::size_t(src.explicit_omega.size()) != count)
                throw DimensionError("source: explicit omega has the wrong length");
            if (src.explicit_omega.norm() > src.rho * (1 + 1e-12))
                throw ParameterError("source: explicit omega exceeds the radius rho");
            return src.explicit_omega;
        case OmegaKind::random: {
            Rng rng = make_stream(src.seed, 0x4f4d454741, 0);
            w = standard_normal(rng, Eigen::Index(count));
            break;
        }
        case OmegaKind::alternating:
            for (std::size_t j = 0; j < count; ++j) w[Eigen::Index(j)] = j % 2 == 0 ? 1.0 : -1.0;
            break;
        case OmegaKind::boundary:
            for (std::size_t j = 0; j < count; ++j)
                w[Eigen::Index(j)] = (j % 2 == 0 ? 1.0 : -1.0) / std::sqrt(double(j + 1));
            break;
    }
    return w * (src.rho / w.norm());
}

/// x0 = (T^*T)^nu omega, i.e. x0_j = lambda_j^(2 nu) omega_j.
inline Vector source_truth(const SourceSpec& src, const Vector& lambda) {
    if (!(src.nu >= 0)) throw ParameterError("source: nu must be non-negative");
    const Vector w = source_omega(src, std::size_t(lambda.size()));
    return lambda.array().pow(2.0 * src.nu).matrix().cwiseProduct(w);
}

struct SynthConfig {
    double p = 1.0;
    SourceSpec source;
    std::size_t n = 256;
    double sigma = 0.1;
    std::size_t truth_dim = 0;  // 0: 4 d_m0
    std::size_t m0 = 0;         // 0: choose_m0(n, p)
};

struct SynthProblem {
    DiscretizedOperator op;
    Vector x0;             // truth on the extended range, SVD coordinates
    Vector truth_samples;  // (T x0)(t_i) including the components beyond m0
    double sigma = 0;
};

/// Spectral operator lambda_j = j^-p on the midpoint cosine design.
inline SynthProblem synth_problem(const SynthConfig& cfg) {
    if (!(cfg.p > 0)) throw ParameterError("synth: p must be positive");
    if (!(cfg.sigma >= 0)) throw ParameterError("synth: sigma must be non-negative");
    const std::size_t d = cfg.m0 ? cfg.m0 : choose_m0(cfg.n, cfg.p);
    const std::size_t truth_dim = cfg.truth_dim ? cfg.truth_dim : 4 * d;
    if (truth_dim < d) throw ParameterError("synth: truth_dim must be at least d_m0");
    if (truth_dim > cfg.n)
        throw ParameterError("synth: truth_dim " + std::to_string(truth_dim) + " exceeds n = " + std::to_string(cfg.n));
    const DesignGrid grid = DesignGrid::midpoint(cfg.n);
    const BasisFamily basis = BasisFamily::cosine();
    DiscretizedOperator op = discretize_operator(SpectralOperator{cfg.p}, basis, grid, d);

    const Vector lambda = spectral_values(cfg.p, truth_dim);
    Vector x0 = source_truth(cfg.source, lambda);
    Vector samples = Vector::Zero(Eigen::Index(cfg.n));
    for (std::size_t j = 0; j < truth_dim; ++j) {
        const double c = lambda[Eigen::Index(j)] * x0[Eigen::Index(j)];
        for (std::size_t i = 0; i < cfg.n; ++i) samples[Eigen::Index(i)] += c * basis(j + 1, grid[i]);
    }
    return SynthProblem{std::move(op), std::move(x0), std::move(samples), cfg.sigma};
}

/// y = T x0 + sigma * standard gaussian.
inline Vector draw_observation(const SynthProblem& prob, Rng& rng) {
    Vector y = prob.truth_samples;
    if (prob.sigma > 0) y += prob.sigma * standard_normal(rng, y.size());
    return y;
}

/// ||(I - Pi_{X_m0}) x0||^2: energy of x0 beyond the first d_m0 coordinates.
inline double bias_m0(const Vector& x0, const DiscretizedOperator& op) {
    const auto d = Eigen::Index(op.dim());
    if (x0.size() <= d) return 0.0;
    return x0.tail(x0.size() - d).squaredNorm();
}

/// Squared error of a d_m0-dimensional estimate against the extended truth.
inline double squared_error(const Vector& estimate, const Vector& x0) {
    const auto d = estimate.size();
    if (x0.size() < d) throw DimensionError("squared_error: truth shorter than the estimate");
    return (estimate - x0.head(d)).squaredNorm() + x0.tail(x0.size() - d).squaredNorm();
}

/// -4 p nu / (1 + 4 p nu + 2 p), the exponent of the squared risk in n.
inline double theoretical_rate(double p, double nu) { return -4.0 * p * nu / (1.0 + 4.0 * p * nu + 2.0 * p); }

enum class FamilyPolicy { tikhonov, projection, both };

struct ExperimentConfig {
    double p = 1.0;
    double nu = 0.5;
    double rho = 1.0;
    double sigma = 0.1;
    OmegaKind omega = OmegaKind::boundary;
    std::vector<std::size_t> n_grid{256, 512, 1024, 2048, 4096, 8192};
    std::size_t replications = 200;
    FamilyPolicy families = FamilyPolicy::both;
    double alpha_max = 1.0;
    double ratio = 0.5;
    double r = 2.5;
    double kraft_d = 1.0;
    double kraft_target = 1.0;
    std::optional<double> fixed_weight;  // constant L instead of the Kraft-calibrated one
    std::size_t truth_dim = 0;           // 0: 4 d_m0(max n)
    std::uint64_t seed = 1;
    unsigned threads = 1;

    void validate() const {
        if (!(p > 0)) throw ParameterError("experiment: p must be positive");
        if (!(nu >= 0)) throw ParameterError("experiment: nu must be non-negative");
        if (!(rho > 0)) throw ParameterError("experiment: rho must be positive");
        if (!(sigma > 0)) throw ParameterError("experiment: sigma must be positive");
        if (n_grid.empty()) throw ParameterError("experiment: empty n_grid");
        if (replications == 0) throw ParameterError("experiment: replications must be at least 1");
        if (!(r > 2)) throw ParameterError("experiment: r must exceed 2");
        for (auto n : n_grid)
            if (n == 0 || choose_m0(n, p) > n) throw ParameterError("experiment: every n must be at least d_m0(n)");
        if (resolved_truth_dim() > *std::min_element(n_grid.begin(), n_grid.end()))
            throw ParameterError("experiment: truth_dim exceeds the smallest n");
    }

    std::size_t resolved_truth_dim() const {
        if (truth_dim) return truth_dim;
        return 4 * choose_m0(*std::max_element(n_grid.begin(), n_grid.end()), p);
    }

    std::vector<std::string> methods() const {
        switch (families) {
            case FamilyPolicy::tikhonov: return {"tikhonov"};
            case FamilyPolicy::projection: return {"projection"};
            default: return {"tikhonov", "projection"};
        }
    }
};

struct RiskRow {
    std::size_t n = 0;
    std::string method;
    std::size_t d_m0 = 0;
    std::size_t candidates = 0;
    double weight_level = 0;  // L
    double risk = 0;          // mean ||x_hat_khat - x0||^2
    double risk_stderr = std::numeric_limits<double>::quiet_NaN();
    double oracle_risk = 0;   // min_k mean ||x_hat_k - x0||^2
    double oracle_stderr = std::numeric_limits<double>::quiet_NaN();
    std::size_t oracle_index = 0;
    double oracle_ratio = 0;  // risk / oracle_risk
    double bias_m0 = 0;
    double kraft_sum = 0;
    double oracle_term = 0;     // inf_k [||x_k - x0||^2 + 2 pen(k)]
    double constant_ratio = 0;  // (risk - 2 bias_m0 - Sigma/n) / oracle_term
    double mean_chosen = 0;
    double threshold_agreement = std::numeric_limits<double>::quiet_NaN();  // projection only
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<RiskRow> rows;

    std::vector<RiskRow> rows_for(const std::string& method) const {
        std::vector<RiskRow> out;
        for (const auto& r : rows)
            if (r.method == method) out.push_back(r);
        return out;
    }
};

namespace detail {

struct ReplicationOutcome {
    double adaptive = 0;
    std::size_t chosen = 0;
    std::vector<double> per_candidate;
    bool threshold_agrees = true;
};

}  // namespace detail

inline ExperimentReport monte_carlo_risk(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentReport report;
    report.config = cfg;
    const std::size_t truth_dim = cfg.resolved_truth_dim();

    for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
        const std::size_t n = cfg.n_grid[ni];
        SynthConfig sc;
        sc.p = cfg.p;
        sc.source = SourceSpec{cfg.nu, cfg.rho, cfg.omega, {}, cfg.seed};
        sc.n = n;
        sc.sigma = cfg.sigma;
        sc.truth_dim = truth_dim;
        const SynthProblem prob = synth_problem(sc);
        const DiscretizedOperator& op = prob.op;
        const double bias = bias_m0(prob.x0, op);

        for (const auto& method : cfg.methods()) {
            const bool is_projection = method == "projection";
            const RegularizerFamily family =
                is_projection ? projection_family(op) : tikhonov_family(op, cfg.alpha_max, cfg.ratio);
            PenaltyConfig pen;
            pen.r = cfg.r;
            pen.sigma2 = cfg.sigma * cfg.sigma;
            pen.kraft_d = cfg.kraft_d;
            if (cfg.fixed_weight) pen.weights = {*cfg.fixed_weight};
            else pen.weights = default_weights(family, pen, n, cfg.kraft_target).weights;
            const double kraft = kraft_sum(family, pen, n);

            double oracle_term = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < family.size(); ++k) {
                const Vector xk = apply_regularizer(family[k], prob.truth_samples);
                oracle_term = std::min(oracle_term, squared_error(xk, prob.x0) + 2.0 * penalty(family[k], pen, k));
            }

            std::vector<detail::ReplicationOutcome> outcomes(cfg.replications);
            parallel_for(cfg.replications, cfg.threads, [&](std::size_t rep) {
                // the same noise draw feeds both methods at a given (n, rep)
                Rng rng = make_stream(cfg.seed, std::uint64_t(n), rep);
                const Vector y = draw_observation(prob, rng);
                auto& out = outcomes[rep];
                const SelectionResult sel = select(family, pen, op, y);
                out.chosen = sel.chosen;
                out.adaptive = squared_error(sel.estimate, prob.x0);
                out.per_candidate.resize(family.size());
                for (std::size_t k = 0; k < family.size(); ++k)
                    out.per_candidate[k] = squared_error(apply_regularizer(family[k], y), prob.x0);
                if (is_projection) out.threshold_agrees = select_by_threshold(op, y, pen).selection.chosen == sel.chosen;
            });

            MeanAccumulator adaptive, chosen;
            std::vector<MeanAccumulator> per(family.size());
            std::size_t agree = 0;
            for (const auto& o : outcomes) {
                adaptive.add(o.adaptive);
                chosen.add(double(o.chosen));
                for (std::size_t k = 0; k < family.size(); ++k) per[k].add(o.per_candidate[k]);
                agree += o.threshold_agrees ? 1 : 0;
            }
            RiskRow row;
            row.n = n;
            row.method = method;
            row.d_m0 = op.dim();
            row.candidates = family.size();
            row.weight_level = pen.weights.empty() ? 0.0 : pen.weights.front();
            row.risk = adaptive.mean();
            row.risk_stderr = adaptive.stderr_of_mean();
            row.oracle_index = 0;
            for (std::size_t k = 1; k < per.size(); ++k)
                if (per[k].mean() < per[row.oracle_index].mean()) row.oracle_index = k;
            row.oracle_risk = per[row.oracle_index].mean();
            row.oracle_stderr = per[row.oracle_index].stderr_of_mean();
            row.oracle_ratio = row.risk / row.oracle_risk;
            row.bias_m0 = bias;
            row.kraft_sum = kraft;
            row.oracle_term = oracle_term;
            row.constant_ratio = (row.risk - 2.0 * bias - kraft / double(n)) / oracle_term;
            row.mean_chosen = chosen.mean();
            if (is_projection) row.threshold_agreement = double(agree) / double(outcomes.size());
            report.rows.push_back(row);
        }
    }
    return report;
}

struct RateFit {
    double slope = 0;
    double intercept = 0;
    double half_width = std::numeric_limits<double>::quiet_NaN();  // 95% t-interval
    double theoretical = 0;
    std::size_t points = 0;
};

/// Least-squares slope of log(risk) on log(n) for one method.
inline RateFit fit_rate(const ExperimentReport& report, const std::string& method) {
    std::vector<double> ns, risks;
    for (const auto& r : report.rows_for(method)) {
        if (std::find(ns.begin(), ns.end(), double(r.n)) != ns.end()) continue;
        ns.push_back(double(r.n));
        risks.push_back(r.risk);
    }
    if (ns.size() < 4)
        throw InsufficientDataError("fit_rate: need at least 4 distinct n values, got " + std::to_string(ns.size()));
    const LinearFit fit = log_log_fit(ns, risks);
    RateFit out;
    out.slope = fit.slope;
    out.intercept = fit.intercept;
    out.points = fit.points;
    const boost::math::students_t t(double(fit.points - 2));
    out.half_width = boost::math::quantile(boost::math::complement(t, 0.025)) * fit.slope_stderr;
    out.theoretical = theoretical_rate(report.config.p, report.config.nu);
    return out;
}

struct ProjectionErrorRow {
    std::size_t dim = 0;
    double bias = 0;          // ||(I - Pi_{X_m}) x0||
    double bias_squared = 0;
    double bound_shape = 0;   // d_m^(-2 nu p)
    double bound = 0;         // fitted constant times the shape
    double noise_mean = 0;    // Monte Carlo E ||Pi^n_{Y_m} eps||_n^2
    double noise_stderr = std::numeric_limits<double>::quiet_NaN();
    double noise_prediction = 0;  // sigma^2 d_m / n
};

struct ProjectionErrorTable {
    std::vector<ProjectionErrorRow> rows;
    double bound_constant = 0;
};

/// Bias and noise terms of the projection estimator on the models {1..d_m}.
inline ProjectionErrorTable projection_error_bound_check(const DiscretizedOperator& op, const Vector& x0,
                                                         std::vector<std::size_t> dims, double nu, double sigma,
                                                         std::size_t replications, std::uint64_t seed) {
    if (nu > 0.5) throw ParameterError("projection_error_bound_check: the bias rate needs nu <= 1/2");
    if (!(sigma > 0)) throw ParameterError("projection_error_bound_check: sigma must be positive");
    if (replications == 0) throw ParameterError("projection_error_bound_check: need replications");
    std::sort(dims.begin(), dims.end());
    for (auto d : dims)
        if (d == 0 || d > op.dim()) throw DimensionError("projection_error_bound_check: model size outside [1, d_m0]");

    ProjectionErrorTable table;
    std::vector<DesignMatrix> designs;
    for (auto d : dims) {
        ProjectionErrorRow row;
        row.dim = d;
        row.bias_squared = x0.size() > Eigen::Index(d) ? x0.tail(x0.size() - Eigen::Index(d)).squaredNorm() : 0.0;
        row.bias = std::sqrt(row.bias_squared);
        row.bound_shape = std::pow(double(d), -2.0 * nu * op.degree());
        row.noise_prediction = sigma * sigma * double(d) / double(op.n());
        table.bound_constant = std::max(table.bound_constant, row.bias / row.bound_shape);
        table.rows.push_back(row);
        designs.push_back(DesignMatrix{op.design().G.topRows(Eigen::Index(d))});
    }
    std::vector<MeanAccumulator> acc(dims.size());
    for (std::size_t rep = 0; rep < replications; ++rep) {
        Rng rng = make_stream(seed, 0x50524f4a, rep);
        const Vector eps = sigma * standard_normal(rng, Eigen::Index(op.n()));
        for (std::size_t k = 0; k < dims.size(); ++k) {
            const Vector proj = reconstruct(empirical_projection(eps, designs[k]), designs[k]);
            acc[k].add(proj.squaredNorm() / double(op.n()));
        }
    }
    for (std::size_t k = 0; k < dims.size(); ++k) {
        auto& row = table.rows[k];
        row.bound = table.bound_constant * row.bound_shape;
        row.noise_mean = acc[k].mean();
        row.noise_stderr = acc[k].stderr_of_mean();
    }
    return table;
}

struct TraceRatioPoint {
    double alpha = 0;
    std::size_t d_m0 = 0;
    double ratio = 0;  // Tr(R^t R) / rho^2(R)
};

struct TraceRatioStudy {
    std::vector<TraceRatioPoint> points;
    double slope = 0;     // of log ratio against log(1/alpha)
    double expected = 0;  // 1 / (2p)
};

/// Tikhonov trace-to-radius ratio as alpha decreases. Each alpha is evaluated
/// on the spectral operator truncated at d_m0 = ceil(scale * alpha^(-1/(2p))),
/// so the grid condition d_m0 >= alpha^(-1/(2p)) holds with a fixed margin.
inline TraceRatioStudy trace_ratio_study(double p, const std::vector<double>& alphas, double scale = 2.0,
                                         std::size_t max_dim = 4096) {
    if (!(p > 0)) throw ParameterError("trace_ratio_study: p must be positive");
    if (!(scale >= 1)) throw ParameterError("trace_ratio_study: scale must be at least 1");
    if (alphas.size() < 2) throw InsufficientDataError("trace_ratio_study: need at least two alphas");
    TraceRatioStudy study;
    study.expected = 1.0 / (2.0 * p);
    std::vector<double> inv_alpha, ratios;
    for (double a : alphas) {
        if (!(a > 0)) throw ParameterError("trace_ratio_study: alpha must be positive");
        const double target = scale * std::pow(a, -1.0 / (2.0 * p));
        const std::size_t d = std::max<std::size_t>(1, std::size_t(std::ceil(target * (1 - 1e-12))));
        if (d > max_dim) throw ParameterError("trace_ratio_study: alpha too small for max_dim");
        // on the midpoint cosine design with n = d_m0 the regularizer is diagonal in SVD
        // coordinates, so Tr / rho^2 = sum f_j^2 / max f_j^2 with f = lambda / (lambda^2 + alpha)
        const Vector l = spectral_values(p, d);
        const Vector f = l.cwiseQuotient((l.array().square() + a).matrix());
        study.points.push_back({a, d, f.squaredNorm() / f.cwiseAbs2().maxCoeff()});
        inv_alpha.push_back(1.0 / a);
        ratios.push_back(study.points.back().ratio);
    }
    study.slope = log_log_fit(inv_alpha, ratios).slope;
    return study;
}

/// n, method, and every RiskRow statistic; NA marks unavailable values.
inline void write_risk_csv(std::ostream& os, const ExperimentReport& rep) {
    os << "n,method,d_m0,candidates,L,risk,risk_stderr,oracle_risk,oracle_stderr,oracle_index,oracle_ratio,"
          "bias_m0,kraft_sum,oracle_term,constant_ratio,mean_chosen,threshold_agreement\n";
    for (const auto& r : rep.rows)
        os << r.n << ',' << r.method << ',' << r.d_m0 << ',' << r.candidates << ',' << format_number(r.weight_level)
           << ',' << format_number(r.risk) << ',' << format_number(r.risk_stderr) << ','
           << format_number(r.oracle_risk) << ',' << format_number(r.oracle_stderr) << ',' << r.oracle_index << ','
           << format_number(r.oracle_ratio) << ',' << format_number(r.bias_m0) << ',' << format_number(r.kraft_sum)
           << ',' << format_number(r.oracle_term) << ',' << format_number(r.constant_ratio) << ','
           << format_number(r.mean_chosen) << ',' << format_number(r.threshold_agreement) << '\n';
}

/// Plot data: log n followed by one log-risk column per method.
inline void write_plot_data(std::ostream& os, const ExperimentReport& rep) {
    const auto methods = rep.config.methods();
    os << "# log_n";
    for (const auto& m : methods) os << " log_risk_" << m;
    os << '\n';
    for (auto n : rep.config.n_grid) {
        os << format_number(std::log(double(n)));
        for (const auto& m : methods)
            for (const auto& r : rep.rows)
                if (r.n == n && r.method == m) os << ' ' << format_number(std::log(r.risk));
        os << '\n';
    }
}

}  // namespace adaptreg
