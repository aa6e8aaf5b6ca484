#pragma once

// Penalized choice of the regularization operator:
//   k_hat = argmin_k ||C_k (y - T x_hat_k)||^2 + r sigma^2 (1 + L_k) [Tr(R_k^t R_k) + rho^2(R_k)]
// with C_k = R_k for smoothing regularizers and C_k = T^+_{m0} Pi^n for projections.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "adaptreg/errors.hpp"
#include "adaptreg/format.hpp"
#include "adaptreg/operator.hpp"
#include "adaptreg/regularizers.hpp"

namespace adaptreg {

struct PenaltyConfig {
    double r = 2.5;
    double sigma2 = std::numeric_limits<double>::quiet_NaN();  // must be supplied
    /// Empty: L_k = 0. One value: shared by every candidate. Otherwise one per candidate.
    std::vector<double> weights;
    double kraft_d = 1.0;

    double weight(std::size_t k) const {
        if (weights.empty()) return 0.0;
        if (weights.size() == 1) return weights[0];
        if (k >= weights.size()) throw DimensionError("PenaltyConfig: no weight for candidate " + std::to_string(k));
        return weights[k];
    }

    void validate() const {
        if (!(r > 2)) throw ParameterError("penalty: r must exceed 2");
        if (!(sigma2 > 0) || !std::isfinite(sigma2))
            throw ParameterError("penalty: sigma2 must be a known positive noise variance");
        if (!(kraft_d > 0)) throw ParameterError("penalty: kraft_d must be positive");
        for (double w : weights)
            if (!(w >= 0)) throw ParameterError("penalty: weights must be non-negative");
    }
};

struct CandidateScore {
    std::size_t k = 0;
    double contrast = 0;
    double penalty = 0;
    double objective = 0;
};

struct SelectionResult {
    std::size_t chosen = 0;
    std::vector<CandidateScore> per_candidate;
    Vector estimate;
    double kraft_sum = 0;
};

/// pen(k) = r sigma^2 (1 + L_k) [Tr + rho^2].
inline double penalty(const Regularizer& reg, const PenaltyConfig& cfg, std::size_t k) {
    return cfg.r * cfg.sigma2 * (1.0 + cfg.weight(k)) * (reg.trace_stat() + reg.radius_stat());
}

/// Empirical contrast of candidate `reg` at the data y.
inline double contrast(const Regularizer& reg, const DiscretizedOperator& op, const Vector& y) {
    const Vector estimate = apply_regularizer(reg, y);
    const Vector residual = y - op.forward(estimate);
    if (reg.is_projection()) return op.pseudo_inverse(residual).squaredNorm();
    return apply_regularizer(reg, residual).squaredNorm();
}

/// Index minimizing the objective; among exact ties the candidate with the
/// smaller trace statistic (smaller variance), then the lower index.
inline std::size_t argmin_objective(std::span<const CandidateScore> scores, const RegularizerFamily& family) {
    if (scores.empty()) throw ParameterError("argmin_objective: no candidates");
    std::size_t best = 0;
    for (std::size_t k = 1; k < scores.size(); ++k) {
        const double a = scores[k].objective, b = scores[best].objective;
        if (a < b || (a == b && family[k].trace_stat() < family[best].trace_stat())) best = k;
    }
    return best;
}

struct KraftTerm {
    double size_factor = 0;  // [d / (n rho^2)]^{-1}
    double root_factor = 0;  // 2 [sqrt(d Tr / rho^2) + 1]
    double decay = 0;        // exp(-sqrt(d L (Tr + rho^2) / rho^2))
    double value = 0;
};

/// Per-candidate summands of Sigma(d), with rho^2(n R_k) read as n rho^2(R_k).
inline std::vector<KraftTerm> kraft_terms(const RegularizerFamily& family, const PenaltyConfig& cfg, std::size_t n) {
    std::vector<KraftTerm> terms;
    terms.reserve(family.size());
    const double d = cfg.kraft_d;
    for (std::size_t k = 0; k < family.size(); ++k) {
        const double tr = family[k].trace_stat(), rho2 = family[k].radius_stat();
        KraftTerm t;
        t.size_factor = double(n) * rho2 / d;
        t.root_factor = 2.0 * (std::sqrt(d * tr / rho2) + 1.0);
        t.decay = std::exp(-std::sqrt(d * cfg.weight(k) * (tr + rho2) / rho2));
        t.value = t.root_factor * t.size_factor * t.decay;
        terms.push_back(t);
    }
    return terms;
}

inline double kraft_sum(const RegularizerFamily& family, const PenaltyConfig& cfg, std::size_t n) {
    double s = 0;
    for (const auto& t : kraft_terms(family, cfg, n)) s += t.value;
    return s;
}

struct WeightsResult {
    double level = 0;             // the common L
    std::vector<double> weights;  // one per candidate
    double kraft = 0;             // Sigma(d) at the returned weights
    bool capped = false;          // target not reached below the bisection cap
};

inline constexpr double kMaxWeight = 1e8;

/// Smallest common L >= 0 with Sigma(d) <= target. Candidates listed in
/// `overrides` (index, L) keep their own weight.
inline WeightsResult default_weights(const RegularizerFamily& family, const PenaltyConfig& cfg, std::size_t n,
                                     double target, std::span<const std::pair<std::size_t, double>> overrides = {}) {
    if (!(target > 0)) throw ParameterError("default_weights: target must be positive");
    auto weights_at = [&](double level) {
        std::vector<double> w(family.size(), level);
        for (auto [k, v] : overrides) {
            if (k >= w.size()) throw DimensionError("default_weights: override index out of range");
            w[k] = v;
        }
        return w;
    };
    auto sum_at = [&](double level) {
        PenaltyConfig c = cfg;
        c.weights = weights_at(level);
        return kraft_sum(family, c, n);
    };

    WeightsResult out;
    if (sum_at(0.0) <= target) {
        out.weights = weights_at(0.0);
        out.kraft = sum_at(0.0);
        return out;
    }
    double lo = 0.0, hi = 1.0;
    while (sum_at(hi) > target && hi < kMaxWeight) {
        lo = hi;
        hi = std::min(hi * 2.0, kMaxWeight);
    }
    if (sum_at(hi) > target) {
        out.level = hi;
        out.capped = true;
    } else {
        for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (sum_at(mid) > target ? lo : hi) = mid;
        }
        out.level = hi;
    }
    out.weights = weights_at(out.level);
    out.kraft = sum_at(out.level);
    return out;
}

/// Exhaustive penalized selection over the family.
inline SelectionResult select(const RegularizerFamily& family, const PenaltyConfig& cfg, const DiscretizedOperator& op,
                              const Vector& y) {
    cfg.validate();
    if (family.size() == 0) throw ParameterError("select: empty family");
    SelectionResult out;
    out.per_candidate.reserve(family.size());
    for (std::size_t k = 0; k < family.size(); ++k) {
        CandidateScore s;
        s.k = k;
        s.contrast = contrast(family[k], op, y);
        s.penalty = penalty(family[k], cfg, k);
        s.objective = s.contrast + s.penalty;
        out.per_candidate.push_back(s);
    }
    out.chosen = argmin_objective(out.per_candidate, family);
    out.estimate = apply_regularizer(family[out.chosen], y);
    out.kraft_sum = kraft_sum(family, cfg, op.n());
    return out;
}

struct ThresholdResult {
    SelectionResult selection;
    std::vector<std::size_t> dims;  // model sizes, in candidate order
    Vector coefficients;            // x_{m0,j} in SVD coordinates
    Vector increments;              // marginal penalty increment of each block
    std::vector<bool> survives;     // block energy exceeds its increment
};

/// Nested-prefix projection selection written as hard thresholding: model
/// {1..j} scores -sum_{i<=j} x_i^2 + pen(j), built block by block from the
/// squared coefficients and the marginal penalty increments.
inline ThresholdResult select_by_threshold(const DiscretizedOperator& op, const Vector& y, const PenaltyConfig& cfg,
                                           std::vector<std::size_t> dims = {}) {
    cfg.validate();
    const std::size_t d = op.dim();
    if (dims.empty())
        for (std::size_t j = 1; j <= d; ++j) dims.push_back(j);
    std::sort(dims.begin(), dims.end());
    dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
    if (dims.front() == 0 || dims.back() > d) throw DimensionError("select_by_threshold: model size outside [1, d_m0]");

    const Vector& lambda = op.singular_values();
    const double n = double(op.n());
    ThresholdResult out;
    out.dims = dims;
    out.coefficients = op.svd_coordinates(y).cwiseQuotient(lambda);
    const Vector x2 = out.coefficients.cwiseAbs2();
    const double total = x2.sum();

    // eigenvalues of R_m R_m^t are 1 / (n lambda_j^2) on the model
    std::vector<double> pens(dims.size());
    {
        double sum = 0, sup = 0;
        std::size_t j = 0;
        for (std::size_t k = 0; k < dims.size(); ++k) {
            for (; j < dims[k]; ++j) {
                const double e = 1.0 / (n * lambda[Eigen::Index(j)] * lambda[Eigen::Index(j)]);
                sum += e;
                sup = std::max(sup, e);
            }
            pens[k] = cfg.r * cfg.sigma2 * (1.0 + cfg.weight(k)) * (sum + sup);
        }
    }

    out.increments.resize(Eigen::Index(dims.size()));
    out.survives.resize(dims.size());
    auto& sel = out.selection;
    double criterion = 0, kept = 0, best = std::numeric_limits<double>::infinity();
    std::size_t j = 0;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        double block = 0;
        for (; j < dims[k]; ++j) block += x2[Eigen::Index(j)];
        const double inc = pens[k] - (k ? pens[k - 1] : 0.0);
        out.increments[Eigen::Index(k)] = inc;
        out.survives[k] = block > inc;
        criterion += inc - block;
        kept += block;
        CandidateScore s;
        s.k = k;
        s.contrast = total - kept;
        s.penalty = pens[k];
        s.objective = s.contrast + s.penalty;
        sel.per_candidate.push_back(s);
        // strict: ties stay with the smaller model
        if (criterion < best) {
            best = criterion;
            sel.chosen = k;
        }
    }
    Vector z = Vector::Zero(Eigen::Index(d));
    z.head(Eigen::Index(dims[sel.chosen])) = out.coefficients.head(Eigen::Index(dims[sel.chosen]));
    sel.estimate = op.right_vectors() * z;

    double kraft = 0;
    {
        double sum = 0, sup = 0;
        std::size_t i = 0;
        for (std::size_t k = 0; k < dims.size(); ++k) {
            for (; i < dims[k]; ++i) {
                const double e = 1.0 / (n * lambda[Eigen::Index(i)] * lambda[Eigen::Index(i)]);
                sum += e;
                sup = std::max(sup, e);
            }
            const double dd = cfg.kraft_d;
            kraft += 2.0 * (std::sqrt(dd * sum / sup) + 1.0) * (n * sup / dd) *
                     std::exp(-std::sqrt(dd * cfg.weight(k) * (sum + sup) / sup));
        }
    }
    sel.kraft_sum = kraft;
    return out;
}

/// Residual variance of the largest model, ||y - T x_hat_{m0}||^2 / (n - d_m0).
/// Offered for inspection only; selection always takes sigma2 from the caller.
inline double residual_variance(const DiscretizedOperator& op, const Vector& y) {
    if (op.n() <= op.dim()) throw InsufficientDataError("residual_variance: need n > d_m0");
    const Vector fit = op.forward(op.pseudo_inverse(y));
    return (y - fit).squaredNorm() / double(op.n() - op.dim());
}

/// One row per candidate: k, parameter, contrast, penalty, objective, chosen.
inline void write_selection_csv(std::ostream& os, const SelectionResult& res, const RegularizerFamily& family) {
    os << "k,parameter,contrast,penalty,objective,chosen\n";
    for (const auto& s : res.per_candidate) {
        os << s.k << ',' << format_number(parameter_value(family[s.k].spec())) << ',' << format_number(s.contrast)
           << ',' << format_number(s.penalty) << ',' << format_number(s.objective) << ','
           << (s.k == res.chosen ? 1 : 0) << '\n';
    }
}

}  // namespace adaptreg
