#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "adaptreg/errors.hpp"

namespace adaptreg {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = std::numeric_limits<double>::quiet_NaN();  // NaN with fewer than 3 points
    std::size_t points = 0;
};

/// Ordinary least squares of ys on xs.
inline LinearFit least_squares_line(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw DimensionError("least_squares_line: size mismatch");
    const std::size_t m = xs.size();
    if (m < 2) throw InsufficientDataError("least_squares_line: need at least 2 points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < m; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= double(m);
    my /= double(m);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw InsufficientDataError("least_squares_line: abscissae are all equal");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.points = m;
    if (m > 2) {
        double rss = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double r = ys[i] - fit.intercept - fit.slope * xs[i];
            rss += r * r;
        }
        fit.slope_stderr = std::sqrt(rss / double(m - 2) / sxx);
    }
    return fit;
}

/// Fit of log(ys) on log(xs).
inline LinearFit log_log_fit(std::span<const double> xs, std::span<const double> ys) {
    std::vector<double> lx(xs.size()), ly(ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) lx[i] = std::log(xs[i]);
    for (std::size_t i = 0; i < ys.size(); ++i) ly[i] = std::log(ys[i]);
    return least_squares_line(lx, ly);
}

/// Running mean and standard error of the mean.
class MeanAccumulator {
public:
    void add(double x) {
        ++count_;
        const double delta = x - mean_;
        mean_ += delta / double(count_);
        m2_ += delta * (x - mean_);
    }
    std::size_t count() const { return count_; }
    double mean() const { return mean_; }
    /// NaN when fewer than two samples were seen.
    double stderr_of_mean() const {
        if (count_ < 2) return std::numeric_limits<double>::quiet_NaN();
        return std::sqrt(m2_ / double(count_ - 1) / double(count_));
    }

private:
    std::size_t count_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

}  // namespace adaptreg
