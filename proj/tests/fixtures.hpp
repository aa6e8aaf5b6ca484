#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "adaptreg/operator.hpp"
#include "oracles.hpp"

namespace fixtures {

using adaptreg::Matrix;
using adaptreg::Vector;

inline Vector to_vector(const oracle::Vec& v) { return Eigen::Map<const Vector>(v.data(), Eigen::Index(v.size())); }

inline Vector random_vector(std::mt19937& rng, std::size_t n) { return to_vector(oracle::gaussian(rng, n)); }

inline adaptreg::DesignGrid random_grid(std::mt19937& rng, std::size_t n) {
    std::uniform_real_distribution<double> unif(0, 1);
    std::vector<double> t(n);
    for (auto& x : t) x = unif(rng);
    std::sort(t.begin(), t.end());
    return adaptreg::DesignGrid(t);
}

struct Rotated {
    adaptreg::DiscretizedOperator op;
    oracle::Mat images;  // the n x d samples the operator was built from
};

/// Operator with images inside Y_d but a non-diagonal action, on a random grid.
inline Rotated rotated_operator(std::mt19937& rng, std::size_t n, std::size_t d) {
    const auto grid = random_grid(rng, n);
    const auto dm = adaptreg::build_design_matrix(adaptreg::BasisFamily::cosine(), grid, d);
    Matrix mix(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    std::normal_distribution<double> g(0, 1);
    for (Eigen::Index i = 0; i < mix.rows(); ++i)
        for (Eigen::Index j = 0; j < mix.cols(); ++j) mix(i, j) = g(rng) / double(d) + (i == j ? 1.0 / double(j + 1) : 0.0);
    const Matrix images = dm.G.transpose() * mix;
    return {adaptreg::discretize_operator(adaptreg::SampledOperator{images, 1.0}, adaptreg::BasisFamily::cosine(), grid,
                                          d),
            oracle::from_eigen(images)};
}

/// Spectral images lambda_j phi_j(t_i) written out directly.
inline oracle::Mat spectral_images(std::size_t n, std::size_t d, double p) {
    const auto t = oracle::midpoints(n);
    oracle::Mat m = oracle::zeros(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m[i][j] = std::pow(double(j + 1), -p) * oracle::cosine(j + 1, t[i]);
    return m;
}

}  // namespace fixtures
