#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "adaptreg/concentration.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace adaptreg;

namespace {

PenaltyConfig penalty_cfg(double L, double r = 2.5) {
    PenaltyConfig c;
    c.r = r;
    c.sigma2 = 1.0;
    c.weights = {L};
    return c;
}

QuadFormSpec spec_for(const Matrix& A, std::size_t reps, std::uint64_t seed, NoiseLaw noise = NoiseLaw::gaussian(1)) {
    QuadFormSpec s;
    s.A = A;
    s.noise = noise;
    s.replications = reps;
    s.seed = seed;
    return s;
}

}  // namespace

TEST(Eta, Examples) {
    Matrix A = Matrix::Identity(2, 2);
    Vector e(2);
    e << 3, 4;
    EXPECT_DOUBLE_EQ(eta(A, e), 5.0);
    Matrix B(1, 3);
    B << 1, 2, 2;
    Vector f(3);
    f << 1, 1, 1;
    EXPECT_DOUBLE_EQ(eta(B, f), 5.0);
    EXPECT_THROW(eta(B, e), DimensionError);
}

TEST(Eta, DominatesRandomDirectionsAndIsAttained) {
    std::mt19937 rng(21);
    Matrix A = fixtures::to_vector(oracle::gaussian(rng, 15)).reshaped(3, 5);
    const Vector e = fixtures::random_vector(rng, 5);
    const double sup = eta(A, e);
    for (int k = 0; k < 10000; ++k) {
        Vector u = fixtures::random_vector(rng, 3);
        u.normalize();
        // sum_i eps_i (A^t u)_i
        const auto atu = oracle::multiply(oracle::transpose(oracle::from_eigen(A)), oracle::from_eigen(u));
        EXPECT_LE(std::abs(oracle::dot(oracle::from_eigen(e), atu)), sup * (1 + 1e-12));
    }
    const Vector best = (A * e).normalized();
    EXPECT_NEAR(e.dot(A.transpose() * best), sup, 1e-12);
}

TEST(Eta, Homogeneity) {
    std::mt19937 rng(22);
    for (int k = 0; k < 50; ++k) {
        Matrix A = fixtures::to_vector(oracle::gaussian(rng, 12)).reshaped(3, 4);
        const Vector e = fixtures::random_vector(rng, 4);
        const double c = oracle::gaussian(rng, 1)[0];
        EXPECT_NEAR(eta(c * A, e), std::abs(c) * eta(A, e), 1e-12 * (1 + eta(A, e)));
    }
}

TEST(TraceRadius, AgainstJacobi) {
    std::mt19937 rng(23);
    for (int k = 0; k < 20; ++k) {
        Matrix A = fixtures::to_vector(oracle::gaussian(rng, 20)).reshaped(4, 5);
        const auto a = oracle::from_eigen(A);
        const auto ev = oracle::jacobi_eigenvalues(oracle::multiply(oracle::transpose(a), a));
        double tr = 0;
        for (double v : ev) tr += v;
        const auto [t, r] = trace_and_radius(A);
        EXPECT_NEAR(t, tr, 1e-10);
        EXPECT_NEAR(r, ev.back(), 1e-10);
        EXPECT_NEAR(z_envelopes(A).sum(), t / r, 1e-10);
    }
}

TEST(IdentityCheck, Examples) {
    std::mt19937 rng(24);
    const auto dm = build_design_matrix(BasisFamily::cosine(), DesignGrid::midpoint(12), 3);
    for (int k = 0; k < 10; ++k) {
        const auto c = projection_identity_check(fixtures::random_vector(rng, 12), dm);
        EXPECT_LE(c.gap, 1e-10);
        EXPECT_GT(c.rhs, 0.0);
    }
    // noise orthogonal to the model: both sides vanish
    Vector e = Vector::Zero(12);
    for (Eigen::Index i = 0; i < 12; ++i) e[i] = oracle::cosine(6, (double(i) + 0.5) / 12);
    const auto c = projection_identity_check(e, dm);
    EXPECT_NEAR(c.rhs, 0.0, 1e-12);
    EXPECT_THROW(projection_identity_check(Vector::Zero(5), dm), DimensionError);
}

TEST(IdentityCheck, RandomTrials) {
    const auto trials = identity_trials(40, 8, 64, 5);
    ASSERT_EQ(trials.size(), 40u);
    for (const auto& t : trials) {
        EXPECT_LE(t.dim, 8u);
        EXPECT_LE(t.n, 64u);
        EXPECT_GE(t.n, t.dim);
        EXPECT_LE(t.check.gap, 1e-10) << "trial " << t.trial;
        // the sup over random probes never exceeds the projection norm
        EXPECT_LE(t.check.lhs, t.check.rhs * (1 + 1e-10));
    }
}

TEST(NamedMatrix, Examples) {
    EXPECT_EQ(named_matrix("identity3"), Matrix::Identity(3, 3));
    const Matrix h = named_matrix("harmonic4");
    EXPECT_DOUBLE_EQ(h(3, 3), 0.25);
    EXPECT_EQ(h(0, 1), 0.0);
    const Matrix c = named_matrix("cosine_tikhonov");
    EXPECT_EQ(c.rows(), 4);
    EXPECT_EQ(c.cols(), 16);
    // row j is f_j phi_j(t_i) / n with f_j = l_j / (l_j^2 + 1/4), l_j = 1/j
    for (std::size_t j = 1; j <= 4; ++j) {
        const double l = 1.0 / double(j), f = l / (l * l + 0.25);
        for (std::size_t i = 0; i < 16; ++i)
            EXPECT_NEAR(std::abs(c(Eigen::Index(j - 1), Eigen::Index(i))),
                        std::abs(f * oracle::cosine(j, (double(i) + 0.5) / 16) / 16), 1e-13);
    }
    EXPECT_THROW(named_matrix("identity"), ParameterError);
    EXPECT_THROW(named_matrix("harmonicx"), ParameterError);
    EXPECT_THROW(named_matrix("nope"), ParameterError);
}

TEST(MomentConditions, GaussianAndTwoPoint) {
    const auto g = moment_conditions(NoiseLaw::gaussian(1), 1, 8);
    ASSERT_EQ(g.size(), 8u);
    // E|Z| = sqrt(2/pi) > 1/2, so the condition fails at q = 1 only
    EXPECT_NEAR(g[0].moment, std::sqrt(2 / 3.14159265358979323846), 1e-14);
    EXPECT_FALSE(g[0].holds);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_TRUE(g[i].holds) << "q = " << g[i].q;
    EXPECT_NEAR(g[1].moment, 1.0, 1e-14);
    EXPECT_NEAR(g[3].moment, 3.0, 1e-13);
    EXPECT_NEAR(g[5].moment, 15.0, 1e-12);
    const auto t = moment_conditions(NoiseLaw::two_point(1), 1, 4);
    EXPECT_FALSE(t[0].holds);
    EXPECT_TRUE(t[1].holds);
    EXPECT_EQ(t[3].limit, 12.0);
}

TEST(NoiseLaw, SamplesHaveUnitScale) {
    Rng rng = make_stream(3, 1, 0);
    const Vector tp = NoiseLaw::two_point(0.5).sample(rng, 1000);
    for (double v : tp) EXPECT_EQ(std::abs(v), 0.5);
    const Vector g = NoiseLaw::gaussian(2.0).sample(rng, 200000);
    EXPECT_NEAR(g.squaredNorm() / 200000, 4.0, 0.05);
}

TEST(Tail, LevelAndBoundArithmetic) {
    EXPECT_DOUBLE_EQ(tail_event_level(4, 1, 1, 2.5, 0, 0), 6.25);
    EXPECT_DOUBLE_EQ(tail_event_level(4, 1, 2, 2.5, 1, 3), 2 * 12.5 + 6);
    EXPECT_DOUBLE_EQ(tail_bound(4, 1, 2.5, 0, 1, 4), std::exp(-2.0));
    EXPECT_DOUBLE_EQ(tail_bound(4, 1, 2.5, 0, 1, 0), 1.0);
}

TEST(Tail, IdentityMatchesChiSquare) {
    const Matrix A = Matrix::Identity(4, 4);
    const auto spec = spec_for(A, 20000, 31);
    const std::vector<double> u = {0, 1, 2, 4, 8};
    for (double L : {0.0, 0.5}) {
        const auto rep = tail_check(spec, penalty_cfg(L), u);
        EXPECT_EQ(rep.violations, 0u);
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double p = oracle::chi_square_survival(4, rep.event_levels[i]);
            const double se = std::sqrt(p * (1 - p) / 20000.0);
            EXPECT_NEAR(rep.empirical_tail[i], p, 4 * se + 1e-12) << "u = " << u[i] << " L = " << L;
            EXPECT_LE(p, rep.theoretical_bound[i]);
        }
    }
}

TEST(Tail, DiagonalMatchesIndependentMonteCarlo) {
    Matrix A = Matrix::Zero(3, 3);
    A.diagonal() << 1, 0.5, 1.0 / 3;
    const auto spec = spec_for(A, 20000, 32);
    const std::vector<double> u = {0, 0.5, 1, 2};
    const auto rep = tail_check(spec, penalty_cfg(0.0), u);
    std::mt19937 rng(77);
    std::normal_distribution<double> g(0, 1);
    const int N = 200000;
    std::vector<int> hits(u.size(), 0);
    for (int k = 0; k < N; ++k) {
        double s = 0;
        for (int j = 1; j <= 3; ++j) {
            const double z = g(rng) / j;
            s += z * z;
        }
        for (std::size_t i = 0; i < u.size(); ++i) hits[i] += s >= rep.event_levels[i];
    }
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double p = double(hits[i]) / N;
        const double se = std::sqrt(p * (1 - p) / N + rep.stderr_tail[i] * rep.stderr_tail[i]);
        EXPECT_NEAR(rep.empirical_tail[i], p, 4 * se + 1e-12);
        EXPECT_FALSE(rep.violation[i]);
    }
}

TEST(Tail, BoundDominatesOverMatricesAndWeights) {
    for (const char* name : {"identity4", "harmonic8", "cosine_tikhonov"}) {
        Matrix A = named_matrix(name);
        for (double L : {0.0, 1.0, 3.0}) {
            const auto spec = spec_for(A, 5000, 33);
            std::vector<double> u;
            const double rho = trace_and_radius(A).second;
            for (double k = 0; k <= 16; k += 2) u.push_back(k * rho);
            const auto rep = tail_check(spec, penalty_cfg(L), u);
            EXPECT_EQ(rep.violations, 0u) << name << " L = " << L;
            for (std::size_t i = 1; i < u.size(); ++i) EXPECT_LE(rep.empirical_tail[i], rep.empirical_tail[i - 1]);
        }
    }
}

TEST(Tail, DeterministicAcrossThreadCounts) {
    auto spec = spec_for(named_matrix("harmonic8"), 3000, 34);
    const auto a = sample_eta_squared(spec);
    spec.threads = 3;
    EXPECT_EQ(a, sample_eta_squared(spec));
}

TEST(Moment, LevelAboveAllSamplesGivesZero) {
    const auto spec = spec_for(named_matrix("identity2"), 500, 35, NoiseLaw::two_point(1));
    // two-point noise makes eta^2 = 2 exactly, below the level 3 r / 2
    const auto rep = moment_check(spec, penalty_cfg(1.0), 2);
    EXPECT_EQ(rep.empirical, 0.0);
    EXPECT_TRUE(rep.defined);
    EXPECT_EQ(rep.ratio, 0.0);
    EXPECT_FALSE(moment_check(spec, penalty_cfg(0.0), 1).defined);
    EXPECT_THROW(moment_check(spec, penalty_cfg(1.0), 0), ParameterError);
}

TEST(Moment, ExponentialOracle) {
    const auto spec = spec_for(named_matrix("identity2"), 40000, 36);
    for (double L : {0.0, 0.3}) {
        const auto rep = moment_check(spec, penalty_cfg(L), 1);
        const double c = 3 * 2.5 / 2 * (1 + L);
        EXPECT_NEAR(rep.empirical, oracle::chi2_2_truncated_mean(c), 4 * rep.stderr_empirical);
    }
}

TEST(Moment, ImpliedConstantStaysModerate) {
    double worst = 0;
    for (const char* name : {"identity4", "harmonic8", "cosine_tikhonov"})
        for (double L : {0.5, 2.0}) {
            const auto rep = moment_check(spec_for(named_matrix(name), 20000, 37), penalty_cfg(L), 1);
            ASSERT_TRUE(rep.defined);
            EXPECT_TRUE(std::isfinite(rep.ratio));
            EXPECT_GE(rep.ratio, 0.0);
            worst = std::max(worst, rep.ratio);
        }
    EXPECT_LT(worst, 10.0);
}

TEST(TailCsv, HeaderBlock) {
    const auto rep = tail_check(spec_for(named_matrix("identity1"), 10, 1), penalty_cfg(0.0), {0.0});
    std::ostringstream os;
    write_tail_csv(os, rep);
    const auto s = os.str();
    EXPECT_EQ(s.rfind("# noise=gaussian\n# sigma=1\n# replications=10\n", 0), 0u);
    EXPECT_NE(s.find("\nu,level,empirical,stderr,bound,violation\n0,2.5,"), std::string::npos);
}
