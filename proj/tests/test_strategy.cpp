#include "convlab/experiments.hpp"
#include "convlab/strategy.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace convlab;

namespace {

// Plain Gaussian elimination with partial pivoting; independent of Eigen.
std::vector<double> gauss_solve(std::vector<std::vector<double>> A, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
        }
        std::swap(A[c], A[piv]);
        std::swap(b[c], b[piv]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = A[r][c] / A[c][c];
            for (std::size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
            b[r] -= f * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t r = n; r-- > 0;) {
        double s = b[r];
        for (std::size_t k = r + 1; k < n; ++k) s -= A[r][k] * x[k];
        x[r] = s / A[r][r];
    }
    return x;
}

// Covariance rows of (S1, S2, Sm) built from the factor loadings.
std::vector<std::vector<double>> covariance(const ModelParams& p) {
    const double L[3][4] = {{p.beta1 * p.sigma_m, p.sigma, p.b1, 0.0},
                            {p.beta2 * p.sigma_m, p.sigma, 0.0, p.b2},
                            {p.sigma_m, 0.0, 0.0, 0.0}};
    std::vector<std::vector<double>> C(3, std::vector<double>(3, 0.0));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 4; ++k) C[i][j] += L[i][k] * L[j][k];
    return C;
}

PortfolioWeights gauss_oracle(const ModelParams& p, double d1, double d2, const double* constraint) {
    auto C = covariance(p);
    std::vector<double> e{p.beta1 * p.mu_m + d1, p.beta2 * p.mu_m + d2, p.mu_m};
    if (constraint != nullptr) {
        for (int i = 0; i < 3; ++i) C[i].push_back(i < 2 ? constraint[i] : 0.0);
        C.push_back({constraint[0], constraint[1], 0.0, 0.0});
        e.push_back(0.0);
    }
    const auto h = gauss_solve(C, e);
    return {h[0], h[1], h[2]};
}

ModelParams random_params(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto u = [&](double a, double b) { return a + (b - a) * U(rng); };
    ModelParams p = fig4_params(1.0);
    p.r = u(0.0, 0.05);
    p.mu_m = u(0.01, 0.1);
    p.sigma_m = u(0.1, 0.5);
    p.beta1 = u(0.3, 1.8);
    p.beta2 = u(0.3, 1.8);
    p.sigma = u(0.05, 0.4);
    p.b1 = u(0.1, 0.5);
    p.b2 = u(0.1, 0.5);
    p.regimes.lambda1 = {u(0.05, 1.0), u(0.05, 1.0)};
    p.regimes.lambda2 = {u(0.05, 1.0), u(0.05, 1.0)};
    p.regimes.alpha1 = {u(-0.5, 0.5), u(-0.5, 0.5)};
    p.regimes.alpha2 = {u(-0.5, 0.5), u(-0.5, 0.5)};
    return p;
}

double max_dev(const PortfolioWeights& a, const PortfolioWeights& b) {
    return std::max({std::abs(a.h1 - b.h1), std::abs(a.h2 - b.h2), std::abs(a.hm - b.hm)});
}

} // namespace

TEST_CASE("closed-form full-information weights match an independent mean-variance solve") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int draw = 0; draw < 200; ++draw) {
        const ModelParams p = random_params(rng);
        const Model m(p);
        const double x = U(rng);
        for (std::size_t i = 0; i < 2; ++i) {
            const double d1 = pricing_drift1(p, x, i), d2 = pricing_drift2(p, x, i);
            const double beta[2] = {p.beta1, p.beta2};
            const double delta[2] = {1.0, 1.0};
            CHECK(max_dev(optimal_full(x, i, m), gauss_oracle(p, d1, d2, nullptr)) < 1e-10);
            CHECK(max_dev(optimal_beta_neutral_full(x, i, m), gauss_oracle(p, d1, d2, beta)) < 1e-10);
            CHECK(max_dev(optimal_delta_neutral_full(x, i, m), gauss_oracle(p, d1, d2, delta)) < 1e-10);
            CHECK(max_dev(markowitz_oracle(excess_returns(p, d1, d2), p), gauss_oracle(p, d1, d2, nullptr)) <
                  1e-10);
        }
    }
}

TEST_CASE("beta-neutral weights satisfy the constraint and reduce to delta-neutral") {
    ModelParams p = experiment_preset("fig1").params;
    const Model m(p);
    for (double x : {-0.7, 0.0, 0.01, 0.4}) {
        for (std::size_t i = 0; i < 2; ++i) {
            const auto h = optimal_beta_neutral_full(x, i, m);
            CHECK(std::abs(p.beta1 * h.h1 + p.beta2 * h.h2) < 1e-15);
            CHECK(h.hm == doctest::Approx(p.mu_m / (p.sigma_m * p.sigma_m)));
        }
    }
    p.beta2 = p.beta1;
    const Model eq(p);
    for (double x : {-0.7, 0.3}) {
        const auto b = optimal_beta_neutral_full(x, 1, eq);
        const auto d = optimal_delta_neutral_full(x, 1, eq);
        CHECK(b.h1 == doctest::Approx(d.h1).epsilon(1e-14));
        CHECK(b.h2 == doctest::Approx(d.h2).epsilon(1e-14));
        CHECK(b.hm == doctest::Approx(d.hm).epsilon(1e-14));
        const auto& rt = p.regimes;
        const double displayed = -(rt.lambda1[1] * (x - rt.alpha1[1]) + rt.lambda2[1] * (x - rt.alpha2[1])) /
                                 (p.b1 * p.b1 + p.b2 * p.b2);
        CHECK(d.h1 == doctest::Approx(displayed).epsilon(1e-14));
        CHECK(d.hm == doctest::Approx(p.mu_m / (p.sigma_m * p.sigma_m)).epsilon(1e-14));
    }
    p.beta2 = 0.0;
    CHECK_THROWS_AS(optimal_beta_neutral_full(0.1, 0, Model(p)), ParameterError);
}

TEST_CASE("no mispricing, no stock position") {
    ModelParams p = fig4_params(1.0);
    p.regimes.alpha1 = {0.2, 0.2};
    p.regimes.alpha2 = {0.2, 0.2};
    const Model m(p);
    const auto h = optimal_full(0.2, 0, m);
    CHECK(h.h1 == 0.0);
    CHECK(h.h2 == 0.0);
    CHECK(h.hm == doctest::Approx(p.mu_m / (p.sigma_m * p.sigma_m)));
    CHECK(optimal_delta_neutral_full(0.2, 1, m).h1 == 0.0);
}

TEST_CASE("stock legs do not depend on the betas") {
    ModelParams p = fig4_params(1.0);
    const auto a = optimal_full(0.3, 0, Model(p));
    p.beta1 = 0.4;
    p.beta2 = 1.7;
    const auto b = optimal_full(0.3, 0, Model(p));
    CHECK(a.h1 == doctest::Approx(b.h1).epsilon(1e-14));
    CHECK(a.h2 == doctest::Approx(b.h2).epsilon(1e-14));
    CHECK(a.hm != doctest::Approx(b.hm));
}

TEST_CASE("certainty equivalence: vertex filters give the full-information weights") {
    const Model m(fig4_params(1.0));
    for (Variant v : {Variant::unrestricted, Variant::beta_neutral, Variant::delta_neutral}) {
        for (double x : {-0.3, 0.05, 0.6}) {
            const std::vector<double> e1{1.0, 0.0}, e2{0.0, 1.0};
            CHECK(max_dev(optimal_partial(x, e1, m, v), optimal_full(x, 0, m, v)) < 1e-15);
            CHECK(max_dev(optimal_partial(x, e2, m, v), optimal_full(x, 1, m, v)) < 1e-15);
            // Weights are affine in p.
            const std::vector<double> mid{0.3, 0.7};
            const auto h = optimal_partial(x, mid, m, v);
            const auto a = optimal_full(x, 0, m, v), b = optimal_full(x, 1, m, v);
            CHECK(h.h1 == doctest::Approx(0.3 * a.h1 + 0.7 * b.h1).epsilon(1e-13));
            CHECK(h.h2 == doctest::Approx(0.3 * a.h2 + 0.7 * b.h2).epsilon(1e-13));
        }
    }
}

TEST_CASE("partial-information rules require constant lambda") {
    const Model m(experiment_preset("fig1").params);
    const std::vector<double> p{0.5, 0.5};
    CHECK_THROWS_AS(optimal_partial(0.1, p, m), ParameterError);
    CHECK_THROWS_AS(partial_information_policy(m, Variant::unrestricted), ParameterError);
    const Model c(fig4_params(1.0));
    CHECK_THROWS_AS(optimal_partial(0.1, std::vector<double>{1.0}, c), ParameterError);
}

TEST_CASE("the optimum maximises the log growth rate") {
    const ModelParams p = fig4_params(1.0);
    const Model m(p);
    const double x = 0.25;
    const double d1 = pricing_drift1(p, x, 0), d2 = pricing_drift2(p, x, 0);
    const auto h = optimal_full(x, 0, m);
    const double best = log_growth_rate(p, h, d1, d2);
    const auto C = return_covariance(p);
    for (int k = 0; k < 3; ++k) {
        for (double s : {-0.1, 0.1}) {
            PortfolioWeights g = h;
            (k == 0 ? g.h1 : k == 1 ? g.h2 : g.hm) += s;
            // Quadratic objective: the loss is exactly s^2 C_kk / 2.
            CHECK(best - log_growth_rate(p, g, d1, d2) == doctest::Approx(0.5 * s * s * C(k, k)).epsilon(1e-9));
        }
    }
}
