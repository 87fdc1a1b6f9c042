#include "convlab/experiments.hpp"
#include "convlab/filter.hpp"

#include <doctest.h>

#include <cmath>

using namespace convlab;

namespace {

ModelParams single_regime() {
    ModelParams p = fig4_params(1.0);
    p.regimes.lambda1 = {0.3};
    p.regimes.lambda2 = {0.4};
    p.regimes.alpha1 = {0.5};
    p.regimes.alpha2 = {0.2};
    p.chain.Q = Eigen::MatrixXd::Zero(1, 1);
    p.chain.initial = Eigen::VectorXd::Ones(1);
    return p;
}

} // namespace

TEST_CASE("innovations whiten the residual noise") {
    const ObservationNoise n{0.4, 0.3, 0.6};
    // Residuals produced by unit innovations must map back to them.
    const double z1 = 0.7, z2 = -1.1;
    const double e1 = n.sigma1 * z1;
    const double e2 = n.sigma2 * (n.rho * z1 + std::sqrt(1.0 - n.rho * n.rho) * z2);
    const Innovation dI = innovation_from_residuals(e1, e2, n);
    CHECK(dI.dI1 == doctest::Approx(z1).epsilon(1e-14));
    CHECK(dI.dI2 == doctest::Approx(z2).epsilon(1e-14));
    CHECK_THROWS_AS(innovation_from_residuals(e1, e2, ObservationNoise{0.4, 0.3, 1.0}), NumericalError);
}

TEST_CASE("single regime: the filter stays at 1") {
    const Model m(single_regime());
    const TimeGrid g{1.0, 500};
    const PathBundle b = simulate_scenario(m, m.params().chain.initial, g, 4, 0);
    const std::vector<double> p0{1.0};
    const FilterPath f = run_filter(observations(b), p0, m);
    for (std::size_t k = 0; k < g.points(); ++k) CHECK(f.at(k)[0] == 1.0);
    CHECK(f.projection_log == 0.0);
}

TEST_CASE("filter gains sum to zero and the raw update conserves mass") {
    const Model m(fig4_params(1.0));
    const FilterCoefficients coeffs(m);
    const std::vector<double> p{0.35, 0.65};
    std::vector<double> h1(2), h2(2);
    coeffs.gains(0.1, p, h1, h2);
    CHECK(std::abs(h1[0] + h1[1]) < 1e-16);
    CHECK(std::abs(h2[0] + h2[1]) < 1e-16);
    std::vector<double> out(2);
    const FilterStepResult r = filter_step(p, 0.1, Innovation{0.03, -0.02}, 1e-3, m.params().chain.Q, coeffs, out);
    CHECK(std::abs(r.raw_mass - 1.0) < 1e-15);
    CHECK(out[0] + out[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("identical regimes: the filter solves the forward equation") {
    ModelParams p = fig4_params(1.0);
    p.regimes.alpha1 = {0.5, 0.5};
    p.regimes.alpha2 = {0.2, 0.2};
    p.chain.initial = Eigen::Vector2d(1.0, 0.0);
    const Model m(p);
    const TimeGrid g{1.0, 1000};
    const PathBundle b = simulate_scenario(m, p.chain.initial, g, 2, 0);
    const FilterPath f = run_filter(observations(b), std::vector<double>{1.0, 0.0}, m);
    const Eigen::VectorXd half = kolmogorov_baseline(p.chain.Q, p.chain.initial, 0.5);
    // Two-state closed form of the marginal law.
    const double q = 0.7, pbar = 0.5 / 0.7;
    CHECK(half(0) == doctest::Approx(pbar + (1.0 - pbar) * std::exp(-q * 0.5)).epsilon(1e-12));
    CHECK(std::abs(f.at(500)[0] - half(0)) < 5.0 * g.dt());
}

TEST_CASE("projection activity shrinks with the step size") {
    // Widely separated regimes push the Euler update outside the simplex.
    ModelParams p = fig4_params(1.0);
    p.regimes.alpha1 = {3.0, -3.0};
    p.regimes.alpha2 = {-3.0, 3.0};
    p.regimes.lambda1 = {2.0, 2.0};
    p.regimes.lambda2 = {2.0, 2.0};
    const Model m(p);
    double coarse = 0.0, fine = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng = make_stream(77, s);
        const ChainPath chain = simulate_chain(p.chain.Q, p.chain.initial, 1.0, rng);
        const TimeGrid gf{1.0, 2000};
        const BrownianIncrements inc = draw_increments(gf, rng);
        // Coarse increments are sums of fine ones: same Brownian path.
        const TimeGrid gc{1.0, 1000};
        BrownianIncrements coarse_inc;
        for (std::size_t k = 0; k < gc.steps; ++k) {
            coarse_inc.dBm.push_back(inc.dBm[2 * k] + inc.dBm[2 * k + 1]);
            coarse_inc.dB0.push_back(inc.dB0[2 * k] + inc.dB0[2 * k + 1]);
            coarse_inc.dB1.push_back(inc.dB1[2 * k] + inc.dB1[2 * k + 1]);
            coarse_inc.dB2.push_back(inc.dB2[2 * k] + inc.dB2[2 * k + 1]);
        }
        const std::vector<double> p0{0.5, 0.5};
        const PathBundle bf = build_paths(m, chain, gf, inc);
        const PathBundle bc = build_paths(m, chain, gc, coarse_inc);
        fine += run_filter(observations(bf), p0, m).projection_log;
        coarse += run_filter(observations(bc), p0, m).projection_log;
    }
    CHECK(coarse > 0.0);
    CHECK(fine < coarse);
}

TEST_CASE("filter input validation") {
    const Model m(fig4_params(1.0));
    const TimeGrid g{1.0, 10};
    const PathBundle b = simulate_scenario(m, m.params().chain.initial, g, 1, 0);
    CHECK_THROWS_AS(run_filter(observations(b), std::vector<double>{1.0}, m), ParameterError);
    CHECK_THROWS_AS(run_filter(observations(b), std::vector<double>{0.6, 0.6}, m), ParameterError);
    CHECK_THROWS_AS(run_filter(observations(b), std::vector<double>{1.5, -0.5}, m), ParameterError);
}
