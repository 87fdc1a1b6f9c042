#include "convlab/experiments.hpp"
#include "convlab/strategy.hpp"
#include "convlab/value.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace convlab;

namespace {

ModelParams single_regime(double T) {
    ModelParams p = fig4_params(T);
    p.regimes.lambda1 = {0.3};
    p.regimes.lambda2 = {0.4};
    p.regimes.alpha1 = {0.5};
    p.regimes.alpha2 = {0.2};
    p.chain.Q = Eigen::MatrixXd::Zero(1, 1);
    p.chain.initial = Eigen::VectorXd::Ones(1);
    return p;
}

// K = 1 solution by hand: m, n, u solve scalar linear ODEs with constant
// coefficients; integrate n and u with a very fine trapezoid rule on the
// exact m.
struct ScalarSolution {
    double m, n, u;
};
ScalarSolution scalar_by_hand(const Model& model, double tau) {
    const auto& p = model.params();
    const auto& c = model.constants();
    const double L = p.regimes.lambda1[0] + p.regimes.lambda2[0];
    const double G = c.gamma1 + p.regimes.lambda1[0] * p.regimes.alpha1[0] + p.regimes.lambda2[0] * p.regimes.alpha2[0];
    const double t1 = c.theta1[0], t2 = c.theta2[0], t3 = c.theta3[0];
    auto m = [&](double s) { return t1 / (2 * L) * (1 - std::exp(-2 * L * s)); };
    const int N = 200000;
    const double h = tau / N;
    double n = 0.0, u = 0.0;
    // Exponential integrator for n (exact for the decay), trapezoid for the source.
    for (int k = 0; k < N; ++k) {
        const double s0 = k * h, s1 = s0 + h;
        const double f0 = 2 * G * m(s0) - t2, f1 = 2 * G * m(s1) - t2;
        const double n_next = n * std::exp(-L * h) + 0.5 * h * (f0 * std::exp(-L * h) + f1);
        u += 0.5 * h * ((c.gamma2 * m(s0) + G * n + t3) + (c.gamma2 * m(s1) + G * n_next + t3));
        n = n_next;
    }
    return {m(tau), n, u};
}

} // namespace

TEST_CASE("terminal conditions and value at T") {
    const Model m(fig4_params(2.0));
    const auto c = solve_full_ode(m, 100);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(c.m_at(2.0, i) == 0.0);
        CHECK(c.n_at(2.0, i) == 0.0);
        CHECK(c.u_at(2.0, i) == 0.0);
        CHECK(value_full(2.0, 3.0, 0.4, i, c) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    }
    CHECK_THROWS_AS(value_full(0.0, 0.0, 0.1, 0, c), ParameterError);
    CHECK_THROWS_AS(solve_full_ode(m, 5), ParameterError);
    const double dv = value_full(0.0, 2.0, 0.1, 0, c) - value_full(0.0, 1.0, 0.1, 0, c);
    CHECK(dv == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("single regime: RK4 matches the closed form and a hand integration") {
    const Model m(single_regime(2.0));
    const auto c = solve_full_ode(m, 10000);
    const auto& p = m.params();
    const double L = p.regimes.lambda1[0] + p.regimes.lambda2[0];
    double err = 0.0;
    for (std::size_t k = 0; k < c.grid.points(); ++k) {
        const double tau = 2.0 - c.grid.time(k);
        err = std::max(err, std::abs(c.m(static_cast<Eigen::Index>(k), 0) -
                                     m.constants().theta1[0] / (2 * L) * (1 - std::exp(-2 * L * tau))));
    }
    CHECK(err < 1e-8);
    const ScalarSolution s = scalar_by_hand(m, 2.0);
    CHECK(c.n_at(0.0, 0) == doctest::Approx(s.n).epsilon(1e-8));
    CHECK(c.u_at(0.0, 0) == doctest::Approx(s.u).epsilon(1e-8));
}

TEST_CASE("decoupled regimes solve independently") {
    ModelParams p = fig4_params(2.0);
    p.regimes.lambda1 = {0.3, 0.6};
    p.chain.Q = Eigen::Matrix2d::Zero();
    const Model both(p);
    const auto c = solve_full_ode(both, 500);
    for (std::size_t i = 0; i < 2; ++i) {
        ModelParams one = p;
        one.regimes.lambda1 = {p.regimes.lambda1[i]};
        one.regimes.lambda2 = {p.regimes.lambda2[i]};
        one.regimes.alpha1 = {p.regimes.alpha1[i]};
        one.regimes.alpha2 = {p.regimes.alpha2[i]};
        one.chain.Q = Eigen::MatrixXd::Zero(1, 1);
        one.chain.initial = Eigen::VectorXd::Ones(1);
        const auto s = solve_full_ode(Model(one), 500);
        CHECK((c.m.col(static_cast<Eigen::Index>(i)) - s.m.col(0)).cwiseAbs().maxCoeff() < 1e-15);
        CHECK((c.n.col(static_cast<Eigen::Index>(i)) - s.n.col(0)).cwiseAbs().maxCoeff() < 1e-15);
        CHECK((c.u.col(static_cast<Eigen::Index>(i)) - s.u.col(0)).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("RK4 converges at fourth order") {
    const Model m(fig2_params(2.0));
    auto at0 = [&](std::size_t n) {
        const auto c = solve_full_ode(m, n);
        return Eigen::Vector2d(c.u_at(0.0, 0), c.n_at(0.0, 1));
    };
    const Eigen::Vector2d a = at0(10), b = at0(20), r = at0(2000);
    const double ea = (a - r).cwiseAbs().maxCoeff(), eb = (b - r).cwiseAbs().maxCoeff();
    CHECK(ea / eb > 12.0);
    CHECK(ea / eb < 20.0);
}

TEST_CASE("m is linear in Theta1") {
    const ModelParams p = fig2_params(2.0);
    const Model base(p);
    DerivedConstants c = base.constants();
    for (double& t : c.theta1) t *= 2.0;
    const Model doubled = Model::with_constants(p, c);
    const auto a = solve_full_ode(base, 400), b = solve_full_ode(doubled, 400);
    CHECK((b.m - 2.0 * a.m).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(a.m.minCoeff() >= 0.0);
}

TEST_CASE("closed-form mbar") {
    const Model m(fig4_params(2.0));
    CHECK(mbar_closed_form(2.0, m) == 0.0);
    ModelParams longp = fig4_params(400.0);
    const Model lm(longp);
    const double steady = lm.constants().theta1[0] / (2 * 0.7);
    CHECK(mbar_closed_form(0.0, lm) == doctest::Approx(steady).epsilon(1e-14));
    CHECK_THROWS_AS(mbar_closed_form(0.0, Model(experiment_preset("fig1").params)), ParameterError);
}

TEST_CASE("partial-information PDE basics") {
    const Model m(fig4_params(2.0));
    const auto sol = solve_partial_pde(m, 400, 50);
    for (std::size_t j = 0; j <= 50; ++j) {
        CHECK(sol.nbar(400, static_cast<Eigen::Index>(j)) == 0.0);
        CHECK(sol.ubar(400, static_cast<Eigen::Index>(j)) == 0.0);
    }
    CHECK(sol.mbar.back() == 0.0);
    CHECK(sol.mbar_at(0.0) == doctest::Approx(mbar_closed_form(0.0, m)).epsilon(1e-15));
    CHECK_THROWS_AS(solve_partial_pde(m, 400, 20), ParameterError);
    CHECK_THROWS_AS(solve_partial_pde(Model(experiment_preset("fig1").params), 400, 50), ParameterError);

    ModelParams three = fig4_params(2.0);
    three.regimes.lambda1 = {0.3, 0.3, 0.3};
    three.regimes.lambda2 = {0.4, 0.4, 0.4};
    three.regimes.alpha1 = {0.5, -0.2, 0.0};
    three.regimes.alpha2 = {0.2, -0.3, 0.0};
    three.chain.Q.resize(3, 3);
    three.chain.Q << -0.2, 0.1, 0.1, 0.2, -0.4, 0.2, 0.1, 0.1, -0.2;
    three.chain.initial = Eigen::Vector3d(1, 0, 0);
    CHECK_THROWS_AS(solve_partial_pde(Model(three), 400, 50), ParameterError);
}

TEST_CASE("reduction coefficients vanish at the vertices") {
    const Model m(fig4_params(2.0));
    for (double p : {0.0, 1.0}) {
        const auto r = partial_reduction(m, p);
        CHECK(r.diffusion == 0.0);
        CHECK(r.cross == 0.0);
    }
    CHECK(partial_reduction(m, 0.0).drift == doctest::Approx(0.5));
    CHECK(partial_reduction(m, 1.0).drift == doctest::Approx(-0.2));
    const auto r = partial_reduction(m, 0.5);
    const double s1 = m.constants().sigma1;
    CHECK(r.h11 == doctest::Approx(0.3 * 0.25 * 0.7 / s1).epsilon(1e-14));
    CHECK(r.diffusion > 0.0);
}

TEST_CASE("uninformative regimes: the PDE reproduces the single-regime ODE") {
    ModelParams p = fig4_params(2.0);
    p.regimes.alpha1 = {0.5, 0.5};
    p.regimes.alpha2 = {0.2, 0.2};
    const Model m(p);
    for (std::size_t j = 0; j <= 10; ++j) CHECK(partial_reduction(m, j / 10.0).diffusion == 0.0);
    const auto ode = solve_full_ode(Model(single_regime(2.0)), 2000);
    double prev = 0.0;
    for (std::size_t n_t : {1000, 2000}) {
        const auto sol = solve_partial_pde(m, n_t, 50);
        double err = 0.0;
        for (int a = 0; a <= 20; ++a) {
            for (int b = 0; b <= 10; ++b) {
                const double t = 0.1 * a, q = b / 10.0;
                err = std::max({err, std::abs(sol.nbar_at(t, q) - ode.n_at(t, 0)),
                                std::abs(sol.ubar_at(t, q) - ode.u_at(t, 0))});
            }
        }
        CHECK(err < 1e-3);
        if (prev > 0.0) CHECK(prev / err == doctest::Approx(2.0).epsilon(0.05));
        prev = err;
    }
}

TEST_CASE("partial-information PDE self-convergence") {
    const Model m(fig4_params(2.0));
    std::vector<ValuePartialSolution> s;
    for (std::size_t f : {2, 4, 8}) s.push_back(solve_partial_pde(m, 250 * f, 50 * f));
    auto diff = [&](const ValuePartialSolution& a, const ValuePartialSolution& b, bool u) {
        double e = 0.0;
        for (int i = 0; i <= 10; ++i) {
            for (int j = 0; j <= 10; ++j) {
                const double t = 0.2 * i, q = j / 10.0;
                e = std::max(e, u ? std::abs(a.ubar_at(t, q) - b.ubar_at(t, q))
                                  : std::abs(a.nbar_at(t, q) - b.nbar_at(t, q)));
            }
        }
        return e;
    };
    const double order_n = std::log2(diff(s[0], s[1], false) / diff(s[1], s[2], false));
    const double order_u = std::log2(diff(s[0], s[1], true) / diff(s[1], s[2], true));
    CHECK(order_n >= 1.0);
    CHECK(order_u >= 0.9);
}

TEST_CASE("loss of utility") {
    const Model m(fig4_params(2.0));
    const auto full = solve_full_ode(m, 1000);
    const auto part = solve_partial_pde(m, 1000, 100);
    CHECK(loss_of_utility(2.0, 0.05, 0.3, full, part) == 0.0);
    for (double x : {-0.5, 0.05, 0.5}) {
        for (double t : {0.0, 1.0, 1.9}) {
            CHECK(loss_of_utility(t, x, 0.0, full, part) >= -1e-4);
            CHECK(loss_of_utility(t, x, 1.0, full, part) >= -1e-4);
            CHECK(loss_of_utility(t, x, 0.4, full, part) > 0.0);
        }
    }
    const Model other(fig4_params(1.0));
    CHECK_THROWS_AS(loss_of_utility(0.0, 0.05, 0.3, full, solve_partial_pde(other, 1000, 100)), ParameterError);

    ModelParams same = fig4_params(2.0);
    same.regimes.alpha1 = {0.1, 0.1};
    same.regimes.alpha2 = {-0.1, -0.1};
    const Model sm(same);
    const auto f2 = solve_full_ode(sm, 1000);
    const auto p2 = solve_partial_pde(sm, 1000, 100);
    for (double q : {0.0, 0.3, 0.8, 1.0}) CHECK(std::abs(loss_of_utility(0.0, 0.05, q, f2, p2)) < 1e-3);
}

TEST_CASE("Monte Carlo estimates") {
    const Model m(fig4_params(1.0));
    MonteCarloSettings s;
    s.n_paths = 200;
    s.grid = TimeGrid{1.0, 200};
    s.w0 = 2.0;
    const PolicyHandle cash(FullInformationPolicy([](double, double, std::size_t) { return PortfolioWeights{}; }));
    const auto e = mc_expected_log_utility(cash, m, std::size_t{0}, s);
    CHECK(e.mean == doctest::Approx(std::log(2.0) + 0.02).epsilon(1e-14));
    CHECK(e.std_error == 0.0);

    s.w0 = 1.0;
    s.n_paths = 300;
    const PolicyHandle opt = partial_information_policy(m, Variant::unrestricted);
    s.threads = 1;
    const auto one = mc_expected_log_utility(opt, m, Eigen::VectorXd(Eigen::Vector2d(0.5, 0.5)), s);
    s.threads = 3;
    const auto three = mc_expected_log_utility(opt, m, Eigen::VectorXd(Eigen::Vector2d(0.5, 0.5)), s);
    CHECK(one.mean == three.mean);
    CHECK(one.std_error == three.std_error);

    s.n_paths = 50;
    CHECK_THROWS_AS(mc_expected_log_utility(cash, m, std::size_t{0}, s), ParameterError);
}

TEST_CASE("value dumps") {
    const Model m(fig4_params(2.0));
    const auto full = solve_full_ode(m, 20);
    const auto part = solve_partial_pde(m, 20, 50);
    const auto dir = std::filesystem::temp_directory_path();
    write_full_value_csv(dir / "convlab_full.csv", full);
    write_partial_value_csv(dir / "convlab_partial.csv", part);
    write_loss_csv(dir / "convlab_loss.csv", full, part, {0.05}, 5, 10);
    std::ifstream in(dir / "convlab_loss.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "t,p,x,l");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 5 * 6);
    for (const char* f : {"convlab_full.csv", "convlab_partial.csv", "convlab_loss.csv"}) {
        std::filesystem::remove(dir / f);
    }
}
