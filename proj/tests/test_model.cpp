#include "convlab/experiments.hpp"
#include "convlab/model.hpp"

#include <doctest.h>

#include <cmath>

using namespace convlab;

namespace {

ModelParams fig1_like() {
    ModelParams p = experiment_preset("fig1").params;
    return p;
}

// Second transcription of the value-equation sources, written from the
// mean-variance problem rather than copied from the library.
struct Sources {
    double t1, t2, t3;
};
Sources sources_by_hand(const ModelParams& p, double l1, double l2, double a1, double a2) {
    const double s2 = p.sigma * p.sigma;
    const double B1 = p.b1 * p.b1, B2 = p.b2 * p.b2;
    const double D = B1 * B2 + s2 * (B1 + B2);
    // Residual covariance of the two legs and its inverse.
    const double c11 = s2 + B1, c22 = s2 + B2, c12 = s2;
    const double det = c11 * c22 - c12 * c12;
    const double i11 = c22 / det, i22 = c11 / det, i12 = -c12 / det;
    // Drifts: d1 = -l1 x + l1 a1 = k1 x + e1, d2 = l2 x - l2 a2 = k2 x + e2.
    const double k1 = -l1, e1 = l1 * a1, k2 = l2, e2 = -l2 * a2;
    auto quad = [&](double u1, double u2, double v1, double v2) {
        return u1 * i11 * v1 + u1 * i12 * v2 + u2 * i12 * v1 + u2 * i22 * v2;
    };
    CHECK(std::abs(det - D) < 1e-15);
    const double t1 = 0.5 * quad(k1, k2, k1, k2);
    const double t2 = -quad(k1, k2, e1, e2);
    const double t3 = 0.5 * quad(e1, e2, e1, e2) + p.r + p.mu_m * p.mu_m / (2.0 * p.sigma_m * p.sigma_m);
    return {t1, t2, t3};
}

} // namespace

TEST_CASE("derived constants at the Fig-1 parameters") {
    const Model m(fig1_like());
    const auto& c = m.constants();
    CHECK(c.varrho1 == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(c.varrho2 == doctest::Approx(0.09 / 0.13).epsilon(1e-14));
    CHECK(c.rho == doctest::Approx(0.09 / (std::sqrt(0.18) * std::sqrt(0.13))).epsilon(1e-14));
    CHECK(c.rho == doctest::Approx(0.58835).epsilon(1e-5));
    CHECK(c.gamma1 == doctest::Approx(-0.038172).epsilon(1e-5));
    CHECK(c.gamma2 == doctest::Approx(0.132756).epsilon(1e-5));
    CHECK(c.sigma1 == doctest::Approx(std::sqrt(0.18)).epsilon(1e-15));
}

TEST_CASE("Theta constants agree with an independent transcription") {
    for (const char* name : {"fig1", "fig3", "fig4"}) {
        const ModelParams p = experiment_preset(name).params;
        const Model m(p);
        for (std::size_t i = 0; i < p.regime_count(); ++i) {
            const auto& rt = p.regimes;
            const Sources s = sources_by_hand(p, rt.lambda1[i], rt.lambda2[i], rt.alpha1[i], rt.alpha2[i]);
            CHECK(std::abs(m.constants().theta1[i] - s.t1) < 1e-14);
            CHECK(std::abs(m.constants().theta2[i] - s.t2) < 1e-14);
            CHECK(std::abs(m.constants().theta3[i] - s.t3) < 1e-14);
        }
    }
}

TEST_CASE("Theta1 is nonnegative and Phi vanishes for beta1 = beta2 = 0") {
    ModelParams p = fig1_like();
    const Model m(p);
    for (double t : m.constants().theta1) CHECK(t >= 0.0);
    p.beta1 = p.beta2 = 0.0;
    const Model z(p);
    for (double v : z.constants().phi1) CHECK(std::isnan(v));
}

TEST_CASE("validation names the failed invariant") {
    ModelParams p = fig1_like();
    p.regimes.lambda1 = {0.5, -0.7};
    CHECK_THROWS_WITH_AS(Model{p}, doctest::Contains("lambda1+lambda2 <= 0 in regime 2"), ParameterError);

    p = fig1_like();
    p.chain.Q(0, 0) = -0.02;
    CHECK_THROWS_AS(Model{p}, ParameterError);

    p = fig1_like();
    p.chain.Q << 0.01, -0.01, 0.02, -0.02;
    CHECK_THROWS_WITH_AS(Model{p}, doctest::Contains("negative off-diagonal"), ParameterError);

    p = fig1_like();
    p.regimes.alpha2 = {0.0};
    CHECK_THROWS_AS(Model{p}, ParameterError);

    p = fig1_like();
    p.b2 = 0.0;
    CHECK_THROWS_AS(Model{p}, ParameterError);
}

TEST_CASE("zero off-diagonal intensities are admitted with a warning") {
    ModelParams p = fig1_like();
    p.chain.Q << 0.0, 0.0, 0.02, -0.02;
    const Model m(p);
    REQUIRE(m.warnings().size() == 1);
    CHECK(m.warnings()[0].find("q(1,2)") != std::string::npos);
}

TEST_CASE("stationary distribution") {
    SUBCASE("two states: closed form") {
        const Eigen::VectorXd nu = stationary_distribution(fig2_params(2.0).chain.Q);
        CHECK(nu(0) == doctest::Approx(0.2 / 0.9).epsilon(1e-14));
        CHECK(nu.sum() == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("three states: uniformised power iteration") {
        Eigen::Matrix3d Q;
        Q << -0.5, 0.3, 0.2, 0.4, -0.6, 0.2, 0.1, 0.5, -0.6;
        const Eigen::VectorXd nu = stationary_distribution(Q);
        const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() + Q / 1.0;
        Eigen::RowVector3d v(1.0, 0.0, 0.0);
        for (int k = 0; k < 5000; ++k) v = v * P;
        for (int i = 0; i < 3; ++i) CHECK(std::abs(nu(i) - v(i)) < 1e-12);
    }
    SUBCASE("two closed classes are rejected") {
        Eigen::Matrix3d Q;
        Q << 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, -1.0;
        CHECK_THROWS_AS(stationary_distribution(Q), ParameterError);
    }
}

TEST_CASE("averaged parameters use the stationary law") {
    const ModelParams av = averaged_params(fig2_params(2.0));
    const double pb = 0.2 / 0.9;
    CHECK(av.regime_count() == 1);
    CHECK(av.regimes.lambda1[0] == doctest::Approx(pb * 0.5 + (1 - pb) * -0.3).epsilon(1e-14));
    CHECK(av.regimes.lambda2[0] == doctest::Approx(pb * -0.1 + (1 - pb) * 0.6).epsilon(1e-14));
    CHECK(av.chain.Q.rows() == 1);
    CHECK(av.chain.Q(0, 0) == 0.0);
    CHECK_NOTHROW(Model{av});
}

TEST_CASE("fingerprint tracks parameters and injected constants") {
    const ModelParams p = fig1_like();
    const Model a(p), b(p);
    CHECK(a.fingerprint() == b.fingerprint());
    ModelParams q = p;
    q.r = 0.021;
    CHECK(Model(q).fingerprint() != a.fingerprint());
    DerivedConstants c = a.constants();
    c.theta1[0] *= 2.0;
    CHECK(Model::with_constants(p, c).fingerprint() != a.fingerprint());
}

TEST_CASE("variant names round-trip") {
    for (Variant v : {Variant::unrestricted, Variant::beta_neutral, Variant::delta_neutral}) {
        CHECK(variant_from_string(to_string(v)) == v);
    }
    CHECK_THROWS_AS(variant_from_string("gamma"), ParameterError);
}
