#include "convlab/strategy.hpp"

#include <numeric>
#include <string>

namespace convlab {

namespace {

// Unrestricted optimum for given pricing drifts d1 = mu_1, d2 = mu_2. The
// stock legs do not depend on the market parameters; the index absorbs
// their beta exposure.
PortfolioWeights unrestricted(const ModelParams& p, const DerivedConstants& c, double d1, double d2) {
    PortfolioWeights h;
    h.h1 = (d1 - d2 * c.varrho2) / (p.b1 * p.b1 + p.b2 * p.b2 * c.varrho2);
    h.h2 = (d2 - d1 * c.varrho1) / (p.b2 * p.b2 + p.b1 * p.b1 * c.varrho1);
    h.hm = p.mu_m / (p.sigma_m * p.sigma_m) - p.beta1 * h.h1 - p.beta2 * h.h2;
    return h;
}

// Optimum under beta1*h1 + beta2*h2 = 0.
PortfolioWeights beta_neutral(const ModelParams& p, double d1, double d2) {
    if (p.beta2 == 0.0) {
        throw ParameterError("beta-neutral strategy requires beta2 != 0");
    }
    const double k = p.beta1 / p.beta2;
    const double one_minus_k = 1.0 - k;
    PortfolioWeights h;
    h.h1 = (d1 - k * d2) /
           (p.b1 * p.b1 + k * k * p.b2 * p.b2 + p.sigma * p.sigma * one_minus_k * one_minus_k);
    h.h2 = -k * h.h1;
    h.hm = p.mu_m / (p.sigma_m * p.sigma_m);
    return h;
}

// Optimum under h1 + h2 = 0. The legs keep a market exposure
// (beta1 - beta2) h1, which the index position offsets.
PortfolioWeights delta_neutral(const ModelParams& p, double d1, double d2) {
    PortfolioWeights h;
    h.h1 = (d1 - d2) / (p.b1 * p.b1 + p.b2 * p.b2);
    h.h2 = -h.h1;
    h.hm = p.mu_m / (p.sigma_m * p.sigma_m) - (p.beta1 - p.beta2) * h.h1;
    return h;
}

void check_regime(const ModelParams& p, std::size_t i) {
    if (i >= p.regime_count()) {
        throw ParameterError("regime index " + std::to_string(i) + " out of range");
    }
}

struct FilteredDrifts {
    double d1;
    double d2;
};

// Certainty-equivalent drifts -lambda1 (x - alpha1.p), lambda2 (x - alpha2.p).
FilteredDrifts filtered_drifts(const ModelParams& p, double x, std::span<const double> prob) {
    if (!has_constant_lambda(p)) {
        throw ParameterError("partial-information strategies require regime-independent lambda1, lambda2");
    }
    const auto& rt = p.regimes;
    if (prob.size() != rt.size()) {
        throw ParameterError("filter vector has length " + std::to_string(prob.size()) + ", expected " +
                             std::to_string(rt.size()));
    }
    double a1 = 0.0, a2 = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        a1 += prob[i] * rt.alpha1[i];
        a2 += prob[i] * rt.alpha2[i];
    }
    return {-rt.lambda1[0] * (x - a1), rt.lambda2[0] * (x - a2)};
}

} // namespace

double pricing_drift1(const ModelParams& p, double x, std::size_t regime) {
    return -p.regimes.lambda1[regime] * (x - p.regimes.alpha1[regime]);
}

double pricing_drift2(const ModelParams& p, double x, std::size_t regime) {
    return p.regimes.lambda2[regime] * (x - p.regimes.alpha2[regime]);
}

PortfolioWeights optimal_full(double x, std::size_t regime, const Model& model) {
    const auto& p = model.params();
    check_regime(p, regime);
    return unrestricted(p, model.constants(), pricing_drift1(p, x, regime), pricing_drift2(p, x, regime));
}

PortfolioWeights optimal_beta_neutral_full(double x, std::size_t regime, const Model& model) {
    const auto& p = model.params();
    check_regime(p, regime);
    return beta_neutral(p, pricing_drift1(p, x, regime), pricing_drift2(p, x, regime));
}

PortfolioWeights optimal_delta_neutral_full(double x, std::size_t regime, const Model& model) {
    const auto& p = model.params();
    check_regime(p, regime);
    return delta_neutral(p, pricing_drift1(p, x, regime), pricing_drift2(p, x, regime));
}

PortfolioWeights optimal_partial(double x, std::span<const double> prob, const Model& model) {
    const auto d = filtered_drifts(model.params(), x, prob);
    return unrestricted(model.params(), model.constants(), d.d1, d.d2);
}

PortfolioWeights optimal_beta_neutral_partial(double x, std::span<const double> prob, const Model& model) {
    const auto d = filtered_drifts(model.params(), x, prob);
    return beta_neutral(model.params(), d.d1, d.d2);
}

PortfolioWeights optimal_delta_neutral_partial(double x, std::span<const double> prob, const Model& model) {
    const auto d = filtered_drifts(model.params(), x, prob);
    return delta_neutral(model.params(), d.d1, d.d2);
}

PortfolioWeights optimal_full(double x, std::size_t regime, const Model& model, Variant v) {
    switch (v) {
    case Variant::unrestricted:
        return optimal_full(x, regime, model);
    case Variant::beta_neutral:
        return optimal_beta_neutral_full(x, regime, model);
    case Variant::delta_neutral:
        return optimal_delta_neutral_full(x, regime, model);
    }
    throw ParameterError("unknown variant");
}

PortfolioWeights optimal_partial(double x, std::span<const double> prob, const Model& model, Variant v) {
    switch (v) {
    case Variant::unrestricted:
        return optimal_partial(x, prob, model);
    case Variant::beta_neutral:
        return optimal_beta_neutral_partial(x, prob, model);
    case Variant::delta_neutral:
        return optimal_delta_neutral_partial(x, prob, model);
    }
    throw ParameterError("unknown variant");
}

Eigen::Matrix3d return_covariance(const ModelParams& p) {
    const double sm2 = p.sigma_m * p.sigma_m;
    const double s2 = p.sigma * p.sigma;
    Eigen::Matrix3d C;
    C(0, 0) = p.beta1 * p.beta1 * sm2 + s2 + p.b1 * p.b1;
    C(1, 1) = p.beta2 * p.beta2 * sm2 + s2 + p.b2 * p.b2;
    C(2, 2) = sm2;
    C(0, 1) = C(1, 0) = p.beta1 * p.beta2 * sm2 + s2;
    C(0, 2) = C(2, 0) = p.beta1 * sm2;
    C(1, 2) = C(2, 1) = p.beta2 * sm2;
    return C;
}

Eigen::Vector3d excess_returns(const ModelParams& p, double drift1, double drift2) {
    return {p.beta1 * p.mu_m + drift1, p.beta2 * p.mu_m + drift2, p.mu_m};
}

PortfolioWeights markowitz_oracle(const Eigen::Vector3d& excess, const ModelParams& p,
                                  std::optional<LegConstraint> constraint) {
    const Eigen::Matrix3d C = return_covariance(p);
    if (!constraint) {
        Eigen::FullPivLU<Eigen::Matrix3d> lu(C);
        if (!lu.isInvertible()) {
            throw NumericalError("return covariance is singular");
        }
        const Eigen::Vector3d h = lu.solve(excess);
        return {h(0), h(1), h(2)};
    }
    Eigen::Matrix4d kkt = Eigen::Matrix4d::Zero();
    kkt.topLeftCorner<3, 3>() = C;
    kkt(0, 3) = kkt(3, 0) = constraint->a1;
    kkt(1, 3) = kkt(3, 1) = constraint->a2;
    Eigen::Vector4d rhs;
    rhs << excess, 0.0;
    Eigen::FullPivLU<Eigen::Matrix4d> lu(kkt);
    if (!lu.isInvertible()) {
        throw NumericalError("KKT system is singular");
    }
    const Eigen::Vector4d sol = lu.solve(rhs);
    return {sol(0), sol(1), sol(2)};
}

double log_growth_rate(const ModelParams& p, const PortfolioWeights& h, double drift1, double drift2) {
    const double market = h.hm + h.h1 * p.beta1 + h.h2 * p.beta2;
    const double legs = h.h1 + h.h2;
    const double var = p.sigma_m * p.sigma_m * market * market + p.sigma * p.sigma * legs * legs +
                       p.b1 * p.b1 * h.h1 * h.h1 + p.b2 * p.b2 * h.h2 * h.h2;
    return p.r + market * p.mu_m + h.h1 * drift1 + h.h2 * drift2 - 0.5 * var;
}

PolicyHandle full_information_policy(const Model& model, Variant v) {
    return FullInformationPolicy(
        [model, v](double, double x, std::size_t regime) { return optimal_full(x, regime, model, v); });
}

PolicyHandle partial_information_policy(const Model& model, Variant v) {
    if (!has_constant_lambda(model.params())) {
        throw ParameterError("partial-information strategies require regime-independent lambda1, lambda2");
    }
    return PartialInformationPolicy(
        [model, v](double, double x, std::span<const double> prob) { return optimal_partial(x, prob, model, v); });
}

} // namespace convlab
