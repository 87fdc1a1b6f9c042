#pragma once

#include "convlab/model.hpp"
#include "convlab/portfolio.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>

namespace convlab {

// Closed-form optimal weights for a log-utility trader. Full-information
// rules take the current regime; partial-information rules take the filter
// vector p and require regime-independent lambdas.

PortfolioWeights optimal_full(double x, std::size_t regime, const Model& model);
/// Throws ParameterError when beta2 == 0.
PortfolioWeights optimal_beta_neutral_full(double x, std::size_t regime, const Model& model);
/// h1 + h2 = 0 with the index weight free; hm = mu_m / sigma_m^2 when beta1 == beta2.
PortfolioWeights optimal_delta_neutral_full(double x, std::size_t regime, const Model& model);

PortfolioWeights optimal_partial(double x, std::span<const double> p, const Model& model);
PortfolioWeights optimal_beta_neutral_partial(double x, std::span<const double> p, const Model& model);
PortfolioWeights optimal_delta_neutral_partial(double x, std::span<const double> p, const Model& model);

PortfolioWeights optimal_full(double x, std::size_t regime, const Model& model, Variant v);
PortfolioWeights optimal_partial(double x, std::span<const double> p, const Model& model, Variant v);

/// Excess drift of S1 due to its pricing error, -lambda1^i (x - alpha1^i).
double pricing_drift1(const ModelParams& p, double x, std::size_t regime);
/// Excess drift of S2 due to its pricing error, lambda2^i (x - alpha2^i).
double pricing_drift2(const ModelParams& p, double x, std::size_t regime);

/// Linear constraint a1*h1 + a2*h2 = 0 on the stock legs.
struct LegConstraint {
    double a1;
    double a2;
};

/// Instantaneous covariance of the (S1, S2, Sm) returns.
Eigen::Matrix3d return_covariance(const ModelParams& p);

/// Excess returns over r of (S1, S2, Sm) given the pricing-error drifts.
Eigen::Vector3d excess_returns(const ModelParams& p, double drift1, double drift2);

/// Maximises mu^T h - h^T C h / 2 by a direct linear solve (3x3, or the 4x4
/// KKT system when a constraint is given). Throws NumericalError when the
/// system is singular.
PortfolioWeights markowitz_oracle(const Eigen::Vector3d& excess, const ModelParams& p,
                                  std::optional<LegConstraint> constraint = std::nullopt);

/// Drift of log-wealth, r + h.mu - h^T C h / 2, for the given pricing drifts.
double log_growth_rate(const ModelParams& p, const PortfolioWeights& h, double drift1, double drift2);

/// Policy factories for the simulator.
PolicyHandle full_information_policy(const Model& model, Variant v = Variant::unrestricted);
PolicyHandle partial_information_policy(const Model& model, Variant v = Variant::unrestricted);

} // namespace convlab
