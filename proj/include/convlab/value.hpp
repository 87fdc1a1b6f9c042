#pragma once

#include "convlab/model.hpp"
#include "convlab/portfolio.hpp"
#include "convlab/simulate.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace convlab {

/// Coefficients of V(t, w, x, i) = log w + m(t,i) x^2 + n(t,i) x + u(t,i) on a
/// uniform time grid. Row k of m, n, u holds time grid.time(k).
struct ValueCoefficientsFull {
    TimeGrid grid;
    Variant variant = Variant::unrestricted;
    std::string fingerprint;
    Eigen::MatrixXd m, n, u; // (steps + 1) x K

    std::size_t regimes() const { return static_cast<std::size_t>(m.cols()); }

    /// Linear interpolation in t.
    double m_at(double t, std::size_t i) const;
    double n_at(double t, std::size_t i) const;
    double u_at(double t, std::size_t i) const;
};

/// Classic RK4 backward from T with zero terminal data. Each stage evaluates
/// m, then n, then u, so the triangular coupling is respected without losing
/// fourth order.
ValueCoefficientsFull solve_full_ode(const Model& model, std::size_t n_t, Variant v = Variant::unrestricted);

double value_full(double t, double w, double x, std::size_t regime, const ValueCoefficientsFull& coeffs);

/// Theta1 / (2 L) (1 - exp(-2 L (T - t))), L = lambda1 + lambda2. Beta- and
/// delta-neutral variants use the matching Phi1.
double mbar_closed_form(double t, const Model& model, Variant v = Variant::unrestricted);

/// Explicit finite-difference solver for the backward equation
///   v_tau = a(p)/2 v_pp + b(p) v_p - c v + f
/// on a uniform grid of [0, 1], written in time-to-go tau. Diffusion uses
/// central differences, drift first-order upwinding. Endpoint rows need
/// a = 0 there and drift pointing into the interval; no boundary data is used.
class DegenerateParabolicOperator {
public:
    DegenerateParabolicOperator(std::vector<double> diffusion, std::vector<double> drift, double decay);

    std::size_t nodes() const { return a_.size(); }
    double dp() const { return dp_; }
    /// Largest tau step keeping the update a convex combination.
    double max_stable_step() const;
    /// out = a/2 v_pp + b v_p - c v.
    void apply(const std::vector<double>& v, std::vector<double>& out) const;

private:
    std::vector<double> a_, b_;
    double c_;
    double dp_;
};

/// Coefficients of the K = 2 partial-information value function
/// log w + mbar(t) x^2 + nbar(t,p) x + ubar(t,p), p = P(Y_t = 1 | observations).
struct ValuePartialSolution {
    TimeGrid grid;
    std::size_t n_p = 0;
    Variant variant = Variant::unrestricted;
    std::string fingerprint;
    std::vector<double> mbar;  // steps + 1
    Eigen::MatrixXd nbar;      // (steps + 1) x (n_p + 1)
    Eigen::MatrixXd ubar;      // (steps + 1) x (n_p + 1)
    std::size_t substeps = 0;  // explicit steps per time-grid step

    double p(std::size_t j) const { return static_cast<double>(j) / static_cast<double>(n_p); }

    /// Bilinear interpolation in (t, p).
    double mbar_at(double t) const;
    double nbar_at(double t, double p) const;
    double ubar_at(double t, double p) const;
};

/// Pieces of the K = 2 reduction shared by the solver and its tests.
struct PartialReduction {
    double h11;        // H^{1,(1)}(p)
    double h12;        // H^{1,(2)}(p)
    double diffusion;  // h11^2 + h12^2
    double drift;      // q21 (1 - p) - q12 p
    double cross;      // coefficient of nbar_p in the ubar equation
};
PartialReduction partial_reduction(const Model& model, double p);

/// Upper bound on explicit steps before solve_partial_pde gives up.
inline constexpr std::size_t kPartialStepBudget = 50'000'000;

ValuePartialSolution solve_partial_pde(const Model& model, std::size_t n_t, std::size_t n_p,
                                       Variant v = Variant::unrestricted);

double value_partial(double t, double w, double x, double p, const ValuePartialSolution& sol);

/// Full-information value averaged over (p, 1 - p) minus the partial one.
/// Throws ParameterError when the two solutions come from different models.
double loss_of_utility(double t, double x, double p, const ValueCoefficientsFull& full,
                       const ValuePartialSolution& partial);

/// Where a Monte Carlo path starts: a known regime (the filter, if needed,
/// starts at the matching unit vector) or an initial law that both draws the
/// regime and seeds the filter.
using StartState = std::variant<std::size_t, Eigen::VectorXd>;

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
};

struct MonteCarloSettings {
    double w0 = 1.0;
    double x0 = 0.0;
    std::size_t n_paths = 10000;
    std::uint64_t seed = 1;
    TimeGrid grid{1.0, 1000};
    unsigned threads = 0; // 0: hardware concurrency
};

/// Sample mean and standard error of log W_T. Path k uses stream (seed, k)
/// regardless of thread count, so results are reproducible.
MonteCarloEstimate mc_expected_log_utility(const PolicyHandle& policy, const Model& model, const StartState& start,
                                           const MonteCarloSettings& settings);

/// Several policies on common random numbers. `difference[j]` estimates
/// E[log W_T(policy j)] - E[log W_T(policy 0)] with its paired standard error.
struct PolicyComparison {
    std::vector<MonteCarloEstimate> utility;
    std::vector<MonteCarloEstimate> difference;
};
PolicyComparison mc_compare_policies(const std::vector<PolicyHandle>& policies, const Model& model,
                                     const StartState& start, const MonteCarloSettings& settings);

/// CSV dumps: full_value.csv (t, regime, m, n, u), partial_value.csv
/// (t, p, mbar, nbar, ubar), loss.csv (t, p, x, l).
void write_full_value_csv(const std::filesystem::path& path, const ValueCoefficientsFull& coeffs);
void write_partial_value_csv(const std::filesystem::path& path, const ValuePartialSolution& sol);
void write_loss_csv(const std::filesystem::path& path, const ValueCoefficientsFull& full,
                    const ValuePartialSolution& partial, const std::vector<double>& xs, std::size_t time_stride = 1,
                    std::size_t p_stride = 1);

} // namespace convlab
