#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace convlab {

/// Raised when a parameter set violates a model assumption. The message names
/// the failed invariant.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised by solvers and simulators when a state stops being finite or a
/// numerical precondition (CFL budget, singular system) cannot be met.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Regime-dependent mean-reversion speeds and long-run pricing-error levels.
/// Entry i holds the value of the coefficient while the chain sits in regime i.
struct RegimeTable {
    std::vector<double> lambda1;
    std::vector<double> lambda2;
    std::vector<double> alpha1;
    std::vector<double> alpha2;

    std::size_t size() const { return lambda1.size(); }
};

/// Transition intensities of the hidden chain and its initial law.
struct GeneratorMatrix {
    Eigen::MatrixXd Q;
    Eigen::VectorXd initial;
};

struct ModelParams {
    double r = 0.0;       // riskless rate
    double mu_m = 0.0;    // market risk premium
    double sigma_m = 0.0; // market volatility
    double beta1 = 0.0;
    double beta2 = 0.0;
    double sigma = 0.0; // common idiosyncratic volatility
    double b1 = 0.0;
    double b2 = 0.0;
    double T = 1.0; // horizon in years
    RegimeTable regimes;
    GeneratorMatrix chain;

    std::size_t regime_count() const { return regimes.size(); }
};

/// Everything the optimal strategies and value equations need, evaluated once.
/// theta* belong to the unrestricted problem, phi* to the beta-neutral one.
struct DerivedConstants {
    double sigma1 = 0.0;
    double sigma2 = 0.0;
    double rho = 0.0;
    double varrho1 = 0.0;
    double varrho2 = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    std::vector<double> theta1, theta2, theta3;
    std::vector<double> phi1, phi2, phi3;
};

/// Which admissible set the trader optimizes over. Beta-neutral imposes
/// beta1*h1 + beta2*h2 = 0, delta-neutral h1 + h2 = 0.
enum class Variant { unrestricted, beta_neutral, delta_neutral };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

/// Checks every model assumption and returns the input unchanged. Zero
/// off-diagonal intensities are admitted; each one appends a message to
/// `warnings` when a sink is supplied.
ModelParams validate_params(const ModelParams& raw, std::vector<std::string>* warnings = nullptr);

DerivedConstants derive_constants(const ModelParams& p);

/// Solves nu^T Q = 0, sum(nu) = 1 with the normalisation row appended.
/// Throws ParameterError for reducible or singular generators.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& Q);

/// Single-regime model whose regime coefficients are the stationary averages
/// of the input's. The generator becomes the 1x1 zero matrix.
ModelParams averaged_params(const ModelParams& p);

/// True when lambda1 and lambda2 do not depend on the regime.
bool has_constant_lambda(const ModelParams& p);

// Scalar coefficient formulas shared by the full- and partial-information
// value equations. Partial information evaluates them at filtered alphas.
namespace coeff {

/// Quadratic-term source of the unrestricted problem.
double theta1(const ModelParams& p, double lambda1, double lambda2);
/// Linear-term source (enters the n-equation with a minus sign).
double theta2(const ModelParams& p, double lambda1, double lambda2, double alpha1, double alpha2);
/// Constant-term source, including r + mu_m^2 / (2 sigma_m^2).
double theta3(const ModelParams& p, double lambda1, double lambda2, double alpha1, double alpha2);

/// Sources of the problem constrained to a1*h1 + a2*h2 = 0; (a1, a2) =
/// (beta1, beta2) gives the beta-neutral constants.
double phi1(const ModelParams& p, double a1, double a2, double lambda1, double lambda2);
double phi2(const ModelParams& p, double a1, double a2, double lambda1, double lambda2, double alpha1,
            double alpha2);
double phi3(const ModelParams& p, double a1, double a2, double lambda1, double lambda2, double alpha1,
            double alpha2);

double gamma1(const ModelParams& p);
double gamma2(const ModelParams& p);

} // namespace coeff

/// Validated parameters bundled with their derived constants. Immutable.
class Model {
public:
    explicit Model(ModelParams params);

    /// Bypasses validation and derivation so tests can inject altered
    /// constants (source scaling, mutation fixtures).
    static Model with_constants(ModelParams params, DerivedConstants constants);

    const ModelParams& params() const { return params_; }
    const DerivedConstants& constants() const { return constants_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    std::size_t regime_count() const { return params_.regime_count(); }

    /// Source coefficients (c1, c2, c3) of the (m, n, u) equations in regime i.
    struct Sources {
        double quadratic;
        double linear;
        double constant;
    };
    Sources sources(Variant v, std::size_t i) const;

    /// Hex digest of a canonical serialisation of params and constants.
    const std::string& fingerprint() const { return fingerprint_; }

private:
    Model() = default;

    ModelParams params_;
    DerivedConstants constants_;
    std::vector<std::string> warnings_;
    std::string fingerprint_;
};

/// Compute the canonical fingerprint for an arbitrary parameter set.
std::string fingerprint(const ModelParams& p, const DerivedConstants& c);

} // namespace convlab
