#pragma once

#include "convlab/model.hpp"
#include "convlab/simulate.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <vector>

namespace convlab {

/// What a partially informed trader sees: the spread and the cumulative
/// residual returns on the grid. Holds no reference to the chain.
struct ObservationPath {
    TimeGrid grid;
    std::span<const double> X;
    std::span<const double> R1;
    std::span<const double> R2;
};

ObservationPath observations(const PathBundle& bundle);

struct Innovation {
    double dI1 = 0.0;
    double dI2 = 0.0;
};

/// Volatilities and correlation of the two residual-return noises.
struct ObservationNoise {
    double sigma1;
    double sigma2;
    double rho;

    static ObservationNoise from(const DerivedConstants& c) { return {c.sigma1, c.sigma2, c.rho}; }
};

/// Whitens the residuals e_j = dR_j - (filtered drift_j) dt into independent
/// innovation increments. Throws NumericalError when rho >= 1 - 1e-12.
Innovation innovation_from_residuals(double e1, double e2, const ObservationNoise& noise);

/// Per-regime drift vectors and filter gains H^{i,(1)}, H^{i,(2)}.
class FilterCoefficients {
public:
    explicit FilterCoefficients(const Model& model);

    std::size_t regimes() const { return lambda1_.size(); }
    const ObservationNoise& noise() const { return noise_; }

    /// Filtered drifts sum_i p_i mu_j(x, e_i), j = 1, 2.
    std::pair<double, double> mean_drifts(double x, std::span<const double> p) const;

    /// Writes H^{i,(1)} and H^{i,(2)} for every regime into h1, h2.
    void gains(double x, std::span<const double> p, std::span<double> h1, std::span<double> h2) const;

private:
    std::vector<double> lambda1_, lambda2_, alpha1_, alpha2_;
    ObservationNoise noise_;
};

Innovation innovations_step(double dR1, double dR2, double x, std::span<const double> p, double dt,
                            const FilterCoefficients& coeffs);

struct FilterStepResult {
    double correction = 0.0; // L1 size of the simplex projection
    double raw_mass = 1.0;   // sum of the unprojected Euler update
};

/// Euler step of the filter SDE followed by clip-and-renormalise. `out` may
/// not alias `p`. Throws NumericalError when every component clips to zero.
FilterStepResult filter_step(std::span<const double> p, double x, const Innovation& dI, double dt,
                             const Eigen::MatrixXd& Q, const FilterCoefficients& coeffs, std::span<double> out);

/// Conditional state probabilities along a path.
struct FilterPath {
    TimeGrid grid;
    std::size_t regimes = 0;
    std::vector<double> pi;         // (steps + 1) x regimes, row major
    std::vector<double> dI1, dI2;   // per step
    std::vector<double> correction; // per step projection size
    double projection_log = 0.0;    // cumulative projection size
    double max_mass_defect = 0.0;   // max |sum(raw) - 1| over steps

    std::span<const double> at(std::size_t k) const {
        return std::span<const double>(pi).subspan(k * regimes, regimes);
    }
};

FilterPath run_filter(const ObservationPath& obs, std::span<const double> p0, const Model& model);

/// Marginal law of the chain at time t, p0^T exp(tQ).
Eigen::VectorXd kolmogorov_baseline(const Eigen::MatrixXd& Q, const Eigen::VectorXd& p0, double t);

/// Columns: t, pi_1..pi_K, dI1, dI2, projection_correction. Increments on row k
/// are those of step k -> k+1; the last row carries zeros.
void write_filter_csv(const std::filesystem::path& path, const FilterPath& f);

} // namespace convlab
