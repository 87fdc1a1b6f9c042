#include "convlab/filter.hpp"

#include "convlab/format.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <string>

namespace convlab {

ObservationPath observations(const PathBundle& bundle) {
    return ObservationPath{bundle.grid, bundle.X, bundle.R1, bundle.R2};
}

Innovation innovation_from_residuals(double e1, double e2, const ObservationNoise& noise) {
    if (noise.rho >= 1.0 - 1e-12) {
        throw NumericalError("residual returns are perfectly correlated; innovations are undefined");
    }
    const double z1 = e1 / noise.sigma1;
    const double z2 = e2 / noise.sigma2;
    return {z1, (z2 - noise.rho * z1) / std::sqrt(1.0 - noise.rho * noise.rho)};
}

FilterCoefficients::FilterCoefficients(const Model& model)
    : lambda1_(model.params().regimes.lambda1),
      lambda2_(model.params().regimes.lambda2),
      alpha1_(model.params().regimes.alpha1),
      alpha2_(model.params().regimes.alpha2),
      noise_(ObservationNoise::from(model.constants())) {}

std::pair<double, double> FilterCoefficients::mean_drifts(double x, std::span<const double> p) const {
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < lambda1_.size(); ++i) {
        m1 += p[i] * (-lambda1_[i] * (x - alpha1_[i]));
        m2 += p[i] * (lambda2_[i] * (x - alpha2_[i]));
    }
    return {m1, m2};
}

void FilterCoefficients::gains(double x, std::span<const double> p, std::span<double> h1, std::span<double> h2) const {
    const auto [m1, m2] = mean_drifts(x, p);
    const double s1 = noise_.sigma1, s2 = noise_.sigma2, rho = noise_.rho;
    const double scale2 = s1 * s2 * std::sqrt(1.0 - rho * rho);
    for (std::size_t i = 0; i < lambda1_.size(); ++i) {
        const double dev1 = -lambda1_[i] * (x - alpha1_[i]) - m1;
        const double dev2 = lambda2_[i] * (x - alpha2_[i]) - m2;
        h1[i] = p[i] * dev1 / s1;
        h2[i] = p[i] * (s1 * dev2 - s2 * rho * dev1) / scale2;
    }
}

Innovation innovations_step(double dR1, double dR2, double x, std::span<const double> p, double dt,
                            const FilterCoefficients& coeffs) {
    const auto [m1, m2] = coeffs.mean_drifts(x, p);
    return innovation_from_residuals(dR1 - m1 * dt, dR2 - m2 * dt, coeffs.noise());
}

FilterStepResult filter_step(std::span<const double> p, double x, const Innovation& dI, double dt,
                             const Eigen::MatrixXd& Q, const FilterCoefficients& coeffs, std::span<double> out) {
    const std::size_t K = p.size();
    if (out.size() != K || coeffs.regimes() != K || static_cast<std::size_t>(Q.rows()) != K) {
        throw ParameterError("filter_step: dimension mismatch");
    }
    // Small fixed buffers cover the common case without heap traffic.
    constexpr std::size_t kStack = 8;
    double h1_buf[kStack], h2_buf[kStack];
    std::vector<double> h1_vec, h2_vec;
    std::span<double> h1, h2;
    if (K <= kStack) {
        h1 = std::span<double>(h1_buf, K);
        h2 = std::span<double>(h2_buf, K);
    } else {
        h1_vec.resize(K);
        h2_vec.resize(K);
        h1 = h1_vec;
        h2 = h2_vec;
    }
    coeffs.gains(x, p, h1, h2);

    FilterStepResult res;
    double raw_mass = 0.0;
    double clipped_mass = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        double forward = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            forward += Q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) * p[j];
        }
        const double raw = p[i] + forward * dt + h1[i] * dI.dI1 + h2[i] * dI.dI2;
        if (!std::isfinite(raw)) {
            throw NumericalError("filter update is not finite");
        }
        raw_mass += raw;
        out[i] = raw;
        if (raw < 0.0) {
            res.correction += -raw;
            out[i] = 0.0;
        }
        clipped_mass += out[i];
    }
    res.raw_mass = raw_mass;
    if (!(clipped_mass > 0.0)) {
        throw NumericalError("filter mass collapsed: every state probability clipped to zero");
    }
    for (std::size_t i = 0; i < K; ++i) {
        const double before = out[i];
        out[i] /= clipped_mass;
        res.correction += std::abs(out[i] - before);
    }
    return res;
}

FilterPath run_filter(const ObservationPath& obs, std::span<const double> p0, const Model& model) {
    const FilterCoefficients coeffs(model);
    const std::size_t K = coeffs.regimes();
    if (p0.size() != K) {
        throw ParameterError("initial filter vector has length " + std::to_string(p0.size()) + ", expected " +
                             std::to_string(K));
    }
    double mass = 0.0;
    for (double v : p0) {
        if (!(v >= 0.0)) throw ParameterError("initial filter vector must be nonnegative");
        mass += v;
    }
    if (std::abs(mass - 1.0) > 1e-12) {
        throw ParameterError("initial filter vector must sum to 1");
    }
    const TimeGrid& grid = obs.grid;
    const std::size_t N = grid.steps;
    if (obs.X.size() != N + 1 || obs.R1.size() != N + 1 || obs.R2.size() != N + 1) {
        throw ParameterError("observation path does not match its grid");
    }
    const double dt = grid.dt();
    const Eigen::MatrixXd& Q = model.params().chain.Q;

    FilterPath f;
    f.grid = grid;
    f.regimes = K;
    f.pi.resize((N + 1) * K);
    f.dI1.resize(N);
    f.dI2.resize(N);
    f.correction.resize(N);
    std::copy(p0.begin(), p0.end(), f.pi.begin());
    for (std::size_t k = 0; k < N; ++k) {
        const auto p = std::span<const double>(f.pi).subspan(k * K, K);
        const auto next = std::span<double>(f.pi).subspan((k + 1) * K, K);
        const double x = obs.X[k];
        const Innovation dI = innovations_step(obs.R1[k + 1] - obs.R1[k], obs.R2[k + 1] - obs.R2[k], x, p, dt, coeffs);
        const FilterStepResult step = filter_step(p, x, dI, dt, Q, coeffs, next);
        f.dI1[k] = dI.dI1;
        f.dI2[k] = dI.dI2;
        f.correction[k] = step.correction;
        f.projection_log += step.correction;
        f.max_mass_defect = std::max(f.max_mass_defect, std::abs(step.raw_mass - 1.0));
    }
    return f;
}

Eigen::VectorXd kolmogorov_baseline(const Eigen::MatrixXd& Q, const Eigen::VectorXd& p0, double t) {
    if (t < 0.0) {
        throw ParameterError("kolmogorov_baseline needs t >= 0");
    }
    const Eigen::MatrixXd P = (Q * t).exp();
    return P.transpose() * p0;
}

void write_filter_csv(const std::filesystem::path& path, const FilterPath& f) {
    std::vector<std::string> header{"t"};
    for (std::size_t i = 0; i < f.regimes; ++i) header.push_back("pi_" + std::to_string(i + 1));
    header.insert(header.end(), {"dI1", "dI2", "projection_correction"});
    CsvWriter csv(path, header);
    for (std::size_t k = 0; k < f.grid.points(); ++k) {
        csv.cell(f.grid.time(k));
        for (double v : f.at(k)) csv.cell(v);
        const bool step = k < f.grid.steps;
        csv.cell(step ? f.dI1[k] : 0.0).cell(step ? f.dI2[k] : 0.0).cell(step ? f.correction[k] : 0.0);
        csv.end_row();
    }
}

} // namespace convlab
