#include "convlab/simulate.hpp"

#include "convlab/filter.hpp"
#include "convlab/format.hpp"
#include "convlab/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace convlab {

TimeGrid make_grid(double T, double dt) {
    if (!(T > 0.0) || !(dt > 0.0)) {
        throw ParameterError("time grid needs T > 0 and dt > 0");
    }
    const double n = std::max(1.0, std::round(T / dt));
    return TimeGrid{T, static_cast<std::size_t>(n)};
}

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

std::size_t ChainPath::state_at(double t) const {
    // Right-continuous: the state entered at a jump time holds from that time.
    auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    if (it == jump_times.begin()) {
        return initial_state;
    }
    return states[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

double ChainPath::occupation(std::size_t regime, double T) const {
    double total = 0.0;
    double from = 0.0;
    std::size_t current = initial_state;
    for (std::size_t k = 0; k < jump_times.size() && jump_times[k] < T; ++k) {
        if (current == regime) total += jump_times[k] - from;
        from = jump_times[k];
        current = states[k];
    }
    if (current == regime) total += T - from;
    return total;
}

namespace {

std::size_t draw_categorical(const Eigen::VectorXd& weights, double total, Rng& rng, std::size_t skip) {
    std::uniform_real_distribution<double> uni(0.0, total);
    const double u = uni(rng);
    double acc = 0.0;
    std::size_t last = skip;
    for (Eigen::Index j = 0; j < weights.size(); ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (ju == skip || weights(j) <= 0.0) continue;
        acc += weights(j);
        last = ju;
        if (u < acc) return ju;
    }
    return last;
}

} // namespace

ChainPath simulate_chain(const Eigen::MatrixXd& Q, const Eigen::VectorXd& initial, double T, Rng& rng) {
    const auto K = static_cast<std::size_t>(Q.rows());
    if (K == 0 || Q.cols() != Q.rows() || initial.size() != Q.rows()) {
        throw ParameterError("simulate_chain: generator and initial law dimensions disagree");
    }
    ChainPath path;
    path.initial_state = draw_categorical(initial, initial.sum(), rng, K);
    std::size_t state = path.initial_state;
    double t = 0.0;
    while (true) {
        const double rate = -Q(static_cast<Eigen::Index>(state), static_cast<Eigen::Index>(state));
        if (!(rate > 0.0)) break; // absorbing
        std::exponential_distribution<double> hold(rate);
        t += hold(rng);
        if (t > T) break;
        Eigen::VectorXd row = Q.row(static_cast<Eigen::Index>(state)).transpose();
        state = draw_categorical(row, rate, rng, state);
        path.jump_times.push_back(t);
        path.states.push_back(state);
    }
    return path;
}

ChainPath simulate_chain(const Eigen::MatrixXd& Q, const Eigen::VectorXd& initial, double T, std::uint64_t seed) {
    Rng rng = make_stream(seed, 0);
    return simulate_chain(Q, initial, T, rng);
}

BrownianIncrements draw_increments(const TimeGrid& grid, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sq = std::sqrt(grid.dt());
    BrownianIncrements inc;
    inc.dBm.resize(grid.steps);
    inc.dB0.resize(grid.steps);
    inc.dB1.resize(grid.steps);
    inc.dB2.resize(grid.steps);
    for (std::size_t k = 0; k < grid.steps; ++k) {
        inc.dBm[k] = sq * normal(rng);
        inc.dB0[k] = sq * normal(rng);
        inc.dB1[k] = sq * normal(rng);
        inc.dB2[k] = sq * normal(rng);
    }
    return inc;
}

PathBundle build_paths(const Model& model, const ChainPath& chain, const TimeGrid& grid, BrownianIncrements noise,
                       const PathStart& start) {
    const ModelParams& p = model.params();
    const DerivedConstants& c = model.constants();
    const std::size_t N = grid.steps;
    if (noise.dBm.size() != N || noise.dB0.size() != N || noise.dB1.size() != N || noise.dB2.size() != N) {
        throw ParameterError("Brownian increments do not match the grid");
    }
    const double dt = grid.dt();

    PathBundle b;
    b.grid = grid;
    b.chain = chain;
    b.noise = std::move(noise);
    b.regime.resize(N + 1);
    b.X.resize(N + 1);
    b.Sm.resize(N + 1);
    b.S1.resize(N + 1);
    b.S2.resize(N + 1);
    b.R1.resize(N + 1);
    b.R2.resize(N + 1);

    const double sm2 = p.sigma_m * p.sigma_m;
    const double s2 = p.sigma * p.sigma;
    // Ito-corrected log drifts net of the pricing-error term.
    const double drift_log_m = p.r + p.mu_m - 0.5 * sm2;
    const double drift_log_1 = p.r + p.beta1 * p.mu_m - 0.5 * (p.beta1 * p.beta1 * sm2 + s2 + p.b1 * p.b1);
    const double drift_log_2 = p.r + p.beta2 * p.mu_m - 0.5 * (p.beta2 * p.beta2 * sm2 + s2 + p.b2 * p.b2);

    double log_m = std::log(start.sm);
    double log_1 = std::log(start.s1);
    double log_2 = log_1 - start.x0;
    double x = start.x0;
    double r1 = 0.0, r2 = 0.0;
    double max_gap = 0.0;

    auto store = [&](std::size_t k) {
        b.regime[k] = chain.state_at(grid.time(k));
        b.X[k] = x;
        b.Sm[k] = std::exp(log_m);
        b.S1[k] = std::exp(log_1);
        b.S2[k] = std::exp(log_2);
        b.R1[k] = r1;
        b.R2[k] = r2;
        max_gap = std::max(max_gap, std::abs(x - (log_1 - log_2)));
    };
    store(0);

    for (std::size_t k = 0; k < N; ++k) {
        const std::size_t i = b.regime[k];
        const double mu1 = pricing_drift1(p, x, i);
        const double mu2 = pricing_drift2(p, x, i);
        const double dBm = b.noise.dBm[k], dB0 = b.noise.dB0[k], dB1 = b.noise.dB1[k], dB2 = b.noise.dB2[k];

        log_m += drift_log_m * dt + p.sigma_m * dBm;
        log_1 += (drift_log_1 + mu1) * dt + p.beta1 * p.sigma_m * dBm + p.sigma * dB0 + p.b1 * dB1;
        log_2 += (drift_log_2 + mu2) * dt + p.beta2 * p.sigma_m * dBm + p.sigma * dB0 + p.b2 * dB2;
        x += (c.gamma1 + mu1 - mu2) * dt + (p.beta1 - p.beta2) * p.sigma_m * dBm + p.b1 * dB1 - p.b2 * dB2;
        r1 += mu1 * dt + p.sigma * dB0 + p.b1 * dB1;
        r2 += mu2 * dt + p.sigma * dB0 + p.b2 * dB2;

        if (!std::isfinite(x) || !std::isfinite(log_1) || !std::isfinite(log_2) || !std::isfinite(log_m)) {
            throw NumericalError("non-finite state at step " + std::to_string(k + 1));
        }
        store(k + 1);
    }
    // Both recursions discretise the same dynamics; only rounding separates them.
    if (max_gap > 1e-9) {
        throw NumericalError("spread recursion drifted from log(S1) - log(S2) by " + format_double(max_gap));
    }
    return b;
}

PathBundle simulate_paths(const Model& model, const ChainPath& chain, const TimeGrid& grid, Rng& rng,
                          const PathStart& start) {
    return build_paths(model, chain, grid, draw_increments(grid, rng), start);
}

PathBundle simulate_paths(const Model& model, const ChainPath& chain, const TimeGrid& grid, std::uint64_t seed,
                          const PathStart& start) {
    Rng rng = make_stream(seed, 1);
    return simulate_paths(model, chain, grid, rng, start);
}

PathBundle simulate_scenario(const Model& model, const Eigen::VectorXd& initial_law, const TimeGrid& grid,
                             std::uint64_t seed, std::uint64_t index, const PathStart& start) {
    Rng rng = make_stream(seed, index);
    ChainPath chain = simulate_chain(model.params().chain.Q, initial_law, grid.T, rng);
    return simulate_paths(model, chain, grid, rng, start);
}

namespace {

// Integrates log-wealth along the bundle; `record(k, logw)` sees every grid point.
template <typename Record>
double integrate_log_wealth(const Model& model, const PathBundle& bundle, const PolicyHandle& policy, double w0,
                            const FilterPath* filter, Record&& record) {
    if (!(w0 > 0.0)) {
        throw ParameterError("initial wealth must be > 0");
    }
    const bool partial = policy.partial_information();
    if (partial) {
        if (filter == nullptr) {
            throw ParameterError("partial-information policy needs a filter path");
        }
        if (filter->grid.steps != bundle.grid.steps || filter->grid.T != bundle.grid.T) {
            throw ParameterError("filter path is not aligned with the bundle grid");
        }
    }
    const ModelParams& p = model.params();
    const TimeGrid& grid = bundle.grid;
    const double dt = grid.dt();
    double logw = std::log(w0);
    record(0, logw);
    for (std::size_t k = 0; k < grid.steps; ++k) {
        const double t = grid.time(k);
        const double x = bundle.X[k];
        const std::size_t i = bundle.regime[k];
        const PortfolioWeights h = partial ? policy.partial(t, x, filter->at(k)) : policy.full(t, x, i);
        if (!h.finite()) {
            throw NumericalError("policy returned non-finite weights at step " + std::to_string(k));
        }
        const double mu1 = pricing_drift1(p, x, i);
        const double mu2 = pricing_drift2(p, x, i);
        const double market = h.hm + h.h1 * p.beta1 + h.h2 * p.beta2;
        logw += log_growth_rate(p, h, mu1, mu2) * dt + p.sigma_m * market * bundle.noise.dBm[k] +
                p.sigma * (h.h1 + h.h2) * bundle.noise.dB0[k] + p.b1 * h.h1 * bundle.noise.dB1[k] +
                p.b2 * h.h2 * bundle.noise.dB2[k];
        if (!std::isfinite(logw)) {
            throw NumericalError("non-finite wealth at step " + std::to_string(k + 1));
        }
        record(k + 1, logw);
    }
    return logw;
}

} // namespace

std::vector<double> simulate_wealth(const Model& model, const PathBundle& bundle, const PolicyHandle& policy, double w0,
                                    const FilterPath* filter) {
    std::vector<double> W(bundle.grid.points());
    integrate_log_wealth(model, bundle, policy, w0, filter,
                         [&](std::size_t k, double logw) { W[k] = k == 0 ? w0 : std::exp(logw); });
    return W;
}

double terminal_log_wealth(const Model& model, const PathBundle& bundle, const PolicyHandle& policy, double w0,
                           const FilterPath* filter) {
    return integrate_log_wealth(model, bundle, policy, w0, filter, [](std::size_t, double) {});
}

void write_paths_csv(const std::filesystem::path& path, const std::vector<const PathBundle*>& bundles,
                     const std::vector<std::vector<double>>& wealth) {
    CsvWriter csv(path, {"path_id", "t", "state", "Sm", "S1", "S2", "X", "R1", "R2", "W"});
    for (std::size_t id = 0; id < bundles.size(); ++id) {
        const PathBundle& b = *bundles[id];
        const bool has_w = id < wealth.size() && !wealth[id].empty();
        for (std::size_t k = 0; k < b.grid.points(); ++k) {
            csv.cell(static_cast<long long>(id))
                .cell(b.grid.time(k))
                .cell(static_cast<long long>(b.regime[k] + 1))
                .cell(b.Sm[k])
                .cell(b.S1[k])
                .cell(b.S2[k])
                .cell(b.X[k])
                .cell(b.R1[k])
                .cell(b.R2[k])
                .cell(has_w ? wealth[id][k] : std::numeric_limits<double>::quiet_NaN());
            csv.end_row();
        }
    }
}

} // namespace convlab
