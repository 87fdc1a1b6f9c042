#pragma once

#include "convlab/model.hpp"
#include "convlab/portfolio.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace convlab {

struct FilterPath;

/// Uniform grid t_k = k * T / steps, k = 0..steps.
struct TimeGrid {
    double T = 1.0;
    std::size_t steps = 1000;

    double dt() const { return T / static_cast<double>(steps); }
    double time(std::size_t k) const { return k == steps ? T : static_cast<double>(k) * dt(); }
    std::size_t points() const { return steps + 1; }
};

/// Grid with step closest to `dt` that lands exactly on T.
TimeGrid make_grid(double T, double dt);

using Rng = std::mt19937_64;

/// Name recorded in run metadata for the generator and stream derivation.
inline constexpr const char* kRngName = "mt19937_64 seeded by seed_seq(seed_lo, seed_hi, stream_lo, stream_hi)";

/// Independent generator for (seed, stream); streams index Monte Carlo paths.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

/// Right-continuous path of the regime chain on [0, T].
struct ChainPath {
    std::size_t initial_state = 0;
    std::vector<double> jump_times;  // strictly increasing, in (0, T]
    std::vector<std::size_t> states; // states[k] is the regime entered at jump_times[k]

    std::size_t state_at(double t) const;
    std::size_t jump_count() const { return jump_times.size(); }
    /// Total time spent in `regime` over [0, T].
    double occupation(std::size_t regime, double T) const;
};

/// Exact simulation: exponential holding times with rate -q_ii, jump targets
/// drawn proportionally to q_ij. The initial regime is drawn from `initial`.
ChainPath simulate_chain(const Eigen::MatrixXd& Q, const Eigen::VectorXd& initial, double T, Rng& rng);
ChainPath simulate_chain(const Eigen::MatrixXd& Q, const Eigen::VectorXd& initial, double T, std::uint64_t seed);

/// Initial spread and price levels; S2(0) = S1(0) * exp(-x0).
struct PathStart {
    double x0 = 0.0;
    double s1 = 1.0;
    double sm = 1.0;
};

/// Per-step Brownian increments, each already scaled by sqrt(dt).
struct BrownianIncrements {
    std::vector<double> dBm, dB0, dB1, dB2;
};

BrownianIncrements draw_increments(const TimeGrid& grid, Rng& rng);

/// One simulated scenario on a grid. Vectors indexed by grid point have
/// grid.points() entries, increments have grid.steps entries.
struct PathBundle {
    TimeGrid grid;
    ChainPath chain;
    std::vector<std::size_t> regime; // chain state at each grid point
    BrownianIncrements noise;
    std::vector<double> X;
    std::vector<double> Sm, S1, S2;
    std::vector<double> R1, R2; // cumulative residual returns
};

/// Log-Euler scheme with left-endpoint regime coefficients. Throws
/// NumericalError carrying the step index when a state becomes non-finite.
PathBundle build_paths(const Model& model, const ChainPath& chain, const TimeGrid& grid, BrownianIncrements noise,
                       const PathStart& start = {});
PathBundle simulate_paths(const Model& model, const ChainPath& chain, const TimeGrid& grid, Rng& rng,
                          const PathStart& start = {});
PathBundle simulate_paths(const Model& model, const ChainPath& chain, const TimeGrid& grid, std::uint64_t seed,
                          const PathStart& start = {});

/// Chain and prices for Monte Carlo path `index`, drawn from stream(seed, index).
PathBundle simulate_scenario(const Model& model, const Eigen::VectorXd& initial_law, const TimeGrid& grid,
                             std::uint64_t seed, std::uint64_t index, const PathStart& start = {});

/// Wealth path under `policy`, integrated on log-wealth so W stays positive.
/// Weights are evaluated at left endpoints. Partial-information policies read
/// `filter`, which must share the bundle's grid.
std::vector<double> simulate_wealth(const Model& model, const PathBundle& bundle, const PolicyHandle& policy, double w0,
                                    const FilterPath* filter = nullptr);

/// log W_T under `policy`; same scheme as simulate_wealth without storing the path.
double terminal_log_wealth(const Model& model, const PathBundle& bundle, const PolicyHandle& policy, double w0,
                           const FilterPath* filter = nullptr);

/// Long-format path dump: path_id, t, state, Sm, S1, S2, X, R1, R2, W. `wealth`
/// may be empty, in which case W is written as nan.
void write_paths_csv(const std::filesystem::path& path, const std::vector<const PathBundle*>& bundles,
                     const std::vector<std::vector<double>>& wealth);

} // namespace convlab
