#pragma once

#include "convlab/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace convlab {

inline constexpr const char* kVersion = "0.1.0";

/// Built-in parameter set for a named experiment (fig1..fig4). Values the
/// experiment leaves open are filled in and listed in `assumptions`.
struct Preset {
    ModelParams params;
    double x0 = 0.0; // initial spread of simulated paths
    std::vector<std::string> assumptions;
};
Preset experiment_preset(const std::string& name);

/// Fig-2 parameters with horizon T; shared by several checks.
ModelParams fig2_params(double T);
/// Fig-4 parameters with horizon T.
ModelParams fig4_params(double T);

struct ExperimentConfig {
    std::string name = "fig1"; // fig1 | fig2 | fig3 | fig4 | custom
    std::optional<std::filesystem::path> params_file;
    std::optional<ModelParams> params; // overrides params_file and the preset
    double dt = 1e-3;                  // simulation step
    std::size_t n_t = 2000;            // value-equation time steps
    std::size_t n_p = 200;             // probability grid intervals
    std::size_t n_paths = 1;           // simulated paths written out
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "out";
};

/// Runs the experiment and returns the files written, metadata.json last.
std::vector<std::filesystem::path> run_experiment(const ExperimentConfig& config);

/// Rebuilds the config recorded in a metadata sidecar; the output directory is
/// taken from `out_dir`.
ExperimentConfig config_from_metadata(const std::filesystem::path& metadata, const std::filesystem::path& out_dir);

/// Parses "a:b:n" into n evenly spaced points from a to b.
std::vector<double> parse_grid_spec(const std::string& spec);

} // namespace convlab
