#include "convlab/checks.hpp"
#include "convlab/experiments.hpp"
#include "convlab/format.hpp"
#include "convlab/params_io.hpp"
#include "convlab/strategy.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

constexpr int kExitCheckFailure = 1;
constexpr int kExitConfigError = 2;

convlab::ModelParams resolve_params(const std::string& config, const std::string& experiment) {
    if (!config.empty()) return convlab::load_params_toml(config);
    return convlab::experiment_preset(experiment).params;
}

void print_weights(const convlab::Model& model, const std::vector<double>& xs, const std::vector<double>& ps,
                   convlab::Variant v) {
    using convlab::format_double;
    std::cout << "info,state,x,h1,h2,hm\n";
    auto emit = [&](const char* info, const std::string& state, double x, const convlab::PortfolioWeights& h) {
        std::cout << info << ',' << state << ',' << format_double(x) << ',' << format_double(h.h1) << ','
                  << format_double(h.h2) << ',' << format_double(h.hm) << '\n';
    };
    for (std::size_t i = 0; i < model.regime_count(); ++i) {
        for (double x : xs) emit("full", std::to_string(i + 1), x, convlab::optimal_full(x, i, model, v));
    }
    for (double p : ps) {
        const std::vector<double> pi{p, 1.0 - p};
        for (double x : xs) emit("partial", format_double(p), x, convlab::optimal_partial(x, pi, model, v));
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regime-switching convergence trading: simulation, filtering and optimal control"};
    app.require_subcommand(1);

    convlab::ExperimentConfig run_cfg;
    std::string run_config_path;
    auto* run = app.add_subcommand("run", "Run a named experiment and write CSV outputs with a metadata sidecar");
    run->add_option("experiment", run_cfg.name, "fig1 | fig2 | fig3 | fig4 | custom")
        ->required()
        ->check(CLI::IsMember({"fig1", "fig2", "fig3", "fig4", "custom"}));
    run->add_option("--config", run_config_path, "Parameter file (TOML); replaces the preset parameters");
    run->add_option("--seed", run_cfg.seed, "Random seed");
    run->add_option("--out", run_cfg.out_dir, "Output directory");
    run->add_option("--dt", run_cfg.dt, "Simulation time step");
    run->add_option("--nt", run_cfg.n_t, "Time steps of the value equations");
    run->add_option("--np", run_cfg.n_p, "Probability grid intervals of the partial-information PDE");
    run->add_option("--paths", run_cfg.n_paths, "Number of simulated paths written out");

    std::string replay_meta;
    std::string replay_out = "replay";
    auto* replay = app.add_subcommand("replay", "Re-run an experiment from its metadata.json");
    replay->add_option("metadata", replay_meta, "metadata.json written by run")->required();
    replay->add_option("--out", replay_out, "Output directory");

    std::string w_config, w_experiment = "fig1", w_xgrid = "-1:1:21", w_pgrid, w_variant = "unrestricted";
    auto* weights = app.add_subcommand("weights", "Print optimal weights over an x-grid as CSV");
    weights->add_option("--config", w_config, "Parameter file (TOML)");
    weights->add_option("--experiment", w_experiment, "Preset used when no --config is given");
    weights->add_option("--x-grid", w_xgrid, "Spread grid a:b:n");
    weights->add_option("--p-grid", w_pgrid, "Filter grid a:b:n for P(Y = 1); two regimes with constant lambda");
    weights->add_option("--variant", w_variant, "unrestricted | beta_neutral | delta_neutral");

    convlab::CheckOptions check_opt;
    std::vector<int> check_ids;
    std::string report_path;
    auto* check = app.add_subcommand("check", "Run the acceptance checks");
    check->add_option("--seed", check_opt.seed, "Seed for the Monte Carlo checks");
    check->add_option("--only", check_ids, "Run only these check ids")->delimiter(',');
    check->add_option("--report", report_path, "Write a JSON report to this file");
    check->add_option("--threads", check_opt.threads, "Monte Carlo worker threads (0: all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfigError;
    }

    try {
        if (*run) {
            if (!run_config_path.empty()) run_cfg.params_file = run_config_path;
            for (const auto& f : convlab::run_experiment(run_cfg)) std::cout << f.string() << '\n';
        } else if (*replay) {
            const auto cfg = convlab::config_from_metadata(replay_meta, replay_out);
            for (const auto& f : convlab::run_experiment(cfg)) std::cout << f.string() << '\n';
        } else if (*weights) {
            const convlab::Model model(resolve_params(w_config, w_experiment));
            const auto xs = convlab::parse_grid_spec(w_xgrid);
            const auto ps = w_pgrid.empty() ? std::vector<double>{} : convlab::parse_grid_spec(w_pgrid);
            print_weights(model, xs, ps, convlab::variant_from_string(w_variant));
        } else if (*check) {
            const auto results = convlab::run_checks(check_opt, check_ids);
            bool ok = true;
            for (const auto& r : results) {
                std::cout << convlab::format_check_line(r) << std::endl;
                ok = ok && r.passed;
            }
            if (!report_path.empty()) {
                std::ofstream(report_path, std::ios::binary) << convlab::checks_report_json(results) << '\n';
            }
            return ok ? 0 : kExitCheckFailure;
        }
    } catch (const convlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const convlab::ParameterError& e) {
        std::cerr << "invalid parameters: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCheckFailure;
    }
    return 0;
}
