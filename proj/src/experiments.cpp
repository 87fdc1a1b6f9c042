#include "convlab/experiments.hpp"

#include "convlab/filter.hpp"
#include "convlab/format.hpp"
#include "convlab/params_io.hpp"
#include "convlab/simulate.hpp"
#include "convlab/strategy.hpp"
#include "convlab/value.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace convlab {

namespace {

using json = nlohmann::json;

ModelParams common_market(double T) {
    ModelParams p;
    p.r = 0.02;
    p.beta1 = 1.2;
    p.beta2 = 1.05;
    p.sigma_m = 0.35;
    p.mu_m = 0.05;
    p.sigma = 0.3;
    p.b1 = 0.3;
    p.b2 = 0.2;
    p.T = T;
    return p;
}

GeneratorMatrix two_state_chain(double q12, double q21, double p0) {
    GeneratorMatrix g;
    g.Q.resize(2, 2);
    g.Q << -q12, q12, q21, -q21;
    g.initial.resize(2);
    g.initial << p0, 1.0 - p0;
    return g;
}

} // namespace

ModelParams fig2_params(double T) {
    ModelParams p = common_market(T);
    p.b1 = 0.3;
    p.b2 = 0.5;
    p.regimes.lambda1 = {0.5, -0.3};
    p.regimes.lambda2 = {-0.1, 0.6};
    p.regimes.alpha1 = {0.0, 0.0};
    p.regimes.alpha2 = {0.0, 0.0};
    p.chain = two_state_chain(0.7, 0.2, 1.0);
    return p;
}

ModelParams fig4_params(double T) {
    ModelParams p = common_market(T);
    p.regimes.lambda1 = {0.3, 0.3};
    p.regimes.lambda2 = {0.4, 0.4};
    p.regimes.alpha1 = {0.5, -0.2};
    p.regimes.alpha2 = {0.2, -0.3};
    p.chain = two_state_chain(0.2, 0.5, 0.5);
    return p;
}

Preset experiment_preset(const std::string& name) {
    Preset preset;
    if (name == "fig1") {
        ModelParams p = common_market(1.0);
        p.regimes.lambda1 = {0.5, -0.3};
        p.regimes.lambda2 = {-0.2, 0.6};
        p.regimes.alpha1 = {0.0, 0.0};
        p.regimes.alpha2 = {0.0, 0.0};
        p.chain = two_state_chain(0.01, 0.02, 1.0);
        preset.params = p;
        preset.x0 = 0.01;
        preset.assumptions = {"horizon T = 1", "chain starts in regime 1"};
    } else if (name == "fig2") {
        preset.params = fig2_params(2.0);
        preset.x0 = 0.5;
        preset.assumptions = {"horizon T = 2 so that T - t spans (0, 2]"};
    } else if (name == "fig3") {
        ModelParams p = common_market(1.0);
        p.regimes.lambda1 = {0.2, 0.2};
        p.regimes.lambda2 = {0.15, 0.15};
        p.regimes.alpha1 = {-0.4, 0.1};
        p.regimes.alpha2 = {0.5, -0.5};
        p.chain = two_state_chain(0.01, 0.02, 0.0);
        preset.params = p;
        preset.x0 = 0.01;
        preset.assumptions = {"b1 = 0.3, b2 = 0.2 (assumed)", "horizon T = 1",
                              "chain and filter start from p0 = 0"};
    } else if (name == "fig4") {
        preset.params = fig4_params(2.0);
        preset.x0 = 0.05;
        preset.assumptions = {"b1 = 0.3, b2 = 0.2 (assumed)", "horizon T = 2"};
    } else {
        throw ConfigError("experiment", "unknown experiment '" + name + "'");
    }
    return preset;
}

std::vector<double> parse_grid_spec(const std::string& spec) {
    std::istringstream in(spec);
    std::string a, b, n;
    if (!std::getline(in, a, ':') || !std::getline(in, b, ':') || !std::getline(in, n)) {
        throw ConfigError("grid", "expected a:b:n, got '" + spec + "'");
    }
    double lo = 0.0, hi = 0.0;
    long count = 0;
    try {
        std::size_t used = 0;
        lo = std::stod(a, &used);
        if (used != a.size()) throw std::invalid_argument(a);
        hi = std::stod(b, &used);
        if (used != b.size()) throw std::invalid_argument(b);
        count = std::stol(n, &used);
        if (used != n.size()) throw std::invalid_argument(n);
    } catch (const std::exception&) {
        throw ConfigError("grid", "cannot parse '" + spec + "'");
    }
    if (count < 1) {
        throw ConfigError("grid", "point count must be positive");
    }
    std::vector<double> out(static_cast<std::size_t>(count));
    for (long k = 0; k < count; ++k) {
        out[static_cast<std::size_t>(k)] =
            count == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
    }
    return out;
}

namespace {

struct Run {
    const ExperimentConfig& config;
    Model model;
    double x0;
    std::vector<std::string> assumptions;
    std::vector<std::filesystem::path> files;

    std::filesystem::path file(const std::string& name) {
        files.push_back(config.out_dir / name);
        return files.back();
    }
};

std::vector<PathBundle> simulate_set(Run& run, const TimeGrid& grid) {
    std::vector<PathBundle> bundles;
    for (std::size_t k = 0; k < run.config.n_paths; ++k) {
        bundles.push_back(simulate_scenario(run.model, run.model.params().chain.initial, grid, run.config.seed, k,
                                            PathStart{run.x0}));
    }
    return bundles;
}

void write_paths(Run& run, const std::vector<PathBundle>& bundles, const PolicyHandle& policy,
                 const std::vector<FilterPath>* filters) {
    std::vector<const PathBundle*> ptrs;
    std::vector<std::vector<double>> wealth;
    for (std::size_t k = 0; k < bundles.size(); ++k) {
        ptrs.push_back(&bundles[k]);
        wealth.push_back(simulate_wealth(run.model, bundles[k], policy, 1.0, filters ? &(*filters)[k] : nullptr));
    }
    write_paths_csv(run.file("paths.csv"), ptrs, wealth);
}

void weight_cells(CsvWriter& csv, const PortfolioWeights& h) { csv.cell(h.h1).cell(h.h2).cell(h.hm); }

void run_full_paths(Run& run) {
    const TimeGrid grid = make_grid(run.model.params().T, run.config.dt);
    const auto bundles = simulate_set(run, grid);
    write_paths(run, bundles, full_information_policy(run.model, Variant::unrestricted), nullptr);
    CsvWriter csv(run.file("weights.csv"), {"path_id", "t", "state", "X", "h1", "h2", "hm", "h1_beta", "h2_beta",
                                            "hm_beta", "h1_delta", "h2_delta", "hm_delta"});
    for (std::size_t k = 0; k < bundles.size(); ++k) {
        const PathBundle& b = bundles[k];
        for (std::size_t j = 0; j < grid.points(); ++j) {
            const double x = b.X[j];
            const std::size_t i = b.regime[j];
            csv.cell(static_cast<long long>(k)).cell(grid.time(j)).cell(static_cast<long long>(i + 1)).cell(x);
            weight_cells(csv, optimal_full(x, i, run.model, Variant::unrestricted));
            weight_cells(csv, optimal_full(x, i, run.model, Variant::beta_neutral));
            weight_cells(csv, optimal_full(x, i, run.model, Variant::delta_neutral));
            csv.end_row();
        }
    }
}

void run_fig2(Run& run) {
    const Model& model = run.model;
    const ModelParams& p = model.params();
    const Eigen::VectorXd nu = stationary_distribution(p.chain.Q);
    const Model averaged(averaged_params(p));
    const auto rs_u = solve_full_ode(model, run.config.n_t, Variant::unrestricted);
    const auto rs_b = solve_full_ode(model, run.config.n_t, Variant::beta_neutral);
    const auto av_u = solve_full_ode(averaged, run.config.n_t, Variant::unrestricted);
    const auto av_b = solve_full_ode(averaged, run.config.n_t, Variant::beta_neutral);
    auto rs = [&](const ValueCoefficientsFull& c, double t, double x) {
        double v = 0.0;
        for (std::size_t i = 0; i < model.regime_count(); ++i) {
            v += nu(static_cast<Eigen::Index>(i)) * value_full(t, 1.0, x, i, c);
        }
        return v;
    };
    const std::vector<std::string> header_tail{"rs_unrestricted", "rs_beta_neutral", "av_unrestricted",
                                               "av_beta_neutral"};
    auto row = [&](CsvWriter& csv, double t, double x) {
        csv.cell(rs(rs_u, t, x)).cell(rs(rs_b, t, x));
        csv.cell(value_full(t, 1.0, x, 0, av_u)).cell(value_full(t, 1.0, x, 0, av_b));
        csv.end_row();
    };
    {
        std::vector<std::string> header{"x"};
        header.insert(header.end(), header_tail.begin(), header_tail.end());
        CsvWriter csv(run.file("value_vs_x.csv"), header);
        for (double x : parse_grid_spec("-1:1:201")) {
            csv.cell(x);
            row(csv, 0.0, x);
        }
    }
    {
        std::vector<std::string> header{"tau"};
        header.insert(header.end(), header_tail.begin(), header_tail.end());
        CsvWriter csv(run.file("value_vs_horizon.csv"), header);
        for (std::size_t k = 0; k < rs_u.grid.points(); ++k) {
            const double t = rs_u.grid.time(rs_u.grid.steps - k);
            csv.cell(p.T - t);
            row(csv, t, run.x0);
        }
    }
    write_full_value_csv(run.file("full_value.csv"), rs_u);
}

void run_fig3(Run& run) {
    const TimeGrid grid = make_grid(run.model.params().T, run.config.dt);
    const auto bundles = simulate_set(run, grid);
    const Eigen::VectorXd& law = run.model.params().chain.initial;
    const std::vector<double> p0(law.data(), law.data() + law.size());
    std::vector<FilterPath> filters;
    for (const auto& b : bundles) filters.push_back(run_filter(observations(b), p0, run.model));
    write_paths(run, bundles, partial_information_policy(run.model, Variant::unrestricted), &filters);
    write_filter_csv(run.file("filter.csv"), filters.front());

    std::vector<std::string> header{"path_id", "t", "state", "X"};
    for (std::size_t i = 0; i < run.model.regime_count(); ++i) header.push_back("pi_" + std::to_string(i + 1));
    header.insert(header.end(), {"full_h1", "full_h2", "full_hm", "partial_h1", "partial_h2", "partial_hm"});
    CsvWriter csv(run.file("weights.csv"), header);
    for (std::size_t k = 0; k < bundles.size(); ++k) {
        for (std::size_t j = 0; j < grid.points(); ++j) {
            const double x = bundles[k].X[j];
            const std::size_t i = bundles[k].regime[j];
            const auto pi = filters[k].at(j);
            csv.cell(static_cast<long long>(k)).cell(grid.time(j)).cell(static_cast<long long>(i + 1)).cell(x);
            for (double v : pi) csv.cell(v);
            weight_cells(csv, optimal_full(x, i, run.model));
            weight_cells(csv, optimal_partial(x, pi, run.model));
            csv.end_row();
        }
    }
}

void run_loss(Run& run) {
    const auto full = solve_full_ode(run.model, run.config.n_t, Variant::unrestricted);
    const auto partial = solve_partial_pde(run.model, run.config.n_t, run.config.n_p, Variant::unrestricted);
    write_full_value_csv(run.file("full_value.csv"), full);
    write_partial_value_csv(run.file("partial_value.csv"), partial);
    const std::size_t stride = std::max<std::size_t>(1, run.config.n_t / 100);
    write_loss_csv(run.file("loss.csv"), full, partial, {run.x0}, stride, 1);
}

void run_custom(Run& run) {
    run_full_paths(run);
    const ModelParams& p = run.model.params();
    if (p.regime_count() == 2 && has_constant_lambda(p)) {
        run_loss(run);
    } else {
        write_full_value_csv(run.file("full_value.csv"), solve_full_ode(run.model, run.config.n_t));
    }
}

json params_json(const ModelParams& p) {
    json j;
    j["r"] = p.r;
    j["mu_m"] = p.mu_m;
    j["sigma_m"] = p.sigma_m;
    j["beta1"] = p.beta1;
    j["beta2"] = p.beta2;
    j["sigma"] = p.sigma;
    j["b1"] = p.b1;
    j["b2"] = p.b2;
    j["T"] = p.T;
    j["lambda1"] = p.regimes.lambda1;
    j["lambda2"] = p.regimes.lambda2;
    j["alpha1"] = p.regimes.alpha1;
    j["alpha2"] = p.regimes.alpha2;
    return j;
}

void write_metadata(Run& run) {
    const ExperimentConfig& c = run.config;
    json meta;
    meta["experiment"] = c.name;
    meta["version"] = kVersion;
    meta["seed"] = c.seed;
    meta["rng"] = kRngName;
    meta["dt"] = c.dt;
    meta["N_t"] = c.n_t;
    meta["N_p"] = c.n_p;
    meta["n_paths"] = c.n_paths;
    meta["x0"] = run.x0;
    meta["fingerprint"] = run.model.fingerprint();
    meta["params"] = params_json(run.model.params());
    meta["params_toml"] = params_to_toml(run.model.params());
    meta["scheme"] = {
        {"paths", "log-Euler, left-endpoint regime coefficients, exact chain simulation"},
        {"filter", "Euler on the innovations form, clip negatives and renormalise"},
        {"full_value", "classic RK4 backward in time"},
        {"partial_value", "explicit Euler, central diffusion, first-order upwind drift, CFL substeps"},
    };
    meta["assumptions"] = run.assumptions;
    json files = json::array();
    for (const auto& f : run.files) files.push_back(f.filename().string());
    meta["files"] = files;
    run.files.push_back(c.out_dir / "metadata.json");
    std::ofstream out(run.files.back(), std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + run.files.back().string());
    }
    out << meta.dump(2) << '\n';
}

} // namespace

std::vector<std::filesystem::path> run_experiment(const ExperimentConfig& config) {
    Preset preset;
    if (config.name != "custom") {
        preset = experiment_preset(config.name);
    } else if (!config.params && !config.params_file) {
        throw ConfigError("config", "custom experiment needs a parameter file");
    }
    if (config.params) {
        preset.params = *config.params;
    } else if (config.params_file) {
        preset.params = load_params_toml(*config.params_file);
        preset.assumptions.clear();
    }
    if (!(config.dt > 0.0)) throw ConfigError("dt", "must be positive");
    if (config.n_paths < 1) throw ConfigError("n_paths", "must be at least 1");
    if (config.n_t < 10) throw ConfigError("N_t", "must be at least 10");
    if (config.n_p < 50) throw ConfigError("N_p", "must be at least 50");

    std::filesystem::create_directories(config.out_dir);
    Run run{config, Model(preset.params), preset.x0, preset.assumptions, {}};
    for (const auto& w : run.model.warnings()) run.assumptions.push_back("warning: " + w);

    if (config.name == "fig1") {
        run_full_paths(run);
    } else if (config.name == "fig2") {
        run_fig2(run);
    } else if (config.name == "fig3") {
        run_fig3(run);
    } else if (config.name == "fig4") {
        run_loss(run);
    } else {
        run_custom(run);
    }
    write_metadata(run);
    return run.files;
}

ExperimentConfig config_from_metadata(const std::filesystem::path& metadata, const std::filesystem::path& out_dir) {
    std::ifstream in(metadata, std::ios::binary);
    if (!in) {
        throw ConfigError("metadata", "cannot open " + metadata.string());
    }
    json meta;
    try {
        meta = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("metadata", e.what());
    }
    ExperimentConfig c;
    try {
        c.name = meta.at("experiment").get<std::string>();
        c.seed = meta.at("seed").get<std::uint64_t>();
        c.dt = meta.at("dt").get<double>();
        c.n_t = meta.at("N_t").get<std::size_t>();
        c.n_p = meta.at("N_p").get<std::size_t>();
        c.n_paths = meta.at("n_paths").get<std::size_t>();
        c.params = parse_params_toml(meta.at("params_toml").get<std::string>(), metadata.string());
    } catch (const json::exception& e) {
        throw ConfigError("metadata", e.what());
    }
    c.out_dir = out_dir;
    return c;
}

} // namespace convlab
