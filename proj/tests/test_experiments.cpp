#include "convlab/experiments.hpp"
#include "convlab/params_io.hpp"

#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace convlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("convlab_test_" + name);
    fs::remove_all(d);
    return d;
}

} // namespace

TEST_CASE("grid specs") {
    const auto g = parse_grid_spec("-1:1:5");
    REQUIRE(g.size() == 5);
    CHECK(g.front() == -1.0);
    CHECK(g[2] == 0.0);
    CHECK(g.back() == 1.0);
    CHECK_THROWS_AS(parse_grid_spec("0:1"), ConfigError);
    CHECK_THROWS_AS(parse_grid_spec("0:1:0"), ConfigError);
    CHECK_THROWS_AS(parse_grid_spec("a:1:3"), ConfigError);
}

TEST_CASE("presets") {
    for (const char* name : {"fig1", "fig2", "fig3", "fig4"}) {
        const Preset p = experiment_preset(name);
        CHECK_NOTHROW(Model(p.params));
    }
    CHECK(experiment_preset("fig3").params.chain.initial(0) == 0.0);
    CHECK(experiment_preset("fig4").params.T == 2.0);
    CHECK_THROWS_AS(experiment_preset("fig9"), ConfigError);
}

TEST_CASE("fig1 run is deterministic and replayable") {
    const fs::path a = scratch("a"), b = scratch("b"), c = scratch("c");
    ExperimentConfig cfg;
    cfg.name = "fig1";
    cfg.seed = 3;
    cfg.dt = 1e-2;
    cfg.n_paths = 2;
    cfg.out_dir = a;
    const auto files = run_experiment(cfg);
    REQUIRE(!files.empty());
    CHECK(files.back().filename() == "metadata.json");
    cfg.out_dir = b;
    run_experiment(cfg);
    for (const auto& f : files) CHECK(slurp(f) == slurp(b / f.filename()));

    const auto meta = nlohmann::json::parse(slurp(a / "metadata.json"));
    for (const char* key : {"experiment", "version", "seed", "rng", "dt", "params", "fingerprint", "files"}) {
        CHECK(meta.contains(key));
    }
    CHECK(meta["seed"] == 3);

    run_experiment(config_from_metadata(a / "metadata.json", c));
    for (const auto& f : files) CHECK(slurp(f) == slurp(c / f.filename()));

    cfg.out_dir = b;
    cfg.seed = 4;
    run_experiment(cfg);
    CHECK(slurp(a / "paths.csv") != slurp(b / "paths.csv"));
    for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("configuration errors") {
    ExperimentConfig cfg;
    cfg.out_dir = scratch("bad");
    cfg.name = "fig7";
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
    cfg.name = "custom";
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
    cfg.params_file = "/nonexistent/params.toml";
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
    fs::remove_all(cfg.out_dir);
}
