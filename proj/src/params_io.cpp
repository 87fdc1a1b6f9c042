#include "convlab/params_io.hpp"

#include "convlab/format.hpp"

#include <toml.hpp>

#include <fstream>
#include <sstream>

namespace convlab {

namespace {

const toml::table& require_table(const toml::table& root, const std::string& name) {
    const toml::table* t = root[name].as_table();
    if (t == nullptr) {
        throw ConfigError(name, "missing table");
    }
    return *t;
}

double as_double(const toml::node* node, const std::string& field) {
    if (node == nullptr) {
        throw ConfigError(field, "missing value");
    }
    if (auto v = node->as_floating_point()) return v->get();
    if (auto v = node->as_integer()) return static_cast<double>(v->get());
    throw ConfigError(field, "expected a number");
}

std::vector<double> as_vector(const toml::node* node, const std::string& field) {
    if (node == nullptr) {
        throw ConfigError(field, "missing value");
    }
    const toml::array* arr = node->as_array();
    if (arr == nullptr) {
        throw ConfigError(field, "expected an array of numbers");
    }
    std::vector<double> out;
    out.reserve(arr->size());
    for (std::size_t i = 0; i < arr->size(); ++i) {
        out.push_back(as_double(arr->get(i), field + "[" + std::to_string(i) + "]"));
    }
    return out;
}

} // namespace

ModelParams parse_params_toml(std::string_view text, std::string_view source_name) {
    toml::table root;
    try {
        root = toml::parse(text, source_name);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << e.description() << " (line " << e.source().begin.line << ")";
        throw ConfigError(std::string(source_name), os.str());
    }

    ModelParams p;
    const toml::table& market = require_table(root, "market");
    auto m = [&](const char* key) { return as_double(market.get(key), std::string("market.") + key); };
    p.r = m("r");
    p.mu_m = m("mu_m");
    p.sigma_m = m("sigma_m");
    p.beta1 = m("beta1");
    p.beta2 = m("beta2");
    p.sigma = m("sigma");
    p.b1 = m("b1");
    p.b2 = m("b2");
    p.T = m("T");

    const toml::table& regimes = require_table(root, "regimes");
    p.regimes.lambda1 = as_vector(regimes.get("lambda1"), "regimes.lambda1");
    p.regimes.lambda2 = as_vector(regimes.get("lambda2"), "regimes.lambda2");
    p.regimes.alpha1 = as_vector(regimes.get("alpha1"), "regimes.alpha1");
    p.regimes.alpha2 = as_vector(regimes.get("alpha2"), "regimes.alpha2");
    const std::size_t K = p.regimes.lambda1.size();
    for (const char* key : {"lambda2", "alpha1", "alpha2"}) {
        if (as_vector(regimes.get(key), std::string("regimes.") + key).size() != K) {
            throw ConfigError(std::string("regimes.") + key, "length differs from regimes.lambda1");
        }
    }

    const toml::table& chain = require_table(root, "chain");
    const toml::array* q = chain["Q"].as_array();
    if (q == nullptr) {
        throw ConfigError("chain.Q", "expected an array of rows");
    }
    if (q->size() != K) {
        throw ConfigError("chain.Q", "expected " + std::to_string(K) + " rows");
    }
    p.chain.Q.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
    for (std::size_t i = 0; i < K; ++i) {
        const std::string field = "chain.Q[" + std::to_string(i) + "]";
        std::vector<double> row = as_vector(q->get(i), field);
        if (row.size() != K) {
            throw ConfigError(field, "expected " + std::to_string(K) + " entries");
        }
        for (std::size_t j = 0; j < K; ++j) {
            p.chain.Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
        }
    }
    std::vector<double> init = as_vector(chain.get("initial"), "chain.initial");
    if (init.size() != K) {
        throw ConfigError("chain.initial", "expected " + std::to_string(K) + " entries");
    }
    p.chain.initial = Eigen::Map<const Eigen::VectorXd>(init.data(), static_cast<Eigen::Index>(K));
    return p;
}

ModelParams load_params_toml(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError(path.string(), "cannot open file");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_params_toml(buf.str(), path.string());
}

std::string params_to_toml(const ModelParams& p) {
    std::string out;
    auto kv = [&](const char* key, double v) {
        out += key;
        out += " = ";
        out += format_toml_float(v);
        out += '\n';
    };
    auto arr = [&](const std::vector<double>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ", ";
            s += format_toml_float(v[i]);
        }
        return s + "]";
    };
    out += "[market]\n";
    kv("r", p.r);
    kv("mu_m", p.mu_m);
    kv("sigma_m", p.sigma_m);
    kv("beta1", p.beta1);
    kv("beta2", p.beta2);
    kv("sigma", p.sigma);
    kv("b1", p.b1);
    kv("b2", p.b2);
    kv("T", p.T);
    out += "\n[regimes]\n";
    out += "lambda1 = " + arr(p.regimes.lambda1) + "\n";
    out += "lambda2 = " + arr(p.regimes.lambda2) + "\n";
    out += "alpha1 = " + arr(p.regimes.alpha1) + "\n";
    out += "alpha2 = " + arr(p.regimes.alpha2) + "\n";
    out += "\n[chain]\nQ = [";
    for (Eigen::Index i = 0; i < p.chain.Q.rows(); ++i) {
        if (i) out += ", ";
        std::vector<double> row(p.chain.Q.cols());
        for (Eigen::Index j = 0; j < p.chain.Q.cols(); ++j) row[j] = p.chain.Q(i, j);
        out += arr(row);
    }
    out += "]\n";
    std::vector<double> init(p.chain.initial.data(), p.chain.initial.data() + p.chain.initial.size());
    out += "initial = " + arr(init) + "\n";
    return out;
}

} // namespace convlab
