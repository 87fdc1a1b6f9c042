#pragma once

#include "convlab/model.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace convlab {

/// Malformed or missing configuration entry. `field()` is the dotted path of
/// the offending key, e.g. "regimes.lambda1[2]".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const { return field_; }

private:
    std::string field_;
};

// Schema:
//   [market] r, mu_m, sigma_m, beta1, beta2, sigma, b1, b2, T
//   [regimes] lambda1 = [...], lambda2 = [...], alpha1 = [...], alpha2 = [...]
//   [chain] Q = [[...], ...], initial = [...]
// Integers are accepted wherever a float is expected. The result is not
// validated; construct a Model for that.
ModelParams parse_params_toml(std::string_view text, std::string_view source_name = "<string>");
ModelParams load_params_toml(const std::filesystem::path& path);

/// Serialises params back into the same schema. Floats are written in
/// shortest round-trip form so parse(write(p)) == p bit for bit.
std::string params_to_toml(const ModelParams& p);

} // namespace convlab
