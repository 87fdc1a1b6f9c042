#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <variant>

namespace convlab {

/// Fractions of wealth held in S1, S2 and the market index. The remainder
/// sits in the riskless account.
struct PortfolioWeights {
    double h1 = 0.0;
    double h2 = 0.0;
    double hm = 0.0;

    double cash() const { return 1.0 - h1 - h2 - hm; }
    bool finite() const { return std::isfinite(h1) && std::isfinite(h2) && std::isfinite(hm); }
};

/// Policy that sees the current regime.
using FullInformationPolicy = std::function<PortfolioWeights(double t, double x, std::size_t regime)>;
/// Policy that sees only the filtered state probabilities.
using PartialInformationPolicy = std::function<PortfolioWeights(double t, double x, std::span<const double> p)>;

/// Type-erased trading rule handed to the wealth simulator.
class PolicyHandle {
public:
    PolicyHandle(FullInformationPolicy f) : fn_(std::move(f)) {}
    PolicyHandle(PartialInformationPolicy f) : fn_(std::move(f)) {}

    bool partial_information() const { return std::holds_alternative<PartialInformationPolicy>(fn_); }

    PortfolioWeights full(double t, double x, std::size_t regime) const {
        return std::get<FullInformationPolicy>(fn_)(t, x, regime);
    }
    PortfolioWeights partial(double t, double x, std::span<const double> p) const {
        return std::get<PartialInformationPolicy>(fn_)(t, x, p);
    }

private:
    std::variant<FullInformationPolicy, PartialInformationPolicy> fn_;
};

} // namespace convlab
