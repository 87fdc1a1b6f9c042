#include "convlab/model.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>

namespace convlab {

namespace {

constexpr double kRowSumTol = 1e-12;

std::string regime_label(std::size_t i) { return "regime " + std::to_string(i + 1); }

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw ParameterError(what);
    }
}

bool is_finite(double v) { return std::isfinite(v); }

} // namespace

std::string to_string(Variant v) {
    switch (v) {
    case Variant::unrestricted:
        return "unrestricted";
    case Variant::beta_neutral:
        return "beta_neutral";
    case Variant::delta_neutral:
        return "delta_neutral";
    }
    return "unknown";
}

Variant variant_from_string(const std::string& name) {
    if (name == "unrestricted") return Variant::unrestricted;
    if (name == "beta_neutral") return Variant::beta_neutral;
    if (name == "delta_neutral") return Variant::delta_neutral;
    throw ParameterError("unknown strategy variant '" + name + "'");
}

ModelParams validate_params(const ModelParams& raw, std::vector<std::string>* warnings) {
    for (double v : {raw.r, raw.mu_m, raw.sigma_m, raw.beta1, raw.beta2, raw.sigma, raw.b1, raw.b2, raw.T}) {
        require(is_finite(v), "market parameters must be finite");
    }
    require(raw.sigma_m > 0.0, "sigma_m must be > 0");
    require(raw.sigma > 0.0, "sigma must be > 0");
    require(raw.b1 > 0.0, "b1 must be > 0");
    require(raw.b2 > 0.0, "b2 must be > 0");
    require(raw.T > 0.0, "T must be > 0");

    const RegimeTable& rt = raw.regimes;
    const std::size_t K = rt.lambda1.size();
    require(K >= 1, "at least one regime is required");
    require(rt.lambda2.size() == K && rt.alpha1.size() == K && rt.alpha2.size() == K,
            "regime arrays lambda1, lambda2, alpha1, alpha2 must all have length K=" + std::to_string(K));
    for (std::size_t i = 0; i < K; ++i) {
        require(is_finite(rt.lambda1[i]) && is_finite(rt.lambda2[i]) && is_finite(rt.alpha1[i]) &&
                    is_finite(rt.alpha2[i]),
                "non-finite regime coefficient in " + regime_label(i));
        require(rt.lambda1[i] + rt.lambda2[i] > 0.0, "lambda1+lambda2 <= 0 in " + regime_label(i));
    }

    const Eigen::MatrixXd& Q = raw.chain.Q;
    require(Q.rows() == static_cast<Eigen::Index>(K) && Q.cols() == static_cast<Eigen::Index>(K),
            "generator Q must be " + std::to_string(K) + "x" + std::to_string(K));
    for (std::size_t i = 0; i < K; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            const double q = Q(i, j);
            require(is_finite(q), "generator entries must be finite");
            if (i != j) {
                require(q >= 0.0, "negative off-diagonal intensity q(" + std::to_string(i + 1) + "," +
                                      std::to_string(j + 1) + ")");
                if (q == 0.0 && warnings != nullptr) {
                    warnings->push_back("zero intensity q(" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                        "); the chain is not strictly irreducible");
                }
            }
            row += q;
        }
        require(std::abs(row) <= kRowSumTol, "generator row " + std::to_string(i + 1) + " does not sum to 0");
    }

    const Eigen::VectorXd& init = raw.chain.initial;
    require(init.size() == static_cast<Eigen::Index>(K), "initial distribution must have length K");
    double mass = 0.0;
    for (Eigen::Index i = 0; i < init.size(); ++i) {
        require(is_finite(init(i)) && init(i) >= 0.0, "initial distribution entries must be >= 0");
        mass += init(i);
    }
    require(std::abs(mass - 1.0) <= kRowSumTol, "initial distribution must sum to 1");
    return raw;
}

namespace coeff {

namespace {
// b1^2 b2^2 + sigma^2 (b1^2 + b2^2): determinant of the idiosyncratic covariance.
double idio_det(const ModelParams& p) {
    const double s2 = p.sigma * p.sigma;
    const double b1s = p.b1 * p.b1;
    const double b2s = p.b2 * p.b2;
    return b1s * b2s + s2 * (b1s + b2s);
}

double neutral_denominator(const ModelParams& p, double a1, double a2) {
    const double d = a1 - a2;
    return p.b1 * p.b1 * a2 * a2 + p.b2 * p.b2 * a1 * a1 + p.sigma * p.sigma * d * d;
}

double market_growth(const ModelParams& p) { return p.r + p.mu_m * p.mu_m / (2.0 * p.sigma_m * p.sigma_m); }
} // namespace

double theta1(const ModelParams& p, double lambda1, double lambda2) {
    const double s2 = p.sigma * p.sigma;
    const double sum = lambda1 + lambda2;
    const double num = p.b1 * p.b1 * lambda2 * lambda2 + p.b2 * p.b2 * lambda1 * lambda1 + s2 * sum * sum;
    return num / (2.0 * idio_det(p));
}

double theta2(const ModelParams& p, double lambda1, double lambda2, double alpha1, double alpha2) {
    const double s2 = p.sigma * p.sigma;
    const double num = alpha1 * lambda1 * (lambda1 * (p.b2 * p.b2 + s2) + lambda2 * s2) +
                       alpha2 * lambda2 * (lambda2 * (p.b1 * p.b1 + s2) + lambda1 * s2);
    return num / idio_det(p);
}

double theta3(const ModelParams& p, double lambda1, double lambda2, double alpha1, double alpha2) {
    const double s2 = p.sigma * p.sigma;
    const double e1 = alpha1 * lambda1;
    const double e2 = alpha2 * lambda2;
    const double num = (e1 * p.b2) * (e1 * p.b2) + (e2 * p.b1) * (e2 * p.b1) + s2 * (e1 + e2) * (e1 + e2);
    return num / (2.0 * idio_det(p)) + market_growth(p);
}

double phi1(const ModelParams& p, double a1, double a2, double lambda1, double lambda2) {
    const double k = a2 * lambda1 + a1 * lambda2;
    return k * k / (2.0 * neutral_denominator(p, a1, a2));
}

double phi2(const ModelParams& p, double a1, double a2, double lambda1, double lambda2, double alpha1,
            double alpha2) {
    const double e = alpha1 * a2 * lambda1 + alpha2 * a1 * lambda2;
    return e * (a1 * lambda2 + a2 * lambda1) / neutral_denominator(p, a1, a2);
}

double phi3(const ModelParams& p, double a1, double a2, double lambda1, double lambda2, double alpha1,
            double alpha2) {
    const double e = alpha1 * a2 * lambda1 + alpha2 * a1 * lambda2;
    return e * e / (2.0 * neutral_denominator(p, a1, a2)) + market_growth(p);
}

double gamma1(const ModelParams& p) {
    const double sm2 = p.sigma_m * p.sigma_m;
    return (p.beta1 - p.beta2) * p.mu_m -
           0.5 * ((p.beta1 * p.beta1 - p.beta2 * p.beta2) * sm2 + p.b1 * p.b1 - p.b2 * p.b2);
}

double gamma2(const ModelParams& p) {
    const double db = p.beta1 - p.beta2;
    return p.sigma_m * p.sigma_m * db * db + p.b1 * p.b1 + p.b2 * p.b2;
}

} // namespace coeff

DerivedConstants derive_constants(const ModelParams& p) {
    DerivedConstants c;
    const double s2 = p.sigma * p.sigma;
    c.sigma1 = std::sqrt(s2 + p.b1 * p.b1);
    c.sigma2 = std::sqrt(s2 + p.b2 * p.b2);
    c.rho = s2 / (c.sigma1 * c.sigma2);
    c.varrho1 = s2 / (s2 + p.b1 * p.b1);
    c.varrho2 = s2 / (s2 + p.b2 * p.b2);
    c.gamma1 = coeff::gamma1(p);
    c.gamma2 = coeff::gamma2(p);

    const RegimeTable& rt = p.regimes;
    const std::size_t K = rt.size();
    // Beta-neutral constants are undefined when both betas vanish.
    const bool beta_ok = p.beta1 != 0.0 || p.beta2 != 0.0;
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < K; ++i) {
        const double l1 = rt.lambda1[i], l2 = rt.lambda2[i], a1 = rt.alpha1[i], a2 = rt.alpha2[i];
        c.theta1.push_back(coeff::theta1(p, l1, l2));
        c.theta2.push_back(coeff::theta2(p, l1, l2, a1, a2));
        c.theta3.push_back(coeff::theta3(p, l1, l2, a1, a2));
        c.phi1.push_back(beta_ok ? coeff::phi1(p, p.beta1, p.beta2, l1, l2) : nan);
        c.phi2.push_back(beta_ok ? coeff::phi2(p, p.beta1, p.beta2, l1, l2, a1, a2) : nan);
        c.phi3.push_back(beta_ok ? coeff::phi3(p, p.beta1, p.beta2, l1, l2, a1, a2) : nan);
    }
    return c;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& Q) {
    const Eigen::Index K = Q.rows();
    if (K < 1 || Q.cols() != K) {
        throw ParameterError("generator must be square and non-empty");
    }
    if (K == 1) {
        return Eigen::VectorXd::Ones(1);
    }
    // Stack Q^T with a row of ones: [Q^T; 1^T] nu = [0; 1].
    Eigen::MatrixXd A(K + 1, K);
    A.topRows(K) = Q.transpose();
    A.row(K).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K + 1);
    rhs(K) = 1.0;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-12);
    if (qr.rank() < K) {
        throw ParameterError("generator is reducible or singular: stationary distribution is not unique");
    }
    Eigen::VectorXd nu = qr.solve(rhs);
    if ((A * nu - rhs).lpNorm<Eigen::Infinity>() > 1e-9) {
        throw ParameterError("stationary distribution system is inconsistent");
    }
    for (Eigen::Index i = 0; i < K; ++i) {
        if (nu(i) < -1e-12) {
            throw ParameterError("generator is reducible: stationary vector has negative entries");
        }
        nu(i) = std::max(nu(i), 0.0);
    }
    // The null space is one-dimensional only for an irreducible chain; a state
    // with zero stationary mass is transient.
    if ((nu.array() <= 0.0).any()) {
        throw ParameterError("generator is reducible: some states carry zero stationary mass");
    }
    return nu / nu.sum();
}

ModelParams averaged_params(const ModelParams& p) {
    if (p.regime_count() < 2) {
        throw ParameterError("averaged_params needs at least two regimes");
    }
    const Eigen::VectorXd nu = stationary_distribution(p.chain.Q);
    auto average = [&](const std::vector<double>& v) {
        double acc = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            acc += nu(static_cast<Eigen::Index>(i)) * v[i];
        }
        return acc;
    };
    ModelParams out = p;
    out.regimes.lambda1 = {average(p.regimes.lambda1)};
    out.regimes.lambda2 = {average(p.regimes.lambda2)};
    out.regimes.alpha1 = {average(p.regimes.alpha1)};
    out.regimes.alpha2 = {average(p.regimes.alpha2)};
    out.chain.Q = Eigen::MatrixXd::Zero(1, 1);
    out.chain.initial = Eigen::VectorXd::Ones(1);
    return out;
}

bool has_constant_lambda(const ModelParams& p) {
    const auto& rt = p.regimes;
    for (std::size_t i = 1; i < rt.size(); ++i) {
        if (rt.lambda1[i] != rt.lambda1[0] || rt.lambda2[i] != rt.lambda2[0]) {
            return false;
        }
    }
    return true;
}

Model::Model(ModelParams params) {
    params_ = validate_params(params, &warnings_);
    constants_ = derive_constants(params_);
    fingerprint_ = convlab::fingerprint(params_, constants_);
}

Model Model::with_constants(ModelParams params, DerivedConstants constants) {
    Model m;
    m.params_ = std::move(params);
    m.constants_ = std::move(constants);
    m.fingerprint_ = convlab::fingerprint(m.params_, m.constants_);
    return m;
}

Model::Sources Model::sources(Variant v, std::size_t i) const {
    const auto& c = constants_;
    switch (v) {
    case Variant::unrestricted:
        return {c.theta1.at(i), c.theta2.at(i), c.theta3.at(i)};
    case Variant::beta_neutral:
        if (params_.beta2 == 0.0) {
            throw ParameterError("beta-neutral constraint degenerates for beta2 = 0");
        }
        return {c.phi1.at(i), c.phi2.at(i), c.phi3.at(i)};
    case Variant::delta_neutral: {
        const auto& rt = params_.regimes;
        const double l1 = rt.lambda1.at(i), l2 = rt.lambda2.at(i), a1 = rt.alpha1.at(i), a2 = rt.alpha2.at(i);
        return {coeff::phi1(params_, 1.0, 1.0, l1, l2), coeff::phi2(params_, 1.0, 1.0, l1, l2, a1, a2),
                coeff::phi3(params_, 1.0, 1.0, l1, l2, a1, a2)};
    }
    }
    throw ParameterError("unknown variant");
}

namespace {

void append_number(std::string& out, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
    out.push_back(';');
}

void append_numbers(std::string& out, const std::vector<double>& v) {
    for (double x : v) append_number(out, x);
    out.push_back('|');
}

// FNV-1a, 64 bit.
std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

std::string fingerprint(const ModelParams& p, const DerivedConstants& c) {
    std::string s;
    for (double v : {p.r, p.mu_m, p.sigma_m, p.beta1, p.beta2, p.sigma, p.b1, p.b2, p.T}) append_number(s, v);
    append_numbers(s, p.regimes.lambda1);
    append_numbers(s, p.regimes.lambda2);
    append_numbers(s, p.regimes.alpha1);
    append_numbers(s, p.regimes.alpha2);
    for (Eigen::Index i = 0; i < p.chain.Q.size(); ++i) append_number(s, p.chain.Q.data()[i]);
    for (Eigen::Index i = 0; i < p.chain.initial.size(); ++i) append_number(s, p.chain.initial(i));
    append_numbers(s, c.theta1);
    append_numbers(s, c.theta2);
    append_numbers(s, c.theta3);
    append_numbers(s, c.phi1);
    append_numbers(s, c.phi2);
    append_numbers(s, c.phi3);
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << fnv1a(s);
    return os.str();
}

} // namespace convlab
