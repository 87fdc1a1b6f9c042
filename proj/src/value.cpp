#include "convlab/value.hpp"

#include "convlab/filter.hpp"
#include "convlab/format.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace convlab {

namespace {

// Left node index and weight for linear interpolation on a uniform grid.
std::pair<std::size_t, double> locate(double s, std::size_t last) {
    if (!(s >= 0.0)) return {0, 0.0};
    if (s >= static_cast<double>(last)) return {last == 0 ? 0 : last - 1, last == 0 ? 0.0 : 1.0};
    const auto k = static_cast<std::size_t>(s);
    return {k, s - static_cast<double>(k)};
}

double interp_time(const Eigen::MatrixXd& M, const TimeGrid& grid, double t, std::size_t col) {
    const auto [k, w] = locate(t / grid.dt(), grid.steps);
    const auto c = static_cast<Eigen::Index>(col);
    const auto r = static_cast<Eigen::Index>(k);
    if (w == 0.0) return M(r, c);
    return (1.0 - w) * M(r, c) + w * M(r + 1, c);
}

double interp_time_p(const Eigen::MatrixXd& M, const TimeGrid& grid, std::size_t n_p, double t, double p) {
    const auto [k, wt] = locate(t / grid.dt(), grid.steps);
    const auto [j, wp] = locate(p * static_cast<double>(n_p), n_p);
    const auto r = static_cast<Eigen::Index>(k);
    const auto c = static_cast<Eigen::Index>(j);
    auto row = [&](Eigen::Index rr) {
        return wp == 0.0 ? M(rr, c) : (1.0 - wp) * M(rr, c) + wp * M(rr, c + 1);
    };
    if (wt == 0.0) return row(r);
    return (1.0 - wt) * row(r) + wt * row(r + 1);
}

void check_regime_index(std::size_t i, std::size_t K) {
    if (i >= K) {
        throw ParameterError("regime index " + std::to_string(i) + " out of range");
    }
}

} // namespace

double ValueCoefficientsFull::m_at(double t, std::size_t i) const {
    check_regime_index(i, regimes());
    return interp_time(m, grid, t, i);
}

double ValueCoefficientsFull::n_at(double t, std::size_t i) const {
    check_regime_index(i, regimes());
    return interp_time(n, grid, t, i);
}

double ValueCoefficientsFull::u_at(double t, std::size_t i) const {
    check_regime_index(i, regimes());
    return interp_time(u, grid, t, i);
}

ValueCoefficientsFull solve_full_ode(const Model& model, std::size_t n_t, Variant v) {
    if (n_t < 10) {
        throw ParameterError("solve_full_ode needs N_t >= 10");
    }
    const ModelParams& p = model.params();
    const DerivedConstants& c = model.constants();
    const std::size_t K = p.regime_count();
    const auto Ki = static_cast<Eigen::Index>(K);
    const Eigen::MatrixXd& Q = p.chain.Q;

    Eigen::VectorXd L(Ki), drift_x(Ki), c1(Ki), c2(Ki), c3(Ki);
    for (std::size_t i = 0; i < K; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto& rt = p.regimes;
        L(ii) = rt.lambda1[i] + rt.lambda2[i];
        drift_x(ii) = c.gamma1 + rt.lambda1[i] * rt.alpha1[i] + rt.lambda2[i] * rt.alpha2[i];
        const Model::Sources s = model.sources(v, i);
        c1(ii) = s.quadratic;
        c2(ii) = s.linear;
        c3(ii) = s.constant;
    }

    // State y = (m, n, u) in time-to-go tau = T - t.
    auto rhs = [&](const Eigen::VectorXd& y) {
        const auto m = y.segment(0, Ki);
        const auto n = y.segment(Ki, Ki);
        const auto u = y.segment(2 * Ki, Ki);
        Eigen::VectorXd d(3 * Ki);
        d.segment(0, Ki) = (-2.0 * L.array() * m.array()).matrix() + Q * m + c1;
        d.segment(Ki, Ki) =
            (-L.array() * n.array() + 2.0 * drift_x.array() * m.array()).matrix() + Q * n - c2;
        d.segment(2 * Ki, Ki) = Q * u + c.gamma2 * m + (drift_x.array() * n.array()).matrix() + c3;
        return d;
    };

    ValueCoefficientsFull out;
    out.grid = TimeGrid{p.T, n_t};
    out.variant = v;
    out.fingerprint = model.fingerprint();
    out.m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_t + 1), Ki);
    out.n = out.m;
    out.u = out.m;

    const double h = out.grid.dt();
    Eigen::VectorXd y = Eigen::VectorXd::Zero(3 * Ki);
    for (std::size_t step = 0; step < n_t; ++step) {
        const Eigen::VectorXd k1 = rhs(y);
        const Eigen::VectorXd k2 = rhs(y + 0.5 * h * k1);
        const Eigen::VectorXd k3 = rhs(y + 0.5 * h * k2);
        const Eigen::VectorXd k4 = rhs(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!y.allFinite()) {
            throw NumericalError("value ODE blew up at step " + std::to_string(step + 1));
        }
        const auto row = static_cast<Eigen::Index>(n_t - step - 1);
        out.m.row(row) = y.segment(0, Ki).transpose();
        out.n.row(row) = y.segment(Ki, Ki).transpose();
        out.u.row(row) = y.segment(2 * Ki, Ki).transpose();
    }
    return out;
}

double value_full(double t, double w, double x, std::size_t regime, const ValueCoefficientsFull& coeffs) {
    if (!(w > 0.0)) {
        throw ParameterError("value_full needs w > 0");
    }
    return std::log(w) + coeffs.m_at(t, regime) * x * x + coeffs.n_at(t, regime) * x + coeffs.u_at(t, regime);
}

namespace {

void require_constant_lambda(const Model& model) {
    if (!has_constant_lambda(model.params())) {
        throw ParameterError("partial-information value requires regime-independent lambda1, lambda2");
    }
}

// Quadratic source of the mbar equation for each variant.
double mbar_source(const Model& model, Variant v) {
    const ModelParams& p = model.params();
    const double l1 = p.regimes.lambda1[0], l2 = p.regimes.lambda2[0];
    switch (v) {
    case Variant::unrestricted:
        return model.constants().theta1.at(0);
    case Variant::beta_neutral:
        if (p.beta2 == 0.0) throw ParameterError("beta-neutral constraint degenerates for beta2 = 0");
        return model.constants().phi1.at(0);
    case Variant::delta_neutral:
        return coeff::phi1(p, 1.0, 1.0, l1, l2);
    }
    throw ParameterError("unknown variant");
}

double mbar_tau(double tau, double source, double L) { return source / (2.0 * L) * (1.0 - std::exp(-2.0 * L * tau)); }

} // namespace

double mbar_closed_form(double t, const Model& model, Variant v) {
    require_constant_lambda(model);
    const ModelParams& p = model.params();
    const double L = p.regimes.lambda1[0] + p.regimes.lambda2[0];
    if (!(L > 0.0)) {
        throw ParameterError("lambda1+lambda2 <= 0");
    }
    return mbar_tau(p.T - t, mbar_source(model, v), L);
}

DegenerateParabolicOperator::DegenerateParabolicOperator(std::vector<double> diffusion, std::vector<double> drift,
                                                         double decay)
    : a_(std::move(diffusion)), b_(std::move(drift)), c_(decay) {
    if (a_.size() < 3 || a_.size() != b_.size()) {
        throw ParameterError("parabolic operator needs at least 3 nodes and matching coefficient arrays");
    }
    dp_ = 1.0 / static_cast<double>(a_.size() - 1);
    const std::size_t last = a_.size() - 1;
    if (std::abs(a_[0]) > 1e-14 || std::abs(a_[last]) > 1e-14) {
        throw ParameterError("diffusion must vanish at p = 0 and p = 1");
    }
    if (b_[0] < 0.0 || b_[last] > 0.0) {
        throw ParameterError("drift must point into [0, 1] at the endpoints");
    }
}

double DegenerateParabolicOperator::max_stable_step() const {
    double rate = c_;
    for (std::size_t j = 0; j < a_.size(); ++j) {
        rate = std::max(rate, a_[j] / (dp_ * dp_) + std::abs(b_[j]) / dp_ + c_);
    }
    return rate > 0.0 ? 1.0 / rate : std::numeric_limits<double>::infinity();
}

void DegenerateParabolicOperator::apply(const std::vector<double>& v, std::vector<double>& out) const {
    const std::size_t N = a_.size() - 1;
    out.resize(N + 1);
    const double inv_dp = 1.0 / dp_;
    const double inv_dp2 = inv_dp * inv_dp;
    for (std::size_t j = 0; j <= N; ++j) {
        double acc = -c_ * v[j];
        if (j > 0 && j < N) {
            acc += 0.5 * a_[j] * (v[j + 1] - 2.0 * v[j] + v[j - 1]) * inv_dp2;
        }
        if (b_[j] > 0.0) {
            acc += b_[j] * (v[j + 1] - v[j]) * inv_dp;
        } else if (b_[j] < 0.0) {
            acc += b_[j] * (v[j] - v[j - 1]) * inv_dp;
        }
        out[j] = acc;
    }
}

PartialReduction partial_reduction(const Model& model, double p) {
    const ModelParams& mp = model.params();
    const DerivedConstants& c = model.constants();
    if (mp.regime_count() != 2) {
        throw ParameterError("partial-information PDE supports K = 2 only");
    }
    require_constant_lambda(model);
    const auto& rt = mp.regimes;
    const double l1 = rt.lambda1[0], l2 = rt.lambda2[0];
    const double da1 = rt.alpha1[0] - rt.alpha1[1];
    const double da2 = rt.alpha2[0] - rt.alpha2[1];
    const double pq = p * (1.0 - p);
    const double root = std::sqrt(1.0 - c.rho * c.rho);

    PartialReduction r{};
    r.h11 = l1 * pq * da1 / c.sigma1;
    r.h12 = pq * (-l2 * c.sigma1 * da2 - c.sigma2 * c.rho * l1 * da1) / (c.sigma1 * c.sigma2 * root);
    r.diffusion = r.h11 * r.h11 + r.h12 * r.h12;
    r.drift = mp.chain.Q(1, 0) * (1.0 - p) - mp.chain.Q(0, 1) * p;
    const double s2 = mp.sigma * mp.sigma;
    const double b1s = mp.b1 * mp.b1, b2s = mp.b2 * mp.b2;
    const double D = s2 * (b1s + b2s) + b1s * b2s;
    r.cross = b1s / c.sigma1 * r.h11 - std::sqrt(D) / c.sigma1 * r.h12;
    return r;
}

double ValuePartialSolution::mbar_at(double t) const {
    const auto [k, w] = locate(t / grid.dt(), grid.steps);
    return w == 0.0 ? mbar[k] : (1.0 - w) * mbar[k] + w * mbar[k + 1];
}

double ValuePartialSolution::nbar_at(double t, double pp) const { return interp_time_p(nbar, grid, n_p, t, pp); }

double ValuePartialSolution::ubar_at(double t, double pp) const { return interp_time_p(ubar, grid, n_p, t, pp); }

ValuePartialSolution solve_partial_pde(const Model& model, std::size_t n_t, std::size_t n_p, Variant v) {
    const ModelParams& mp = model.params();
    if (mp.regime_count() != 2) {
        throw ParameterError("partial-information PDE supports K = 2 only");
    }
    require_constant_lambda(model);
    if (n_p < 50) {
        throw ParameterError("solve_partial_pde needs N_p >= 50");
    }
    if (n_t < 1) {
        throw ParameterError("solve_partial_pde needs N_t >= 1");
    }
    const DerivedConstants& c = model.constants();
    const auto& rt = mp.regimes;
    const double l1 = rt.lambda1[0], l2 = rt.lambda2[0];
    const double L = l1 + l2;
    if (!(L > 0.0)) {
        throw ParameterError("lambda1+lambda2 <= 0");
    }
    const double m_source = mbar_source(model, v);

    const std::size_t J = n_p + 1;
    std::vector<double> a(J), b(J), cross(J), xdrift(J), src_n(J), src_u(J);
    for (std::size_t j = 0; j < J; ++j) {
        const double pj = static_cast<double>(j) / static_cast<double>(n_p);
        const PartialReduction red = partial_reduction(model, pj);
        a[j] = red.diffusion;
        b[j] = red.drift;
        cross[j] = red.cross;
        const double a1 = pj * rt.alpha1[0] + (1.0 - pj) * rt.alpha1[1];
        const double a2 = pj * rt.alpha2[0] + (1.0 - pj) * rt.alpha2[1];
        xdrift[j] = c.gamma1 + l1 * a1 + l2 * a2;
        switch (v) {
        case Variant::unrestricted:
            src_n[j] = coeff::theta2(mp, l1, l2, a1, a2);
            src_u[j] = coeff::theta3(mp, l1, l2, a1, a2);
            break;
        case Variant::beta_neutral:
            src_n[j] = coeff::phi2(mp, mp.beta1, mp.beta2, l1, l2, a1, a2);
            src_u[j] = coeff::phi3(mp, mp.beta1, mp.beta2, l1, l2, a1, a2);
            break;
        case Variant::delta_neutral:
            src_n[j] = coeff::phi2(mp, 1.0, 1.0, l1, l2, a1, a2);
            src_u[j] = coeff::phi3(mp, 1.0, 1.0, l1, l2, a1, a2);
            break;
        }
    }
    const DegenerateParabolicOperator op_n(a, b, L);
    const DegenerateParabolicOperator op_u(a, b, 0.0);

    ValuePartialSolution sol;
    sol.grid = TimeGrid{mp.T, n_t};
    sol.n_p = n_p;
    sol.variant = v;
    sol.fingerprint = model.fingerprint();
    sol.mbar.resize(n_t + 1);
    sol.nbar = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_t + 1), static_cast<Eigen::Index>(J));
    sol.ubar = sol.nbar;

    const double dt = sol.grid.dt();
    const double stable = std::min(op_n.max_stable_step(), op_u.max_stable_step());
    const auto sub = static_cast<std::size_t>(std::max(1.0, std::ceil(dt / stable)));
    if (sub > kPartialStepBudget / n_t) {
        throw NumericalError("CFL condition needs " + std::to_string(sub) + " substeps per time step, over budget");
    }
    sol.substeps = sub;
    const double dtau = dt / static_cast<double>(sub);
    const double inv_2dp = 0.5 * static_cast<double>(n_p);

    for (std::size_t k = 0; k <= n_t; ++k) {
        sol.mbar[k] = mbar_tau(mp.T - sol.grid.time(k), m_source, L);
    }
    sol.mbar[n_t] = 0.0;

    std::vector<double> n(J, 0.0), u(J, 0.0), ln(J), lu(J);
    for (std::size_t step = 0; step < n_t; ++step) {
        const double tau0 = static_cast<double>(step) * dt;
        for (std::size_t s = 0; s < sub; ++s) {
            const double m = mbar_tau(tau0 + static_cast<double>(s) * dtau, m_source, L);
            op_n.apply(n, ln);
            op_u.apply(u, lu);
            for (std::size_t j = 0; j < J; ++j) {
                double np = 0.0;
                if (j == 0) {
                    np = (n[1] - n[0]) * static_cast<double>(n_p);
                } else if (j == J - 1) {
                    np = (n[j] - n[j - 1]) * static_cast<double>(n_p);
                } else {
                    np = (n[j + 1] - n[j - 1]) * inv_2dp;
                }
                lu[j] += c.gamma2 * m + xdrift[j] * n[j] + src_u[j] + cross[j] * np;
                ln[j] += 2.0 * m * xdrift[j] - src_n[j];
            }
            for (std::size_t j = 0; j < J; ++j) {
                n[j] += dtau * ln[j];
                u[j] += dtau * lu[j];
            }
        }
        const auto row = static_cast<Eigen::Index>(n_t - step - 1);
        for (std::size_t j = 0; j < J; ++j) {
            if (!std::isfinite(n[j]) || !std::isfinite(u[j])) {
                throw NumericalError("partial-information PDE blew up at step " + std::to_string(step + 1));
            }
            sol.nbar(row, static_cast<Eigen::Index>(j)) = n[j];
            sol.ubar(row, static_cast<Eigen::Index>(j)) = u[j];
        }
    }
    return sol;
}

double value_partial(double t, double w, double x, double p, const ValuePartialSolution& sol) {
    if (!(w > 0.0)) {
        throw ParameterError("value_partial needs w > 0");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ParameterError("value_partial needs p in [0, 1]");
    }
    return std::log(w) + sol.mbar_at(t) * x * x + sol.nbar_at(t, p) * x + sol.ubar_at(t, p);
}

double loss_of_utility(double t, double x, double p, const ValueCoefficientsFull& full,
                       const ValuePartialSolution& partial) {
    if (full.fingerprint != partial.fingerprint) {
        throw ParameterError("full and partial value solutions come from different parameter sets");
    }
    if (full.regimes() != 2) {
        throw ParameterError("loss of utility needs K = 2");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ParameterError("loss of utility needs p in [0, 1]");
    }
    const double dm = p * full.m_at(t, 0) + (1.0 - p) * full.m_at(t, 1) - partial.mbar_at(t);
    const double dn = p * full.n_at(t, 0) + (1.0 - p) * full.n_at(t, 1) - partial.nbar_at(t, p);
    const double du = p * full.u_at(t, 0) + (1.0 - p) * full.u_at(t, 1) - partial.ubar_at(t, p);
    return dm * x * x + dn * x + du;
}

namespace {

Eigen::VectorXd initial_law(const StartState& start, std::size_t K) {
    if (const auto* i = std::get_if<std::size_t>(&start)) {
        check_regime_index(*i, K);
        Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
        e(static_cast<Eigen::Index>(*i)) = 1.0;
        return e;
    }
    const auto& p0 = std::get<Eigen::VectorXd>(start);
    if (static_cast<std::size_t>(p0.size()) != K) {
        throw ParameterError("initial law has the wrong length");
    }
    if ((p0.array() < 0.0).any() || std::abs(p0.sum() - 1.0) > 1e-12) {
        throw ParameterError("initial law must be a probability vector");
    }
    return p0;
}

// n_paths x policies matrix of log W_T samples.
Eigen::MatrixXd log_wealth_samples(const std::vector<PolicyHandle>& policies, const Model& model,
                                   const StartState& start, const MonteCarloSettings& s) {
    if (s.n_paths < 100) {
        throw ParameterError("Monte Carlo estimates need at least 100 paths");
    }
    if (policies.empty()) {
        throw ParameterError("no policies to evaluate");
    }
    const Eigen::VectorXd law = initial_law(start, model.regime_count());
    const std::vector<double> p0(law.data(), law.data() + law.size());
    const bool need_filter =
        std::any_of(policies.begin(), policies.end(), [](const PolicyHandle& h) { return h.partial_information(); });

    Eigen::MatrixXd out(static_cast<Eigen::Index>(s.n_paths), static_cast<Eigen::Index>(policies.size()));
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const PathBundle bundle = simulate_scenario(model, law, s.grid, s.seed, k, PathStart{s.x0});
            FilterPath filter;
            if (need_filter) filter = run_filter(observations(bundle), p0, model);
            for (std::size_t j = 0; j < policies.size(); ++j) {
                out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
                    terminal_log_wealth(model, bundle, policies[j], s.w0, need_filter ? &filter : nullptr);
            }
        }
    };

    unsigned threads = s.threads != 0 ? s.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, s.n_paths));
    if (threads <= 1) {
        work(0, s.n_paths);
        return out;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (s.n_paths + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(s.n_paths, begin + chunk);
        pool.emplace_back([&, t, begin, end] {
            try {
                work(begin, end);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

// Welford pass in path order.
MonteCarloEstimate summarize(const Eigen::VectorXd& x) {
    double mean = 0.0, m2 = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double d = x(k) - mean;
        mean += d / static_cast<double>(k + 1);
        m2 += d * (x(k) - mean);
    }
    const auto n = static_cast<double>(x.size());
    const double var = x.size() > 1 ? m2 / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n), static_cast<std::size_t>(x.size())};
}

} // namespace

MonteCarloEstimate mc_expected_log_utility(const PolicyHandle& policy, const Model& model, const StartState& start,
                                           const MonteCarloSettings& settings) {
    const Eigen::MatrixXd samples = log_wealth_samples({policy}, model, start, settings);
    return summarize(samples.col(0));
}

PolicyComparison mc_compare_policies(const std::vector<PolicyHandle>& policies, const Model& model,
                                     const StartState& start, const MonteCarloSettings& settings) {
    const Eigen::MatrixXd samples = log_wealth_samples(policies, model, start, settings);
    PolicyComparison cmp;
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
        cmp.utility.push_back(summarize(samples.col(j)));
        cmp.difference.push_back(summarize(samples.col(j) - samples.col(0)));
    }
    return cmp;
}

void write_full_value_csv(const std::filesystem::path& path, const ValueCoefficientsFull& coeffs) {
    CsvWriter csv(path, {"t", "regime", "m", "n", "u"});
    for (std::size_t k = 0; k < coeffs.grid.points(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        for (std::size_t i = 0; i < coeffs.regimes(); ++i) {
            const auto c = static_cast<Eigen::Index>(i);
            csv.cell(coeffs.grid.time(k)).cell(static_cast<long long>(i + 1));
            csv.cell(coeffs.m(r, c)).cell(coeffs.n(r, c)).cell(coeffs.u(r, c));
            csv.end_row();
        }
    }
}

void write_partial_value_csv(const std::filesystem::path& path, const ValuePartialSolution& sol) {
    CsvWriter csv(path, {"t", "p", "mbar", "nbar", "ubar"});
    for (std::size_t k = 0; k < sol.grid.points(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        for (std::size_t j = 0; j <= sol.n_p; ++j) {
            const auto c = static_cast<Eigen::Index>(j);
            csv.cell(sol.grid.time(k)).cell(sol.p(j)).cell(sol.mbar[k]).cell(sol.nbar(r, c)).cell(sol.ubar(r, c));
            csv.end_row();
        }
    }
}

void write_loss_csv(const std::filesystem::path& path, const ValueCoefficientsFull& full,
                    const ValuePartialSolution& partial, const std::vector<double>& xs, std::size_t time_stride,
                    std::size_t p_stride) {
    if (time_stride == 0 || p_stride == 0) {
        throw ParameterError("loss grid strides must be positive");
    }
    CsvWriter csv(path, {"t", "p", "x", "l"});
    for (std::size_t k = 0; k < partial.grid.points(); k += time_stride) {
        const double t = partial.grid.time(k);
        for (std::size_t j = 0; j <= partial.n_p; j += p_stride) {
            for (double x : xs) {
                csv.cell(t).cell(partial.p(j)).cell(x).cell(loss_of_utility(t, x, partial.p(j), full, partial));
                csv.end_row();
            }
        }
    }
}

} // namespace convlab
