#pragma once

// Fourier prices for the LSS model under Q (spot options, forwards, options on
// forwards) and their Monte Carlo counterparts.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "cmem/affine.hpp"
#include "cmem/core/errors.hpp"
#include "cmem/core/parallel.hpp"
#include "cmem/core/quadrature.hpp"
#include "cmem/core/rng.hpp"
#include "cmem/core/stats.hpp"
#include "cmem/dynamics.hpp"
#include "cmem/levy.hpp"

namespace cmem::pricing {

using affine::cplx;
using affine::LssPricingParams;

inline constexpr std::uint32_t kStreamLogF = 3;

struct OptionSpec {
    double strike = 1.0;
    double maturity = 1.0;  ///< exercise time
    int epsilon = 1;        ///< +1 call, -1 put
    double omega = 0.0;     ///< 0 picks the default (2 for calls, -1 for puts)
    double lambda_max = 200.0;
    std::size_t nodes = 2048;

    [[nodiscard]] double dampening() const { return omega != 0.0 ? omega : (epsilon > 0 ? 2.0 : -1.0); }

    void validate() const {
        if (!(strike > 0.0)) throw DomainError("strike must be > 0");
        if (epsilon != 1 && epsilon != -1) throw DomainError("epsilon must be +1 (call) or -1 (put)");
        const double w = dampening();
        if (epsilon > 0 && !(w > 1.0)) throw DomainError("a call needs dampening omega > 1");
        if (epsilon < 0 && !(w < 0.0)) throw DomainError("a put needs dampening omega < 0");
        if (!(lambda_max > 0.0)) throw DomainError("Fourier truncation must be > 0");
        if (nodes < 32 || nodes % 32 != 0) throw DomainError("Fourier node count must be a positive multiple of 32");
    }
};

struct PriceReport {
    double price = 0.0;
    std::string method;
    double imag_residue = 0.0;
    double tail_estimate = 0.0;
    std::size_t n_nodes = 0;
    std::size_t n_evaluated = 0;
};

struct ForwardQuote {
    double t = 0.0;
    double T = 0.0;
    double F = 0.0;
    double spot_factor = 0.0;     ///< S(t)
    double rate_factor = 0.0;     ///< exp(int_t^T r)
    double premium_factor = 0.0;  ///< exp((T - t) rho(t))
    double calA = 0.0;
};

/// (1 / 2 pi) K^{-(omega - 1 + i lambda)} / ((omega + i lambda)(omega - 1 + i lambda)).
inline cplx payoff_transform(double lambda, double omega, double K) {
    if (!(K > 0.0)) throw DomainError("payoff_transform needs K > 0");
    if (omega == 0.0 || omega == 1.0) throw DomainError("payoff_transform has poles at omega = 0 and omega = 1");
    const cplx i{0.0, 1.0};
    const cplx a = omega + i * lambda;
    const cplx b = omega - 1.0 + i * lambda;
    return std::exp(-b * std::log(K)) / (2.0 * std::numbers::pi * a * b);
}

namespace detail {

/// The Fourier integral int exp(E(omega + i lambda)) f~(lambda) d lambda, where E
/// exposes exponent(u, with_jumps) and jump_bound(omega). Nodes whose modulus bound
/// falls below 1e-20 of the lambda = 0 value are skipped.
template <class Exponent>
PriceReport fourier_integral(const Exponent& E, const OptionSpec& opt, double discount) {
    const double w = opt.dampening();
    const double K = opt.strike;
    const auto rule = quad::gauss_legendre_panels(0.0, opt.lambda_max, opt.nodes / 32);
    const std::size_t n = rule.size();
    const double jb = E.jump_bound(w);

    auto bound = [&](double lam) {
        const cplx u{w, lam};
        return std::exp(E.exponent(u, false).real() + jb) * std::abs(payoff_transform(lam, w, K));
    };
    const double scale = bound(0.0);
    if (!std::isfinite(scale))
        throw NumericError("dampened moment E[S^omega] is not finite; pick a smaller |omega|");

    std::vector<cplx> g(n, cplx{});
    std::vector<char> used(n, 0);
    parallel_for(n, [&](std::size_t j) {
        const double lam = rule.nodes[j];
        if (bound(lam) < 1e-20 * scale) return;
        const cplx u{w, lam};
        g[j] = std::exp(E.exponent(u, true)) * payoff_transform(lam, w, K);
        used[j] = 1;
    });

    // rule nodes come in mirrored pairs per panel; sum in index order
    cplx sum{};
    for (std::size_t j = 0; j < n; ++j) sum += rule.weights[j] * g[j];

    PriceReport rep;
    rep.price = discount * 2.0 * sum.real();
    rep.n_nodes = 2 * n;
    rep.n_evaluated = 2 * static_cast<std::size_t>(std::count(used.begin(), used.end(), 1));

    // Imaginary part of the full symmetric integral, from mirrored pairs on a sparse subset.
    const std::size_t stride = 16;
    cplx resid{};
    for (std::size_t j = 0; j < n; j += stride) {
        if (!used[j]) continue;
        const double lam = rule.nodes[j];
        const cplx um{w, -lam};
        const cplx gm = std::exp(E.exponent(um, true)) * payoff_transform(-lam, w, K);
        resid += rule.weights[j] * (g[j] + gm);
    }
    rep.imag_residue = discount * std::abs(resid.imag()) * static_cast<double>(stride);

    // |g| ~ lambda^{-2} beyond the cut at worst, so the tail is about 2 Lambda |g(Lambda)|.
    std::size_t last = 0;
    for (std::size_t j = 0; j < n; ++j)
        if (rule.nodes[j] > rule.nodes[last]) last = j;
    const double far = used[last] ? std::abs(g[last]) : bound(rule.nodes[last]);
    rep.tail_estimate = discount * 2.0 * opt.lambda_max * far;

    if (!std::isfinite(rep.price)) throw NumericError("Fourier price is not finite");
    const double tol = 1e-7 * std::abs(rep.price) + 1e-14;
    if (rep.tail_estimate > tol)
        throw NumericError("Fourier truncation tail " + std::to_string(rep.tail_estimate) +
                           " exceeds tolerance; increase lambda_max (and nodes)");
    if (rep.imag_residue > std::max(1e-8 * std::abs(rep.price), 1e-15))
        throw NumericError("Fourier integral has an imaginary residue of " + std::to_string(rep.imag_residue));
    return rep;
}

/// Finiteness of E^Q[S(T)^omega] for laws with exponential tails, on every
/// time node: needs (th - 1) chi < eta_plus and th chi > -eta_minus with th = omega (1 + Bbar (T - s)).
inline void check_moment(const LssPricingParams& p, double t, double T, double omega) {
    const auto* de = std::get_if<DoubleExponentialJumps>(&p.levy.law);
    if (!de || !p.levy.has_jumps()) return;
    const auto pts = p.breakpoints(t, T);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        for (double f : {0.0, 0.5, 1.0 - 1e-12}) {
            const double s = pts[i - 1] + f * (pts[i] - pts[i - 1]);
            const double th = omega * (1.0 + p.B_bar(s) * (T - s));
            const double x = p.chi(s);
            const bool ok = (th - 1.0) * x < de->eta_plus && th * x > -de->eta_minus;
            if (!ok)
                throw ModelError("the dampened moment E^Q[S^omega] is infinite for this jump law; omega = " +
                                 std::to_string(omega));
        }
    }
}

/// Exponent of the spot option integrand: phi(u, 0) + u (V + (T - t) rho).
struct SpotExponent {
    affine::LssCharacteristic ch;
    double x0;
    cplx exponent(cplx u, bool with_jumps) const { return ch.exponent(u, 0.0, with_jumps) + u * x0; }
    double jump_bound(double w) const { return ch.jump_bound(w, 0.0); }
};

}  // namespace detail

inline double discount_factor(const LssPricingParams& p, double t, double T) { return std::exp(-p.r.integral(t, T)); }

/// Spot option on S = e^V by the dampened Fourier integral; state (V, rho) at t.
inline PriceReport spot_option_report(const LssPricingParams& p, const OptionSpec& opt, double t) {
    opt.validate();
    p.validate();
    const double T = opt.maturity;
    if (!(T >= t)) throw DomainError("maturity must be >= valuation time");
    if (T == t) {
        PriceReport rep;
        rep.price = std::max(opt.epsilon * (std::exp(p.V) - opt.strike), 0.0);
        rep.method = "intrinsic";
        return rep;
    }
    detail::check_moment(p, t, T, opt.dampening());
    const detail::SpotExponent E{affine::LssCharacteristic(p, t, T), p.V + (T - t) * p.rho};
    auto rep = detail::fourier_integral(E, opt, discount_factor(p, t, T));
    rep.method = "fourier";
    return rep;
}

inline double spot_option_price(const LssPricingParams& p, const OptionSpec& opt, double t) {
    return spot_option_report(p, opt, t).price;
}

/// The five-term exponent of the forward price:
/// A = c^2/2 int Bbar^2 chi^2 (T-s)^2 + int (T-s)[Abar + (Bbar - B2bar) r]
///     - [b + int z ell] int Bbar chi (T-s) + c^2/2 int Bbar chi^2 (T-s)
///     + int int chi z e^{chi z} / (e^{chi z} - 1) [e^{(T-s) Bbar chi z} - 1] ell(dz) ds.
inline double calA(const LssPricingParams& p, double t, double T, std::size_t time_panels = 4) {
    p.validate();
    if (!(T >= t)) throw DomainError("calA needs t <= T");
    if (T == t) return 0.0;
    const double c2 = p.levy.c * p.levy.c;
    const double b = levy_drift(p.levy);
    const bool jumps = p.levy.has_jumps();
    const double mean = jumps ? p.levy.intensity * levy::jump_mean(p.levy) : 0.0;
    const auto zrule = jump_rule(p.levy, 48);
    std::map<double, std::vector<double>> tilt;  // chi -> e^{chi z}(1 - zeta) at the z nodes
    double A = 0.0;
    const auto pts = p.breakpoints(t, T);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const auto rule = quad::gauss_legendre_panels(pts[i - 1], pts[i], time_panels);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double s = rule.nodes[q];
            const double tau = T - s;
            const double x = p.chi(s);
            const double B = p.B_bar(s);
            double f = 0.5 * c2 * B * B * x * x * tau * tau + tau * (p.A_bar(s) + (B - p.B2_bar(s)) * p.r(s)) -
                       (b + mean) * B * x * tau + 0.5 * c2 * B * x * x * tau;
            if (jumps) {
                auto [it, inserted] = tilt.try_emplace(x);
                if (inserted)
                    for (double z : zrule.nodes) it->second.push_back(std::exp(x * z + log_one_minus_zeta(x, z)));
                double j = 0.0;
                for (std::size_t k = 0; k < zrule.size(); ++k)
                    j += zrule.weights[k] * it->second[k] * std::expm1(tau * B * x * zrule.nodes[k]);
                f += j;
            }
            A += rule.weights[q] * f;
        }
    }
    if (!std::isfinite(A)) throw NumericError("calA is not finite");
    return A;
}

inline ForwardQuote forward_price(const LssPricingParams& p, double t, double T) {
    if (!(T >= t)) throw DomainError("forward_price needs t <= T");
    ForwardQuote q;
    q.t = t;
    q.T = T;
    q.spot_factor = std::exp(p.V);
    q.rate_factor = std::exp(p.r.integral(t, T));
    q.premium_factor = std::exp((T - t) * p.rho);
    q.calA = calA(p, t, T);
    q.F = q.spot_factor * std::exp(q.calA + p.r.integral(t, T) + (T - t) * p.rho);
    return q;
}

/// Exponent of log F(tau, T) - log F(t, T) in u, for exercise tau <= delivery T:
/// int_t^tau [c^2 chi^2 k^2 (u^2 - u)/2 + J(u k) - u J(k)] ds, k = 1 + Bbar (T - s).
class ForwardCharacteristic {
public:
    ForwardCharacteristic(const LssPricingParams& p, double t, double tau, double T, std::size_t time_panels = 2) {
        p.validate();
        if (!(t <= tau && tau <= T)) throw DomainError("option on forward needs t <= exercise <= delivery");
        c2_ = p.levy.c * p.levy.c;
        if (tau == t) return;
        const auto pts = p.breakpoints(t, tau);
        std::map<double, std::size_t> chi_index;
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const auto rule = quad::gauss_legendre_panels(pts[i - 1], pts[i], time_panels);
            for (std::size_t q = 0; q < rule.size(); ++q) {
                const double s = rule.nodes[q];
                const double x = p.chi(s);
                auto [it, inserted] = chi_index.try_emplace(x, jumps_.size());
                if (inserted) jumps_.emplace_back(p.levy, x);
                const double k = 1.0 + p.B_bar(s) * (T - s);
                nodes_.push_back({rule.weights[q], x, k, jumps_[it->second].real(k), it->second});
            }
        }
    }

    [[nodiscard]] cplx exponent(cplx u, bool with_jumps) const {
        cplx acc{};
        for (const auto& n : nodes_) {
            cplx f = 0.5 * c2_ * n.chi * n.chi * n.k * n.k * (u * u - u);
            if (with_jumps) f += jumps_[n.jump](u * n.k) - u * n.Jk;
            acc += n.w * f;
        }
        return acc;
    }

    [[nodiscard]] double jump_bound(double w) const {
        double acc = 0.0;
        for (const auto& n : nodes_) acc += n.w * (jumps_[n.jump].real(w * n.k) - w * n.Jk);
        return acc;
    }

    /// Total Gaussian variance c^2 int Sigma^2 ds.
    [[nodiscard]] double gaussian_variance() const {
        double v = 0.0;
        for (const auto& n : nodes_) v += n.w * c2_ * n.chi * n.chi * n.k * n.k;
        return v;
    }

private:
    struct Node {
        double w, chi, k, Jk;
        std::size_t jump;
    };
    double c2_ = 0.0;
    std::vector<Node> nodes_;
    std::vector<affine::TiltedJumpNodes> jumps_;
};

namespace detail {

struct ForwardExponent {
    ForwardCharacteristic ch;
    double x0;
    cplx exponent(cplx u, bool with_jumps) const { return ch.exponent(u, with_jumps) + u * x0; }
    double jump_bound(double w) const { return ch.jump_bound(w); }
};

}  // namespace detail

/// Option exercised at opt.maturity on the forward F(., T) with delivery T.
/// Calls by Fourier; puts by parity on F.
inline PriceReport option_on_forward_report(const LssPricingParams& p, const OptionSpec& opt, double t, double T) {
    opt.validate();
    const double tau = opt.maturity;
    if (!(t <= tau && tau <= T)) throw DomainError("option on forward needs t <= exercise <= delivery");
    const double F = forward_price(p, t, T).F;
    const double disc = discount_factor(p, t, tau);
    if (tau == t) {
        PriceReport rep;
        rep.price = std::max(opt.epsilon * (F - opt.strike), 0.0);
        rep.method = "intrinsic";
        return rep;
    }
    OptionSpec call = opt;
    call.epsilon = 1;
    if (opt.epsilon < 0) call.omega = 0.0;
    detail::check_moment(p, t, T, call.dampening());
    const detail::ForwardExponent E{ForwardCharacteristic(p, t, tau, T), std::log(F)};
    auto rep = detail::fourier_integral(E, call, disc);
    rep.method = "fourier";
    if (opt.epsilon < 0) {
        rep.price -= disc * (F - opt.strike);
        rep.method = "fourier+parity";
    }
    return rep;
}

inline double option_on_forward_price(const LssPricingParams& p, const OptionSpec& opt, double t, double T) {
    return option_on_forward_report(p, opt, t, T).price;
}

// ---------------------------------------------------------------------------
// Monte Carlo

/// Market model whose Q-dynamics coincide with the LSS (V, rho) system.
inline dynamics::MarketModel market_model(const LssPricingParams& p) {
    dynamics::MarketModel m;
    m.kernel = kernel::MemoryKernel::zero();
    m.levy = p.levy;
    m.chi = p.chi;
    m.chi_lower = p.chi_lower;
    m.chi_upper = p.chi_upper;
    m.deterministic_rate = p.r;
    m.premium = dynamics::PremiumDynamics{p.A_bar, p.B_bar, p.B2_bar, p.B_bar, p.rho};
    m.xi0 = p.V;
    return m;
}

/// Discounted payoffs of several options on the same Q paths.
inline std::vector<Estimate> mc_spot_options(const LssPricingParams& p, const std::vector<OptionSpec>& opts, double t,
                                             std::size_t n_paths, std::uint64_t seed, std::size_t steps = 50) {
    if (opts.empty()) return {};
    const double T = opts.front().maturity;
    for (const auto& o : opts) {
        if (!(o.strike > 0.0)) throw DomainError("strike must be > 0");
        if (o.maturity != T) throw DomainError("mc_spot_options needs a common maturity");
    }
    if (!(T > t)) throw DomainError("maturity must be after the valuation time");
    const double disc = discount_factor(p, t, T);
    return dynamics::mc_q(market_model(p), TimeGrid(t, T, steps), n_paths, seed, opts.size(),
                          [&](const dynamics::PathQ& q) {
                              const double S = std::exp(q.xi.back());
                              std::vector<double> out;
                              out.reserve(opts.size());
                              for (const auto& o : opts) out.push_back(disc * std::max(o.epsilon * (S - o.strike), 0.0));
                              return out;
                          });
}

inline Estimate mc_spot_option(const LssPricingParams& p, const OptionSpec& opt, double t, std::size_t n_paths,
                               std::uint64_t seed, std::size_t steps = 50) {
    return mc_spot_options(p, {opt}, t, n_paths, seed, steps).front();
}

/// E^Q[e^{-int r} S(T)] / E^Q[e^{-int r}] with deterministic r, i.e. E^Q[S(T)].
inline Estimate mc_forward(const LssPricingParams& p, double t, double T, std::size_t n_paths, std::uint64_t seed,
                           std::size_t steps = 50) {
    if (!(T > t)) throw DomainError("delivery must be after the valuation time");
    return dynamics::mc_q(market_model(p), TimeGrid(t, T, steps), n_paths, seed, 1, [](const dynamics::PathQ& q) {
               return std::vector<double>{std::exp(q.xi.back())};
           }).front();
}

/// Options on F(., T) exercised at a common time, by simulating
/// d log F = A~ ds + c Sigma dW + Sigma int z N~(ds, dz) with Sigma frozen at each step midpoint.
/// Each step is an exact martingale increment of F for the simulated jump law.
inline std::vector<Estimate> mc_options_on_forward(const LssPricingParams& p, const std::vector<OptionSpec>& opts,
                                                   double t, double T, std::size_t n_paths, std::uint64_t seed,
                                                   std::size_t steps = 50) {
    if (opts.empty()) return {};
    const double tau = opts.front().maturity;
    for (const auto& o : opts)
        if (o.maturity != tau) throw DomainError("mc_options_on_forward needs a common exercise time");
    if (!(t < tau && tau <= T)) throw DomainError("option on forward needs t < exercise <= delivery");
    p.validate();
    const double F0 = forward_price(p, t, T).F;
    const double disc = discount_factor(p, t, tau);
    const TimeGrid grid(t, tau, steps);
    const double dt = grid.dt();
    const double c = p.levy.c;
    const bool jumps = p.levy.has_jumps();

    std::map<double, TiltedJumpSampler> samplers;
    struct Step {
        double sigma, drift;
        const TiltedJumpSampler* smp;
    };
    std::vector<Step> table(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const double s = grid[k] + 0.5 * dt;
        const double x = p.chi(s);
        const double sig = (1.0 + p.B_bar(s) * (T - s)) * x;
        const TiltedJumpSampler* smp = nullptr;
        double comp = 0.0;
        if (jumps) {
            auto it = samplers.find(x);
            if (it == samplers.end()) it = samplers.emplace(x, TiltedJumpSampler(p.levy, x)).first;
            smp = &it->second;
            comp = smp->cumulant(sig);
        }
        table[k] = {sig, -0.5 * c * c * sig * sig - comp, smp};
    }

    std::vector<std::vector<double>> pay(opts.size(), std::vector<double>(n_paths));
    parallel_for(n_paths, [&](std::size_t path) {
        double logF = std::log(F0);
        for (std::size_t k = 0; k < steps; ++k) {
            CounterRng rng(seed, path, k, kStreamLogF);
            const auto& st = table[k];
            logF += st.drift * dt + c * st.sigma * std::sqrt(dt) * rng.normal();
            if (st.smp) {
                const unsigned nj = rng.poisson(st.smp->intensity() * dt);
                double sum = 0.0;
                for (unsigned j = 0; j < nj; ++j) sum += st.smp->sample(rng);
                logF += st.sigma * (sum - st.smp->first_moment() * dt);
            }
        }
        const double F = std::exp(logF);
        for (std::size_t i = 0; i < opts.size(); ++i)
            pay[i][path] = disc * std::max(opts[i].epsilon * (F - opts[i].strike), 0.0);
    });
    std::vector<Estimate> out;
    for (const auto& v : pay) out.push_back(summarize(v));
    return out;
}

}  // namespace cmem::pricing
