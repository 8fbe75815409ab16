#pragma once

// Path simulation for the memory model
//
//     d xi  = (int_0^t M(t-u) xi(u) du) dt + chi(t-) dL(t)
//     d r   = [A - B2 r] dt + B1 chi (c dW + int z N~(dt,dz))
//     d rho = [Abar + B1bar mem - B2bar r - B3bar rho] dt + B1bar chi (c dW + int z N~(dt,dz))
//
// under P, the Girsanov density Z of the pricing measure Q, and direct simulation under Q.
// Every random number is a function of (seed, path, step, stream), so results do not
// depend on the thread count or on the order in which paths are produced.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmem/core/csv.hpp"
#include "cmem/core/errors.hpp"
#include "cmem/core/parallel.hpp"
#include "cmem/core/rng.hpp"
#include "cmem/core/stats.hpp"
#include "cmem/core/time_function.hpp"
#include "cmem/kernel.hpp"
#include "cmem/levy.hpp"

namespace cmem::dynamics {

/// Random-stream identifiers; distinct streams never share draws.
inline constexpr std::uint32_t kStreamP = 0;
inline constexpr std::uint32_t kStreamQ = 1;
inline constexpr std::uint32_t kStreamLss = 2;

struct RateDynamics {
    TimeFunction A = 0.0;
    TimeFunction B1 = 0.0;
    TimeFunction B2 = 0.0;
    double r0 = 0.0;
};

struct PremiumDynamics {
    TimeFunction A_bar = 0.0;
    TimeFunction B1_bar = 0.0;
    TimeFunction B2_bar = 0.0;
    TimeFunction B3_bar = 0.0;
    double rho0 = 0.0;
};

struct MarketModel {
    kernel::MemoryKernel kernel = kernel::MemoryKernel::zero();
    std::optional<kernel::Resolvent> resolvent;  ///< needed by the convolution scheme only
    LevyModel levy;
    VolProcess chi = 1.0;
    double chi_lower = 1e-8;  ///< strict bounds chi_lower < chi(t) < chi_upper
    double chi_upper = std::numeric_limits<double>::infinity();
    RateDynamics rate;
    PremiumDynamics premium;
    std::optional<TimeFunction> deterministic_rate;  ///< overrides `rate` when set
    double xi0 = 0.0;

    void validate() const {
        levy.validate();
        if (!(chi_lower > 0.0 && chi_upper > chi_lower))
            throw ModelError("chi bounds must satisfy 0 < chi_lower < chi_upper");
        if (!(chi.min_value() > chi_lower && chi.max_value() < chi_upper))
            throw ModelError("chi must stay strictly inside (" + std::to_string(chi_lower) + ", " +
                             std::to_string(chi_upper) + "): the measure change needs a volatility bounded away "
                                                         "from 0 and infinity");
        if (!std::isfinite(xi0)) throw ModelError("xi0 must be finite");
    }

    [[nodiscard]] bool stochastic_rate() const { return !deterministic_rate.has_value(); }
};

/// Simulation grid with every coefficient frozen at the left end of each step.
struct StepTable {
    TimeGrid grid;
    double dt = 0.0;
    double b = 0.0;
    std::vector<double> chi, A, B1, B2, Ab, B1b, B2b, B3b, r_det, int_r_det;
    std::vector<double> mem_weight;  ///< K(m dt) - K((m-1) dt), m >= 1
    // P side
    std::vector<double> int_zeta;  ///< int zeta(chi_k, z) ell(dz)
    // Q side, one tilted sampler per distinct chi value
    std::vector<std::size_t> sampler_index;
    std::vector<TiltedJumpSampler> samplers;
    std::vector<double> varpi0;  ///< -chi^2 c^2 / 2 - int (e^{chi z} - 1 - chi z)(1 - zeta) ell(dz)
    std::vector<double> tilted_first_moment;
    bool memory = false;

    StepTable(const MarketModel& m, const TimeGrid& g, bool with_q = false) : grid(g), dt(g.dt()) {
        const std::size_t n = g.steps;
        b = levy_drift(m.levy);
        auto fill = [&](std::vector<double>& v, auto&& f) {
            v.resize(n + 1);
            for (std::size_t k = 0; k <= n; ++k) v[k] = f(g[k]);
        };
        fill(chi, [&](double t) { return m.chi(t); });
        fill(A, [&](double t) { return m.rate.A(t); });
        fill(B1, [&](double t) { return m.rate.B1(t); });
        fill(B2, [&](double t) { return m.rate.B2(t); });
        fill(Ab, [&](double t) { return m.premium.A_bar(t); });
        fill(B1b, [&](double t) { return m.premium.B1_bar(t); });
        fill(B2b, [&](double t) { return m.premium.B2_bar(t); });
        fill(B3b, [&](double t) { return m.premium.B3_bar(t); });
        if (m.deterministic_rate) {
            fill(r_det, [&](double t) { return (*m.deterministic_rate)(t); });
            int_r_det.assign(n + 1, 0.0);
            for (std::size_t k = 1; k <= n; ++k)
                int_r_det[k] = int_r_det[k - 1] + m.deterministic_rate->integral(g[k - 1], g[k]);
        }
        memory = !m.kernel.is_zero();
        mem_weight.assign(n + 1, 0.0);
        for (std::size_t j = 1; j <= n; ++j)
            mem_weight[j] = m.kernel.antiderivative(static_cast<double>(j) * dt, 1) -
                            m.kernel.antiderivative(static_cast<double>(j - 1) * dt, 1);

        std::map<double, double> zeta_cache;
        std::map<double, std::size_t> sampler_of;
        int_zeta.resize(n + 1);
        sampler_index.resize(n + 1);
        varpi0.resize(n + 1);
        tilted_first_moment.resize(n + 1);
        const double c2 = m.levy.c * m.levy.c;
        for (std::size_t k = 0; k <= n; ++k) {
            const double x = chi[k];
            auto it = zeta_cache.find(x);
            if (it == zeta_cache.end())
                it = zeta_cache.emplace(x, jump_integral(m.levy, [x](double z) { return zeta(x, z); })).first;
            int_zeta[k] = it->second;
            if (!with_q) continue;
            auto s = sampler_of.find(x);
            if (s == sampler_of.end()) {
                samplers.emplace_back(m.levy, x);
                s = sampler_of.emplace(x, samplers.size() - 1).first;
            }
            sampler_index[k] = s->second;
            const auto& smp = samplers[s->second];
            varpi0[k] = -0.5 * x * x * c2 - (m.levy.has_jumps() ? smp.cumulant(x) : 0.0);
            tilted_first_moment[k] = smp.first_moment();
        }
    }

    /// Left-rule memory integral sum_{j<k} w_{k-j} xi_j.
    [[nodiscard]] double memory_integral(std::span<const double> xi, std::size_t k) const {
        if (!memory) return 0.0;
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += mem_weight[k - j] * xi[j];
        return s;
    }
};

/// Lévy increments of one path under P. The jump part is compensated:
/// sum of jump sizes minus intensity * dt * E[Z].
struct PathIncrements {
    std::vector<double> dW;        ///< Brownian increments, N(0, dt)
    std::vector<double> gaussian;  ///< c dW
    std::vector<double> jumps;     ///< compensated jump part
    std::vector<std::size_t> jump_offset;  ///< jumps of step k are jump_sizes[offset[k] .. offset[k+1])
    std::vector<double> jump_sizes;

    [[nodiscard]] std::size_t steps() const { return dW.size(); }
    /// dL_k = b dt + c dW_k + compensated jumps_k
    [[nodiscard]] double dL(std::size_t k, double b, double dt) const { return b * dt + gaussian[k] + jumps[k]; }
};

inline PathIncrements path_increments(const LevyModel& L, const TimeGrid& grid, std::uint64_t seed, std::uint64_t path) {
    const std::size_t n = grid.steps;
    const double dt = grid.dt();
    const double sq = std::sqrt(dt);
    const bool jumps = L.has_jumps();
    const double comp = jumps ? L.intensity * dt * levy::jump_mean(L) : 0.0;
    PathIncrements inc;
    inc.dW.resize(n);
    inc.gaussian.resize(n);
    inc.jumps.resize(n);
    inc.jump_offset.assign(n + 1, 0);
    for (std::size_t k = 0; k < n; ++k) {
        CounterRng rng(seed, path, k, kStreamP);
        inc.dW[k] = sq * rng.normal();
        inc.gaussian[k] = L.c * inc.dW[k];
        double sum = 0.0;
        if (jumps) {
            const unsigned count = rng.poisson(L.intensity * dt);
            for (unsigned i = 0; i < count; ++i) {
                const double z = sample_jump(L, rng);
                inc.jump_sizes.push_back(z);
                sum += z;
            }
        }
        inc.jumps[k] = sum - comp;
        inc.jump_offset[k + 1] = inc.jump_sizes.size();
    }
    return inc;
}

inline std::vector<PathIncrements> simulate_levy_increments(const LevyModel& L, const TimeGrid& grid,
                                                            std::size_t n_paths, std::uint64_t seed) {
    std::vector<PathIncrements> out(n_paths);
    parallel_for(n_paths, [&](std::size_t p) { out[p] = path_increments(L, grid, seed, p); });
    return out;
}

/// xi(t_k) = H(t_k) xi0 + sum_{j<k} H(t_k - t_j) chi(t_j) dL_j.
inline std::vector<double> simulate_xi_convolution(const MarketModel& m, const StepTable& tab,
                                                   const PathIncrements& inc) {
    if (!m.resolvent) throw ConfigError("convolution scheme needs a resolvent on the simulation grid");
    const auto& R = *m.resolvent;
    const std::size_t n = tab.grid.steps;
    if (R.size() < n + 1 || std::abs(R.step() - tab.dt) > 1e-12 * std::max(1.0, tab.dt))
        throw ConfigError("resolvent grid is not aligned with the simulation grid (step " + std::to_string(R.step()) +
                          " vs " + std::to_string(tab.dt) + ", " + std::to_string(R.size()) + " points for " +
                          std::to_string(n + 1) + ")");
    std::vector<double> src(n);
    for (std::size_t j = 0; j < n; ++j) src[j] = tab.chi[j] * inc.dL(j, tab.b, tab.dt);
    std::vector<double> xi(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        double s = R.H[k] * m.xi0;
        for (std::size_t j = 0; j < k; ++j) s += R.H[k - j] * src[j];
        xi[k] = s;
    }
    return xi;
}

/// Euler scheme xi_{k+1} = xi_k + mem_k dt + chi_k dL_k.
inline std::vector<double> simulate_xi_euler(const MarketModel& m, const StepTable& tab, const PathIncrements& inc) {
    const std::size_t n = tab.grid.steps;
    std::vector<double> xi(n + 1);
    xi[0] = m.xi0;
    for (std::size_t k = 0; k < n; ++k)
        xi[k + 1] = xi[k] + tab.memory_integral(xi, k) * tab.dt + tab.chi[k] * inc.dL(k, tab.b, tab.dt);
    return xi;
}

struct RateAndPremium {
    std::vector<double> r;
    std::vector<double> rho;
};

/// Euler scheme for (r, rho) driven by the same increments as xi.
inline RateAndPremium simulate_r_rho(const MarketModel& m, const StepTable& tab, std::span<const double> xi,
                                     const PathIncrements& inc) {
    const std::size_t n = tab.grid.steps;
    RateAndPremium out;
    out.r.resize(n + 1);
    out.rho.resize(n + 1);
    out.r[0] = m.deterministic_rate ? tab.r_det[0] : m.rate.r0;
    out.rho[0] = m.premium.rho0;
    for (std::size_t k = 0; k < n; ++k) {
        const double noise = tab.chi[k] * (inc.gaussian[k] + inc.jumps[k]);
        const double mem = tab.B1b[k] != 0.0 ? tab.memory_integral(xi, k) : 0.0;
        if (m.deterministic_rate)
            out.r[k + 1] = tab.r_det[k + 1];
        else
            out.r[k + 1] = out.r[k] + (tab.A[k] - tab.B2[k] * out.r[k]) * tab.dt + tab.B1[k] * noise;
        out.rho[k + 1] = out.rho[k] +
                         (tab.Ab[k] + tab.B1b[k] * mem - tab.B2b[k] * out.r[k] - tab.B3b[k] * out.rho[k]) * tab.dt +
                         tab.B1b[k] * noise;
    }
    return out;
}

/// Market price of risk (mem + chi b + chi^2 c^2 / 2 - r - rho) / (chi c).
inline double varphi(double mem, double chi, double b, double c, double r, double rho) {
    if (!(c > 0.0)) throw ModelError("varphi needs c > 0: there is no Gaussian component to reweight");
    return (mem + chi * b + 0.5 * chi * chi * c * c - r - rho) / (chi * c);
}

/// varphi at grid index k of a simulated path.
inline double varphi(const MarketModel& m, const StepTable& tab, std::size_t k, std::span<const double> xi, double r,
                     double rho) {
    return varphi(tab.memory_integral(xi, k), tab.chi[k], tab.b, m.levy.c, r, rho);
}

/// log Z on the grid. Per step:
///   -phi dW - phi^2 dt / 2 + sum_jumps log(1 - zeta) + dt int zeta ell(dz),
/// which is the density with the jump sum compensated, so E[Z_k] = 1 holds exactly.
inline std::vector<double> girsanov_log_density(const MarketModel& m, const StepTable& tab, std::span<const double> xi,
                                                const RateAndPremium& rr, const PathIncrements& inc) {
    const std::size_t n = tab.grid.steps;
    std::vector<double> logZ(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double phi = varphi(m, tab, k, xi, rr.r[k], rr.rho[k]);
        double s = -phi * inc.dW[k] - 0.5 * phi * phi * tab.dt + tab.int_zeta[k] * tab.dt;
        for (std::size_t i = inc.jump_offset[k]; i < inc.jump_offset[k + 1]; ++i) {
            const double z = inc.jump_sizes[i];
            const double w = log_one_minus_zeta(tab.chi[k], z);
            if (!std::isfinite(w)) throw NumericError("zeta >= 1 in the density");
            s += w;
        }
        logZ[k + 1] = logZ[k] + s;
    }
    return logZ;
}

enum class Scheme { Euler, Convolution };

/// One simulated path under P.
struct PathP {
    std::vector<double> xi, r, rho, logZ;
};

inline PathP simulate_path_p(const MarketModel& m, const StepTable& tab, std::uint64_t seed, std::uint64_t path,
                             Scheme scheme, bool with_density) {
    const auto inc = path_increments(m.levy, tab.grid, seed, path);
    PathP out;
    out.xi = scheme == Scheme::Euler ? simulate_xi_euler(m, tab, inc) : simulate_xi_convolution(m, tab, inc);
    auto rr = simulate_r_rho(m, tab, out.xi, inc);
    if (with_density) out.logZ = girsanov_log_density(m, tab, out.xi, rr, inc);
    out.r = std::move(rr.r);
    out.rho = std::move(rr.rho);
    return out;
}

/// One simulated path under Q, with the running integrals of r and rho.
struct PathQ {
    std::vector<double> xi, r, rho, int_r, int_rho;

    /// e^{-int_0^{t_k}(r + rho)} S(t_k)
    [[nodiscard]] double deflated_spot(std::size_t k) const { return std::exp(xi[k] - int_r[k] - int_rho[k]); }
};

/// Q-dynamics with left-point coefficients:
///   d xi  = (r + rho + varpi0) dt + chi dL~
///   d rho = [Abar + B1bar (r + rho + varpi0 - chi b) - B2bar r - B3bar rho] dt + B1bar chi dL~
///   d r   = [A - B2 r - B1 (mem + chi b + chi^2 c^2/2 - r - rho) - B1 chi int z zeta ell] dt + B1 chi dL~
/// with dL~ = c dW_Q + jumps compensated under (1 - zeta) ell. xi - int(r + rho) is advanced exactly,
/// and the integrals of r and rho pick up the within-step term int (t_{k+1} - s) dL~(s).
inline PathQ simulate_path_q(const MarketModel& m, const StepTable& tab, std::uint64_t seed, std::uint64_t path) {
    const std::size_t n = tab.grid.steps;
    const double dt = tab.dt;
    const double c = m.levy.c;
    const bool jumps = m.levy.has_jumps();
    const double full_mean = jumps ? m.levy.intensity * levy::jump_mean(m.levy) : 0.0;
    PathQ q;
    q.xi.resize(n + 1);
    q.r.resize(n + 1);
    q.rho.resize(n + 1);
    q.int_r.assign(n + 1, 0.0);
    q.int_rho.assign(n + 1, 0.0);
    q.xi[0] = m.xi0;
    q.r[0] = m.deterministic_rate ? tab.r_det[0] : m.rate.r0;
    q.rho[0] = m.premium.rho0;
    double D = m.xi0;
    const bool need_mem = m.stochastic_rate() && tab.memory;
    for (std::size_t k = 0; k < n; ++k) {
        CounterRng rng(seed, path, k, kStreamQ);
        const double chi = tab.chi[k];
        const double dW = std::sqrt(dt) * rng.normal();
        const double n2 = rng.normal();
        double dL = c * dW;
        double I = c * (0.5 * dt * dW + std::sqrt(dt * dt * dt / 12.0) * n2);
        double m1 = 0.0;
        if (jumps) {
            const auto& smp = tab.samplers[tab.sampler_index[k]];
            m1 = smp.first_moment();
            const unsigned count = rng.poisson(smp.intensity() * dt);
            for (unsigned i = 0; i < count; ++i) {
                const double z = smp.sample(rng);
                const double u = rng.uniform();
                dL += z;
                I += z * (1.0 - u) * dt;
            }
            dL -= m1 * dt;
            I -= m1 * dt * dt / 2.0;
        }
        const double r = q.r[k];
        const double rho = q.rho[k];
        const double varpi0 = tab.varpi0[k];
        D += varpi0 * dt + chi * dL;

        const double mu_rho = tab.Ab[k] + tab.B1b[k] * (r + rho + varpi0 - chi * tab.b) - tab.B2b[k] * r - tab.B3b[k] * rho;
        q.rho[k + 1] = rho + mu_rho * dt + tab.B1b[k] * chi * dL;
        q.int_rho[k + 1] = q.int_rho[k] + rho * dt + 0.5 * mu_rho * dt * dt + tab.B1b[k] * chi * I;

        if (m.deterministic_rate) {
            q.r[k + 1] = tab.r_det[k + 1];
            q.int_r[k + 1] = tab.int_r_det[k + 1];
        } else {
            const double mem = need_mem ? tab.memory_integral(q.xi, k) : 0.0;
            const double int_z_zeta = full_mean - m1;
            const double mu_r = tab.A[k] - tab.B2[k] * r -
                                tab.B1[k] * (mem + chi * tab.b + 0.5 * chi * chi * c * c - r - rho) -
                                tab.B1[k] * chi * int_z_zeta;
            q.r[k + 1] = r + mu_r * dt + tab.B1[k] * chi * dL;
            q.int_r[k + 1] = q.int_r[k] + r * dt + 0.5 * mu_r * dt * dt + tab.B1[k] * chi * I;
        }
        q.xi[k + 1] = D + q.int_r[k + 1] + q.int_rho[k + 1];
    }
    return q;
}

/// All paths of a simulation, path-major: value(p, k) = data[p * (steps + 1) + k].
struct PathSet {
    TimeGrid grid;
    std::size_t n_paths = 0;
    std::uint64_t master_seed = 0;
    std::vector<double> xi, r, rho, Z, S;

    [[nodiscard]] std::size_t width() const { return grid.size(); }
    [[nodiscard]] std::span<const double> row(const std::vector<double>& v, std::size_t p) const {
        return {v.data() + p * width(), width()};
    }
};

/// P-simulation of n_paths paths; Z is filled when c > 0.
inline PathSet simulate_p(const MarketModel& m, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                          Scheme scheme = Scheme::Euler) {
    m.validate();
    const StepTable tab(m, grid);
    const bool density = m.levy.c > 0.0;
    PathSet ps;
    ps.grid = grid;
    ps.n_paths = n_paths;
    ps.master_seed = seed;
    const std::size_t w = grid.size();
    for (auto* v : {&ps.xi, &ps.r, &ps.rho, &ps.Z, &ps.S}) v->assign(n_paths * w, 1.0);
    parallel_for(n_paths, [&](std::size_t p) {
        const auto path = simulate_path_p(m, tab, seed, p, scheme, density);
        for (std::size_t k = 0; k < w; ++k) {
            ps.xi[p * w + k] = path.xi[k];
            ps.r[p * w + k] = path.r[k];
            ps.rho[p * w + k] = path.rho[k];
            ps.S[p * w + k] = std::exp(path.xi[k]);
            if (density) ps.Z[p * w + k] = std::exp(path.logZ[k]);
        }
    });
    return ps;
}

/// Q-simulation of n_paths paths (Z is identically 1 there).
inline PathSet simulate_under_q(const MarketModel& m, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed) {
    m.validate();
    const StepTable tab(m, grid, true);
    PathSet ps;
    ps.grid = grid;
    ps.n_paths = n_paths;
    ps.master_seed = seed;
    const std::size_t w = grid.size();
    for (auto* v : {&ps.xi, &ps.r, &ps.rho, &ps.Z, &ps.S}) v->assign(n_paths * w, 1.0);
    parallel_for(n_paths, [&](std::size_t p) {
        const auto path = simulate_path_q(m, tab, seed, p);
        for (std::size_t k = 0; k < w; ++k) {
            ps.xi[p * w + k] = path.xi[k];
            ps.r[p * w + k] = path.r[k];
            ps.rho[p * w + k] = path.rho[k];
            ps.S[p * w + k] = std::exp(path.xi[k]);
        }
    });
    return ps;
}

/// Streaming Monte Carlo under P: f(const PathP&) -> vector of per-path values (one per statistic).
template <class F>
std::vector<Estimate> mc_p(const MarketModel& m, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                           Scheme scheme, bool with_density, std::size_t n_stats, F&& f) {
    m.validate();
    const StepTable tab(m, grid);
    std::vector<double> values(n_paths * n_stats);
    parallel_for(n_paths, [&](std::size_t p) {
        const auto path = simulate_path_p(m, tab, seed, p, scheme, with_density);
        const auto v = f(path);
        for (std::size_t s = 0; s < n_stats; ++s) values[s * n_paths + p] = v[s];
    });
    std::vector<Estimate> out(n_stats);
    for (std::size_t s = 0; s < n_stats; ++s) out[s] = summarize({values.data() + s * n_paths, n_paths});
    return out;
}

/// Streaming Monte Carlo under Q: f(const PathQ&) -> vector of per-path values.
template <class F>
std::vector<Estimate> mc_q(const MarketModel& m, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                           std::size_t n_stats, F&& f) {
    m.validate();
    const StepTable tab(m, grid, true);
    std::vector<double> values(n_paths * n_stats);
    parallel_for(n_paths, [&](std::size_t p) {
        const auto path = simulate_path_q(m, tab, seed, p);
        const auto v = f(path);
        for (std::size_t s = 0; s < n_stats; ++s) values[s * n_paths + p] = v[s];
    });
    std::vector<Estimate> out(n_stats);
    for (std::size_t s = 0; s < n_stats; ++s) out[s] = summarize({values.data() + s * n_paths, n_paths});
    return out;
}

/// Two-sided LSS process V(t) = int_{-inf}^t H(t-s) chi(s-) dL(s), truncated at -burn_in.
struct LssPaths {
    std::vector<double> times;  ///< output times on [0, T]
    std::size_t n_paths = 0;
    std::vector<double> V;      ///< path-major
    double tail_estimate = 0.0; ///< chi_max^2 int_{burn_in}^inf H^2
};

struct LssSpec {
    std::function<double(double)> H;
    LevyModel levy;
    VolProcess chi = 1.0;
};

/// The driver is discretised with step `dt` from -burn_in; V is recorded at `times`
/// by the left-point sum over all increments before each time.
inline LssPaths lss_path(const LssSpec& spec, const std::vector<double>& times, double dt, double burn_in,
                         std::size_t n_paths, std::uint64_t seed, double tail_tol = 1e-4) {
    if (!(dt > 0.0) || burn_in < 0.0) throw ConfigError("lss_path needs dt > 0 and burn_in >= 0");
    if (times.empty() || times.front() < 0.0) throw ConfigError("lss_path output times must be >= 0");
    const double cmax = spec.chi.max_value();
    LssPaths out;
    out.times = times;
    out.n_paths = n_paths;
    out.tail_estimate =
        cmax * cmax * quad::integrate_to_infinity([&](double s) { return spec.H(s) * spec.H(s); }, burn_in, 1e-10);
    if (!(out.tail_estimate <= tail_tol))
        throw ConfigError("burn_in " + std::to_string(burn_in) + " too short: truncated tail " +
                          std::to_string(out.tail_estimate) + " exceeds " + std::to_string(tail_tol));
    const double start = -burn_in;
    const double horizon = *std::max_element(times.begin(), times.end());
    const auto steps = static_cast<std::size_t>(std::ceil((horizon - start) / dt - 1e-9));
    if (steps == 0) {
        out.V.assign(n_paths * times.size(), 0.0);
        return out;
    }
    const TimeGrid grid(start, start + static_cast<double>(steps) * dt, steps);
    const double b = levy_drift(spec.levy);
    std::vector<double> chi(steps);
    for (std::size_t j = 0; j < steps; ++j) chi[j] = spec.chi(grid[j]);
    // H(t_i - s_j) for every output time and step start.
    std::vector<std::vector<double>> weights(times.size());
    for (std::size_t i = 0; i < times.size(); ++i)
        for (std::size_t j = 0; j < steps && grid[j] < times[i] - 1e-12; ++j)
            weights[i].push_back(spec.H(times[i] - grid[j]) * chi[j]);
    out.V.assign(n_paths * times.size(), 0.0);
    parallel_for(n_paths, [&](std::size_t p) {
        std::vector<double> dL(steps);
        const double sq = std::sqrt(dt);
        const double comp = spec.levy.has_jumps() ? spec.levy.intensity * dt * levy::jump_mean(spec.levy) : 0.0;
        for (std::size_t j = 0; j < steps; ++j) {
            CounterRng rng(seed, p, j, kStreamLss);
            double x = b * dt + spec.levy.c * sq * rng.normal();
            if (spec.levy.has_jumps()) {
                const unsigned count = rng.poisson(spec.levy.intensity * dt);
                for (unsigned i = 0; i < count; ++i) x += sample_jump(spec.levy, rng);
                x -= comp;
            }
            dL[j] = x;
        }
        for (std::size_t i = 0; i < times.size(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < weights[i].size(); ++j) s += weights[i][j] * dL[j];
            out.V[p * times.size() + i] = s;
        }
    });
    return out;
}

/// One CSV per variable: rows are times, columns are (at most `max_paths`) paths.
inline void write_pathset_csv(const PathSet& ps, const std::string& dir, std::size_t max_paths = 100) {
    const std::size_t np = std::min(ps.n_paths, max_paths);
    const std::size_t w = ps.width();
    const auto times = ps.grid.points();
    auto dump = [&](const std::vector<double>& v, const std::string& name) {
        std::vector<std::string> header{"t"};
        std::vector<std::vector<double>> cols(np, std::vector<double>(w));
        for (std::size_t p = 0; p < np; ++p) {
            header.push_back("path" + std::to_string(p));
            for (std::size_t k = 0; k < w; ++k) cols[p][k] = v[p * w + k];
        }
        std::vector<std::span<const double>> spans{times};
        for (const auto& c : cols) spans.emplace_back(c);
        csv::write_columns(dir + "/" + name + ".csv", header, spans);
    };
    dump(ps.xi, "xi");
    dump(ps.r, "r");
    dump(ps.rho, "rho");
    dump(ps.Z, "Z");
    dump(ps.S, "S");
}

}  // namespace cmem::dynamics
