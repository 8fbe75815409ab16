#pragma once

// Task dispatch and the JSON run report. A report carries a content hash over
// everything except the timing block, so two runs can be compared by hash alone.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "cmem/app/config.hpp"
#include "cmem/core/csv.hpp"

namespace cmem::app {

inline constexpr const char* kVersion = "1.0.0";

struct RunOptions {
    bool write_files = true;
    std::optional<std::string> out_dir;  ///< overrides the config's output
};

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Hash of the report with "timing" and "hash" removed.
inline std::string report_hash(const json& report) {
    json copy = report;
    copy.erase("timing");
    copy.erase("hash");
    return fnv1a_hex(copy.dump());
}

inline json estimate_json(const Estimate& e) { return {{"mean", e.mean}, {"stderr", e.stderr_}, {"n", e.n}}; }

inline json price_report_json(const pricing::PriceReport& r) {
    return {{"price", r.price},
            {"method", r.method},
            {"imag_residue", r.imag_residue},
            {"tail_estimate", r.tail_estimate},
            {"n_nodes", r.n_nodes},
            {"n_evaluated", r.n_evaluated}};
}

namespace detail {

struct Context {
    const RunConfig& cfg;
    const RunOptions& opt;
    std::filesystem::path dir;
    std::uint64_t seed;

    [[nodiscard]] std::string file(const std::string& name) const { return (dir / name).string(); }
    [[nodiscard]] pricing::OptionSpec option(double K, double exercise, int eps, double omega) const {
        return {K, exercise, eps, omega, cfg.numerics.lambda_max, cfg.numerics.fourier_nodes};
    }
};

inline std::vector<double> uniform(double T, std::size_t n) { return TimeGrid(0.0, T, n).points(); }

inline json run_task(const Context& ctx, const ResolventTask& t, const std::string& tag) {
    const auto& mb = *ctx.cfg.market;
    const auto grid = uniform(t.horizon, t.steps);
    const auto& M = mb.model.kernel;
    const bool power = mb.kernel.type == "power_law";
    std::string method = t.method == "auto" ? (power ? "series" : "numeric") : t.method;
    if (method == "series" && !power) throw DomainError("the series resolvent needs a power-law kernel");
    const auto R = method == "series" ? kernel::resolvent_series(mb.kernel.param, grid) : kernel::resolvent_numeric(M, grid);
    json out{{"method", method}, {"H_T", R.H.back()}, {"g_T", R.g.back()}, {"residual", kernel::resolvent_residual(M, R)}};
    if (power && t.method == "auto") {
        const auto N = kernel::resolvent_numeric(M, grid);
        double worst = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) worst = std::max(worst, std::abs(N.H[k] - R.H[k]));
        out["series_vs_numeric"] = worst;
    }
    if (ctx.opt.write_files) {
        kernel::write_resolvent_csv(R, ctx.file(tag + "_H.csv"), ctx.file(tag + "_g.csv"));
        out["files"] = {tag + "_H.csv", tag + "_g.csv"};
    }
    return out;
}

inline json run_task(const Context& ctx, const SimulateTask& t, const std::string& tag) {
    auto m = ctx.cfg.market->model;
    const TimeGrid grid(0.0, t.horizon, t.steps);
    const auto scheme = t.scheme == "convolution" ? dynamics::Scheme::Convolution : dynamics::Scheme::Euler;
    if (scheme == dynamics::Scheme::Convolution) m.resolvent = kernel::resolvent_numeric(m.kernel, grid.points());
    json out{{"measure", t.measure}, {"scheme", t.scheme}, {"n_paths", t.n_paths}, {"steps", t.steps}};
    if (t.measure == "P") {
        const bool density = m.levy.c > 0.0;
        const auto est = dynamics::mc_p(m, grid, t.n_paths, ctx.seed, scheme, density, 3, [&](const dynamics::PathP& p) {
            return std::vector<double>{p.xi.back(), std::exp(p.xi.back()), density ? std::exp(p.logZ.back()) : 1.0};
        });
        out["xi_T"] = estimate_json(est[0]);
        out["S_T"] = estimate_json(est[1]);
        if (density) out["Z_T"] = estimate_json(est[2]);
    } else {
        if (scheme == dynamics::Scheme::Convolution) throw DomainError("Q-simulation uses the Euler scheme only");
        const auto est = dynamics::mc_q(m, grid, t.n_paths, ctx.seed, 3, [](const dynamics::PathQ& q) {
            const std::size_t k = q.xi.size() - 1;
            return std::vector<double>{q.xi[k], std::exp(q.xi[k]), q.deflated_spot(k)};
        });
        out["xi_T"] = estimate_json(est[0]);
        out["S_T"] = estimate_json(est[1]);
        out["deflated_S_T"] = estimate_json(est[2]);
    }
    if (ctx.opt.write_files && t.save_paths > 0) {
        const std::size_t n = std::min(t.save_paths, t.n_paths);
        const auto ps = t.measure == "P" ? dynamics::simulate_p(m, grid, n, ctx.seed, scheme)
                                         : dynamics::simulate_under_q(m, grid, n, ctx.seed);
        const auto sub = ctx.dir / tag;
        std::filesystem::create_directories(sub);
        dynamics::write_pathset_csv(ps, sub.string(), n);
        out["path_dir"] = tag;
    }
    return out;
}

inline json run_task(const Context& ctx, const OptionTask& t, const std::string& tag) {
    const auto p = ctx.cfg.market->pricing();
    const bool spot = t.product == "spot-option";
    std::vector<pricing::OptionSpec> opts;
    for (double K : t.strikes) opts.push_back(ctx.option(K, t.exercise, t.epsilon, t.omega));
    json rows = json::array();
    std::vector<double> prices;
    for (const auto& o : opts) {
        const auto rep = spot ? pricing::spot_option_report(p, o, t.t) : pricing::option_on_forward_report(p, o, t.t, t.delivery);
        json row = price_report_json(rep);
        row["strike"] = o.strike;
        rows.push_back(row);
        prices.push_back(rep.price);
    }
    std::vector<double> mc_mean(opts.size(), 0.0), mc_se(opts.size(), 0.0);
    if (t.mc_paths > 0) {
        const auto est = spot ? pricing::mc_spot_options(p, opts, t.t, t.mc_paths, ctx.seed, ctx.cfg.numerics.mc_steps)
                              : pricing::mc_options_on_forward(p, opts, t.t, t.delivery, t.mc_paths, ctx.seed,
                                                               ctx.cfg.numerics.mc_steps);
        for (std::size_t i = 0; i < opts.size(); ++i) {
            rows[i]["monte_carlo"] = estimate_json(est[i]);
            mc_mean[i] = est[i].mean;
            mc_se[i] = est[i].stderr_;
        }
    }
    json out{{"product", t.product},
             {"kind", t.epsilon > 0 ? "call" : "put"},
             {"t", t.t},
             {"exercise", t.exercise},
             {"options", rows}};
    if (!spot) out["delivery"] = t.delivery;
    if (ctx.opt.write_files) {
        std::vector<std::string> header{"K", "price"};
        std::vector<std::span<const double>> cols{t.strikes, prices};
        if (t.mc_paths > 0) {
            header.insert(header.end(), {"mc_mean", "mc_stderr"});
            cols.emplace_back(mc_mean);
            cols.emplace_back(mc_se);
        }
        csv::write_columns(ctx.file(tag + ".csv"), header, cols);
        out["file"] = tag + ".csv";
    }
    return out;
}

inline json run_task(const Context& ctx, const ForwardTask& t, const std::string& tag) {
    const auto p = ctx.cfg.market->pricing();
    json rows = json::array();
    std::vector<double> F;
    for (double T : t.maturities) {
        const auto q = pricing::forward_price(p, t.t, T);
        json row{{"T", T}, {"F", q.F}, {"calA", q.calA}};
        if (t.mc_paths > 0 && T > t.t)
            row["monte_carlo"] = estimate_json(pricing::mc_forward(p, t.t, T, t.mc_paths, ctx.seed, ctx.cfg.numerics.mc_steps));
        rows.push_back(row);
        F.push_back(q.F);
    }
    json out{{"t", t.t}, {"forwards", rows}};
    if (ctx.opt.write_files) {
        csv::write_columns(ctx.file(tag + ".csv"), {"T", "F"}, {t.maturities, F});
        out["file"] = tag + ".csv";
    }
    return out;
}

inline json run_task(const Context& ctx, const CarmaCurveTask& t, const std::string& tag) {
    const auto& cb = *ctx.cfg.carma;
    const auto F = carma::forward_curve(cb.model, t.t, cb.x0, t.maturities);
    json rows = json::array();
    for (std::size_t i = 0; i < F.size(); ++i) {
        json row{{"T", t.maturities[i]}, {"F", F[i]}};
        if (t.mc_paths > 0 && t.maturities[i] > t.t)
            row["monte_carlo"] = estimate_json(carma::mc_forward(cb.model, t.t, t.maturities[i], cb.x0, t.mc_paths, ctx.seed));
        rows.push_back(row);
    }
    json out{{"t", t.t},
             {"q_drift_identity_residual", carma::q_drift_identity_residual(cb.model)},
             {"structure_preserving", carma::structure_preserving_check(cb.model)},
             {"forwards", rows}};
    if (ctx.opt.write_files) {
        csv::write_columns(ctx.file(tag + ".csv"), {"T", "F"}, {t.maturities, F});
        out["file"] = tag + ".csv";
    }
    return out;
}

/// |C - P - D (F - K)| / F for each strike.
inline json run_task(const Context& ctx, const ParityTask& t, const std::string&) {
    const auto p = ctx.cfg.market->pricing();
    const double F = pricing::forward_price(p, t.t, t.maturity).F;
    const double D = pricing::discount_factor(p, t.t, t.maturity);
    json rows = json::array();
    bool pass = true;
    for (double K : t.strikes) {
        const double C = pricing::spot_option_price(p, ctx.option(K, t.maturity, 1, 2.0), t.t);
        const double P = pricing::spot_option_price(p, ctx.option(K, t.maturity, -1, -1.0), t.t);
        const double err = std::abs(C - P - D * (F - K)) / F;
        pass = pass && err < 1e-8;
        rows.push_back({{"strike", K}, {"call", C}, {"put", P}, {"relative_error", err}});
    }
    return {{"forward", F}, {"discount", D}, {"tolerance", 1e-8}, {"pass", pass}, {"strikes", rows}};
}

}  // namespace detail

/// Runs the selected tasks (all when `select` is empty) and assembles the report.
/// A task that throws aborts the run; the error carries the task's position and verb.
inline json run(const RunConfig& cfg, const std::function<bool(const Task&)>& select = {}, const RunOptions& opt = {}) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < cfg.tasks.size(); ++i)
        if (!select || select(cfg.tasks[i])) chosen.push_back(i);
    if (chosen.empty()) throw ConfigError("no task to run: the configuration has no matching entry in tasks");

    if (cfg.market) cfg.market->model.validate();
    if (cfg.carma) cfg.carma->model.validate();

    const std::filesystem::path dir = opt.out_dir.value_or(cfg.output);
    if (opt.write_files) std::filesystem::create_directories(dir);

    json results = json::array();
    for (std::size_t i : chosen) {
        const std::string tag = "task" + std::to_string(i);
        const detail::Context ctx{cfg, opt, dir, cfg.seed + 1000003ULL * i};
        const auto& task = cfg.tasks[i];
        json r;
        try {
            r = std::visit([&](const auto& t) { return detail::run_task(ctx, t, tag); }, task);
        } catch (const NumericError& e) {
            throw NumericError("tasks[" + std::to_string(i) + "] (" + task_verb(task) + "): " + e.what());
        } catch (const ModelError& e) {
            throw ModelError("tasks[" + std::to_string(i) + "] (" + task_verb(task) + "): " + e.what());
        } catch (const DomainError& e) {
            throw DomainError("tasks[" + std::to_string(i) + "] (" + task_verb(task) + "): " + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError("tasks[" + std::to_string(i) + "] (" + task_verb(task) + "): " + e.what());
        }
        r["task"] = i;
        r["verb"] = task_verb(task);
        results.push_back(r);
    }

    json report{{"version", kVersion}, {"seed", cfg.seed}, {"inputs", cfg.source}, {"results", results}};
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report["timing"] = {{"wall_clock_s", secs}, {"threads", thread_count()}};
    report["hash"] = report_hash(report);
    if (opt.write_files) {
        std::ofstream((dir / "report.json").string()) << report.dump(2) << '\n';
    }
    return report;
}

}  // namespace cmem::app
