#pragma once

// Run configuration: JSON with a strict schema. Unknown keys, missing keys and
// wrong types are collected with their dotted path and reported together.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "cmem/affine.hpp"
#include "cmem/carma.hpp"
#include "cmem/core/errors.hpp"
#include "cmem/core/time_function.hpp"
#include "cmem/dynamics.hpp"
#include "cmem/kernel.hpp"
#include "cmem/levy.hpp"
#include "cmem/pricing.hpp"

namespace cmem::app {

using json = nlohmann::json;

/// Schema violations, each prefixed with the offending path.
class SchemaError : public ConfigError {
public:
    explicit SchemaError(std::vector<std::string> issues) : ConfigError(join(issues)), issues_(std::move(issues)) {}
    [[nodiscard]] const std::vector<std::string>& issues() const { return issues_; }

private:
    static std::string join(const std::vector<std::string>& xs) {
        std::string s = "invalid configuration:";
        for (const auto& x : xs) s += "\n  " + x;
        return s;
    }
    std::vector<std::string> issues_;
};

/// Read-only view of a JSON object that remembers which keys were consumed.
class Node {
public:
    Node(const json* j, std::string path, std::vector<std::string>* issues)
        : j_(j), path_(std::move(path)), issues_(issues) {
        if (j_ && !j_->is_object()) {
            issue("expected an object");
            j_ = nullptr;
        }
    }

    [[nodiscard]] const std::string& path() const { return path_; }
    [[nodiscard]] bool valid() const { return j_ != nullptr; }
    [[nodiscard]] bool has(const std::string& key) const { return j_ && j_->contains(key); }

    void issue(const std::string& what) const { issues_->push_back((path_.empty() ? "<root>" : path_) + ": " + what); }

    const json* raw(const std::string& key, bool required = true) {
        used_.insert(key);
        if (!j_) return nullptr;
        const auto it = j_->find(key);
        if (it == j_->end()) {
            if (required) issues_->push_back(sub(key) + ": missing required key");
            return nullptr;
        }
        return &*it;
    }

    Node child(const std::string& key) { return {raw(key), sub(key), issues_}; }
    std::optional<Node> opt_child(const std::string& key) {
        if (!has(key)) {
            used_.insert(key);
            return std::nullopt;
        }
        return child(key);
    }

    double num(const std::string& key) { return as_num(raw(key), key, 0.0); }
    double num(const std::string& key, double def) { return has(key) ? as_num(raw(key), key, def) : mark(key, def); }

    std::uint64_t count(const std::string& key, std::uint64_t def) {
        if (!has(key)) return mark(key, def);
        const json* v = raw(key);
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
            issues_->push_back(sub(key) + ": expected a non-negative integer");
            return def;
        }
        return v->get<std::uint64_t>();
    }

    std::string str(const std::string& key) { return as_str(raw(key), key, ""); }
    std::string str(const std::string& key, const std::string& def) {
        return has(key) ? as_str(raw(key), key, def) : mark(key, def);
    }

    std::vector<double> nums(const std::string& key) { return as_nums(raw(key), key); }
    std::vector<double> nums(const std::string& key, std::vector<double> def) {
        return has(key) ? as_nums(raw(key), key) : mark(key, std::move(def));
    }

    /// A number or {"grid": [...], "values": [...]}.
    template <class F>
    F function(const std::string& key, double def) {
        if (!has(key)) return mark(key, F(def));
        const json* v = raw(key);
        if (v->is_number()) return F(v->get<double>());
        Node n(v, sub(key), issues_);
        auto g = n.nums("grid");
        auto vals = n.nums("values");
        n.finish();
        try {
            return F(std::move(g), std::move(vals));
        } catch (const Error& e) {
            issues_->push_back(sub(key) + ": " + e.what());
            return F(def);
        }
    }

    /// Flags every key that was never consumed.
    void finish() const {
        if (!j_) return;
        for (const auto& [k, v] : j_->items())
            if (!used_.count(k)) issues_->push_back(sub(k) + ": unknown key");
    }

    [[nodiscard]] std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    template <class T>
    T mark(const std::string& key, T def) {
        used_.insert(key);
        return def;
    }

    double as_num(const json* v, const std::string& key, double def) {
        if (!v) return def;
        if (!v->is_number()) {
            issues_->push_back(sub(key) + ": expected a number");
            return def;
        }
        return v->get<double>();
    }

    std::string as_str(const json* v, const std::string& key, const std::string& def) {
        if (!v) return def;
        if (!v->is_string()) {
            issues_->push_back(sub(key) + ": expected a string");
            return def;
        }
        return v->get<std::string>();
    }

    std::vector<double> as_nums(const json* v, const std::string& key) {
        if (!v) return {};
        if (v->is_number()) return {v->get<double>()};
        std::vector<double> out;
        if (!v->is_array()) {
            issues_->push_back(sub(key) + ": expected an array of numbers");
            return out;
        }
        for (const auto& x : *v) {
            if (!x.is_number()) {
                issues_->push_back(sub(key) + ": expected an array of numbers");
                return {};
            }
            out.push_back(x.get<double>());
        }
        return out;
    }

    const json* j_;
    std::string path_;
    std::vector<std::string>* issues_;
    std::set<std::string> used_;
};

struct KernelSpec {
    std::string type = "zero";
    double param = 0.0;  ///< alpha for power_law, level for constant

    [[nodiscard]] kernel::MemoryKernel build(const std::vector<double>& grid = {},
                                             const std::vector<double>& values = {}) const {
        if (type == "power_law") return kernel::MemoryKernel::power_law(param);
        if (type == "constant") return kernel::MemoryKernel::constant(param);
        if (type == "tabulated") return kernel::MemoryKernel::tabulated(grid, values);
        return kernel::MemoryKernel::zero();
    }
};

struct MarketBlock {
    KernelSpec kernel;
    std::vector<double> kernel_grid, kernel_values;
    dynamics::MarketModel model;
    bool deterministic_rate = false;

    /// Parameters of the pricing formulas (the memory kernel plays no role there).
    [[nodiscard]] affine::LssPricingParams pricing() const {
        if (!model.deterministic_rate)
            throw ModelError("pricing needs a deterministic rate (model.market.rate.deterministic)");
        const auto& pr = model.premium;
        if (pr.B1_bar.grid() != pr.B3_bar.grid() || pr.B1_bar.values() != pr.B3_bar.values())
            throw ModelError("pricing needs premium.B1_bar and premium.B3_bar to coincide");
        affine::LssPricingParams p;
        p.r = *model.deterministic_rate;
        p.chi = model.chi;
        p.chi_lower = model.chi_lower;
        p.chi_upper = model.chi_upper;
        p.levy = model.levy;
        p.A_bar = pr.A_bar;
        p.B_bar = pr.B1_bar;
        p.B2_bar = pr.B2_bar;
        p.V = model.xi0;
        p.rho = pr.rho0;
        return p;
    }
};

struct CarmaBlock {
    carma::CarmaModel model;
    carma::Vec x0;
};

struct Numerics {
    std::size_t resolvent_steps = 2000;
    double riccati_tol = 1e-10;
    double lambda_max = 200.0;
    std::size_t fourier_nodes = 2048;
    std::size_t n_paths = 100000;
    std::size_t mc_steps = 50;
};

/// Settings of the acceptance battery; defaults are the desk-scale sizes.
struct ValidationSettings {
    double horizon = 1.0;
    std::size_t steps = 40;
    std::size_t girsanov_paths = 200000;
    std::size_t martingale_paths = 200000;
    std::size_t fourier_mc_paths = 400000;
    std::size_t forward_mc_paths = 200000;
    std::size_t carma_paths = 200000;
    std::vector<double> moneyness{0.8, 1.0, 1.2};
    double delivery = 1.5;  ///< forward delivery for the option-on-forward checks
};

struct ResolventTask {
    double horizon = 2.0;
    std::size_t steps = 2000;
    std::string method = "auto";  ///< series | numeric | auto
};

struct SimulateTask {
    std::string measure = "P";
    double horizon = 1.0;
    std::size_t steps = 40;
    std::size_t n_paths = 10000;
    std::string scheme = "euler";
    std::size_t save_paths = 0;
};

struct OptionTask {
    std::string product;  ///< spot-option | forward-option
    std::vector<double> strikes;
    double exercise = 1.0;
    double delivery = 1.0;
    int epsilon = 1;
    double omega = 0.0;
    double t = 0.0;
    std::size_t mc_paths = 0;
};

struct ForwardTask {
    double t = 0.0;
    std::vector<double> maturities;
    std::size_t mc_paths = 0;
};

struct CarmaCurveTask {
    double t = 0.0;
    std::vector<double> maturities;
    std::size_t mc_paths = 0;
};

struct ParityTask {
    std::vector<double> strikes;
    double maturity = 1.0;
    double t = 0.0;
};

using Task = std::variant<ResolventTask, SimulateTask, OptionTask, ForwardTask, CarmaCurveTask, ParityTask>;

inline std::string task_verb(const Task& t) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, ResolventTask>) return "resolvent";
            if constexpr (std::is_same_v<T, SimulateTask>) return "simulate";
            if constexpr (std::is_same_v<T, OptionTask>) return "price " + x.product;
            if constexpr (std::is_same_v<T, ForwardTask>) return "price forward";
            if constexpr (std::is_same_v<T, CarmaCurveTask>) return "carma forward-curve";
            if constexpr (std::is_same_v<T, ParityTask>) return "validate parity";
        },
        t);
}

struct RunConfig {
    json source;
    std::optional<MarketBlock> market;
    std::optional<CarmaBlock> carma;
    Numerics numerics;
    ValidationSettings validation;
    std::vector<Task> tasks;
    std::uint64_t seed = 1;
    std::string output = "out";
};

namespace detail {

inline LevyModel parse_levy(Node n) {
    LevyModel L;
    L.varsigma = n.num("varsigma", 0.0);
    L.c = n.num("c", 0.0);
    L.intensity = n.num("intensity", 0.0);
    if (auto j = n.opt_child("jumps")) {
        const auto type = j->str("type");
        if (type == "none") {
            L.law = NoJumps{};
        } else if (type == "normal") {
            L.law = NormalJumps{j->num("mean"), j->num("stdev")};
        } else if (type == "double_exponential") {
            L.law = DoubleExponentialJumps{j->num("p"), j->num("eta_plus"), j->num("eta_minus")};
        } else {
            j->issue("jumps.type must be none, normal or double_exponential");
        }
        j->finish();
    }
    n.finish();
    return L;
}

inline MarketBlock parse_market(Node n) {
    MarketBlock b;
    auto& m = b.model;
    {
        auto k = n.child("kernel");
        b.kernel.type = k.str("type", "zero");
        if (b.kernel.type == "power_law") {
            b.kernel.param = k.num("alpha");
        } else if (b.kernel.type == "constant") {
            b.kernel.param = k.num("level");
        } else if (b.kernel.type == "tabulated") {
            b.kernel_grid = k.nums("grid");
            b.kernel_values = k.nums("values");
        } else if (b.kernel.type != "zero") {
            k.issue("type must be zero, power_law, constant or tabulated");
        }
        try {
            m.kernel = b.kernel.build(b.kernel_grid, b.kernel_values);
        } catch (const Error& e) {
            k.issue(e.what());
        }
        k.finish();
    }
    m.levy = parse_levy(n.child("levy"));
    m.chi = n.function<VolProcess>("chi", 1.0);
    if (auto cb = n.opt_child("chi_bounds")) {
        m.chi_lower = cb->num("lower", m.chi_lower);
        m.chi_upper = cb->num("upper", m.chi_upper);
        cb->finish();
    }
    {
        auto r = n.child("rate");
        if (r.has("deterministic")) {
            m.deterministic_rate = r.function<TimeFunction>("deterministic", 0.0);
            b.deterministic_rate = true;
        } else {
            m.rate.A = r.function<TimeFunction>("A", 0.0);
            m.rate.B1 = r.function<TimeFunction>("B1", 0.0);
            m.rate.B2 = r.function<TimeFunction>("B2", 0.0);
            m.rate.r0 = r.num("r0", 0.0);
        }
        r.finish();
    }
    if (auto p = n.opt_child("premium")) {
        m.premium.A_bar = p->function<TimeFunction>("A_bar", 0.0);
        m.premium.B1_bar = p->function<TimeFunction>("B1_bar", 0.0);
        m.premium.B2_bar = p->function<TimeFunction>("B2_bar", 0.0);
        m.premium.B3_bar = p->function<TimeFunction>("B3_bar", 0.0);
        m.premium.rho0 = p->num("rho0", 0.0);
        p->finish();
    }
    m.xi0 = n.num("xi0", 0.0);
    n.finish();
    return b;
}

inline carma::Vec to_vec(const std::vector<double>& v) {
    return Eigen::Map<const carma::Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline CarmaBlock parse_carma(Node n) {
    CarmaBlock b;
    auto& m = b.model;
    m.alphas = n.nums("alphas");
    m.betas = n.nums("betas");
    const std::size_t p = m.alphas.size();
    m.q = static_cast<std::size_t>(n.count("q", p == 0 ? 0 : p - 1));
    m.b = to_vec(n.nums("b"));
    if (n.has("c")) m.c = to_vec(n.nums("c"));
    else n.raw("c", false);
    m.vartheta = n.num("vartheta");
    m.mu = n.num("mu", 0.0);
    m.xi = to_vec(n.nums("xi", std::vector<double>(p, 0.0)));
    m.theta = to_vec(n.nums("theta", std::vector<double>(p, 0.0)));
    m.r = n.num("r", 0.0);
    b.x0 = to_vec(n.nums("x0", std::vector<double>(p, 0.0)));
    n.finish();
    return b;
}

inline int parse_kind(Node& n) {
    const auto kind = n.str("kind", "call");
    if (kind == "call") return 1;
    if (kind == "put") return -1;
    n.issue("kind must be call or put");
    return 1;
}

inline Task parse_task(Node n, const Numerics& num) {
    const auto type = n.str("type");
    Task out;
    if (type == "resolvent") {
        ResolventTask t;
        t.horizon = n.num("horizon", t.horizon);
        t.steps = n.count("steps", num.resolvent_steps);
        t.method = n.str("method", t.method);
        if (t.method != "auto" && t.method != "series" && t.method != "numeric")
            n.issue("method must be auto, series or numeric");
        out = t;
    } else if (type == "simulate") {
        SimulateTask t;
        t.measure = n.str("measure", t.measure);
        if (t.measure != "P" && t.measure != "Q") n.issue("measure must be P or Q");
        t.horizon = n.num("horizon", t.horizon);
        t.steps = n.count("steps", num.mc_steps);
        t.n_paths = n.count("n_paths", num.n_paths);
        t.scheme = n.str("scheme", t.scheme);
        if (t.scheme != "euler" && t.scheme != "convolution") n.issue("scheme must be euler or convolution");
        t.save_paths = n.count("save_paths", 0);
        out = t;
    } else if (type == "spot-option" || type == "forward-option") {
        OptionTask t;
        t.product = type;
        t.strikes = n.nums("strikes");
        t.exercise = n.num("exercise");
        t.delivery = type == "forward-option" ? n.num("delivery") : t.exercise;
        t.epsilon = parse_kind(n);
        t.omega = n.num("omega", 0.0);
        t.t = n.num("t", 0.0);
        t.mc_paths = n.count("mc_paths", 0);
        for (double K : t.strikes) {
            pricing::OptionSpec o{K, t.exercise, t.epsilon, t.omega, num.lambda_max, num.fourier_nodes};
            try {
                o.validate();
            } catch (const Error& e) {
                n.issue(e.what());
            }
        }
        if (t.strikes.empty()) n.issue("strikes must not be empty");
        out = t;
    } else if (type == "forward") {
        ForwardTask t;
        t.t = n.num("t", 0.0);
        t.maturities = n.nums("maturities");
        t.mc_paths = n.count("mc_paths", 0);
        out = t;
    } else if (type == "carma-forward-curve") {
        CarmaCurveTask t;
        t.t = n.num("t", 0.0);
        t.maturities = n.nums("maturities");
        t.mc_paths = n.count("mc_paths", 0);
        out = t;
    } else if (type == "parity") {
        ParityTask t;
        t.strikes = n.nums("strikes");
        t.maturity = n.num("maturity");
        t.t = n.num("t", 0.0);
        out = t;
    } else {
        n.issue("type must be resolvent, simulate, spot-option, forward, forward-option, carma-forward-curve or parity");
    }
    n.finish();
    return out;
}

}  // namespace detail

/// Parses and validates a configuration document; throws SchemaError listing every violation.
inline RunConfig parse_config(const json& doc) {
    std::vector<std::string> issues;
    RunConfig cfg;
    cfg.source = doc;
    Node root(&doc, "", &issues);
    cfg.seed = root.count("seed", 1);
    cfg.output = root.str("output", "out");

    if (auto nb = root.opt_child("numerics")) {
        auto& n = cfg.numerics;
        n.resolvent_steps = nb->count("resolvent_steps", n.resolvent_steps);
        n.riccati_tol = nb->num("riccati_tol", n.riccati_tol);
        n.lambda_max = nb->num("lambda_max", n.lambda_max);
        n.fourier_nodes = nb->count("fourier_nodes", n.fourier_nodes);
        n.n_paths = nb->count("n_paths", n.n_paths);
        n.mc_steps = nb->count("mc_steps", n.mc_steps);
        if (!(n.riccati_tol > 0.0)) nb->issue("riccati_tol must be > 0");
        if (!(n.lambda_max > 0.0)) nb->issue("lambda_max must be > 0");
        if (n.fourier_nodes < 32 || n.fourier_nodes % 32 != 0) nb->issue("fourier_nodes must be a positive multiple of 32");
        if (n.resolvent_steps == 0 || n.mc_steps == 0) nb->issue("step counts must be > 0");
        nb->finish();
    }

    if (auto vb = root.opt_child("validation")) {
        auto& v = cfg.validation;
        v.horizon = vb->num("horizon", v.horizon);
        v.steps = vb->count("steps", v.steps);
        v.girsanov_paths = vb->count("girsanov_paths", v.girsanov_paths);
        v.martingale_paths = vb->count("martingale_paths", v.martingale_paths);
        v.fourier_mc_paths = vb->count("fourier_mc_paths", v.fourier_mc_paths);
        v.forward_mc_paths = vb->count("forward_mc_paths", v.forward_mc_paths);
        v.carma_paths = vb->count("carma_paths", v.carma_paths);
        v.moneyness = vb->nums("moneyness", v.moneyness);
        v.delivery = vb->num("delivery", v.delivery);
        if (!(v.horizon > 0.0) || !(v.delivery >= v.horizon)) vb->issue("need 0 < horizon <= delivery");
        vb->finish();
    }

    {
        auto mb = root.child("model");
        const bool has_market = mb.has("market");
        const bool has_carma = mb.has("carma");
        if (mb.valid() && has_market == has_carma) mb.issue("exactly one of market or carma is required");
        if (auto n = mb.opt_child("market")) cfg.market = detail::parse_market(*n);
        if (auto n = mb.opt_child("carma")) cfg.carma = detail::parse_carma(*n);
        mb.finish();
    }

    if (const json* tj = root.raw("tasks", false)) {
        if (!tj->is_array()) {
            issues.push_back("tasks: expected an array");
        } else {
            for (std::size_t i = 0; i < tj->size(); ++i)
                cfg.tasks.push_back(
                    detail::parse_task(Node(&(*tj)[i], "tasks[" + std::to_string(i) + "]", &issues), cfg.numerics));
        }
    }
    root.finish();

    // Model-level checks once the schema is sound.
    if (issues.empty()) {
        for (const auto& t : cfg.tasks) {
            const bool carma_task = std::holds_alternative<CarmaCurveTask>(t);
            if (carma_task && !cfg.carma) issues.push_back(task_verb(t) + ": needs a model.carma block");
            if (!carma_task && !cfg.market) issues.push_back(task_verb(t) + ": needs a model.market block");
        }
        if (cfg.carma) {
            if (cfg.carma->x0.size() != static_cast<Eigen::Index>(cfg.carma->model.p()))
                issues.push_back("model.carma.x0: must have p entries");
        }
    }
    if (!issues.empty()) throw SchemaError(issues);
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(doc);
}

}  // namespace cmem::app
