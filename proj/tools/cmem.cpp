// cmem <verb> --config file.json [--seed N] [--out dir]

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cmem/app/validate.hpp"

namespace {

using namespace cmem;
using namespace cmem::app;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<unsigned> threads;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("-c,--config", c.config, "JSON configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("-s,--seed", c.seed, "overrides the configuration seed");
    sub->add_option("-o,--out", c.out, "output directory (overrides the configuration)");
    sub->add_option("-j,--threads", c.threads, "worker threads (same as CMEM_THREADS)");
}

RunConfig prepare(const Common& c) {
    if (c.threads) ::setenv("CMEM_THREADS", std::to_string(*c.threads).c_str(), 1);
    auto cfg = load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.out) cfg.output = *c.out;
    return cfg;
}

int run_verb(const Common& c, const std::string& verb) {
    const auto cfg = prepare(c);
    const auto report = run(cfg, [&](const Task& t) { return verb.empty() || task_verb(t) == verb; });
    std::cout << "report " << (std::filesystem::path(cfg.output) / "report.json").string() << "\n";
    std::cout << "hash " << report["hash"].get<std::string>() << "\n";
    for (const auto& r : report["results"]) std::cout << "task " << r["task"] << " " << r["verb"].get<std::string>() << " done\n";
    return 0;
}

int validate_verb(const Common& c, const std::vector<std::string>& which) {
    const auto cfg = prepare(c);
    if (which.size() == 1 && which[0] == "parity" &&
        std::any_of(cfg.tasks.begin(), cfg.tasks.end(), [](const Task& t) { return std::holds_alternative<ParityTask>(t); })) {
        const auto report = run(cfg, [](const Task& t) { return std::holds_alternative<ParityTask>(t); });
        bool pass = true;
        for (const auto& r : report["results"]) {
            const bool ok = r["pass"].get<bool>();
            pass = pass && ok;
            std::cout << "parity task " << r["task"] << ": " << (ok ? "PASS" : "FAIL") << "\n";
        }
        return pass ? 0 : 2;
    }
    std::vector<int> ids;
    const auto& names = criterion_names();
    for (const auto& w : which) {
        const auto it = std::find(names.begin(), names.end(), w);
        if (it != names.end()) {
            ids.push_back(static_cast<int>(it - names.begin()) + 1);
            continue;
        }
        try {
            const int id = std::stoi(w);
            if (id >= 1 && id <= 11) {
                ids.push_back(id);
                continue;
            }
        } catch (const std::exception&) {
        }
        throw ConfigError("unknown criterion '" + w + "'");
    }
    const auto report = validate_suite(cfg, ids, [](const Criterion& k) {
        std::cout << "criterion " << k.id << " " << k.name << ": " << (k.pass ? "PASS" : "FAIL") << " (" << k.message
                  << ")" << std::endl;
    });
    std::filesystem::create_directories(cfg.output);
    const auto path = std::filesystem::path(cfg.output) / "validation.json";
    std::ofstream(path.string()) << report.dump(2) << '\n';
    std::cout << "report " << path.string() << "\nhash " << report["hash"].get<std::string>() << "\n";
    return report["pass"].get<bool>() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Commodity pricing with memory and jumps"};
    app.require_subcommand(1);
    Common common;

    auto* resolvent = app.add_subcommand("resolvent", "resolvent of the memory kernel");
    add_common(resolvent, common);
    auto* simulate = app.add_subcommand("simulate", "path simulation under P or Q");
    add_common(simulate, common);

    auto* price = app.add_subcommand("price", "closed-form and Fourier prices");
    price->require_subcommand(1);
    std::vector<CLI::App*> products;
    for (const char* name : {"spot-option", "forward", "forward-option"}) {
        auto* sub = price->add_subcommand(name, std::string("price ") + name + " tasks");
        add_common(sub, common);
        products.push_back(sub);
    }

    auto* carma_cmd = app.add_subcommand("carma", "CARMA spot model");
    carma_cmd->require_subcommand(1);
    auto* curve = carma_cmd->add_subcommand("forward-curve", "CARMA forward curve");
    add_common(curve, common);

    auto* validate = app.add_subcommand("validate", "acceptance battery, or selected criteria");
    add_common(validate, common);
    std::vector<std::string> which;
    validate->add_option("criteria", which, "criterion names or ids, e.g. parity or 6");

    auto* run_all = app.add_subcommand("run", "every task in the configuration");
    add_common(run_all, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*resolvent) return run_verb(common, "resolvent");
        if (*simulate) return run_verb(common, "simulate");
        for (auto* sub : products)
            if (*sub) return run_verb(common, sub->get_name() == "forward" ? "price forward" : "price " + sub->get_name());
        if (*curve) return run_verb(common, "carma forward-curve");
        if (*validate) return validate_verb(common, which);
        if (*run_all) return run_verb(common, "");
    } catch (const cmem::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
