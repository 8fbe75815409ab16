// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.
//
//     cmem_acceptance [config.json] [--only 1,5,...]

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cmem/app/validate.hpp"

int main(int argc, char** argv) {
    using namespace cmem::app;
    std::string path = "configs/reference.json";
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string tok; std::getline(ss, tok, ',');) only.push_back(std::stoi(tok));
        } else {
            path = a;
        }
    }
    try {
        const auto cfg = load_config(path);
        const auto report = validate_suite(cfg, only, [](const Criterion& c) {
            std::cout << "criterion " << c.id << " " << c.name << ": " << (c.pass ? "PASS" : "FAIL") << " ("
                      << c.message << ", " << c.detail.value("seconds", 0.0) << " s)" << std::endl;
            if (!c.pass) std::cout << "  detail " << c.detail.dump() << std::endl;
        });
        std::cout << (report["pass"].get<bool>() ? "ALL PASS" : "SOME FAILED") << "\n";
        return report["pass"].get<bool>() ? 0 : 1;
    } catch (const cmem::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    }
}
