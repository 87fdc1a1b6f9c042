#include "convlab/checks.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

// Runs every acceptance criterion once and prints one PASS/FAIL line each.
int main(int argc, char** argv) {
    convlab::CheckOptions opt;
    if (argc > 1) opt.seed = std::strtoull(argv[1], nullptr, 10);
    bool ok = true;
    for (int id = 1; id <= convlab::kCheckCount; ++id) {
        const auto r = convlab::run_check(id, opt);
        std::cout << convlab::format_check_line(r) << std::endl;
        ok = ok && r.passed;
    }
    std::cout << (ok ? "all acceptance criteria passed" : "acceptance criteria failed") << std::endl;
    return ok ? EXIT_SUCCESS : EXIT_FAILURE;
}
