#pragma once

#include "convlab/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace convlab {

struct CheckResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string observed;
    std::string expected;
    double seconds = 0.0;
};

struct CheckOptions {
    std::uint64_t seed = 20240601;
    unsigned threads = 0;
    /// Applied to every derived-constant set the checks build; mutation tests
    /// use it to corrupt a formula and confirm a check notices.
    std::function<void(DerivedConstants&)> mutate_constants;
    /// Scratch space for the determinism check; defaults to the system temp dir.
    std::filesystem::path scratch_dir;
};

inline constexpr int kCheckCount = 11;

CheckResult run_check(int id, const CheckOptions& options);
/// All checks, or the subset listed in `ids` (empty means all).
std::vector<CheckResult> run_checks(const CheckOptions& options, const std::vector<int>& ids = {});

/// One line per check: "PASS|FAIL <id> <name>: observed ...; expected ... (<s> s)".
std::string format_check_line(const CheckResult& r);
/// Machine-readable report: JSON array of check objects.
std::string checks_report_json(const std::vector<CheckResult>& results);

} // namespace convlab
