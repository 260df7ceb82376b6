#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ginger {

struct CheckResult {
    std::string name;
    std::string module;
    double residual = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string detail;
};

std::vector<std::string> verify_check_names();

/// Runs every oracle-equivalence and invariant check whose name contains
/// `filter` (all when empty).
std::vector<CheckResult> verify_suite(std::string_view filter = {}, std::uint64_t seed = 20240917);

void print_report(std::ostream& os, const std::vector<CheckResult>& results);

}  // namespace ginger
