#pragma once

#include <string>
#include <vector>

namespace ict {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Finite-difference and brute-force checks of the gradient, meta-gradient
/// and selection routines on small random instances.
std::vector<CheckResult> run_self_checks(unsigned seed = 0);

}  // namespace ict
