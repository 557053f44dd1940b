#pragma once

#include <string>
#include <vector>

namespace bipen {

enum class VerifyLevel { fast, full };

struct VerifyCheck {
    std::string name;
    bool passed = false;
    std::string detail;  // first counterexample on failure, summary stat on pass
};

struct VerifyOptions {
    VerifyLevel level = VerifyLevel::fast;
    // Test seam: multiplies the inner prox step direction in the contraction
    // check. Anything other than +1 is a deliberately broken update that the
    // check must catch.
    double step_sign = 1.0;
};

// Runs the cross-module invariant suite. fast keeps to a few seconds per
// check; full adds the long statistical comparisons.
std::vector<VerifyCheck> run_verification(const VerifyOptions& options = {});

}  // namespace bipen
