#pragma once

#include <string>
#include <vector>

namespace dvhn {

struct SelftestGroup {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SelftestOptions {
    /// Test hook. "gradient" perturbs analytic gradients before they are checked.
    std::string inject_fault;
};

/// Embedded verification battery: gradient, classifier, dcc, hamming, metrics, optimizer.
std::vector<SelftestGroup> run_selftest(const SelftestOptions& options = {});

}  // namespace dvhn
