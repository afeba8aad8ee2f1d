#pragma once

#include <string>
#include <vector>

#include "mxpp/gradcheck.hpp"
#include "mxpp/trainer.hpp"

namespace mxpp {

struct GradSuiteResult {
    GradCheckReport report;          // every checked block, worst rel-err each
    bool negative_control_detected;  // a deliberately corrupted gradient was flagged
    bool ok(double tol = 1e-4) const { return report.tol == tol && report.all_ok() && negative_control_detected; }
};

// Runs central-difference verification (64-bit, h = 1e-5) over every
// differentiable op and the full composite objective. `sabotage` corrupts
// one op's analytic gradient so the failure path can be exercised
// end-to-end.
GradSuiteResult run_gradcheck_suite(bool sabotage = false);

} // namespace mxpp
