#pragma once

#include <string>
#include <vector>

namespace hhhfl {

// Outcome of one acceptance-grade check. Tolerances and thresholds are
// pinned inside each check.
struct CheckResult {
    std::string name;
    bool pass = false;
    bool skipped = false;
    std::string detail;
};

// 20 seeds over dense nets, conv+dense nets, projector-classifier-CE stacks
// and the CE+MMD composite loss; central differences (eps 1e-5) must agree
// with backprop within 1e-4 relative everywhere.
CheckResult check_gradient_correctness();

// mmd_squared vs an independently coded naive double-sum for sample sizes up
// to 32, both kernels, 20 seeds, within 1e-10; plus the hand-derived linear
// case a={0,2}, b={1,3} equal to 1.0 within 1e-12.
CheckResult check_mmd_oracle();

// aggregate() equals the canonical flat-vector weighted mean bit-exactly, is
// invariant under update permutation, and maps identical updates to
// themselves bit-exactly.
CheckResult check_aggregation_exactness();

// A one-device one-client lambda=0 federation produces the same metric rows
// as the baseline runner, byte for byte.
CheckResult check_reduction_law();

// Over a full 3-device synthetic run with message logging, no message ever
// carries a vector of length 440, 512 or 1024, and every embedding payload
// vector has length 10.
CheckResult check_privacy_flow();

// Two runs of one experiment with the same config and seed produce
// byte-identical metrics.csv and summary.json.
CheckResult check_determinism();

// A corpus of malformed record lines yields typed parse errors only: no
// crash, no silent acceptance.
CheckResult check_ingestion_robustness();

// The desk-scale heterogeneous benchmark: pseudo-devices with input dims
// 512/440/1024, 600 examples each, separation 4, 3 clients per device, 100
// rounds. Passes when (a) the 3-device run's final pooled accuracy beats
// every per-device baseline's final accuracy by at least 2 points, (b) every
// pairwise MMD^2 at round 100 is below its round-1 value, and (c) the whole
// benchmark finishes within 5 minutes. Also trains a centralized oracle on
// the pooled data and reports its accuracy for reference.
CheckResult check_synthetic_benchmark();

// Optional: a real-dataset run when HHHFL_MINDBIGDATA_DIR points at files
// named MW.txt / EP.txt / MU.txt. Needs >= 1000 events per device; pooled
// test accuracy must beat the majority-class rate by >= 3 points. Skipped
// with a message when the data is absent.
CheckResult check_real_data();

// Everything above, in acceptance order.
std::vector<CheckResult> run_acceptance_checks();

// The quick subset (everything except the benchmark and real data).
std::vector<CheckResult> run_selftest_checks();

} // namespace hhhfl
