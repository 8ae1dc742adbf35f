#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsplit/data.hpp"
#include "fedsplit/engine.hpp"

namespace fedsplit {

struct VerificationReport {
    std::string name;
    double max_abs_deviation = 0.0;
    bool pass = false;
    std::string details;
};

std::string format_report_line(const VerificationReport& report);

// Differentiates user i's local loss with the entire embedding table exposed
// as a trainable leaf, then measures the gradient landing on user j's row.
// The lookup only ever touches row i, so the deviation must be exactly zero;
// a central finite difference over row j double-checks the graph itself.
VerificationReport check_zero_cross_gradient(const ModelConfig& mcfg,
                                             const PreparedData& data, int i, int j,
                                             std::uint64_t seed);

// Two randomized sub-checks: (a) perturbing clients' private deltas must not
// move the federated aggregate at all, and (b) a client's private update is a
// function of nothing but its own delta and the example counts. Each comes
// with a sanity inversion proving the comparison can fail. inject_bug leaks a
// private value into (a) on purpose, as a negative control.
VerificationReport check_aggregation_independence(std::uint64_t seed,
                                                  bool inject_bug = false);

// Runs the same seeded schedule twice: once as split training (embeddings
// stay on their clients, scaled fold-back), once as a plain federated average
// over an extended parameter set that shares the whole embedding table. Every
// parameter is compared after every round; the two must agree to 1e-12
// (and in practice agree bitwise).
VerificationReport split_equivalence_oracle(const PreparedData& data,
                                            const ModelConfig& mcfg,
                                            const RunConfig& cfg);

// The three checks above on a small built-in instance.
std::vector<VerificationReport> run_standard_checks(std::uint64_t seed,
                                                    bool inject_bug = false);

}  // namespace fedsplit
