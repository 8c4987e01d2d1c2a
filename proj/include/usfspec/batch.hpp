#pragma once

// Suite runner: expands specs into (spec, repetition) runs and executes them
// serially or across OpenMP threads with identical, order-stable output.

#include <vector>

#include "usfspec/harness.hpp"

namespace usfspec {

enum class Execution { serial, parallel };

struct SuiteRun {
  std::size_t spec_index = 0;
  int repetition = 0;
  std::uint64_t seed = 0;  // spec.seed + repetition
};

std::vector<SuiteRun> expand_runs(const std::vector<ExperimentSpec>& specs);

/// Reports sorted by (spec index, repetition). Failures inside a run are
/// reported as non-converged rows; the suite always completes.
std::vector<RunReport> run_suite(const std::vector<ExperimentSpec>& specs, Execution mode = Execution::parallel);

bool all_converged(const std::vector<RunReport>& reports);

}  // namespace usfspec
