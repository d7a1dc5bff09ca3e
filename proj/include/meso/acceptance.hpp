#pragma once

#include "meso/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace meso {

/// Sizes of the acceptance experiments. The defaults are the gate values; smaller values
/// give a smoke run whose verdicts are not gate verdicts.
struct AcceptanceOptions {
  std::uint64_t seed = 20240917;
  int stability_n = 1024;
  int stability_pairs = 200;
  int local_law_samples = 20;
  int variance_n = 2000;
  int clt_n = 2000;
  int clt_samples = 2000;
  /// Worker count the criterion 6 runtime budget is stated for.
  int clt_reference_workers = 8;
};

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  /// Measured quantities, one "key=value" group per check.
  std::string detail;
  Real seconds = 0;
  Real budget_seconds = 0;
  /// Budget compared against seconds × workers instead of wall time.
  bool budget_in_core_seconds = false;
};

/// Criterion ids in gate order.
[[nodiscard]] std::vector<int> acceptance_criteria();
[[nodiscard]] std::string criterion_title(int id);
/// Runs one criterion. Numerical failures inside a criterion are reported as a failed result.
[[nodiscard]] CriterionResult run_criterion(int id, const AcceptanceOptions& options = {});
/// "PASS [3] title (12.3 s, budget 300 s): detail".
[[nodiscard]] std::string format_result(const CriterionResult& result);

}  // namespace meso
