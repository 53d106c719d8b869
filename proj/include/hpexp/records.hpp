// One row of a p-sweep: method tag, degree, degrees of freedom and named errors.
#pragma once

#include <map>
#include <string>
#include <vector>

namespace hpexp {

struct ConvergenceRecord {
  std::string method;
  int p = 0;
  long long dof = 0;
  std::map<std::string, double> errors;
  std::map<std::string, double> diagnostics;  // solver residuals, timings
  std::string failure;  // empty on success

  [[nodiscard]] bool ok() const { return failure.empty(); }
  [[nodiscard]] double error(const std::string& key) const {
    const auto it = errors.find(key);
    return it == errors.end() ? 0.0 : it->second;
  }
};

using ConvergenceRecords = std::vector<ConvergenceRecord>;

}  // namespace hpexp
