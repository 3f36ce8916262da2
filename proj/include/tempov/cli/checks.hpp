#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tempov::cli {

// One acceptance criterion: pass/fail plus what was measured.
struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  nlohmann::json measured = nlohmann::json::object();
  std::string detail;  // first failure, empty on success
};

nlohmann::json to_json(const CheckResult& r);

// Self-contained checks; each builds its own seeded fixtures and never throws
// (an exception is reported as a failure).
CheckResult check_gradient_oracle(std::uint64_t seed = 0);  // 1
CheckResult check_loss_oracles(std::uint64_t seed = 0);     // 2
CheckResult check_identities(std::uint64_t seed = 0);       // 3
CheckResult check_gaussian_nll(std::uint64_t seed = 0);     // 4
CheckResult check_protocol(std::uint64_t seed = 0);         // 7
CheckResult check_metrics(std::uint64_t seed = 0);          // 8
CheckResult check_pipeline(std::uint64_t seed = 0);         // 9
CheckResult check_analysis(std::uint64_t seed = 0);         // 10

// Runs the standalone checks above in id order.
std::vector<CheckResult> run_standalone_checks(std::uint64_t seed = 0);

}  // namespace tempov::cli
