#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace autochain::report {

struct ExpectationResult {
  std::string metric;
  std::string expected;
  nlohmann::ordered_json actual;
  bool passed = false;
};

/// Metrics recomputed from a trace; no simulator state is consulted.
struct ScenarioReport {
  std::string name;
  std::uint64_t seed = 0;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  /// Per-period utilization as logged by the block-turn holder.
  std::vector<double> utilization;
  std::vector<ExpectationResult> expectations;

  bool passed() const;
  const nlohmann::ordered_json& metric(const std::string& name) const;
};

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ScenarioReport build_report(std::string_view trace_text);
/// Checks `expected` against a metric value. Accepts "N", "true", "<= N",
/// ">= N", "< N", "> N" and "== text".
bool check_expectation(const nlohmann::ordered_json& actual, std::string_view expected);

std::string format_plain(const ScenarioReport& report);
nlohmann::ordered_json to_json(const ScenarioReport& report);

}  // namespace autochain::report
