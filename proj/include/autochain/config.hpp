#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "autochain/ledger.hpp"

namespace autochain::config {

/// Validation failure, pointing at the offending field and its source position.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& message, int line = -1, int column = -1);
  const std::string& field() const { return field_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string field_;
  int line_;
  int column_;
};

struct LedgerConfig {
  ledger::TrustParams trust;
  ledger::DtmState dtm;
  double pending_timeout = 200.0;
  std::size_t dtm_window = 1;
  bool dtm_enabled = true;
};

struct LinkOverride {
  std::string a;
  std::string b;
  double delay = 1.0;
};

struct ScheduledDelay {
  double at = 0.0;
  std::string a;
  std::string b;
  double delay = 1.0;
};

struct NetworkConfig {
  double jitter = 0.0;
  double obm_delay = 1.0;
  double member_delay = 2.0;
  double cloud_delay = 2.0;
  /// Delay between a member and an OBM it is not associated with.
  double far_delay = 60.0;
  /// Off-overlay traffic between two members (account grants, claims, injections).
  double direct_delay = 5.0;
  std::vector<LinkOverride> links;
  std::vector<ScheduledDelay> schedule;
};

struct ObmConfig {
  std::string id;
  bool byzantine = false;
};

struct ActorConfig {
  std::string id;
  std::string obm;
};

struct VehicleDefaults {
  double anchor_interval = 50.0;
  double backup_interval = 0.0;
  std::size_t backup_batch = 10;
  double record_interval = 10.0;
  double handover_threshold = 100.0;
  double hysteresis = 0.2;
  std::size_t probe_count = 3;
  double handover_check_interval = 0.0;
  bool rotate_per_interaction = false;
  bool wrsu_accounts = true;
};

struct VehicleConfig {
  std::string id;
  std::string obm;
  std::string oem;
};

/// One timed script step. `args` keeps the remaining keys as strings; the
/// world interprets them per directive kind.
struct Directive {
  double at = 0.0;
  std::string kind;
  std::map<std::string, std::string> args;
  std::vector<std::string> list;
  int line = -1;

  std::string get(const std::string& key, const std::string& fallback = "") const;
  double number(const std::string& key, double fallback) const;
  bool flag(const std::string& key, bool fallback = false) const;
};

struct ScenarioConfig {
  std::string name;
  std::uint64_t seed = 1;
  double duration = 500.0;
  double max_time = 100000.0;
  LedgerConfig ledger;
  NetworkConfig network;
  std::vector<ObmConfig> obms;
  std::vector<ActorConfig> oems;
  std::vector<ActorConfig> providers;
  std::optional<ActorConfig> insurer;
  std::string cloud_id = "cloud";
  VehicleDefaults vehicle_defaults;
  std::vector<VehicleConfig> vehicles;
  std::vector<ActorConfig> attackers;
  std::vector<Directive> script;
  /// Report metric name -> expected value ("20", ">= 5", "true").
  std::map<std::string, std::string> expect;

  std::vector<std::string> obm_ids() const;
  bool has_node(const std::string& id) const;
};

ScenarioConfig load_file(const std::string& path);
ScenarioConfig load_string(const std::string& text);
/// Cross-field checks; load_* call this already.
void validate(const ScenarioConfig& cfg);

}  // namespace autochain::config
