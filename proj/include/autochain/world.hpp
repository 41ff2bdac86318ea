#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "autochain/actors.hpp"
#include "autochain/cloud.hpp"
#include "autochain/config.hpp"
#include "autochain/obm.hpp"
#include "autochain/simnet.hpp"
#include "autochain/vehicle.hpp"

namespace autochain::world {

struct RunResult {
  bool quiescent = true;
  double end_time = 0.0;
  std::uint64_t events = 0;
};

/// One scenario instance: every node, the network between them, the script,
/// and the trace they write. Not thread-safe; separate worlds share nothing.
class World {
 public:
  explicit World(config::ScenarioConfig cfg);
  ~World();
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  /// Runs the script to quiescence, flushes the pools into final blocks and
  /// writes the closing records.
  RunResult run();

  const config::ScenarioConfig& config() const;
  const simnet::Trace& trace() const;
  const cloud::CloudStore& cloud() const;
  std::vector<std::string> obm_ids() const;
  const obm::Obm& obm(const std::string& id) const;
  const vehicle::Vehicle& vehicle(const std::string& id) const;
  const actors::Oem& oem(const std::string& id) const;
  const actors::SwProvider& provider(const std::string& id) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Loads nothing from disk: runs `cfg` (seed optionally overridden) and
/// returns the trace text.
std::string run_to_trace(config::ScenarioConfig cfg, std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace autochain::world
