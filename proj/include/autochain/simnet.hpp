#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace autochain::simnet {

using NodeId = std::string;
using SimTime = double;

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per ordered node pair base delays, a uniform jitter fraction, and
/// time-indexed overrides that model a vehicle moving between OBMs.
class LinkModel {
 public:
  explicit LinkModel(double jitter = 0.0) : jitter_(jitter) {}

  /// Sets both directions.
  void set_link(const NodeId& a, const NodeId& b, double delay);
  void set_directed(const NodeId& from, const NodeId& to, double delay);
  /// From `at` onwards the a<->b delay is `delay`.
  void schedule(const NodeId& a, const NodeId& b, SimTime at, double delay);

  bool has_link(const NodeId& from, const NodeId& to) const { return base_.contains({from, to}); }
  double jitter() const { return jitter_; }
  /// Base delay in effect at `now`, overrides applied.
  double base_delay(const NodeId& from, const NodeId& to, SimTime now) const;
  /// base * (1 + U[0, jitter)).
  double sample(const NodeId& from, const NodeId& to, SimTime now, std::mt19937_64& rng) const;
  /// Largest base delay ever in effect between any two nodes of `nodes`.
  double max_delay_among(const std::vector<NodeId>& nodes) const;

 private:
  using Key = std::pair<NodeId, NodeId>;
  double jitter_;
  std::map<Key, double> base_;
  std::map<Key, std::vector<std::pair<SimTime, double>>> schedule_;
};

/// Independent generator per node, derived from the run seed and the node id,
/// so adding a node does not perturb the draws of the others.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t seed) : seed_(seed) {}
  std::mt19937_64& stream(const NodeId& node);
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::map<NodeId, std::mt19937_64> streams_;
};

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

template <class Msg>
struct Event {
  SimTime deliver_at = 0.0;
  std::uint64_t seq = 0;
  NodeId from;
  NodeId to;
  Msg msg;
};

struct RunOutcome {
  bool quiescent = true;
  SimTime end_time = 0.0;
  std::uint64_t dispatched = 0;
};

/// Single-threaded discrete-event queue ordered by (deliver_at, seq).
template <class Msg>
class EventLoop {
 public:
  SimTime now() const { return now_; }
  bool empty() const { return queue_.empty(); }
  std::size_t size() const { return queue_.size(); }
  std::uint64_t dispatched() const { return dispatched_; }
  std::optional<SimTime> next_time() const {
    if (queue_.empty()) return std::nullopt;
    return queue_.top().deliver_at;
  }

  std::uint64_t schedule(SimTime at, NodeId from, NodeId to, Msg msg) {
    if (at < now_) throw SimError("event scheduled in the past");
    const auto seq = next_seq_++;
    queue_.push(Event<Msg>{at, seq, std::move(from), std::move(to), std::move(msg)});
    return seq;
  }

  Event<Msg> pop() {
    Event<Msg> ev = queue_.top();
    queue_.pop();
    now_ = ev.deliver_at;
    ++dispatched_;
    return ev;
  }

  /// Dispatches until the queue drains or the next event lies beyond `max_time`.
  RunOutcome run(const std::function<void(Event<Msg>&)>& handler, SimTime max_time) {
    RunOutcome out;
    const auto start = dispatched_;
    while (!queue_.empty()) {
      if (queue_.top().deliver_at > max_time) {
        out.quiescent = false;
        break;
      }
      auto ev = pop();
      handler(ev);
    }
    out.end_time = now_;
    out.dispatched = dispatched_ - start;
    return out;
  }

 private:
  struct Later {
    bool operator()(const Event<Msg>& a, const Event<Msg>& b) const {
      if (a.deliver_at != b.deliver_at) return a.deliver_at > b.deliver_at;
      return a.seq > b.seq;
    }
  };
  std::priority_queue<Event<Msg>, std::vector<Event<Msg>>, Later> queue_;
  SimTime now_ = 0.0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t dispatched_ = 0;
};

/// Event loop plus link model: messages between nodes arrive after a sampled
/// link delay, and never overtake an earlier message on the same link.
template <class Msg>
class Network {
 public:
  Network(LinkModel links, std::uint64_t seed) : links_(std::move(links)), rng_(seed) {}

  EventLoop<Msg>& loop() { return loop_; }
  const EventLoop<Msg>& loop() const { return loop_; }
  const LinkModel& links() const { return links_; }
  RngStreams& rng() { return rng_; }
  SimTime now() const { return loop_.now(); }

  SimTime send(const NodeId& from, const NodeId& to, Msg msg) {
    if (!links_.has_link(from, to)) throw SimError("no link " + from + " -> " + to);
    SimTime at = now() + links_.sample(from, to, now(), rng_.stream(from));
    auto& last = last_delivery_[{from, to}];
    at = std::max(at, last);
    last = at;
    loop_.schedule(at, from, to, std::move(msg));
    return at;
  }

  void timer(const NodeId& node, SimTime at, Msg msg) { loop_.schedule(at, node, node, std::move(msg)); }

  /// Mean of m round trips sampled at the current link schedule.
  double probe_delay(const NodeId& from, const NodeId& to, std::size_t m) {
    if (m == 0) throw SimError("probe count must be positive");
    auto& rng = rng_.stream(from);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      total += links_.sample(from, to, now(), rng) + links_.sample(to, from, now(), rng);
    }
    return total / static_cast<double>(m);
  }

 private:
  LinkModel links_;
  RngStreams rng_;
  EventLoop<Msg> loop_;
  std::map<std::pair<NodeId, NodeId>, SimTime> last_delivery_;
};

/// Line-delimited JSON trace: one {t, actor, ev, ...} object per line.
class Trace {
 public:
  void emit(SimTime t, const std::string& actor, const std::string& ev, nlohmann::ordered_json fields = {});
  const std::vector<std::string>& lines() const { return lines_; }
  std::size_t size() const { return lines_.size(); }
  void write(std::ostream& out) const;
  std::string str() const;

 private:
  std::vector<std::string> lines_;
};

}  // namespace autochain::simnet
