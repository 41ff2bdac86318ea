#include "autochain/simnet.hpp"

#include <algorithm>
#include <sstream>

namespace autochain::simnet {

void LinkModel::set_link(const NodeId& a, const NodeId& b, double delay) {
  set_directed(a, b, delay);
  set_directed(b, a, delay);
}

void LinkModel::set_directed(const NodeId& from, const NodeId& to, double delay) {
  if (!(delay > 0.0)) throw SimError("link delay must be positive: " + from + " -> " + to);
  base_[{from, to}] = delay;
}

void LinkModel::schedule(const NodeId& a, const NodeId& b, SimTime at, double delay) {
  if (!(delay > 0.0)) throw SimError("scheduled delay must be positive: " + a + " <-> " + b);
  for (const auto& key : {Key{a, b}, Key{b, a}}) {
    auto& entries = schedule_[key];
    entries.emplace_back(at, delay);
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
  }
}

double LinkModel::base_delay(const NodeId& from, const NodeId& to, SimTime now) const {
  auto it = base_.find({from, to});
  if (it == base_.end()) throw SimError("no link " + from + " -> " + to);
  double delay = it->second;
  if (auto s = schedule_.find({from, to}); s != schedule_.end()) {
    for (const auto& [at, d] : s->second) {
      if (at > now) break;
      delay = d;
    }
  }
  return delay;
}

double LinkModel::sample(const NodeId& from, const NodeId& to, SimTime now, std::mt19937_64& rng) const {
  const double base = base_delay(from, to, now);
  if (jitter_ <= 0.0) return base;
  std::uniform_real_distribution<double> u(0.0, jitter_);
  return base * (1.0 + u(rng));
}

double LinkModel::max_delay_among(const std::vector<NodeId>& nodes) const {
  double out = 0.0;
  for (const auto& a : nodes) {
    for (const auto& b : nodes) {
      if (a == b) continue;
      if (auto it = base_.find({a, b}); it != base_.end()) out = std::max(out, it->second);
      if (auto s = schedule_.find({a, b}); s != schedule_.end()) {
        for (const auto& e : s->second) out = std::max(out, e.second);
      }
    }
  }
  return out;
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

std::mt19937_64& RngStreams::stream(const NodeId& node) {
  auto it = streams_.find(node);
  if (it == streams_.end()) it = streams_.emplace(node, std::mt19937_64(derive_seed(seed_, node))).first;
  return it->second;
}

void Trace::emit(SimTime t, const std::string& actor, const std::string& ev, nlohmann::ordered_json fields) {
  nlohmann::ordered_json line;
  line["t"] = t;
  line["actor"] = actor;
  line["ev"] = ev;
  if (fields.is_object()) {
    for (auto& [k, v] : fields.items()) line[k] = std::move(v);
  }
  lines_.push_back(line.dump());
}

void Trace::write(std::ostream& out) const {
  for (const auto& l : lines_) out << l << '\n';
}

std::string Trace::str() const {
  std::ostringstream out;
  write(out);
  return out.str();
}

}  // namespace autochain::simnet
