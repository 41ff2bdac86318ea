#include "autochain/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <set>

namespace autochain::config {

namespace {
std::string format_error(const std::string& field, const std::string& message, int line, int column) {
  std::string out;
  if (line >= 0) out += "line " + std::to_string(line) + ", column " + std::to_string(column) + ": ";
  if (!field.empty()) out += field + ": ";
  return out + message;
}
}  // namespace

ConfigError::ConfigError(const std::string& field, const std::string& message, int line, int column)
    : std::runtime_error(format_error(field, message, line, column)), field_(field), line_(line), column_(column) {}

std::string Directive::get(const std::string& key, const std::string& fallback) const {
  auto it = args.find(key);
  return it == args.end() ? fallback : it->second;
}

double Directive::number(const std::string& key, double fallback) const {
  auto it = args.find(key);
  if (it == args.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("script." + kind + "." + key, "expected a number, got '" + it->second + "'", line);
  }
}

bool Directive::flag(const std::string& key, bool fallback) const {
  auto it = args.find(key);
  if (it == args.end()) return fallback;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw ConfigError("script." + kind + "." + key, "expected true or false", line);
}

std::vector<std::string> ScenarioConfig::obm_ids() const {
  std::vector<std::string> out;
  for (const auto& o : obms) out.push_back(o.id);
  return out;
}

bool ScenarioConfig::has_node(const std::string& id) const {
  auto in = [&](const auto& list) {
    return std::any_of(list.begin(), list.end(), [&](const auto& x) { return x.id == id; });
  };
  return in(obms) || in(oems) || in(providers) || in(vehicles) || in(attackers) ||
         (insurer && insurer->id == id) || id == cloud_id;
}

namespace {

ConfigError error_at(const YAML::Node& node, const std::string& field, const std::string& message) {
  const auto mark = node.Mark();
  if (mark.is_null()) return ConfigError(field, message);
  return ConfigError(field, message, mark.line + 1, mark.column + 1);
}

void check_keys(const YAML::Node& node, const std::string& path, std::initializer_list<std::string_view> allowed) {
  if (!node.IsMap()) throw error_at(node, path, "expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw error_at(kv.first, path.empty() ? key : path + "." + key, "unknown field");
    }
  }
}

template <class T>
T read(const YAML::Node& parent, const std::string& key, const std::string& path, T fallback) {
  const YAML::Node node = parent[key];
  if (!node) return fallback;
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw error_at(node, path + key, "has the wrong type");
  }
}

template <class T>
T read_required(const YAML::Node& parent, const std::string& key, const std::string& path) {
  if (!parent[key]) throw error_at(parent, path + key, "is required");
  return read<T>(parent, key, path, T{});
}

double positive(const YAML::Node& parent, const std::string& key, const std::string& path, double fallback) {
  const double v = read<double>(parent, key, path, fallback);
  if (!(v > 0.0)) throw error_at(parent[key] ? parent[key] : parent, path + key, "must be positive");
  return v;
}

void load_ledger(const YAML::Node& n, LedgerConfig& out) {
  const std::string p = "ledger.";
  check_keys(n, "ledger",
             {"block_size", "block_period", "period_min", "period_max", "f_min", "trust_k", "utilization_low",
              "utilization_high", "dtm_window", "pending_timeout", "dtm"});
  auto& d = out.dtm;
  const auto size = read<long long>(n, "block_size", p, static_cast<long long>(d.block_size));
  if (size < 1) throw error_at(n["block_size"], p + "block_size", "must be >= 1");
  d.block_size = static_cast<std::size_t>(size);
  d.block_period = positive(n, "block_period", p, d.block_period);
  d.period_min = positive(n, "period_min", p, d.period_min);
  d.period_max = positive(n, "period_max", p, d.period_max);
  d.utilization_low = read<double>(n, "utilization_low", p, d.utilization_low);
  d.utilization_high = read<double>(n, "utilization_high", p, d.utilization_high);
  out.trust.f_min = read<double>(n, "f_min", p, out.trust.f_min);
  out.trust.k = positive(n, "trust_k", p, out.trust.k);
  if (out.trust.f_min <= 0.0 || out.trust.f_min > 1.0) throw error_at(n["f_min"], p + "f_min", "must be in (0, 1]");
  const auto window = read<long long>(n, "dtm_window", p, 1);
  if (window < 1) throw error_at(n["dtm_window"], p + "dtm_window", "must be >= 1");
  out.dtm_window = static_cast<std::size_t>(window);
  out.pending_timeout = positive(n, "pending_timeout", p, out.pending_timeout);
  out.dtm_enabled = read<bool>(n, "dtm", p, true);
  try {
    d.check();
  } catch (const std::invalid_argument& e) {
    throw error_at(n, "ledger", e.what());
  }
  if (d.block_period < d.period_min || d.block_period > d.period_max) {
    throw error_at(n, "ledger.block_period", "must lie within [period_min, period_max]");
  }
}

void load_network(const YAML::Node& n, NetworkConfig& out) {
  const std::string p = "network.";
  check_keys(n, "network", {"jitter", "obm_delay", "member_delay", "cloud_delay", "far_delay", "direct_delay", "links",
                               "schedule"});
  out.jitter = read<double>(n, "jitter", p, out.jitter);
  if (out.jitter < 0.0 || out.jitter >= 1.0) throw error_at(n["jitter"], p + "jitter", "must be in [0, 1)");
  out.obm_delay = positive(n, "obm_delay", p, out.obm_delay);
  out.member_delay = positive(n, "member_delay", p, out.member_delay);
  out.cloud_delay = positive(n, "cloud_delay", p, out.cloud_delay);
  out.far_delay = positive(n, "far_delay", p, out.far_delay);
  out.direct_delay = positive(n, "direct_delay", p, out.direct_delay);
  if (const auto links = n["links"]) {
    if (!links.IsSequence()) throw error_at(links, p + "links", "expected a list");
    for (std::size_t i = 0; i < links.size(); ++i) {
      const auto& l = links[i];
      const auto lp = p + "links[" + std::to_string(i) + "].";
      check_keys(l, lp, {"a", "b", "delay"});
      out.links.push_back({read_required<std::string>(l, "a", lp), read_required<std::string>(l, "b", lp),
                           positive(l, "delay", lp, 1.0)});
    }
  }
  if (const auto sched = n["schedule"]) {
    if (!sched.IsSequence()) throw error_at(sched, p + "schedule", "expected a list");
    for (std::size_t i = 0; i < sched.size(); ++i) {
      const auto& s = sched[i];
      const auto sp = p + "schedule[" + std::to_string(i) + "].";
      check_keys(s, sp, {"at", "a", "b", "delay"});
      out.schedule.push_back({read_required<double>(s, "at", sp), read_required<std::string>(s, "a", sp),
                              read_required<std::string>(s, "b", sp), positive(s, "delay", sp, 1.0)});
    }
  }
}

std::vector<ActorConfig> load_actors(const YAML::Node& n, const std::string& field, const std::string& prefix,
                                     const std::string& default_obm) {
  std::vector<ActorConfig> out;
  if (n.IsMap() && n["count"]) {
    check_keys(n, field, {"count", "obm"});
    const auto count = read<long long>(n, "count", field + ".", 0);
    if (count < 0) throw error_at(n["count"], field + ".count", "must be >= 0");
    const auto obm = read<std::string>(n, "obm", field + ".", default_obm);
    for (long long i = 1; i <= count; ++i) out.push_back({prefix + std::to_string(i), obm});
    return out;
  }
  auto one = [&](const YAML::Node& a, const std::string& path) {
    check_keys(a, path, {"id", "obm"});
    return ActorConfig{read_required<std::string>(a, "id", path + "."), read<std::string>(a, "obm", path + ".", default_obm)};
  };
  if (n.IsMap()) {
    out.push_back(one(n, field));
  } else if (n.IsSequence()) {
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(one(n[i], field + "[" + std::to_string(i) + "]"));
  } else {
    throw error_at(n, field, "expected a mapping or a list");
  }
  return out;
}

void load_vehicles(const YAML::Node& n, ScenarioConfig& cfg) {
  const std::string p = "vehicles.";
  check_keys(n, "vehicles",
             {"count", "oem", "obm", "list", "anchor_interval", "backup_interval", "backup_batch", "record_interval",
              "handover_threshold", "hysteresis", "probe_count", "handover_check_interval",
              "rotate_per_interaction", "wrsu_accounts"});
  auto& d = cfg.vehicle_defaults;
  d.anchor_interval = positive(n, "anchor_interval", p, d.anchor_interval);
  d.backup_interval = read<double>(n, "backup_interval", p, d.backup_interval);
  d.backup_batch = read<std::size_t>(n, "backup_batch", p, d.backup_batch);
  d.record_interval = read<double>(n, "record_interval", p, d.record_interval);
  d.handover_threshold = positive(n, "handover_threshold", p, d.handover_threshold);
  d.hysteresis = read<double>(n, "hysteresis", p, d.hysteresis);
  if (d.hysteresis < 0.0 || d.hysteresis >= 1.0) throw error_at(n["hysteresis"], p + "hysteresis", "must be in [0, 1)");
  const auto probes = read<long long>(n, "probe_count", p, static_cast<long long>(d.probe_count));
  if (probes < 1) throw error_at(n["probe_count"], p + "probe_count", "must be >= 1");
  d.probe_count = static_cast<std::size_t>(probes);
  d.handover_check_interval = read<double>(n, "handover_check_interval", p, d.handover_check_interval);
  d.rotate_per_interaction = read<bool>(n, "rotate_per_interaction", p, d.rotate_per_interaction);
  d.wrsu_accounts = read<bool>(n, "wrsu_accounts", p, d.wrsu_accounts);

  const auto default_oem = read<std::string>(n, "oem", p, cfg.oems.empty() ? "" : cfg.oems.front().id);
  const auto placement = read<std::string>(n, "obm", p, "round_robin");
  const auto count = read<long long>(n, "count", p, 0);
  if (count < 0) throw error_at(n["count"], p + "count", "must be >= 0");
  for (long long i = 0; i < count; ++i) {
    std::string obm = placement;
    if (placement == "round_robin" && !cfg.obms.empty()) obm = cfg.obms[static_cast<std::size_t>(i) % cfg.obms.size()].id;
    cfg.vehicles.push_back({"v" + std::to_string(i + 1), obm, default_oem});
  }
  if (const auto list = n["list"]) {
    if (!list.IsSequence()) throw error_at(list, p + "list", "expected a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto& v = list[i];
      const auto vp = p + "list[" + std::to_string(i) + "].";
      check_keys(v, vp, {"id", "obm", "oem"});
      cfg.vehicles.push_back({read_required<std::string>(v, "id", vp), read_required<std::string>(v, "obm", vp),
                              read<std::string>(v, "oem", vp, default_oem)});
    }
  }
}

std::string scalar_text(const YAML::Node& n) {
  if (n.IsScalar()) return n.as<std::string>();
  throw error_at(n, "", "expected a scalar");
}

void load_script(const YAML::Node& n, ScenarioConfig& cfg) {
  if (!n.IsSequence()) throw error_at(n, "script", "expected a list");
  for (std::size_t i = 0; i < n.size(); ++i) {
    const auto& s = n[i];
    const auto sp = "script[" + std::to_string(i) + "]";
    if (!s.IsMap()) throw error_at(s, sp, "expected a mapping");
    Directive d;
    d.line = s.Mark().is_null() ? -1 : s.Mark().line + 1;
    d.at = read<double>(s, "at", sp + ".", 0.0);
    d.kind = read_required<std::string>(s, "do", sp + ".");
    for (const auto& kv : s) {
      const auto key = kv.first.as<std::string>();
      if (key == "at" || key == "do") continue;
      if (kv.second.IsSequence()) {
        for (const auto& item : kv.second) d.list.push_back(scalar_text(item));
        d.args[key] = "<list>";
      } else if (kv.second.IsScalar()) {
        d.args[key] = kv.second.as<std::string>();
      } else {
        throw error_at(kv.second, sp + "." + key, "expected a scalar or a list");
      }
    }
    cfg.script.push_back(std::move(d));
  }
  std::stable_sort(cfg.script.begin(), cfg.script.end(), [](const Directive& a, const Directive& b) { return a.at < b.at; });
}

ScenarioConfig load_node(const YAML::Node& root) {
  ScenarioConfig cfg;
  if (!root.IsMap()) throw error_at(root, "", "top level must be a mapping");
  check_keys(root, "",
             {"name", "seed", "duration", "max_time", "ledger", "network", "obms", "oems", "oem", "providers",
              "insurer", "cloud", "vehicles", "attackers", "script", "expect"});
  cfg.name = read<std::string>(root, "name", "", "scenario");
  cfg.seed = read<std::uint64_t>(root, "seed", "", 1);
  cfg.duration = positive(root, "duration", "", cfg.duration);
  cfg.max_time = positive(root, "max_time", "", std::max(cfg.max_time, cfg.duration * 10));
  if (cfg.max_time < cfg.duration) throw error_at(root["max_time"], "max_time", "must be >= duration");
  if (const auto l = root["ledger"]) load_ledger(l, cfg.ledger);
  if (const auto nw = root["network"]) load_network(nw, cfg.network);

  const auto obms = root["obms"];
  if (!obms) throw error_at(root, "obms", "is required");
  if (obms.IsScalar()) {
    const auto count = read<long long>(root, "obms", "", 0);
    if (count < 1) throw error_at(obms, "obms", "must be >= 1");
    for (long long i = 1; i <= count; ++i) cfg.obms.push_back({"obm" + std::to_string(i), false});
  } else if (obms.IsSequence()) {
    for (std::size_t i = 0; i < obms.size(); ++i) {
      const auto& o = obms[i];
      const auto op = "obms[" + std::to_string(i) + "]";
      if (o.IsScalar()) {
        cfg.obms.push_back({o.as<std::string>(), false});
        continue;
      }
      check_keys(o, op, {"id", "byzantine"});
      cfg.obms.push_back({read_required<std::string>(o, "id", op + "."), read<bool>(o, "byzantine", op + ".", false)});
    }
  } else {
    throw error_at(obms, "obms", "expected a count or a list");
  }
  const std::string first_obm = cfg.obms.empty() ? "" : cfg.obms.front().id;

  if (root["oem"] && root["oems"]) throw error_at(root["oems"], "oems", "give either oem or oems");
  if (const auto o = root["oem"]) cfg.oems = load_actors(o, "oem", "oem", first_obm);
  if (const auto o = root["oems"]) cfg.oems = load_actors(o, "oems", "oem", first_obm);
  if (const auto pr = root["providers"]) cfg.providers = load_actors(pr, "providers", "provider", first_obm);
  if (const auto ins = root["insurer"]) {
    auto list = load_actors(ins, "insurer", "insurer", first_obm);
    if (list.size() != 1) throw error_at(ins, "insurer", "exactly one insurer");
    cfg.insurer = list.front();
  }
  cfg.cloud_id = read<std::string>(root, "cloud", "", cfg.cloud_id);
  if (const auto v = root["vehicles"]) load_vehicles(v, cfg);
  if (const auto a = root["attackers"]) cfg.attackers = load_actors(a, "attackers", "atk", first_obm);
  if (const auto s = root["script"]) load_script(s, cfg);
  if (const auto e = root["expect"]) {
    if (!e.IsMap()) throw error_at(e, "expect", "expected a mapping");
    for (const auto& kv : e) cfg.expect[kv.first.as<std::string>()] = scalar_text(kv.second);
  }
  validate(cfg);
  return cfg;
}

}  // namespace

void validate(const ScenarioConfig& cfg) {
  if (cfg.obms.empty()) throw ConfigError("obms", "at least one OBM is required");
  std::set<std::string> ids;
  auto unique = [&](const std::string& id, const std::string& field) {
    if (id.empty()) throw ConfigError(field, "id must not be empty");
    if (!ids.insert(id).second) throw ConfigError(field, "duplicate node id '" + id + "'");
  };
  std::set<std::string> obm_set;
  for (const auto& o : cfg.obms) {
    unique(o.id, "obms");
    obm_set.insert(o.id);
  }
  auto placed = [&](const ActorConfig& a, const std::string& field) {
    unique(a.id, field);
    if (!obm_set.contains(a.obm)) throw ConfigError(field, "'" + a.id + "' references unknown OBM '" + a.obm + "'");
  };
  for (const auto& a : cfg.oems) placed(a, "oems");
  for (const auto& a : cfg.providers) placed(a, "providers");
  if (cfg.insurer) placed(*cfg.insurer, "insurer");
  for (const auto& a : cfg.attackers) placed(a, "attackers");
  unique(cfg.cloud_id, "cloud");
  std::set<std::string> oem_set;
  for (const auto& o : cfg.oems) oem_set.insert(o.id);
  for (const auto& v : cfg.vehicles) {
    placed(ActorConfig{v.id, v.obm}, "vehicles");
    if (!oem_set.contains(v.oem)) throw ConfigError("vehicles", "'" + v.id + "' must be bound to a configured OEM");
  }
  for (const auto& l : cfg.network.links) {
    if (!cfg.has_node(l.a) || !cfg.has_node(l.b)) throw ConfigError("network.links", "unknown node in link " + l.a + " <-> " + l.b);
  }
  for (const auto& s : cfg.network.schedule) {
    if (!cfg.has_node(s.a) || !cfg.has_node(s.b)) throw ConfigError("network.schedule", "unknown node in " + s.a + " <-> " + s.b);
  }

  // Period ticks are broadcast; they must land before the next one fires.
  double max_obm_delay = cfg.network.obm_delay;
  for (const auto& l : cfg.network.links) {
    if (obm_set.contains(l.a) && obm_set.contains(l.b)) max_obm_delay = std::max(max_obm_delay, l.delay);
  }
  if (cfg.obms.size() > 1 && max_obm_delay * (1.0 + cfg.network.jitter) >= cfg.ledger.dtm.period_min) {
    throw ConfigError("ledger.period_min", "must exceed the largest OBM-to-OBM delay including jitter");
  }

  static const std::set<std::string> kinds = {
      "publish_update", "tamper_cloud_object", "impersonate", "start_ddos", "open_account", "close_account",
      "cloud_upload",   "trigger_accident",    "move_vehicle", "send_message", "load",      "rotate_keys"};
  for (const auto& d : cfg.script) {
    const auto field = "script(line " + std::to_string(d.line) + ")";
    if (!kinds.contains(d.kind)) throw ConfigError(field, "unknown directive '" + d.kind + "'", d.line);
    if (d.at < 0.0 || d.at > cfg.duration) throw ConfigError(field, "'at' must lie within [0, duration]", d.line);
    for (const auto& key : {"provider", "vehicle", "attacker", "target", "obm", "oem", "from", "to"}) {
      auto it = d.args.find(key);
      if (it != d.args.end() && !cfg.has_node(it->second)) {
        throw ConfigError(field, std::string(key) + " '" + it->second + "' does not exist", d.line);
      }
    }
    if (d.kind == "start_ddos" && !d.args.contains("target")) throw ConfigError(field, "start_ddos needs a target", d.line);
    if (d.kind == "move_vehicle" && (!d.args.contains("vehicle") || !d.args.contains("obm"))) {
      throw ConfigError(field, "move_vehicle needs vehicle and obm", d.line);
    }
    if ((d.kind == "open_account" || d.kind == "close_account" || d.kind == "trigger_accident") && !cfg.insurer) {
      throw ConfigError(field, d.kind + " needs an insurer", d.line);
    }
    if (d.kind == "publish_update" && cfg.providers.empty()) throw ConfigError(field, "publish_update needs a provider", d.line);
    if (d.kind == "load") d.number("rate", 1.0);
  }
}

ScenarioConfig load_string(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  return load_node(root);
}

ScenarioConfig load_file(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("", "cannot read " + path);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  return load_node(root);
}

}  // namespace autochain::config
