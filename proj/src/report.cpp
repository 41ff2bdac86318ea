#include "autochain/report.hpp"

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <set>
#include <sstream>

#include "autochain/records.hpp"

namespace autochain::report {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<std::string> kUpdateRejections = {"InvalidTransaction", "NotFromMyOem", "HashMismatch",
                                                    "CloudAuthFailed", "DownloadMissing"};
const std::vector<std::string> kApprovalErrors = {"NotAddressedToMe", "BadProviderSignature", "DigestMismatch",
                                                  "DownloadFailed"};
const std::vector<std::string> kClaimErrors = {"AnchorNotFound", "KeyNotRegistered", "DigestMismatch"};
const std::vector<std::string> kCloudErrors = {"UnknownAccount", "BadProof", "AccessDenied", "NotFound"};
const std::vector<std::string> kDropReasons = {"invalid", "duplicate", "no_match"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

double mean(const std::vector<double>& xs, std::size_t from, std::size_t to) {
  double sum = 0.0;
  for (std::size_t i = from; i < to; ++i) sum += xs[i];
  return to > from ? sum / static_cast<double>(to - from) : 0.0;
}

struct RecordLine {
  double ts;
  RecordCategory cat;
  Bytes payload;
};

}  // namespace

bool ScenarioReport::passed() const {
  return std::all_of(expectations.begin(), expectations.end(), [](const auto& e) { return e.passed; });
}

const ordered_json& ScenarioReport::metric(const std::string& name) const {
  static const ordered_json null_value;
  auto it = metrics.find(name);
  return it == metrics.end() ? null_value : *it;
}

bool check_expectation(const ordered_json& actual, std::string_view expected) {
  expected = trim(expected);
  std::string op = "==";
  for (const char* candidate : {">=", "<=", "==", ">", "<"}) {
    if (expected.starts_with(candidate)) {
      op = candidate;
      expected = trim(expected.substr(op.size()));
      break;
    }
  }
  if (actual.is_null()) return false;
  if (actual.is_boolean()) {
    if (op != "==") return false;
    return (expected == "true" && actual.get<bool>()) || (expected == "false" && !actual.get<bool>());
  }
  if (actual.is_number()) {
    const auto rhs = parse_number(expected);
    if (!rhs) return false;
    const double lhs = actual.get<double>();
    const double eps = 1e-9 * std::max(1.0, std::abs(*rhs));
    if (op == ">=") return lhs >= *rhs - eps;
    if (op == "<=") return lhs <= *rhs + eps;
    if (op == ">") return lhs > *rhs;
    if (op == "<") return lhs < *rhs;
    return std::abs(lhs - *rhs) <= eps;
  }
  if (op != "==") return false;
  return actual.is_string() ? actual.get<std::string>() == expected : actual.dump() == expected;
}

ScenarioReport build_report(std::string_view trace_text) {
  std::vector<json> events;
  {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < trace_text.size()) {
      auto end = trace_text.find('\n', pos);
      if (end == std::string_view::npos) end = trace_text.size();
      const auto line = trim(trace_text.substr(pos, end - pos));
      pos = end + 1;
      ++line_no;
      if (line.empty()) continue;
      try {
        events.push_back(json::parse(line));
      } catch (const json::exception& e) {
        throw TraceError("trace line " + std::to_string(line_no) + ": " + e.what());
      }
      const auto& ev = events.back();
      if (!ev.contains("t") || !ev.contains("actor") || !ev.contains("ev"))
        throw TraceError("trace line " + std::to_string(line_no) + ": missing t/actor/ev");
    }
  }

  ScenarioReport rep;
  std::map<std::string, std::string> expect;
  std::vector<std::string> vehicles;
  std::size_t block_size = 0;
  double util_low = 0.0, util_high = 0.0;

  std::map<std::string, std::string> role_of;
  std::set<std::string> attacker_pks;
  std::set<std::string> honest_obms;

  std::set<std::string> published_digests;
  std::set<std::string> impersonation_ids;
  std::size_t installs = 0, installs_digest_match = 0, forged_installs = 0;
  std::set<std::string> installed_vehicles;
  std::map<std::string, std::size_t> rejections, approval_rejections, claim_rejections, upload_denied, drops;
  std::map<std::string, std::set<std::string>> rejected_vehicles;
  std::vector<std::pair<std::string, std::string>> countersigned;  // (pending t_id, signed t_id)
  std::size_t forged_countersignatures = 0;
  std::vector<json> pending_countersigned;  // resolved after attacker pks are known

  std::set<std::string> attack_ids, attack_dropped;
  std::set<std::string> ddos_targets;
  std::vector<std::pair<std::string, std::string>> deliveries;  // (t_id, to)

  struct SentMessage {
    std::string t_id;
    std::string to;
    double t;
  };
  std::vector<SentMessage> messages;
  std::size_t messages_received = 0;

  std::vector<std::tuple<double, std::string, std::string, std::string>> handovers;  // (t, vehicle, old, new)

  std::size_t claims_accepted = 0, claims_filed = 0, uploads = 0;

  std::map<std::string, std::vector<RecordLine>> records;
  std::size_t anchors = 0, anchors_sound = 0;

  std::map<std::pair<std::string, std::string>, std::vector<double>> verification;  // (receiver, generator)
  std::size_t blocks_rejected = 0;

  std::vector<std::pair<double, double>> load_steps;  // (t, multiple)
  std::vector<std::pair<double, double>> periods;      // (t, utilization)

  std::vector<json> obm_finals;
  std::map<std::string, std::string> final_obm_of;
  std::map<std::string, std::size_t> oem_countersigned_final;
  std::optional<bool> quiescent;

  for (const auto& e : events) {
    const std::string ev = e["ev"];
    const std::string actor = e["actor"];
    const double t = e["t"];
    if (ev == "scenario_start") {
      rep.name = e.value("name", "");
      rep.seed = e.value("seed", std::uint64_t{0});
      const json listed = e.value("vehicles", json::array());
      for (const auto& v : listed) vehicles.push_back(v);
      block_size = e.value("block_size", std::size_t{0});
      util_low = e.value("utilization_low", 0.0);
      util_high = e.value("utilization_high", 0.0);
      const json declared = e.value("expect", json::object());
      for (const auto& [k, v] : declared.items()) expect[k] = v.get<std::string>();
    } else if (ev == "actor") {
      const std::string role = e["role"];
      role_of[actor] = role;
      if (role == "attacker") attacker_pks.insert(e["pk"].get<std::string>());
      if (role == "obm" && !e.value("byzantine", false)) honest_obms.insert(actor);
    } else if (ev == "publish") {
      published_digests.insert(e["digest"].get<std::string>());
    } else if (ev == "impersonation_tx") {
      impersonation_ids.insert(e["t_id"].get<std::string>());
    } else if (ev == "installed") {
      ++installs;
      installed_vehicles.insert(actor);
      if (published_digests.contains(e["digest"].get<std::string>())) ++installs_digest_match;
      if (impersonation_ids.contains(e["t_id"].get<std::string>())) ++forged_installs;
    } else if (ev == "update_rejected") {
      const std::string reason = e["reason"];
      ++rejections[reason];
      rejected_vehicles[reason].insert(actor);
    } else if (ev == "approval_rejected") {
      ++approval_rejections[e["reason"].get<std::string>()];
    } else if (ev == "countersigned") {
      pending_countersigned.push_back(e);
    } else if (ev == "attack_tx") {
      attack_ids.insert(e["t_id"].get<std::string>());
    } else if (ev == "ddos_start") {
      ddos_targets.insert(e["target"].get<std::string>());
    } else if (ev == "drop") {
      const std::string id = e["t_id"];
      ++drops[e["reason"].get<std::string>()];
      if (attack_ids.contains(id)) attack_dropped.insert(id);
    } else if (ev == "deliver") {
      deliveries.emplace_back(e["t_id"], e["to"]);
    } else if (ev == "message_sent") {
      messages.push_back({e["t_id"], e["to"], t});
    } else if (ev == "message_received") {
      ++messages_received;
    } else if (ev == "handover") {
      handovers.emplace_back(t, actor, e["old"], e["new"]);
    } else if (ev == "claim_filed") {
      ++claims_filed;
    } else if (ev == "claim_accepted") {
      ++claims_accepted;
    } else if (ev == "claim_rejected") {
      ++claim_rejections[e["reason"].get<std::string>()];
    } else if (ev == "insurance_upload") {
      ++uploads;
    } else if (ev == "insurance_upload_denied") {
      ++upload_denied[e["reason"].get<std::string>()];
    } else if (ev == "record") {
      const auto cat = parse_record_category(e["cat"].get<std::string>());
      if (!cat) throw TraceError("unknown record category");
      records[actor].push_back({e["ts"], *cat, from_hex(e["payload"].get<std::string>())});
    } else if (ev == "anchor" || ev == "backup") {
      ++anchors;
      const auto& rs = records[actor];
      const std::size_t start = e["start"], count = e["count"];
      if (start + count <= rs.size()) {
        std::vector<StorageRecord> slice;
        for (std::size_t i = start; i < start + count; ++i) slice.push_back({rs[i].ts, rs[i].cat, rs[i].payload});
        if (store_digest(slice).hex() == e["digest"].get<std::string>()) ++anchors_sound;
      }
    } else if (ev == "block_appended") {
      if (block_size == 0 || e["n_tx"].get<std::size_t>() == block_size)
        verification[{actor, e["generator"]}].push_back(e["verification_count"].get<double>());
    } else if (ev == "block_rejected") {
      ++blocks_rejected;
    } else if (ev == "load_start") {
      load_steps.emplace_back(t, e["multiple"].get<double>());
    } else if (ev == "period") {
      periods.emplace_back(t, e["utilization"].get<double>());
      rep.utilization.push_back(e["utilization"].get<double>());
    } else if (ev == "obm_final") {
      obm_finals.push_back(e);
    } else if (ev == "vehicle_final") {
      final_obm_of[actor] = e["obm"];
    } else if (ev == "oem_final") {
      oem_countersigned_final[actor] = e["countersigned"];
    } else if (ev == "scenario_end") {
      quiescent = e["quiescent"].get<bool>();
    }
  }

  for (const auto& e : pending_countersigned) {
    const std::string id = e["t_id"], pk = e["pk_1"];
    countersigned.emplace_back(id, e["signed_t_id"]);
    if (attacker_pks.contains(pk) || impersonation_ids.contains(id)) ++forged_countersignatures;
  }

  auto& m = rep.metrics;
  m["trace_lines"] = events.size();
  m["quiescent"] = quiescent.value_or(false);
  m["vehicles"] = vehicles.size();

  // Software update flow.
  m["installs"] = installs;
  m["installed_vehicles"] = installed_vehicles.size();
  m["installs_digest_match"] = installs_digest_match;
  m["forged_installs"] = forged_installs;
  for (const auto& r : kUpdateRejections) {
    m["rejections." + r] = rejections[r];
    m["rejected_vehicles." + r] = rejected_vehicles[r].size();
  }
  for (const auto& r : kApprovalErrors) m["approval_rejections." + r] = approval_rejections[r];
  m["oem_countersignatures"] = countersigned.size();
  m["forged_countersignatures"] = forged_countersignatures;
  {
    std::size_t in_all = 0;
    for (const auto& [pending, signed_id] : countersigned) {
      bool everywhere = !obm_finals.empty();
      for (const auto& f : obm_finals) {
        const auto& sw = f["sw_updates"];
        if (std::find(sw.begin(), sw.end(), signed_id) == sw.end()) everywhere = false;
      }
      if (everywhere) ++in_all;
    }
    m["update_in_all_chains"] = in_all;
  }

  // Chains.
  {
    bool valid = !obm_finals.empty(), identical = !obm_finals.empty();
    std::uint64_t min_height = obm_finals.empty() ? 0 : UINT64_MAX;
    std::uint64_t final_drops = 0;
    std::uint64_t stored_tx = obm_finals.empty() ? 0 : UINT64_MAX;
    for (const auto& f : obm_finals) {
      valid = valid && f["chain_valid"].get<bool>();
      identical = identical && f["chain_digest"] == obm_finals.front()["chain_digest"];
      min_height = std::min(min_height, f["height"].get<std::uint64_t>());
      stored_tx = std::min(stored_tx, f["tx_count"].get<std::uint64_t>());
      for (const auto& [k, v] : f["drops"].items()) final_drops += v.get<std::uint64_t>();
    }
    m["blocks"] = min_height;
    m["stored_tx"] = stored_tx;
    m["chains_valid"] = valid;
    m["chains_identical"] = identical;
    m["blocks_rejected"] = blocks_rejected;
    std::uint64_t drop_total = 0;
    for (const auto& r : kDropReasons) {
      m["drops." + r] = drops[r];
      drop_total += drops[r];
    }
    m["drops.total"] = drop_total;
    m["drops_reconciled"] = drop_total == final_drops;
  }

  // Attack traffic.
  m["attack_tx"] = attack_ids.size();
  m["attack_dropped"] = attack_dropped.size();
  {
    std::size_t to_target = 0;
    for (const auto& [id, to] : deliveries)
      if (attack_ids.contains(id) && ddos_targets.contains(to)) ++to_target;
    m["target_attack_deliveries"] = to_target;
  }

  // Addressed messages.
  {
    std::size_t once = 0, post_sent = 0, post_once = 0;
    for (const auto& msg : messages) {
      const auto n = std::count(deliveries.begin(), deliveries.end(), std::make_pair(msg.t_id, msg.to));
      if (n == 1) ++once;
      const bool after_handover = std::any_of(handovers.begin(), handovers.end(), [&](const auto& h) {
        return std::get<1>(h) == msg.to && std::get<0>(h) <= msg.t;
      });
      if (after_handover) {
        ++post_sent;
        if (n == 1) ++post_once;
      }
    }
    m["messages_sent"] = messages.size();
    m["messages_delivered_once"] = once;
    m["messages_countersigned"] = messages_received;
    m["message_delivery_rate"] = messages.empty() ? 1.0 : static_cast<double>(once) / static_cast<double>(messages.size());
    m["post_handover_messages"] = post_sent;
    m["post_handover_delivered_once"] = post_once;
  }

  // Handover.
  m["handovers"] = handovers.size();
  {
    std::size_t stale = 0;
    for (const auto& f : obm_finals) {
      const std::string obm = f["actor"];
      for (const auto& [member, count] : f["keylist"].items()) {
        auto it = final_obm_of.find(member);
        if (it != final_obm_of.end() && it->second != obm) stale += count.get<std::size_t>();
      }
    }
    m["stale_keylist_entries"] = stale;
  }

  // Insurance.
  m["claims_filed"] = claims_filed;
  m["claims_accepted"] = claims_accepted;
  for (const auto& r : kClaimErrors) m["claims_rejected." + r] = claim_rejections[r];
  m["insurance_uploads"] = uploads;
  for (const auto& r : kCloudErrors) m["insurance_upload_denied." + r] = upload_denied[r];
  m["anchors"] = anchors;
  m["anchors_sound"] = anchors_sound;

  // Verification effort per generator, as seen by each receiver.
  {
    std::size_t pairs = 0, min_blocks = 0;
    double first_sum = 0.0, last_sum = 0.0, worst_ratio = 0.0;
    for (const auto& [key, counts] : verification) {
      const auto third = counts.size() / 3;
      if (third == 0) continue;
      const double first = mean(counts, 0, third);
      const double last = mean(counts, counts.size() - third, counts.size());
      min_blocks = pairs == 0 ? counts.size() : std::min(min_blocks, counts.size());
      ++pairs;
      first_sum += first;
      last_sum += last;
      worst_ratio = std::max(worst_ratio, first > 0 ? last / first : 0.0);
    }
    m["verification_pairs"] = pairs;
    m["verification_blocks_min"] = min_blocks;
    m["verification_first_third"] = pairs ? first_sum / static_cast<double>(pairs) : 0.0;
    m["verification_last_third"] = pairs ? last_sum / static_cast<double>(pairs) : 0.0;
    m["verification_ratio"] = pairs ? ordered_json(worst_ratio) : ordered_json();
  }

  // DTM: periods after the last upward load step until utilization is back in band.
  {
    m["periods"] = periods.size();
    std::size_t in_band = 0;
    for (const auto& [t, u] : periods)
      if (u >= util_low - 1e-9 && u <= util_high + 1e-9) ++in_band;
    m["periods_in_band"] = in_band;
    ordered_json reentry;
    if (!load_steps.empty()) {
      auto step = load_steps.front();
      for (std::size_t i = 1; i < load_steps.size(); ++i)
        if (load_steps[i].second > load_steps[i - 1].second) step = load_steps[i];
      // Counted from the step; 0 when utilization never leaves the band.
      std::size_t k = 0;
      bool left = false;
      for (const auto& [t, u] : periods) {
        if (t <= step.first) continue;
        ++k;
        const bool inside = u >= util_low - 1e-9 && u <= util_high + 1e-9;
        if (!inside) left = true;
        if (inside && left) {
          reentry = k;
          break;
        }
      }
      if (!left) reentry = 0;
    }
    m["dtm_reentry_periods"] = reentry;
  }

  for (const auto& [metric, expected] : expect) {
    const auto& actual = rep.metric(metric);
    rep.expectations.push_back({metric, expected, actual, check_expectation(actual, expected)});
  }
  return rep;
}

std::string format_plain(const ScenarioReport& report) {
  std::ostringstream out;
  out << "scenario " << report.name << " (seed " << report.seed << ")\n";
  std::size_t width = 0;
  for (const auto& [k, v] : report.metrics.items()) width = std::max(width, k.size());
  for (const auto& [k, v] : report.metrics.items()) {
    out << "  " << std::left << std::setw(static_cast<int>(width)) << k << "  " << v.dump() << "\n";
  }
  if (!report.expectations.empty()) out << "expectations\n";
  for (const auto& e : report.expectations) {
    out << "  " << (e.passed ? "PASS" : "FAIL") << "  " << e.metric << "  expected " << e.expected << "  actual "
        << e.actual.dump() << "\n";
  }
  out << (report.passed() ? "PASS" : "FAIL") << "\n";
  return out.str();
}

ordered_json to_json(const ScenarioReport& report) {
  ordered_json out;
  out["name"] = report.name;
  out["seed"] = report.seed;
  out["passed"] = report.passed();
  out["metrics"] = report.metrics;
  out["utilization"] = report.utilization;
  ordered_json exp = ordered_json::array();
  for (const auto& e : report.expectations)
    exp.push_back({{"metric", e.metric}, {"expected", e.expected}, {"actual", e.actual}, {"passed", e.passed}});
  out["expectations"] = exp;
  return out;
}

}  // namespace autochain::report
