#include "autochain/world.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <variant>

#include "autochain/records.hpp"

namespace autochain::world {

namespace {

using ledger::Block;
using ledger::Transaction;
using ledger::TxHead;
using nlohmann::ordered_json;
using simnet::NodeId;

struct SubmitTx {
  Transaction tx;
};
struct PeerTx {
  Transaction tx;
};
struct DeliverTx {
  Transaction tx;
  obm::DeliveryKind kind;
};
struct BlockMsg {
  Block block;
};
struct BlockNotice {
  std::vector<TxHead> heads;
};
struct KeyUpload {
  std::vector<vehicle::AccessPair> pairs;
};
struct Disconnect {};
struct CloudHello {
  std::uint64_t req = 0;
  std::string account;
};
struct CloudChallengeMsg {
  std::uint64_t req = 0;
  cloud::Challenge challenge;
  std::optional<cloud::CloudError> error;
};
struct CloudProof {
  std::uint64_t req = 0;
  std::string account;
  cloud::Proof proof;
  bool put = false;
  std::string object_id;
  Bytes data;
};
struct CloudResult {
  std::uint64_t req = 0;
  std::optional<cloud::CloudError> error;
  Bytes data;
};
struct AccountGrant {
  vehicle::CloudAccount account;
  crypto::PublicKey insurer_pk;
  double upload_interval = 0.0;
};
struct ClaimMsg {
  actors::Claim claim;
};

enum class TimerKind { PeriodTick, Directive, Anchor, Backup, Record, HandoverCheck, LoadTx, DdosTx, Upload, MessageTimeout };
struct Timer {
  TimerKind kind;
  std::uint64_t arg = 0;
};

using Msg = std::variant<SubmitTx, PeerTx, DeliverTx, BlockMsg, BlockNotice, KeyUpload, Disconnect, CloudHello,
                         CloudChallengeMsg, CloudProof, CloudResult, AccountGrant, ClaimMsg, Timer>;

enum class Role { Obm, Vehicle, Oem, Provider, Insurer, Attacker, Cloud };

const NodeId kOverlay = "overlay";
const NodeId kScript = "script";

enum class Purpose { ProviderPublish, OemApproval, VehicleInstall, InsuranceUpload };

struct CloudOp {
  NodeId requester;
  std::string account;
  crypto::KeyPair key;
  bool put = false;
  std::string object_id;
  Bytes data;
  Purpose purpose = Purpose::VehicleInstall;
  Transaction tx;
  UpdatePackage package;
  crypto::PublicKey oem_pk;
  std::size_t records = 0;
};

struct VehicleRt {
  std::size_t index = 0;
  bool anchor_deferred = false;
  bool claim_requested = false;
  bool tamper_claim = false;
  std::size_t tamper_index = 0;
  std::optional<crypto::Digest> claim_anchor;
  std::string claim_account;
  double upload_interval = 0.0;
  bool uploading = false;
  std::size_t uploaded_records = 0;
  std::uint64_t upload_seq = 0;
  std::set<crypto::Digest> installing;
};

struct PublishRequest {
  UpdatePackage package;
  crypto::PublicKey oem_pk;
};

struct ProviderRt {
  std::deque<PublishRequest> queue;
  bool busy = false;
};

struct OemRt {
  std::deque<std::pair<NodeId, crypto::Digest>> outbox;
  std::uint64_t outstanding = 0;  // message sequence number, 0 when idle
  std::uint64_t sequence = 0;
};

struct Attacker {
  crypto::KeyPair key;
  NodeId obm;
};

struct DdosState {
  std::vector<NodeId> attackers;
  NodeId target;
  std::size_t per_attacker = 0;
  std::size_t rounds_sent = 0;
  double interval = 0.1;
};

struct LoadState {
  double until = 0.0;
  double interval = 1.0;
};

std::string hex(const crypto::Digest& d) { return d.hex(); }
std::string hex(const crypto::PublicKey& k) { return k.hex(); }

Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  Bytes out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng() & 0xff);
  return out;
}

}  // namespace

struct World::Impl {
  config::ScenarioConfig cfg;
  simnet::Network<Msg> net;
  simnet::Trace trace;
  cloud::CloudStore cloud;
  actors::CertificateAuthority ca;

  std::vector<NodeId> obm_ids;
  std::map<NodeId, obm::Obm> obms;
  std::map<crypto::PublicKey, NodeId> obm_by_pk;
  std::map<NodeId, vehicle::Vehicle> vehicles;
  std::map<NodeId, VehicleRt> vehicle_rt;
  std::vector<NodeId> vehicle_order;
  std::map<NodeId, actors::Oem> oems;
  std::map<NodeId, OemRt> oem_rt;
  std::map<NodeId, actors::SwProvider> providers;
  std::map<NodeId, ProviderRt> provider_rt;
  std::optional<actors::Insurer> insurer;
  std::map<NodeId, Attacker> attackers;
  std::map<NodeId, Role> roles;
  std::map<NodeId, NodeId> home;  // non-vehicle members -> OBM

  std::map<std::uint64_t, CloudOp> cloud_ops;
  std::uint64_t next_req = 1;
  std::vector<DdosState> ddos;
  std::vector<LoadState> loads;
  std::uint64_t load_sent = 0;
  std::map<NodeId, std::string> insurance_accounts;  // vehicle -> account id
  std::optional<std::string> latest_object;
  bool tamper_after_approval = false;

  std::uint64_t period_index = 0;
  double current_period;
  std::uint64_t seed_counter = 0;

  explicit Impl(config::ScenarioConfig c)
      : cfg(std::move(c)),
        net(build_links(cfg), cfg.seed),
        cloud(simnet::derive_seed(cfg.seed, "cloud")),
        ca(crypto::generate_keypair(simnet::derive_seed(cfg.seed, "ca"))),
        current_period(cfg.ledger.dtm.block_period) {
    build_nodes();
  }

  // ---------------------------------------------------------------- setup

  static simnet::LinkModel build_links(const config::ScenarioConfig& cfg) {
    const auto& nw = cfg.network;
    simnet::LinkModel links(nw.jitter);
    std::vector<std::pair<NodeId, NodeId>> members;  // (id, home obm)
    for (const auto& a : cfg.oems) members.emplace_back(a.id, a.obm);
    for (const auto& a : cfg.providers) members.emplace_back(a.id, a.obm);
    if (cfg.insurer) members.emplace_back(cfg.insurer->id, cfg.insurer->obm);
    for (const auto& a : cfg.attackers) members.emplace_back(a.id, a.obm);
    for (const auto& v : cfg.vehicles) members.emplace_back(v.id, v.obm);

    const auto obms = cfg.obm_ids();
    for (std::size_t i = 0; i < obms.size(); ++i)
      for (std::size_t j = i + 1; j < obms.size(); ++j) links.set_link(obms[i], obms[j], nw.obm_delay);
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto& [id, obm] = members[i];
      for (const auto& o : obms) links.set_link(id, o, o == obm ? nw.member_delay : nw.far_delay);
      links.set_link(id, cfg.cloud_id, nw.cloud_delay);
      for (std::size_t j = i + 1; j < members.size(); ++j) links.set_link(id, members[j].first, nw.direct_delay);
    }
    for (const auto& o : obms) links.set_link(o, cfg.cloud_id, nw.cloud_delay);
    for (const auto& l : nw.links) links.set_link(l.a, l.b, l.delay);
    for (const auto& s : nw.schedule) links.schedule(s.a, s.b, s.at, s.delay);

    for (const auto& d : cfg.script) {
      if (d.kind != "move_vehicle") continue;
      const auto vid = d.get("vehicle");
      auto v = std::find_if(cfg.vehicles.begin(), cfg.vehicles.end(), [&](const auto& x) { return x.id == vid; });
      const auto from = d.get("from", v->obm);
      links.schedule(vid, d.get("obm"), d.at, d.number("delay", nw.member_delay));
      if (from != d.get("obm")) links.schedule(vid, from, d.at, d.number("away_delay", nw.far_delay));
    }
    return links;
  }

  std::uint64_t seed_for(const std::string& label) { return simnet::derive_seed(cfg.seed, label); }

  crypto::KeyRing certified(const std::string& id) {
    return ca.enroll(id, crypto::generate_keypair(seed_for("key/" + id)),
                     crypto::generate_keypair(seed_for("aux/" + id)));
  }

  void build_nodes() {
    obm_ids = cfg.obm_ids();
    for (const auto& o : cfg.obms) {
      obm::ObmParams params;
      params.trust = cfg.ledger.trust;
      params.dtm = cfg.ledger.dtm;
      params.pending_timeout = cfg.ledger.pending_timeout;
      params.dtm_window_periods = cfg.ledger.dtm_window;
      params.byzantine = o.byzantine;
      auto key = crypto::generate_keypair(seed_for("key/" + o.id));
      obm::Obm node(o.id, key, params, seed_for("verify/" + o.id));
      std::vector<NodeId> peers;
      for (const auto& p : obm_ids)
        if (p != o.id) peers.push_back(p);
      node.set_peers(std::move(peers));
      obm_by_pk.emplace(key.public_key, o.id);
      obms.emplace(o.id, std::move(node));
      roles[o.id] = Role::Obm;
    }
    roles[cfg.cloud_id] = Role::Cloud;

    for (const auto& p : cfg.providers) {
      const std::string account = "acct-" + p.id;
      actors::SwProvider provider(p.id, certified(p.id), account);
      cloud.create_account(account, provider.public_key(), cloud::AccessGrant{{"sw/*"}, {"sw/*"}});
      providers.emplace(p.id, std::move(provider));
      provider_rt[p.id];
      roles[p.id] = Role::Provider;
      home[p.id] = p.obm;
    }
    for (const auto& o : cfg.oems) {
      const std::string account = "acct-" + o.id;
      actors::Oem oem(o.id, certified(o.id), ca.public_key(), account);
      for (const auto& [id, p] : providers) {
        oem.trust_provider(*p.keys().certificate());
      }
      cloud.create_account(account, oem.public_key(), cloud::AccessGrant{{"sw/*"}, {}});
      oems.emplace(o.id, std::move(oem));
      oem_rt[o.id];
      roles[o.id] = Role::Oem;
      home[o.id] = o.obm;
    }
    if (cfg.insurer) {
      insurer.emplace(cfg.insurer->id, certified(cfg.insurer->id));
      roles[cfg.insurer->id] = Role::Insurer;
      home[cfg.insurer->id] = cfg.insurer->obm;
    }
    for (const auto& a : cfg.attackers) {
      attackers.emplace(a.id, Attacker{crypto::generate_keypair(seed_for("key/" + a.id)), a.obm});
      roles[a.id] = Role::Attacker;
      home[a.id] = a.obm;
    }
    const auto& vd = cfg.vehicle_defaults;
    for (std::size_t i = 0; i < cfg.vehicles.size(); ++i) {
      const auto& vc = cfg.vehicles[i];
      vehicle::VehicleParams params;
      params.anchor_interval = vd.anchor_interval;
      params.handover_threshold = vd.handover_threshold;
      params.hysteresis = vd.hysteresis;
      params.probe_count = vd.probe_count;
      params.rotate_per_interaction = vd.rotate_per_interaction;
      auto ring = crypto::KeyRing::rotating(crypto::generate_keypair(seed_for("key/" + vc.id)));
      vehicle::Vehicle v(vc.id, std::move(ring), vc.obm, oems.at(vc.oem).public_key(), params);
      if (vd.wrsu_accounts) {
        const std::string account = "acct-" + vc.id;
        auto key = crypto::generate_keypair(seed_for("cloud/" + vc.id));
        cloud.create_account(account, key.public_key, cloud::AccessGrant{{"sw/*"}, {}});
        v.set_wrsu_account({account, key});
      }
      vehicles.emplace(vc.id, std::move(v));
      vehicle_rt[vc.id].index = i;
      vehicle_order.push_back(vc.id);
      roles[vc.id] = Role::Vehicle;
    }
  }

  // ------------------------------------------------------------- plumbing

  double now() const { return net.now(); }

  void emit(const NodeId& actor, const std::string& ev, ordered_json fields = ordered_json::object()) {
    trace.emit(now(), actor, ev, std::move(fields));
  }

  void send(const NodeId& from, const NodeId& to, Msg m) { net.send(from, to, std::move(m)); }

  const NodeId& home_of(const NodeId& node) const {
    if (auto v = vehicles.find(node); v != vehicles.end()) return v->second.obm();
    return home.at(node);
  }

  void submit(const NodeId& from, const Transaction& tx) { send(from, home_of(from), SubmitTx{tx}); }

  std::uint64_t fresh_seed(const std::string& label) { return seed_for(label + "/" + std::to_string(seed_counter++)); }

  void upload_keys(const NodeId& member, std::vector<vehicle::AccessPair> pairs) {
    send(member, home_of(member), KeyUpload{std::move(pairs)});
  }

  std::vector<vehicle::AccessPair> oem_pairs(const NodeId& oem_id) const {
    const auto& oem = oems.at(oem_id);
    std::vector<vehicle::AccessPair> pairs;
    for (const auto& [id, p] : providers) pairs.push_back({p.public_key(), oem.public_key()});
    for (const auto& [id, v] : vehicles)
      if (v.oem_pk() == oem.public_key()) pairs.push_back({v.current_pk(), oem.public_key()});
    return pairs;
  }

  void start(double at, const NodeId& node, TimerKind kind, std::uint64_t arg = 0) {
    net.timer(node, at, Timer{kind, arg});
  }

  bool within_duration(double t) const { return t <= cfg.duration; }

  // ---------------------------------------------------------------- start

  void begin() {
    ordered_json expect = ordered_json::object();
    for (const auto& [k, v] : cfg.expect) expect[k] = v;
    emit(kScript, "scenario_start",
         {{"name", cfg.name},
          {"seed", cfg.seed},
          {"duration", cfg.duration},
          {"obms", obm_ids},
          {"vehicles", vehicle_order},
          {"block_size", cfg.ledger.dtm.block_size},
          {"block_period", cfg.ledger.dtm.block_period},
          {"utilization_low", cfg.ledger.dtm.utilization_low},
          {"utilization_high", cfg.ledger.dtm.utilization_high},
          {"f_min", cfg.ledger.trust.f_min},
          {"trust_k", cfg.ledger.trust.k},
          {"expect", expect}});
    for (const auto& [id, o] : obms) emit(id, "actor", {{"role", "obm"}, {"pk", hex(o.keypair().public_key)}, {"byzantine", o.params().byzantine}});
    for (const auto& [id, p] : providers) emit(id, "actor", {{"role", "provider"}, {"pk", hex(p.public_key())}, {"obm", home.at(id)}});
    for (const auto& [id, o] : oems) emit(id, "actor", {{"role", "oem"}, {"pk", hex(o.public_key())}, {"obm", home.at(id)}});
    if (insurer) emit(insurer->id(), "actor", {{"role", "insurer"}, {"pk", hex(insurer->public_key())}, {"obm", home.at(insurer->id())}});
    for (const auto& [id, a] : attackers) emit(id, "actor", {{"role", "attacker"}, {"pk", hex(a.key.public_key)}, {"obm", a.obm}});
    for (const auto& id : vehicle_order) {
      const auto& v = vehicles.at(id);
      emit(id, "actor", {{"role", "vehicle"}, {"pk", hex(v.current_pk())}, {"obm", v.obm()}, {"oem_pk", hex(v.oem_pk())}});
    }

    for (const auto& [id, p] : providers) {
      std::vector<vehicle::AccessPair> pairs;
      for (const auto& [oid, o] : oems) pairs.push_back({o.public_key(), p.public_key()});
      upload_keys(id, pairs);
    }
    for (const auto& [id, o] : oems) upload_keys(id, oem_pairs(id));
    if (insurer) upload_keys(insurer->id(), {});
    for (const auto& [id, a] : attackers) upload_keys(id, {});
    const auto& vd = cfg.vehicle_defaults;
    for (const auto& id : vehicle_order) {
      upload_keys(id, vehicles.at(id).access_pairs());
      const double stagger = static_cast<double>(vehicle_rt.at(id).index % 10) * 0.1;
      if (vd.record_interval > 0) start(vd.record_interval * 0.5 + stagger, id, TimerKind::Record);
      start(vd.anchor_interval + stagger, id, TimerKind::Anchor);
      if (vd.backup_interval > 0) start(vd.backup_interval + stagger, id, TimerKind::Backup);
      if (vd.handover_check_interval > 0) start(vd.handover_check_interval + stagger, id, TimerKind::HandoverCheck);
    }
    for (std::size_t i = 0; i < cfg.script.size(); ++i) start(cfg.script[i].at, kScript, TimerKind::Directive, i);
    start(current_period, kOverlay, TimerKind::PeriodTick);
  }

  // ------------------------------------------------------------- dispatch

  void dispatch(simnet::Event<Msg>& ev) {
    std::visit([&](auto& m) { handle(ev.from, ev.to, m); }, ev.msg);
  }

  // OBM side ---------------------------------------------------------------

  void route(obm::Obm& o, const Transaction& tx, obm::Origin origin, const NodeId& from) {
    const auto out = o.receive_transaction(tx, origin, from, now());
    if (out.dropped) {
      emit(o.id(), "drop",
           {{"t_id", hex(tx.t_id)}, {"reason", obm::to_string(*out.dropped)}, {"detail", out.detail},
            {"from", from}, {"origin", obm::to_string(origin)}});
      return;
    }
    for (const auto& d : out.deliveries) {
      emit(o.id(), "deliver", {{"t_id", hex(tx.t_id)}, {"to", d.member}, {"kind", obm::to_string(d.kind)}});
      send(o.id(), d.member, DeliverTx{tx, d.kind});
    }
    if (out.broadcast)
      for (const auto& p : o.peers()) send(o.id(), p, PeerTx{tx});
  }

  void handle(const NodeId& from, const NodeId& to, SubmitTx& m) {
    route(obms.at(to), m.tx, obm::Origin::Member, from);
  }

  void handle(const NodeId& from, const NodeId& to, PeerTx& m) {
    route(obms.at(to), m.tx, obm::Origin::PeerBroadcast, from);
  }

  void send_notices(const obm::Obm& o, const Block& block) {
    for (auto& [member, heads] : o.notices_for(block)) send(o.id(), member, BlockNotice{std::move(heads)});
  }

  static ordered_json tx_ids(const Block& b) {
    ordered_json ids = ordered_json::array();
    for (const auto& tx : b.transactions) ids.push_back(hex(tx.t_id));
    return ids;
  }

  std::string generator_name(const crypto::PublicKey& pk) const {
    auto it = obm_by_pk.find(pk);
    return it == obm_by_pk.end() ? hex(pk) : it->second;
  }

  void handle(const NodeId& from, const NodeId& to, BlockMsg& m) {
    (void)from;
    auto& o = obms.at(to);
    const auto receipt = o.on_block_received(m.block);
    using S = obm::BlockReceipt::Status;
    if (receipt.status == S::Rejected) {
      emit(to, "block_rejected",
           {{"height", m.block.height}, {"block_id", hex(m.block.block_id)},
            {"generator", generator_name(m.block.generator_pk)}, {"verdict", ledger::to_string(receipt.check.verdict)}});
    } else if (receipt.status == S::Buffered) {
      emit(to, "block_buffered", {{"height", m.block.height}, {"generator", generator_name(m.block.generator_pk)}});
    }
    for (std::size_t i = 0; i < receipt.appended.size(); ++i) {
      const auto& b = receipt.appended[i];
      emit(to, "block_appended",
           {{"height", b.height}, {"block_id", hex(b.block_id)}, {"generator", generator_name(b.generator_pk)},
            {"n_tx", b.transactions.size()}, {"verification_count", receipt.appended_checks[i].verification_count},
            {"t_ids", tx_ids(b)}});
      send_notices(o, b);
    }
    if (receipt.status == S::Rejected && receipt.appended.empty() && receipt.check.verdict != ledger::BlockVerdict::BrokenLinkage) {
      // A rejected block's generator lost its trust; nothing else to do.
    }
  }

  void handle(const NodeId& from, const NodeId& to, KeyUpload& m) {
    auto& o = obms.at(to);
    o.add_member(from);
    for (const auto& p : m.pairs) o.upload_key_pair(from, p.requester_pk, p.member_pk);
    emit(to, "key_upload", {{"member", from}, {"pairs", m.pairs.size()}, {"entries", o.key_list().count_for(from)}});
    auto heads = o.ledger_heads_for(from);
    if (!heads.empty()) send(to, from, BlockNotice{std::move(heads)});
  }

  void handle(const NodeId& from, const NodeId& to, Disconnect&) {
    const auto removed = obms.at(to).remove_member(from);
    emit(to, "disconnect", {{"member", from}, {"removed", removed}});
  }

  void period_tick(bool flush) {
    const auto idx = period_index++;
    std::optional<obm::PeriodResult> turn;
    NodeId turn_id;
    for (const auto& id : obm_ids) {
      auto& o = obms.at(id);
      auto r = o.on_period_tick(idx, obm_ids, now(), current_period, flush);
      if (!r.my_turn) continue;
      turn_id = id;
      if (r.block) {
        emit(id, "block_formed",
             {{"height", r.block->height}, {"block_id", hex(r.block->block_id)}, {"n_tx", r.block->transactions.size()},
              {"forged", o.params().byzantine}, {"flush", flush}, {"t_ids", tx_ids(*r.block)}});
        if (!o.params().byzantine) send_notices(o, *r.block);
        for (const auto& p : o.peers()) send(id, p, BlockMsg{*r.block});
      }
      turn = std::move(r);
    }
    if (flush || !turn) return;
    const double next = cfg.ledger.dtm_enabled ? turn->dtm_after.block_period : current_period;
    emit(kOverlay, "period",
         {{"index", idx}, {"turn", turn_id}, {"utilization", turn->utilization_before},
          {"rate", turn->observed_rate}, {"period", current_period}, {"next_period", next},
          {"pool", obms.at(turn_id).pool().size()}});
    current_period = next;
    if (within_duration(now() + current_period)) start(now() + current_period, kOverlay, TimerKind::PeriodTick);
  }

  // Cloud -------------------------------------------------------------------

  void cloud_request(CloudOp op) {
    const auto req = next_req++;
    const NodeId requester = op.requester;
    const std::string account = op.account;
    cloud_ops.emplace(req, std::move(op));
    send(requester, cfg.cloud_id, CloudHello{req, account});
  }

  void handle(const NodeId& from, const NodeId& to, CloudHello& m) {
    auto challenge = cloud.issue_challenge(m.account);
    CloudChallengeMsg reply{m.req, {}, std::nullopt};
    if (challenge) {
      reply.challenge = *challenge;
    } else {
      reply.error = challenge.error();
      emit(to, "cloud_denied", {{"account", m.account}, {"requester", from}, {"reason", cloud::to_string(challenge.error())}});
    }
    send(to, from, std::move(reply));
  }

  void handle(const NodeId& from, const NodeId& to, CloudChallengeMsg& m) {
    auto it = cloud_ops.find(m.req);
    if (it == cloud_ops.end()) return;
    if (m.error) {
      finish_cloud(m.req, *m.error);
      return;
    }
    const auto& op = it->second;
    send(to, from,
         CloudProof{m.req, op.account, cloud::answer_challenge(op.account, m.challenge, op.key), op.put, op.object_id,
                    op.data});
  }

  void handle(const NodeId& from, const NodeId& to, CloudProof& m) {
    CloudResult reply{m.req, std::nullopt, {}};
    auto session = cloud.cloud_authenticate(m.account, m.proof);
    const char* op = m.put ? "cloud_put" : "cloud_get";
    if (!session) {
      reply.error = session.error();
    } else if (m.put) {
      if (auto r = cloud.cloud_put(*session, m.object_id, std::move(m.data)); !r) reply.error = r.error();
    } else {
      auto r = cloud.cloud_get(*session, m.object_id);
      if (r) reply.data = *r;
      else reply.error = r.error();
    }
    if (reply.error) {
      emit(to, "cloud_denied", {{"account", m.account}, {"requester", from}, {"op", op}, {"object", m.object_id},
                                {"reason", cloud::to_string(*reply.error)}});
    } else {
      emit(to, op, {{"account", m.account}, {"requester", from}, {"object", m.object_id}});
    }
    send(to, from, std::move(reply));
  }

  void handle(const NodeId&, const NodeId&, CloudResult& m) {
    if (m.error) finish_cloud(m.req, *m.error);
    else finish_cloud(m.req, std::move(m.data));
  }

  void finish_cloud(std::uint64_t req, Result<Bytes, cloud::CloudError> result) {
    auto node = cloud_ops.extract(req);
    if (node.empty()) return;
    CloudOp op = std::move(node.mapped());
    switch (op.purpose) {
      case Purpose::ProviderPublish: return provider_published(op, result);
      case Purpose::OemApproval: return oem_downloaded(op, result);
      case Purpose::VehicleInstall: return vehicle_downloaded(op, result);
      case Purpose::InsuranceUpload: return insurance_uploaded(op, result);
    }
  }

  // Provider ----------------------------------------------------------------

  void try_publish(const NodeId& id) {
    auto& p = providers.at(id);
    auto& rt = provider_rt.at(id);
    if (rt.busy || rt.queue.empty() || !p.can_publish()) return;
    auto req = std::move(rt.queue.front());
    rt.queue.pop_front();
    rt.busy = true;
    CloudOp op;
    op.requester = id;
    op.account = p.cloud_account();
    op.key = p.keys().identity();
    op.put = true;
    op.data = req.package.encode();
    op.object_id = sw_object_id(crypto::digest(op.data));
    op.purpose = Purpose::ProviderPublish;
    op.package = std::move(req.package);
    op.oem_pk = req.oem_pk;
    cloud_request(std::move(op));
  }

  void provider_published(CloudOp& op, const Result<Bytes, cloud::CloudError>& result) {
    auto& p = providers.at(op.requester);
    provider_rt.at(op.requester).busy = false;
    if (!result) {
      emit(op.requester, "publish_failed", {{"reason", actors::to_string(actors::PublishError::CloudWriteDenied)},
                                            {"cloud", cloud::to_string(result.error())}});
      return try_publish(op.requester);
    }
    auto tx = p.build_update(op.package, op.oem_pk);
    if (!tx) {
      emit(op.requester, "publish_failed", {{"reason", actors::to_string(tx.error())}});
      return;
    }
    latest_object = op.object_id;
    emit(op.requester, "publish",
         {{"t_id", hex(tx->t_id)}, {"object", op.object_id}, {"ecu", op.package.ecu}, {"version", op.package.version},
          {"digest", hex(tx->payload_digest)}, {"oem_pk", hex(op.oem_pk)}});
    submit(op.requester, *tx);
  }

  // OEM ---------------------------------------------------------------------

  void oem_receive(const NodeId& id, const DeliverTx& m, const NodeId& from) {
    auto& oem = oems.at(id);
    const auto& tx = m.tx;
    if (tx.payload_tag == ledger::PayloadTag::SwUpdate && tx.is_pending()) {
      emit(id, "approval_requested", {{"t_id", hex(tx.t_id)}, {"pk_1", hex(tx.pk_1)}, {"from", from}});
      if (auto ok = oem.precheck(tx); !ok) {
        emit(id, "approval_rejected", {{"t_id", hex(tx.t_id)}, {"reason", actors::to_string(ok.error())}});
        return;
      }
      CloudOp op;
      op.requester = id;
      op.account = oem.cloud_account();
      op.key = oem.keys().identity();
      op.object_id = sw_object_id(tx.payload_digest);
      op.purpose = Purpose::OemApproval;
      op.tx = tx;
      cloud_request(std::move(op));
    } else if (tx.payload_tag == ledger::PayloadTag::Generic && tx.fully_signed()) {
      emit(id, "message_acked", {{"t_id", hex(tx.t_id)}});
    }
  }

  void oem_downloaded(CloudOp& op, const Result<Bytes, cloud::CloudError>& result) {
    auto& oem = oems.at(op.requester);
    auto signed_tx = oem.finish_approval(op.tx, result);
    if (!signed_tx) {
      emit(op.requester, "approval_rejected", {{"t_id", hex(op.tx.t_id)}, {"reason", actors::to_string(signed_tx.error())}});
      return;
    }
    emit(op.requester, "countersigned",
         {{"t_id", hex(op.tx.t_id)}, {"signed_t_id", hex(signed_tx->t_id)}, {"pk_1", hex(op.tx.pk_1)},
          {"digest", hex(op.tx.payload_digest)}});
    submit(op.requester, *signed_tx);
    if (tamper_after_approval) {
      tamper_after_approval = false;
      tamper_object(op.object_id);
    }
  }

  void try_send_message(const NodeId& id) {
    auto& oem = oems.at(id);
    auto& rt = oem_rt.at(id);
    while (!rt.outbox.empty() && oem.can_message()) {
      auto [to, payload] = rt.outbox.front();
      rt.outbox.pop_front();
      auto v = vehicles.find(to);
      if (v == vehicles.end()) continue;
      auto tx = oem.message_to(v->second.current_pk(), payload);
      rt.outstanding = ++rt.sequence;
      emit(id, "message_sent", {{"t_id", hex(tx->t_id)}, {"to", to}});
      submit(id, *tx);
      start(now() + cfg.ledger.pending_timeout, id, TimerKind::MessageTimeout, rt.outstanding);
    }
  }

  // Vehicle -----------------------------------------------------------------

  void vehicle_receive(const NodeId& id, const DeliverTx& m, const NodeId& from) {
    auto& v = vehicles.at(id);
    const auto& tx = m.tx;
    if (m.kind == obm::DeliveryKind::UpdateNotice) {
      emit(id, "update_received", {{"t_id", hex(tx.t_id)}, {"from", from}});
      auto pending = v.check_update(tx);
      if (!pending) {
        emit(id, "update_rejected", {{"t_id", hex(tx.t_id)}, {"reason", vehicle::to_string(pending.error())}});
        return;
      }
      auto& rt = vehicle_rt.at(id);
      if (!rt.installing.insert(tx.t_id).second) return;
      if (!v.wrsu_account()) {
        emit(id, "update_rejected",
             {{"t_id", hex(tx.t_id)}, {"reason", vehicle::to_string(vehicle::UpdateRejection::CloudAuthFailed)}});
        return;
      }
      CloudOp op;
      op.requester = id;
      op.account = v.wrsu_account()->account_id;
      op.key = v.wrsu_account()->key;
      op.object_id = pending->object_id;
      op.purpose = Purpose::VehicleInstall;
      op.tx = tx;
      cloud_request(std::move(op));
      return;
    }
    if (tx.is_pending() && tx.payload_tag == ledger::PayloadTag::Generic) {
      auto reply = v.countersign_request(tx);
      if (!reply) {
        emit(id, "countersign_refused", {{"t_id", hex(tx.t_id)}, {"reason", ledger::to_string(reply.error())}});
        return;
      }
      emit(id, "message_received", {{"t_id", hex(tx.t_id)}, {"from", from}});
      submit(id, *reply);
      after_signing(id, *tx.pk_2);
    }
  }

  void vehicle_downloaded(CloudOp& op, const Result<Bytes, cloud::CloudError>& result) {
    auto& v = vehicles.at(op.requester);
    auto pending = v.check_update(op.tx);
    auto installed = v.complete_update(*pending, result);
    if (!installed) {
      emit(op.requester, "update_rejected",
           {{"t_id", hex(op.tx.t_id)}, {"reason", vehicle::to_string(installed.error())}});
      return;
    }
    emit(op.requester, "update_verified", {{"t_id", hex(op.tx.t_id)}, {"digest", hex(installed->digest)}});
    emit(op.requester, "installed",
         {{"t_id", hex(op.tx.t_id)}, {"version", installed->version}, {"digest", hex(installed->digest)}});
  }

  void after_signing(const NodeId& id, const crypto::PublicKey& pk) {
    auto& v = vehicles.at(id);
    if (v.after_interaction(pk, fresh_seed("rotate/" + id))) {
      emit(id, "key_rotated", {{"pk", hex(v.current_pk())}});
      upload_keys(id, v.access_pairs());
    }
  }

  void emit_anchor(const NodeId& id, const Transaction& tx) {
    const auto& a = vehicles.at(id).anchors().back();
    emit(id, tx.payload_tag == ledger::PayloadTag::BackupAnchor ? "backup" : "anchor",
         {{"t_id", hex(tx.t_id)}, {"tag", ledger::to_string(tx.payload_tag)}, {"pk", hex(tx.pk_1)},
          {"start", a.start}, {"count", a.count}, {"digest", hex(a.payload_digest)}});
  }

  void try_anchor(const NodeId& id) {
    auto& v = vehicles.at(id);
    auto& rt = vehicle_rt.at(id);
    if (!v.can_anchor()) {
      rt.anchor_deferred = true;
      return;
    }
    rt.anchor_deferred = false;
    auto tx = v.anchor_storage(now());
    emit_anchor(id, *tx);
    if (rt.claim_requested) {
      rt.claim_requested = false;
      rt.claim_anchor = tx->t_id;
    }
    submit(id, *tx);
    after_signing(id, tx->pk_1);
  }

  void file_claim(const NodeId& id) {
    auto& v = vehicles.at(id);
    auto& rt = vehicle_rt.at(id);
    const auto anchor_id = *rt.claim_anchor;
    rt.claim_anchor.reset();
    const auto& anchors = v.anchors();
    auto a = std::find_if(anchors.begin(), anchors.end(), [&](const auto& x) { return x.t_id == anchor_id; });
    const auto all = v.history();
    actors::Claim claim;
    claim.account_id = rt.claim_account;
    claim.anchor_t_id = anchor_id;
    claim.records.assign(all.begin() + static_cast<std::ptrdiff_t>(a->start),
                         all.begin() + static_cast<std::ptrdiff_t>(a->start + a->count));
    bool tampered = false;
    if (rt.tamper_claim && !claim.records.empty()) {
      auto& r = claim.records[rt.tamper_index % claim.records.size()];
      if (r.payload.empty()) r.payload.push_back(0);
      r.payload[0] ^= 0x01;
      tampered = true;
    }
    emit(id, "claim_filed",
         {{"anchor", hex(anchor_id)}, {"account", claim.account_id}, {"start", a->start}, {"count", a->count},
          {"digest", hex(store_digest(claim.records))}, {"tampered", tampered}});
    send(id, insurer->id(), ClaimMsg{std::move(claim)});
  }

  void start_upload(const NodeId& id) {
    auto& v = vehicles.at(id);
    auto& rt = vehicle_rt.at(id);
    if (!v.insurance_account()) {
      emit(id, "insurance_upload_skipped");
      return;
    }
    if (rt.uploading) return;
    const auto all = v.history();
    const auto from = std::min(rt.uploaded_records, all.size());
    std::vector<StorageRecord> batch(all.begin() + static_cast<std::ptrdiff_t>(from), all.end());
    CloudOp op;
    op.requester = id;
    op.account = v.insurance_account()->account_id;
    op.key = v.insurance_account()->key;
    op.put = true;
    op.object_id = actors::Insurer::data_prefix(op.account) + "rec-" + std::to_string(rt.upload_seq++);
    op.data = serialize_store(batch);
    op.purpose = Purpose::InsuranceUpload;
    op.records = all.size();
    rt.uploading = true;
    cloud_request(std::move(op));
  }

  void insurance_uploaded(CloudOp& op, const Result<Bytes, cloud::CloudError>& result) {
    auto& v = vehicles.at(op.requester);
    auto& rt = vehicle_rt.at(op.requester);
    rt.uploading = false;
    if (!result) {
      emit(op.requester, "insurance_upload_denied",
           {{"account", op.account}, {"object", op.object_id}, {"reason", cloud::to_string(result.error())}});
      if (result.error() == cloud::CloudError::UnknownAccount) {
        v.clear_insurance_account();
        rt.upload_interval = 0.0;
      }
      return;
    }
    emit(op.requester, "insurance_upload",
         {{"account", op.account}, {"object", op.object_id}, {"records", op.records - rt.uploaded_records}});
    rt.uploaded_records = op.records;
  }

  void handle(const NodeId& from, const NodeId& to, DeliverTx& m) {
    switch (roles.at(to)) {
      case Role::Vehicle: return vehicle_receive(to, m, from);
      case Role::Oem: return oem_receive(to, m, from);
      case Role::Provider:
        if (m.tx.payload_tag == ledger::PayloadTag::SwUpdate && m.tx.fully_signed())
          emit(to, "update_approved", {{"t_id", hex(m.tx.t_id)}});
        return;
      default: return;
    }
  }

  void handle(const NodeId&, const NodeId& to, BlockNotice& m) {
    switch (roles.at(to)) {
      case Role::Vehicle: {
        auto& v = vehicles.at(to);
        auto& rt = vehicle_rt.at(to);
        for (const auto& h : m.heads) {
          v.observe_stored(h);
          if (rt.claim_anchor && *rt.claim_anchor == h.t_id) file_claim(to);
        }
        if ((rt.anchor_deferred && within_duration(now())) || rt.claim_requested) {
          if (v.can_anchor()) try_anchor(to);
        }
        return;
      }
      case Role::Oem: {
        auto& oem = oems.at(to);
        for (const auto& h : m.heads) oem.observe_stored(h);
        if (oem.can_message()) oem_rt.at(to).outstanding = 0;
        return try_send_message(to);
      }
      case Role::Provider: {
        for (const auto& h : m.heads) providers.at(to).observe_stored(h);
        return try_publish(to);
      }
      default: return;
    }
  }

  void handle(const NodeId& from, const NodeId& to, AccountGrant& m) {
    auto& v = vehicles.at(to);
    v.set_insurance_account(m.account, m.insurer_pk);
    emit(to, "account_received", {{"account", m.account.account_id}, {"from", from}, {"pk", hex(m.account.key.public_key)}});
    upload_keys(to, v.access_pairs());
    auto& rt = vehicle_rt.at(to);
    rt.upload_interval = m.upload_interval;
    if (rt.upload_interval > 0 && within_duration(now() + rt.upload_interval)) {
      start(now() + rt.upload_interval, to, TimerKind::Upload);
    }
  }

  void handle(const NodeId& from, const NodeId& to, ClaimMsg& m) {
    const auto& chain = obms.at(home.at(to)).chain();
    auto verdict = insurer->insurer_verify_claim(m.claim, chain);
    ordered_json f = {{"claimant", from}, {"account", m.claim.account_id}, {"anchor", hex(m.claim.anchor_t_id)}};
    if (verdict) {
      emit(to, "claim_accepted", std::move(f));
    } else {
      f["reason"] = actors::to_string(verdict.error());
      emit(to, "claim_rejected", std::move(f));
    }
  }

  // Timers ------------------------------------------------------------------

  void handle(const NodeId&, const NodeId& to, Timer& t) {
    const auto& vd = cfg.vehicle_defaults;
    switch (t.kind) {
      case TimerKind::PeriodTick: return period_tick(false);
      case TimerKind::Directive: return directive(cfg.script.at(t.arg));
      case TimerKind::Record: {
        auto& rng = net.rng().stream("records/" + to);
        StorageRecord r{now(), static_cast<RecordCategory>(rng() % 5), random_bytes(rng, 16)};
        vehicles.at(to).record(r);
        emit(to, "record", {{"ts", r.timestamp}, {"cat", to_string(r.category)}, {"payload", to_hex(r.payload)}});
        if (within_duration(now() + vd.record_interval)) start(now() + vd.record_interval, to, TimerKind::Record);
        return;
      }
      case TimerKind::Anchor: {
        auto& v = vehicles.at(to);
        if (v.anchor_due(now())) try_anchor(to);
        // Deferred anchors shift the schedule; keep the interval from the last one.
        double next = now() + vd.anchor_interval;
        if (const auto last = v.last_anchor_time(); last && *last + vd.anchor_interval > now()) next = *last + vd.anchor_interval;
        if (within_duration(next)) start(next, to, TimerKind::Anchor);
        return;
      }
      case TimerKind::Backup: {
        auto& v = vehicles.at(to);
        const auto moved = std::min(vd.backup_batch, v.in_vehicle_storage().size());
        if (auto tx = v.transfer_to_backup(now(), vd.backup_batch)) {
          emit_anchor(to, *tx);
          trace_moved(to, moved);
          submit(to, *tx);
          after_signing(to, tx->pk_1);
        }
        if (within_duration(now() + vd.backup_interval)) start(now() + vd.backup_interval, to, TimerKind::Backup);
        return;
      }
      case TimerKind::HandoverCheck: {
        handover_check(to);
        if (t.arg == 0 && within_duration(now() + vd.handover_check_interval)) {
          start(now() + vd.handover_check_interval, to, TimerKind::HandoverCheck);
        }
        return;
      }
      case TimerKind::LoadTx: return load_tick(t.arg);
      case TimerKind::DdosTx: return ddos_tick(t.arg);
      case TimerKind::Upload: {
        auto& rt = vehicle_rt.at(to);
        if (rt.upload_interval <= 0) return;
        start_upload(to);
        if (within_duration(now() + rt.upload_interval)) start(now() + rt.upload_interval, to, TimerKind::Upload);
        return;
      }
      case TimerKind::MessageTimeout: {
        auto& rt = oem_rt.at(to);
        if (rt.outstanding != t.arg) return;
        rt.outstanding = 0;
        oems.at(to).abandon_message();
        emit(to, "message_expired", {{"seq", t.arg}});
        return try_send_message(to);
      }
    }
  }

  void trace_moved(const NodeId& id, std::size_t moved) {
    emit(id, "backup_moved", {{"records", moved}, {"backup_size", vehicles.at(id).backup_store().size()}});
  }

  void handover_check(const NodeId& id) {
    auto& v = vehicles.at(id);
    const auto m = v.params().probe_count;
    const auto decision =
        v.evaluate_handover(obm_ids, [&](const NodeId& obm) { return net.probe_delay(id, obm, m); });
    if (!decision.target) return;
    ordered_json delays = ordered_json::object();
    for (const auto& [o, d] : decision.delays) delays[o] = d;
    const NodeId old = v.obm();
    const NodeId target = *decision.target;
    emit(id, "handover", {{"old", old}, {"new", target}, {"delays", delays}});
    v.commit_handover(target);
    send(id, target, KeyUpload{v.access_pairs()});
    send(id, old, Disconnect{});
  }

  // Directives --------------------------------------------------------------

  std::string first_oem() const { return oems.empty() ? "" : oems.begin()->first; }

  void tamper_object(const std::string& object_id) {
    const Bytes* current = cloud.peek(object_id);
    if (!current) return;
    auto package = UpdatePackage::decode(*current);
    if (package.image.empty()) package.image.push_back(0);
    package.image[0] ^= 0xff;
    cloud.tamper(object_id, package.encode());
    emit(cfg.cloud_id, "cloud_tampered", {{"object", object_id}});
  }

  std::vector<NodeId> targets_of(const config::Directive& d, const std::string& key) const {
    const auto v = d.get(key, "all");
    if (v == "all") return vehicle_order;
    if (v == "<list>") return d.list;
    return {v};
  }

  void directive(const config::Directive& d) {
    emit(kScript, "directive", {{"do", d.kind}, {"line", d.line}});
    if (d.kind == "publish_update") {
      const auto provider = d.get("provider", providers.begin()->first);
      const auto oem = d.get("oem", first_oem());
      auto& rng = net.rng().stream("sw/" + provider);
      UpdatePackage package{d.get("ecu", "ecu-main"), d.get("version", "2.0"),
                            random_bytes(rng, static_cast<std::size_t>(d.number("size", 1024)))};
      provider_rt.at(provider).queue.push_back({std::move(package), oems.at(oem).public_key()});
      try_publish(provider);
    } else if (d.kind == "tamper_cloud_object") {
      if (d.get("trigger", "after_oem_approval") == "after_oem_approval") {
        tamper_after_approval = true;
      } else if (latest_object) {
        tamper_object(*latest_object);
      }
    } else if (d.kind == "impersonate") {
      impersonate(d);
    } else if (d.kind == "start_ddos") {
      DdosState s;
      if (d.get("attackers", "all") == "<list>") s.attackers = d.list;
      else
        for (const auto& [id, a] : attackers) s.attackers.push_back(id);
      s.target = d.get("target");
      s.per_attacker = static_cast<std::size_t>(d.number("tx_per_attacker", 100));
      s.interval = d.number("interval", 0.1);
      emit(kScript, "ddos_start", {{"target", s.target}, {"attackers", s.attackers.size()}, {"tx_per_attacker", s.per_attacker}});
      ddos.push_back(std::move(s));
      ddos_tick(ddos.size() - 1);
    } else if (d.kind == "open_account") {
      const auto vid = d.get("vehicle");
      auto acct = insurer->insurer_open_account(d.get("owner", "owner-of-" + vid), cloud, fresh_seed("account"));
      insurance_accounts[vid] = acct.account_id;
      emit(insurer->id(), "account_opened", {{"account", acct.account_id}, {"vehicle", vid}, {"pk", hex(acct.key.public_key)}});
      upload_keys(insurer->id(), {{acct.key.public_key, insurer->public_key()}});
      send(insurer->id(), vid, AccountGrant{{acct.account_id, acct.key}, insurer->public_key(), d.number("upload_interval", 20)});
    } else if (d.kind == "close_account") {
      const auto vid = d.get("vehicle");
      auto it = insurance_accounts.find(vid);
      const std::string account = it == insurance_accounts.end() ? d.get("account", "") : it->second;
      const bool ok = insurer->insurer_close_account(account, cloud, d.flag("retain_objects", true));
      emit(insurer->id(), ok ? "account_closed" : "account_close_noop", {{"account", account}, {"vehicle", vid}});
    } else if (d.kind == "cloud_upload") {
      start_upload(d.get("vehicle"));
    } else if (d.kind == "trigger_accident") {
      const auto vid = d.get("vehicle");
      auto& rt = vehicle_rt.at(vid);
      rt.tamper_claim = d.flag("tamper_claim");
      rt.tamper_index = static_cast<std::size_t>(d.number("tamper_index", 0));
      rt.claim_requested = true;
      const auto& account = vehicles.at(vid).insurance_account();
      rt.claim_account = account ? account->account_id : "";
      emit(vid, "accident", {{"tamper_claim", rt.tamper_claim}});
      try_anchor(vid);
    } else if (d.kind == "move_vehicle") {
      const auto vid = d.get("vehicle");
      emit(vid, "vehicle_moved", {{"toward", d.get("obm")}});
      if (cfg.vehicle_defaults.handover_check_interval <= 0) {
        start(now() + d.number("check_after", 1.0), vid, TimerKind::HandoverCheck, 1);
      }
    } else if (d.kind == "send_message") {
      const auto from = d.get("from", first_oem());
      const auto count = static_cast<std::size_t>(d.number("count", 1));
      for (const auto& to : targets_of(d, "to")) {
        for (std::size_t i = 0; i < count; ++i) {
          auto& rng = net.rng().stream("msg/" + from);
          oem_rt.at(from).outbox.emplace_back(to, crypto::digest(random_bytes(rng, 32)));
        }
      }
      try_send_message(from);
    } else if (d.kind == "load") {
      const double nominal = static_cast<double>(cfg.ledger.dtm.block_size) / cfg.ledger.dtm.block_period;
      const double rate = d.number("rate", 1.0) * nominal;
      LoadState s{d.number("until", cfg.duration), 1.0 / rate};
      emit(kScript, "load_start", {{"multiple", d.number("rate", 1.0)}, {"tx_rate", rate}, {"until", s.until}});
      loads.push_back(s);
      load_tick(loads.size() - 1);
    } else if (d.kind == "rotate_keys") {
      for (const auto& vid : targets_of(d, "vehicle")) {
        auto& v = vehicles.at(vid);
        v.rotate(fresh_seed("rotate/" + vid));
        emit(vid, "key_rotated", {{"pk", hex(v.current_pk())}});
        upload_keys(vid, v.access_pairs());
      }
    }
  }

  void load_tick(std::size_t index) {
    if (vehicle_order.empty()) return;
    const auto& s = loads.at(index);
    const auto n = load_sent++;
    const auto& via = vehicle_order[n % vehicle_order.size()];
    const auto key = crypto::generate_keypair(seed_for("load/" + std::to_string(n)));
    CanonicalWriter w;
    w.field(std::string_view{"load"}).u64(n);
    auto tx = ledger::build_transaction(ledger::TxKind::SingleSig, crypto::zero_digest(), crypto::digest(w.bytes()),
                                        ledger::PayloadTag::Generic, key);
    emit(via, "load_tx", {{"t_id", hex(tx.t_id)}});
    submit(via, tx);
    if (now() + s.interval < s.until) start(now() + s.interval, kScript, TimerKind::LoadTx, index);
  }

  void ddos_tick(std::size_t index) {
    auto& s = ddos.at(index);
    if (s.rounds_sent >= s.per_attacker) return;
    const auto& target_pk = vehicles.at(s.target).current_pk();
    for (const auto& a : s.attackers) {
      auto& atk = attackers.at(a);
      auto& rng = net.rng().stream("attack/" + a);
      auto tx = ledger::build_transaction(ledger::TxKind::Multisig, crypto::zero_digest(),
                                          crypto::digest(random_bytes(rng, 32)), ledger::PayloadTag::Generic, atk.key,
                                          target_pk);
      emit(a, "attack_tx", {{"t_id", hex(tx.t_id)}, {"target", s.target}});
      submit(a, tx);
    }
    ++s.rounds_sent;
    if (s.rounds_sent < s.per_attacker) start(now() + s.interval, kScript, TimerKind::DdosTx, index);
  }

  void impersonate(const config::Directive& d) {
    const auto attacker = d.get("attacker", attackers.begin()->first);
    auto& atk = attackers.at(attacker);
    const auto oem_id = d.get("oem", first_oem());
    const auto oem_pk = oems.at(oem_id).public_key();
    auto& rng = net.rng().stream("forge/" + attacker);
    UpdatePackage package{d.get("ecu", "ecu-main"), d.get("version", "6.6.6"),
                          random_bytes(rng, static_cast<std::size_t>(d.number("size", 1024)))};
    const Bytes binary = package.encode();
    const auto payload = crypto::digest(binary);
    // The forged binary is reachable, so only key checks can stop it.
    cloud.tamper(sw_object_id(payload), binary);
    emit(attacker, "cloud_planted", {{"object", sw_object_id(payload)}});

    std::vector<std::string> modes = {"forged_publish", "forged_sig1", "fake_approval", "forged_sig2"};
    if (d.get("modes", "") == "<list>") modes = d.list;
    else if (d.args.contains("modes")) modes = {d.get("modes")};
    const auto provider_pk =
        providers.empty() ? atk.key.public_key : providers.begin()->second.public_key();

    auto to_oem = [&](const Transaction& tx) { send(attacker, oem_id, DeliverTx{tx, obm::DeliveryKind::Forward}); };
    auto to_vehicles = [&](const Transaction& tx) {
      for (const auto& vid : vehicle_order) send(attacker, vid, DeliverTx{tx, obm::DeliveryKind::UpdateNotice});
    };
    using ledger::PayloadTag;
    using ledger::TxKind;
    for (const auto& mode : modes) {
      Transaction tx;
      if (mode == "forged_publish") {
        tx = ledger::build_transaction(TxKind::Multisig, crypto::zero_digest(), payload, PayloadTag::SwUpdate, atk.key, oem_pk);
      } else if (mode == "forged_sig1") {
        tx = ledger::build_transaction(TxKind::Multisig, crypto::zero_digest(), payload, PayloadTag::SwUpdate, atk.key, oem_pk);
        tx.pk_1 = provider_pk;
        tx.sig_1 = crypto::sign(tx.signing_body(), atk.key.secret_key);
        tx.t_id = tx.compute_id();
      } else if (mode == "fake_approval") {
        tx = ledger::build_transaction(TxKind::Multisig, crypto::zero_digest(), payload, PayloadTag::SwUpdate, atk.key,
                                       atk.key.public_key);
        tx = *ledger::countersign(tx, atk.key);
      } else if (mode == "forged_sig2") {
        tx = ledger::build_transaction(TxKind::Multisig, crypto::zero_digest(), payload, PayloadTag::SwUpdate, atk.key, oem_pk);
        tx.sig_2 = crypto::sign(tx.signing_body(), atk.key.secret_key);
        tx.t_id = tx.compute_id();
      } else {
        continue;
      }
      emit(attacker, "impersonation_tx", {{"mode", mode}, {"t_id", hex(tx.t_id)}});
      submit(attacker, tx);
      if (tx.is_pending()) to_oem(tx);
      else to_vehicles(tx);
    }
  }

  // ---------------------------------------------------------------- finish

  bool pools_empty() const {
    return std::all_of(obms.begin(), obms.end(),
                       [](const auto& kv) { return kv.second.params().byzantine || kv.second.pool().empty(); });
  }

  RunResult run() {
    begin();
    auto handler = [&](simnet::Event<Msg>& ev) { dispatch(ev); };
    auto outcome = net.loop().run(handler, cfg.max_time);
    const std::size_t cap = 100000;
    for (std::size_t round = 0; round < cap && outcome.quiescent && !pools_empty(); ++round) {
      period_tick(true);
      auto more = net.loop().run(handler, cfg.max_time);
      outcome.quiescent = more.quiescent;
      outcome.end_time = more.end_time;
    }
    finish(outcome);
    return RunResult{outcome.quiescent, net.now(), net.loop().dispatched()};
  }

  void finish(const simnet::RunOutcome& outcome) {
    for (const auto& id : obm_ids) {
      const auto& o = obms.at(id);
      const auto& chain = o.chain();
      ordered_json keylist = ordered_json::object();
      for (const auto& e : o.key_list().entries()) {
        keylist[e.member_node_id] = keylist.value(e.member_node_id, 0) + 1;
      }
      ordered_json sw = ordered_json::array();
      for (const auto& b : chain.blocks())
        for (const auto& tx : b.transactions)
          if (tx.payload_tag == ledger::PayloadTag::SwUpdate) sw.push_back(hex(tx.t_id));
      ordered_json trust = ordered_json::object();
      for (const auto& [pk, rec] : o.trust().records()) trust[generator_name(pk)] = rec.trust_score;
      emit(id, "obm_final",
           {{"height", chain.height()}, {"head", hex(chain.head_hash())}, {"tx_count", chain.transaction_count()},
            {"chain_valid", ledger::verify_chain(chain)}, {"chain_digest", hex(crypto::digest(chain.encode()))},
            {"keylist", keylist}, {"members", o.members().size()}, {"pool", o.pool().size()},
            {"pending", o.pending_count()}, {"pending_expired", o.pending_expired()},
            {"drops", {{"invalid", o.drops().invalid}, {"duplicate", o.drops().duplicate}, {"no_match", o.drops().no_match}}},
            {"blocks_rejected", o.blocks_rejected()}, {"sw_updates", sw}, {"trust", trust}});
    }
    for (const auto& id : vehicle_order) {
      const auto& v = vehicles.at(id);
      ordered_json installed = ordered_json::object();
      for (const auto& [ecu, sw] : v.installed_sw()) installed[ecu] = {{"version", sw.version}, {"digest", hex(sw.digest)}};
      emit(id, "vehicle_final",
           {{"obm", v.obm()}, {"installed", installed}, {"anchors", v.anchors().size()},
            {"records", v.in_vehicle_storage().size() + v.backup_store().size()}, {"keys", v.keys().history().size()}});
    }
    for (const auto& [id, o] : oems) emit(id, "oem_final", {{"countersigned", o.countersigned()}});
    emit(kScript, "scenario_end",
         {{"quiescent", outcome.quiescent}, {"events", net.loop().dispatched()}, {"pending_events", net.loop().size()}});
  }
};

World::World(config::ScenarioConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
World::~World() = default;

RunResult World::run() { return impl_->run(); }
const config::ScenarioConfig& World::config() const { return impl_->cfg; }
const simnet::Trace& World::trace() const { return impl_->trace; }
const cloud::CloudStore& World::cloud() const { return impl_->cloud; }
std::vector<std::string> World::obm_ids() const { return impl_->obm_ids; }
const obm::Obm& World::obm(const std::string& id) const { return impl_->obms.at(id); }
const vehicle::Vehicle& World::vehicle(const std::string& id) const { return impl_->vehicles.at(id); }
const actors::Oem& World::oem(const std::string& id) const { return impl_->oems.at(id); }
const actors::SwProvider& World::provider(const std::string& id) const { return impl_->providers.at(id); }

std::string run_to_trace(config::ScenarioConfig cfg, std::optional<std::uint64_t> seed) {
  if (seed) cfg.seed = *seed;
  World world(std::move(cfg));
  world.run();
  return world.trace().str();
}

}  // namespace autochain::world
