#include "autochain/obm.hpp"

#include <algorithm>

namespace autochain::obm {

std::string_view to_string(Origin o) { return o == Origin::Member ? "member" : "peer"; }

std::string_view to_string(DropReason r) {
  switch (r) {
    case DropReason::Invalid: return "invalid";
    case DropReason::Duplicate: return "duplicate";
    case DropReason::NoMatch: return "no_match";
  }
  return "?";
}

std::string_view to_string(DeliveryKind k) { return k == DeliveryKind::Forward ? "forward" : "update_notice"; }

std::size_t KeyList::remove_member(const NodeId& member) {
  return std::erase_if(entries_, [&](const KeyListEntry& e) { return e.member_node_id == member; });
}

std::set<NodeId> KeyList::match_pair(const PublicKey& a, const PublicKey& b) const {
  std::set<NodeId> out;
  for (const auto& e : entries_) {
    if ((e.requester_pk == a && e.member_pk == b) || (e.requester_pk == b && e.member_pk == a)) {
      out.insert(e.member_node_id);
    }
  }
  return out;
}

std::set<NodeId> KeyList::authorising(const PublicKey& requester) const {
  std::set<NodeId> out;
  for (const auto& e : entries_)
    if (e.requester_pk == requester) out.insert(e.member_node_id);
  return out;
}

std::set<NodeId> KeyList::owners_of(const PublicKey& member_pk) const {
  std::set<NodeId> out;
  for (const auto& e : entries_)
    if (e.member_pk == member_pk) out.insert(e.member_node_id);
  return out;
}

std::size_t KeyList::count_for(const NodeId& member) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [&](const KeyListEntry& e) { return e.member_node_id == member; }));
}

namespace {
std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

Obm::Obm(NodeId id, crypto::KeyPair keypair, ObmParams params, std::uint64_t rng_seed)
    : id_(std::move(id)), keypair_(keypair), params_(params), dtm_(params.dtm), rng_state_(rng_seed) {
  params_.dtm.check();
}

std::uint64_t Obm::next_seed() { return splitmix64(rng_state_); }

std::size_t Obm::remove_member(const NodeId& member) {
  members_.erase(member);
  return remove_member_keys(member);
}

bool Obm::upload_key_pair(const NodeId& member, const PublicKey& requester_pk, const PublicKey& member_pk) {
  if (!members_.contains(member)) return false;
  key_list_.add(KeyListEntry{requester_pk, member_pk, member});
  return true;
}

std::size_t Obm::remove_member_keys(const NodeId& member) { return key_list_.remove_member(member); }

void Obm::admit_to_pool(const Transaction& tx, double now) {
  (void)now;
  pool_.add(tx);
  ++admissions_since_tick_;
  max_pool_depth_ = std::max(max_pool_depth_, pool_.size());
}

RoutingOutcome Obm::receive_transaction(const Transaction& tx, Origin origin, const NodeId& submitter,
                                        double now) {
  RoutingOutcome out;
  auto drop = [&](DropReason reason, std::string detail) {
    out.dropped = reason;
    out.detail = std::move(detail);
    switch (reason) {
      case DropReason::Invalid: ++drops_.invalid; break;
      case DropReason::Duplicate: ++drops_.duplicate; break;
      case DropReason::NoMatch: ++drops_.no_match; break;
    }
    return out;
  };

  if (seen_.contains(tx.t_id) || chain_.contains(tx.t_id)) return drop(DropReason::Duplicate, "");
  if (origin == Origin::Member && !members_.contains(submitter)) return drop(DropReason::Invalid, "non_member");
  if (const auto verdict = ledger::validate_transaction(tx, chain_); verdict != ledger::TxVerdict::Ok) {
    return drop(DropReason::Invalid, std::string(ledger::to_string(verdict)));
  }
  if (tx.fully_signed()) {
    const bool conflicts = std::any_of(pool_.transactions().begin(), pool_.transactions().end(),
                                       [&](const Transaction& p) { return p.pk_1 == tx.pk_1 && p.p_t_id == tx.p_t_id; });
    if (conflicts) return drop(DropReason::Invalid, "conflict");
  }
  seen_.insert(tx.t_id);

  std::map<NodeId, DeliveryKind> targets;
  if (tx.pk_2) {
    for (const auto& m : key_list_.match_pair(tx.pk_1, *tx.pk_2)) targets.emplace(m, DeliveryKind::Forward);
    if (tx.fully_signed() && tx.payload_tag == ledger::PayloadTag::SwUpdate) {
      for (const auto& m : key_list_.authorising(*tx.pk_2)) targets.emplace(m, DeliveryKind::UpdateNotice);
    }
  }
  if (origin == Origin::Member) targets.erase(submitter);
  for (const auto& [member, kind] : targets) out.deliveries.push_back({member, kind});

  out.broadcast = origin == Origin::Member && !peers_.empty();
  if (tx.fully_signed()) {
    admit_to_pool(tx, now);
    out.pooled = true;
  } else if (out.deliveries.empty() && !out.broadcast) {
    return drop(DropReason::NoMatch, "");
  } else {
    pending_.emplace(tx.t_id, now + params_.pending_timeout);
  }
  return out;
}

void Obm::expire_pending(double now) {
  const auto before = pending_.size();
  std::erase_if(pending_, [&](const auto& kv) { return kv.second <= now; });
  pending_expired_ += before - pending_.size();
}

PeriodResult Obm::on_period_tick(std::uint64_t period_index, std::span<const NodeId> schedule, double now,
                                 double current_period, bool flush) {
  PeriodResult res;
  expire_pending(now);

  if (!flush) {
    window_.emplace_back(last_tick_time_, admissions_since_tick_);
    while (window_.size() > std::max<std::size_t>(1, params_.dtm_window_periods)) window_.pop_front();
    std::uint64_t count = 0;
    for (const auto& w : window_) count += w.second;
    const double span = now - window_.front().first;
    res.observed_rate = span > 0 ? static_cast<double>(count) / span : 0.0;
    dtm_.block_period = current_period;
    res.utilization_before = ledger::utilization(dtm_, res.observed_rate);
    dtm_ = ledger::dtm_adjust(dtm_, res.observed_rate);
  }
  admissions_since_tick_ = 0;
  last_tick_time_ = now;
  res.dtm_after = dtm_;

  res.my_turn = ledger::schedule_block_turn(period_index, schedule) == id_;
  if (!res.my_turn) return res;

  auto block = ledger::form_block(pool_, dtm_, keypair_, chain_, flush);
  if (!block) return res;

  if (params_.byzantine) {
    // Keep the honest transactions locally; peers receive a forged copy.
    for (const auto& tx : block->transactions) pool_.add(tx);
    Block forged = *block;
    forged.transactions.front().sig_1.bytes[0] ^= 0x01;
    forged.transactions.front().t_id = forged.transactions.front().compute_id();
    forged = ledger::seal_block(std::move(forged.transactions), keypair_, chain_);
    res.block = std::move(forged);
    return res;
  }

  if (!chain_.append(*block)) return res;
  for (const auto& tx : block->transactions) seen_.insert(tx.t_id);
  ++blocks_appended_;
  res.block = std::move(block);
  return res;
}

void Obm::evict_block_transactions(const Block& block) {
  for (const auto& tx : block.transactions) {
    pool_.remove(tx.t_id);
    seen_.insert(tx.t_id);
  }
}

BlockReceipt Obm::on_block_received(const Block& block) {
  BlockReceipt receipt;
  if (block.height < chain_.height()) {
    if (chain_.blocks()[block.height].block_id == block.block_id) {
      receipt.status = BlockReceipt::Status::Stale;
      return receipt;
    }
    receipt.status = BlockReceipt::Status::Rejected;
    receipt.check.verdict = ledger::BlockVerdict::BrokenLinkage;
    ledger::update_trust(trust_, block.generator_pk, receipt.check.verdict, params_.trust);
    ++blocks_rejected_;
    return receipt;
  }
  if (block.height > chain_.height()) {
    orphans_.emplace(block.height, block);
    receipt.status = BlockReceipt::Status::Buffered;
    return receipt;
  }

  std::optional<Block> next = block;
  bool first = true;
  while (next) {
    auto check = ledger::validate_block(*next, chain_, trust_, params_.trust, next_seed());
    ledger::update_trust(trust_, next->generator_pk, check.verdict, params_.trust);
    if (first) receipt.check = check;
    if (!check.ok()) {
      ++blocks_rejected_;
      if (first) receipt.status = BlockReceipt::Status::Rejected;
      break;
    }
    verification_history_.push_back(check.verification_count);
    chain_.append(*next);
    ++blocks_appended_;
    evict_block_transactions(*next);
    receipt.appended.push_back(*next);
    receipt.appended_checks.push_back(check);
    if (first) receipt.status = BlockReceipt::Status::Appended;
    first = false;

    next.reset();
    if (auto it = orphans_.find(chain_.height()); it != orphans_.end()) {
      next = std::move(it->second);
      orphans_.erase(it);
    }
  }
  std::erase_if(orphans_, [&](const auto& kv) { return kv.first < chain_.height(); });
  return receipt;
}

std::map<NodeId, std::vector<ledger::TxHead>> Obm::notices_for(const Block& block) const {
  std::map<NodeId, std::vector<ledger::TxHead>> out;
  for (const auto& tx : block.transactions) {
    for (const auto& m : key_list_.owners_of(tx.pk_1)) out[m].push_back(ledger::head_of(tx));
  }
  return out;
}

std::vector<ledger::TxHead> Obm::ledger_heads_for(const NodeId& member) const {
  std::vector<ledger::TxHead> out;
  std::set<PublicKey> done;
  for (const auto& e : key_list_.entries()) {
    if (e.member_node_id != member || !done.insert(e.member_pk).second) continue;
    if (auto latest = chain_.latest_by_generator(e.member_pk)) {
      out.push_back(ledger::head_of(*chain_.find(*latest)));
    }
  }
  return out;
}

}  // namespace autochain::obm
