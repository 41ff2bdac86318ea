#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "autochain/crypto.hpp"
#include "autochain/ledger.hpp"

namespace autochain::obm {

using NodeId = std::string;
using crypto::PublicKey;
using ledger::Block;
using ledger::Transaction;

struct KeyListEntry {
  PublicKey requester_pk;
  PublicKey member_pk;
  NodeId member_node_id;
  friend auto operator<=>(const KeyListEntry&, const KeyListEntry&) = default;
  friend bool operator==(const KeyListEntry&, const KeyListEntry&) = default;
};

/// Access-control list of (requester, member) key pairs uploaded by members.
class KeyList {
 public:
  bool add(KeyListEntry entry) { return entries_.insert(std::move(entry)).second; }
  std::size_t remove_member(const NodeId& member);
  /// Members holding an entry whose pair equals {a, b} in either order.
  std::set<NodeId> match_pair(const PublicKey& a, const PublicKey& b) const;
  /// Members that authorised `requester` to reach them.
  std::set<NodeId> authorising(const PublicKey& requester) const;
  /// Members that uploaded `member_pk` as one of their own keys.
  std::set<NodeId> owners_of(const PublicKey& member_pk) const;
  std::size_t count_for(const NodeId& member) const;
  std::size_t size() const { return entries_.size(); }
  const std::set<KeyListEntry>& entries() const { return entries_; }

 private:
  std::set<KeyListEntry> entries_;
};

enum class Origin { Member, PeerBroadcast };
enum class DropReason { Invalid, Duplicate, NoMatch };
enum class DeliveryKind {
  /// Key pair match: the member is the counterpart (countersign request or message).
  Forward,
  /// Fully signed software update approved by a key the member authorised.
  UpdateNotice,
};

std::string_view to_string(Origin o);
std::string_view to_string(DropReason r);
std::string_view to_string(DeliveryKind k);

struct Delivery {
  NodeId member;
  DeliveryKind kind;
};

struct RoutingOutcome {
  std::optional<DropReason> dropped;
  /// Why an Invalid drop happened (a TxVerdict name, "non_member" or "conflict").
  std::string detail;
  std::vector<Delivery> deliveries;
  bool broadcast = false;
  bool pooled = false;
};

struct DropCounters {
  std::uint64_t invalid = 0;
  std::uint64_t duplicate = 0;
  std::uint64_t no_match = 0;
  std::uint64_t total() const { return invalid + duplicate + no_match; }
};

struct ObmParams {
  ledger::TrustParams trust;
  ledger::DtmState dtm;
  double pending_timeout = 200.0;
  /// Measurement window for the transaction rate, in block periods.
  std::size_t dtm_window_periods = 1;
  /// Emits blocks with a corrupted transaction signature (trust-reset testing).
  bool byzantine = false;
};

struct PeriodResult {
  bool my_turn = false;
  std::optional<Block> block;
  /// Utilization measured over the closing window, before adjustment.
  double utilization_before = 0.0;
  double observed_rate = 0.0;
  ledger::DtmState dtm_after;
};

struct BlockReceipt {
  enum class Status { Appended, Rejected, Buffered, Stale };
  Status status = Status::Stale;
  ledger::BlockCheck check;
  /// Blocks appended by this call, including previously buffered successors.
  std::vector<Block> appended;
  std::vector<ledger::BlockCheck> appended_checks;
};

/// Overlay Block Manager: key list, routing, pool, chain copy, trust, DTM.
class Obm {
 public:
  Obm(NodeId id, crypto::KeyPair keypair, ObmParams params, std::uint64_t rng_seed);

  const NodeId& id() const { return id_; }
  const crypto::KeyPair& keypair() const { return keypair_; }
  const KeyList& key_list() const { return key_list_; }
  const ledger::TxPool& pool() const { return pool_; }
  const ledger::Chain& chain() const { return chain_; }
  const ledger::TrustTable& trust() const { return trust_; }
  const ledger::DtmState& dtm() const { return dtm_; }
  const std::set<NodeId>& members() const { return members_; }
  const std::vector<NodeId>& peers() const { return peers_; }
  const DropCounters& drops() const { return drops_; }
  const ObmParams& params() const { return params_; }
  std::size_t pending_count() const { return pending_.size(); }
  std::uint64_t pending_expired() const { return pending_expired_; }
  std::uint64_t blocks_appended() const { return blocks_appended_; }
  std::uint64_t blocks_rejected() const { return blocks_rejected_; }
  const std::vector<std::size_t>& verification_history() const { return verification_history_; }
  std::size_t max_pool_depth() const { return max_pool_depth_; }

  void set_peers(std::vector<NodeId> peers) { peers_ = std::move(peers); }
  void add_member(const NodeId& member) { members_.insert(member); }
  /// Drops membership and every key-list entry of the member.
  std::size_t remove_member(const NodeId& member);

  /// Fails (returns false) for non-members. Duplicate uploads are idempotent.
  bool upload_key_pair(const NodeId& member, const PublicKey& requester_pk, const PublicKey& member_pk);
  std::size_t remove_member_keys(const NodeId& member);

  /// `submitter` is the member that sent the transaction when origin is Member.
  RoutingOutcome receive_transaction(const Transaction& tx, Origin origin, const NodeId& submitter,
                                     double now);

  /// Runs DTM over the closing window; forms a block when it is this OBM's turn.
  /// `current_period` is the network-agreed length of the period that just ended.
  PeriodResult on_period_tick(std::uint64_t period_index, std::span<const NodeId> schedule,
                              double now, double current_period, bool flush = false);

  BlockReceipt on_block_received(const Block& block);

  /// Per member, the stored transactions generated under keys that member uploaded.
  std::map<NodeId, std::vector<ledger::TxHead>> notices_for(const Block& block) const;
  /// Latest stored transaction of each of the member's uploaded keys.
  std::vector<ledger::TxHead> ledger_heads_for(const NodeId& member) const;

  void expire_pending(double now);

 private:
  void admit_to_pool(const Transaction& tx, double now);
  void evict_block_transactions(const Block& block);
  std::uint64_t next_seed();

  NodeId id_;
  crypto::KeyPair keypair_;
  ObmParams params_;
  KeyList key_list_;
  ledger::TxPool pool_;
  ledger::Chain chain_;
  ledger::TrustTable trust_;
  ledger::DtmState dtm_;
  std::vector<NodeId> peers_;
  std::set<NodeId> members_;

  std::unordered_set<ledger::Digest> seen_;
  std::map<ledger::Digest, double> pending_;  // half-signed, forwarded for countersigning
  std::map<std::uint64_t, Block> orphans_;    // received ahead of their predecessor

  std::deque<std::pair<double, std::uint64_t>> window_;  // (tick time, admissions)
  std::uint64_t admissions_since_tick_ = 0;
  double last_tick_time_ = 0.0;

  DropCounters drops_;
  std::uint64_t pending_expired_ = 0;
  std::uint64_t blocks_appended_ = 0;
  std::uint64_t blocks_rejected_ = 0;
  std::vector<std::size_t> verification_history_;
  std::size_t max_pool_depth_ = 0;
  std::uint64_t rng_state_;
};

}  // namespace autochain::obm
