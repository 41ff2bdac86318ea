#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "autochain/cloud.hpp"
#include "autochain/crypto.hpp"
#include "autochain/ledger.hpp"
#include "autochain/records.hpp"
#include "autochain/result.hpp"

namespace autochain::vehicle {

using NodeId = std::string;
using crypto::Digest;
using crypto::PublicKey;
using ledger::Transaction;

struct VehicleParams {
  double anchor_interval = 50.0;
  double handover_threshold = 100.0;
  /// A new OBM must beat the current delay by this fraction.
  double hysteresis = 0.2;
  std::size_t probe_count = 3;
  /// Fresh key after every transaction signed with the rotating key.
  bool rotate_per_interaction = false;
};

struct InstalledSw {
  std::string version;
  Digest digest;
  friend bool operator==(const InstalledSw&, const InstalledSw&) = default;
};

struct CloudAccount {
  std::string account_id;
  crypto::KeyPair key;
};

enum class UpdateRejection { InvalidTransaction, NotFromMyOem, HashMismatch, CloudAuthFailed, DownloadMissing };
std::string_view to_string(UpdateRejection r);

/// A submitted anchor and the slice of history() it covers.
struct AnchorRecord {
  Digest t_id;
  ledger::PayloadTag tag = ledger::PayloadTag::StorageAnchor;
  PublicKey pk;
  double time = 0.0;
  std::size_t start = 0;
  std::size_t count = 0;
  Digest payload_digest;
};

struct AccessPair {
  PublicKey requester_pk;
  PublicKey member_pk;
};

using DelayProbe = std::function<double(const NodeId&)>;

struct HandoverDecision {
  NodeId current;
  std::map<NodeId, double> delays;
  /// Set when the vehicle should move.
  std::optional<NodeId> target;
};

/// An update that passed the transaction checks and awaits its binary.
struct PendingInstall {
  Transaction tx;
  std::string object_id;
};

class Vehicle {
 public:
  Vehicle(NodeId id, crypto::KeyRing keys, NodeId obm, PublicKey oem_pk, VehicleParams params = {});

  const NodeId& id() const { return id_; }
  const NodeId& obm() const { return obm_; }
  const crypto::KeyRing& keys() const { return keys_; }
  const PublicKey& current_pk() const { return keys_.current().public_key; }
  const PublicKey& oem_pk() const { return oem_pk_; }
  const VehicleParams& params() const { return params_; }
  const std::vector<StorageRecord>& in_vehicle_storage() const { return in_vehicle_; }
  const std::vector<StorageRecord>& backup_store() const { return backup_; }
  const std::map<std::string, InstalledSw>& installed_sw() const { return installed_; }
  const std::vector<AnchorRecord>& anchors() const { return anchors_; }
  std::optional<Digest> last_anchor_tx() const;
  const ledger::CursorSet& cursors() const { return cursors_; }

  void set_wrsu_account(CloudAccount account) { wrsu_account_ = std::move(account); }
  const std::optional<CloudAccount>& wrsu_account() const { return wrsu_account_; }
  void set_insurance_account(CloudAccount account, PublicKey insurer_pk);
  void clear_insurance_account() { insurance_account_.reset(); }
  const std::optional<CloudAccount>& insurance_account() const { return insurance_account_; }
  /// Other keys allowed to address this vehicle (message senders).
  void add_requester(const PublicKey& pk) { extra_requesters_.push_back(pk); }

  /// Appends to the in-vehicle store; refuses a timestamp older than the last one.
  bool record(StorageRecord r);
  /// backup_store followed by in_vehicle_storage: every record ever kept, in order.
  std::vector<StorageRecord> history() const;

  /// Signs anchors: the insurance account key once one exists, else the rotating key.
  const crypto::KeyPair& anchor_key() const;
  bool can_anchor() const { return cursors_.can_issue(anchor_key().public_key); }
  bool anchor_due(double now) const;
  std::optional<double> last_anchor_time() const { return last_anchor_time_; }
  /// Anchors the in-vehicle store. Returns nothing while the anchor key has a
  /// transaction in flight.
  std::optional<Transaction> anchor_storage(double now);
  /// Moves up to `max_records` of the oldest records to the backup store and
  /// anchors the backup digest. No-op when empty or when the anchor key is busy.
  std::optional<Transaction> transfer_to_backup(double now, std::size_t max_records);

  HandoverDecision evaluate_handover(std::span<const NodeId> candidates, const DelayProbe& probe) const;
  void commit_handover(const NodeId& new_obm) { obm_ = new_obm; }
  /// Key pairs to upload to the associated OBM.
  std::vector<AccessPair> access_pairs() const;

  Result<PendingInstall, UpdateRejection> check_update(const Transaction& tx) const;
  Result<InstalledSw, UpdateRejection> complete_update(const PendingInstall& pending,
                                                       const Result<Bytes, cloud::CloudError>& download);
  /// check_update, download over a direct cloud session, complete_update.
  Result<InstalledSw, UpdateRejection> handle_update_notification(const Transaction& tx, cloud::CloudStore& cloud);

  /// Countersigns a pending transaction addressed to one of this vehicle's keys.
  Result<Transaction, ledger::CountersignError> countersign_request(const Transaction& tx) const;

  /// True iff the digest of `records` was anchored in `chain` under one of this vehicle's keys.
  bool prove_storage_integrity(std::span<const StorageRecord> records, const ledger::Chain& chain) const;

  bool observe_stored(const ledger::TxHead& head) { return cursors_.observe_stored(head); }

  /// Replaces the rotating key. Returns true when the caller must re-upload access pairs.
  bool rotate(std::uint64_t seed);
  /// Rotates if configured to after signing with `pk`.
  bool after_interaction(const PublicKey& pk, std::uint64_t seed);

 private:
  Transaction issue_anchor(ledger::PayloadTag tag, std::size_t start, std::size_t count, double now);

  NodeId id_;
  crypto::KeyRing keys_;
  NodeId obm_;
  PublicKey oem_pk_;
  VehicleParams params_;
  std::vector<StorageRecord> in_vehicle_;
  std::vector<StorageRecord> backup_;
  std::map<std::string, InstalledSw> installed_;
  std::optional<CloudAccount> wrsu_account_;
  std::optional<CloudAccount> insurance_account_;
  std::optional<PublicKey> insurer_pk_;
  std::vector<PublicKey> extra_requesters_;
  ledger::CursorSet cursors_;
  std::vector<AnchorRecord> anchors_;
  std::optional<double> last_anchor_time_;
};

}  // namespace autochain::vehicle
