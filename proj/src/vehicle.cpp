#include "autochain/vehicle.hpp"

#include <algorithm>

namespace autochain::vehicle {

std::string_view to_string(UpdateRejection r) {
  switch (r) {
    case UpdateRejection::InvalidTransaction: return "InvalidTransaction";
    case UpdateRejection::NotFromMyOem: return "NotFromMyOem";
    case UpdateRejection::HashMismatch: return "HashMismatch";
    case UpdateRejection::CloudAuthFailed: return "CloudAuthFailed";
    case UpdateRejection::DownloadMissing: return "DownloadMissing";
  }
  return "?";
}

Vehicle::Vehicle(NodeId id, crypto::KeyRing keys, NodeId obm, PublicKey oem_pk, VehicleParams params)
    : id_(std::move(id)), keys_(std::move(keys)), obm_(std::move(obm)), oem_pk_(oem_pk), params_(params) {}

std::optional<Digest> Vehicle::last_anchor_tx() const {
  if (anchors_.empty()) return std::nullopt;
  return anchors_.back().t_id;
}

void Vehicle::set_insurance_account(CloudAccount account, PublicKey insurer_pk) {
  insurance_account_ = std::move(account);
  insurer_pk_ = insurer_pk;
}

bool Vehicle::record(StorageRecord r) {
  const auto* last = !in_vehicle_.empty() ? &in_vehicle_.back() : (!backup_.empty() ? &backup_.back() : nullptr);
  if (last && r.timestamp < last->timestamp) return false;
  in_vehicle_.push_back(std::move(r));
  return true;
}

std::vector<StorageRecord> Vehicle::history() const {
  std::vector<StorageRecord> out = backup_;
  out.insert(out.end(), in_vehicle_.begin(), in_vehicle_.end());
  return out;
}

const crypto::KeyPair& Vehicle::anchor_key() const {
  return insurance_account_ ? insurance_account_->key : keys_.current();
}

bool Vehicle::anchor_due(double now) const {
  return !last_anchor_time_ || now - *last_anchor_time_ >= params_.anchor_interval;
}

Transaction Vehicle::issue_anchor(ledger::PayloadTag tag, std::size_t start, std::size_t count, double now) {
  const auto all = history();
  const auto slice = std::span<const StorageRecord>(all).subspan(start, count);
  const Digest payload = store_digest(slice);
  const auto& key = anchor_key();
  auto& cursor = cursors_.at(key.public_key);
  auto tx = ledger::build_transaction(ledger::TxKind::SingleSig, cursor.previous(), payload, tag, key);
  cursor.issued();
  anchors_.push_back(AnchorRecord{tx.t_id, tag, key.public_key, now, start, count, payload});
  last_anchor_time_ = now;
  return tx;
}

std::optional<Transaction> Vehicle::anchor_storage(double now) {
  if (!can_anchor()) return std::nullopt;
  return issue_anchor(ledger::PayloadTag::StorageAnchor, backup_.size(), in_vehicle_.size(), now);
}

std::optional<Transaction> Vehicle::transfer_to_backup(double now, std::size_t max_records) {
  if (in_vehicle_.empty() || max_records == 0 || !can_anchor()) return std::nullopt;
  const auto n = std::min(max_records, in_vehicle_.size());
  backup_.insert(backup_.end(), in_vehicle_.begin(), in_vehicle_.begin() + static_cast<std::ptrdiff_t>(n));
  in_vehicle_.erase(in_vehicle_.begin(), in_vehicle_.begin() + static_cast<std::ptrdiff_t>(n));
  return issue_anchor(ledger::PayloadTag::BackupAnchor, 0, backup_.size(), now);
}

HandoverDecision Vehicle::evaluate_handover(std::span<const NodeId> candidates, const DelayProbe& probe) const {
  HandoverDecision d;
  d.current = obm_;
  for (const auto& c : candidates) d.delays.emplace(c, probe(c));
  if (!d.delays.contains(obm_)) d.delays.emplace(obm_, probe(obm_));

  std::optional<std::pair<double, NodeId>> best;
  for (const auto& [node, delay] : d.delays) {
    if (delay > params_.handover_threshold) continue;
    if (!best || delay < best->first) best = std::pair{delay, node};
  }
  if (!best || best->second == obm_) return d;
  if (best->first <= (1.0 - params_.hysteresis) * d.delays.at(obm_)) d.target = best->second;
  return d;
}

std::vector<AccessPair> Vehicle::access_pairs() const {
  std::vector<AccessPair> out;
  const auto& me = current_pk();
  out.push_back({oem_pk_, me});
  if (insurer_pk_) out.push_back({*insurer_pk_, me});
  for (const auto& r : extra_requesters_) out.push_back({r, me});
  if (insurance_account_) out.push_back({*insurer_pk_, insurance_account_->key.public_key});
  return out;
}

Result<PendingInstall, UpdateRejection> Vehicle::check_update(const Transaction& tx) const {
  if (tx.payload_tag != ledger::PayloadTag::SwUpdate || tx.kind != ledger::TxKind::Multisig || !tx.fully_signed() ||
      !ledger::is_authentic(tx)) {
    return UpdateRejection::InvalidTransaction;
  }
  if (*tx.pk_2 != oem_pk_) return UpdateRejection::NotFromMyOem;
  return PendingInstall{tx, sw_object_id(tx.payload_digest)};
}

Result<InstalledSw, UpdateRejection> Vehicle::complete_update(const PendingInstall& pending,
                                                              const Result<Bytes, cloud::CloudError>& download) {
  if (!download) {
    return download.error() == cloud::CloudError::NotFound ? UpdateRejection::DownloadMissing
                                                           : UpdateRejection::CloudAuthFailed;
  }
  const Bytes& binary = download.value();
  const Digest d = crypto::digest(binary);
  if (d != pending.tx.payload_digest) return UpdateRejection::HashMismatch;
  UpdatePackage package;
  try {
    package = UpdatePackage::decode(binary);
  } catch (const DecodeError&) {
    return UpdateRejection::HashMismatch;
  }
  InstalledSw sw{package.version, d};
  installed_[package.ecu] = sw;
  return sw;
}

Result<InstalledSw, UpdateRejection> Vehicle::handle_update_notification(const Transaction& tx,
                                                                         cloud::CloudStore& cloud) {
  auto pending = check_update(tx);
  if (!pending) return pending.error();
  if (!wrsu_account_) return UpdateRejection::CloudAuthFailed;
  return complete_update(*pending, cloud.fetch(wrsu_account_->account_id, wrsu_account_->key, pending->object_id));
}

Result<Transaction, ledger::CountersignError> Vehicle::countersign_request(const Transaction& tx) const {
  if (!tx.pk_2) return ledger::CountersignError::NotMultisig;
  const crypto::KeyPair* key = keys_.find(*tx.pk_2);
  if (!key && insurance_account_ && insurance_account_->key.public_key == *tx.pk_2) key = &insurance_account_->key;
  if (!key) return ledger::CountersignError::WrongRecipient;
  return ledger::countersign(tx, *key);
}

bool Vehicle::prove_storage_integrity(std::span<const StorageRecord> records, const ledger::Chain& chain) const {
  const Digest d = store_digest(records);
  for (const auto& block : chain.blocks()) {
    for (const auto& tx : block.transactions) {
      if (tx.payload_digest != d) continue;
      if (tx.payload_tag != ledger::PayloadTag::StorageAnchor && tx.payload_tag != ledger::PayloadTag::BackupAnchor)
        continue;
      if (keys_.owns(tx.pk_1) || (insurance_account_ && insurance_account_->key.public_key == tx.pk_1)) return true;
    }
  }
  return false;
}

bool Vehicle::rotate(std::uint64_t seed) {
  crypto::rotate_key(keys_, seed);
  return true;
}

bool Vehicle::after_interaction(const PublicKey& pk, std::uint64_t seed) {
  if (!params_.rotate_per_interaction || pk != current_pk()) return false;
  return rotate(seed);
}

}  // namespace autochain::vehicle
