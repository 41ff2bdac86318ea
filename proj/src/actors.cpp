#include "autochain/actors.hpp"

namespace autochain::actors {

crypto::KeyRing CertificateAuthority::enroll(std::string identity, KeyPair identity_key, KeyPair auxiliary) const {
  auto cert = certify(std::move(identity), identity_key.public_key);
  return crypto::KeyRing::certified(identity_key, std::move(cert), auxiliary);
}

std::string_view to_string(PublishError e) {
  return e == PublishError::CloudWriteDenied ? "CloudWriteDenied" : "LedgerBusy";
}

Result<Transaction, PublishError> SwProvider::build_update(const UpdatePackage& package, const PublicKey& oem_pk) {
  if (!can_publish()) return PublishError::LedgerBusy;
  auto& cursor = cursors_.at(public_key());
  auto tx = ledger::build_transaction(ledger::TxKind::Multisig, cursor.previous(), crypto::digest(package.encode()),
                                      ledger::PayloadTag::SwUpdate, keys_.identity(), oem_pk);
  cursor.issued();
  return tx;
}

Result<PublishedUpdate, PublishError> SwProvider::publish_update(const UpdatePackage& package,
                                                                 cloud::CloudStore& cloud, const PublicKey& oem_pk) {
  if (!can_publish()) return PublishError::LedgerBusy;
  Bytes binary = package.encode();
  const auto object_id = sw_object_id(crypto::digest(binary));
  if (!cloud.store(cloud_account_, keys_.identity(), object_id, std::move(binary))) {
    return PublishError::CloudWriteDenied;
  }
  auto tx = build_update(package, oem_pk);
  if (!tx) return tx.error();
  return PublishedUpdate{*tx, object_id, package};
}

std::string_view to_string(ApprovalError e) {
  switch (e) {
    case ApprovalError::NotAddressedToMe: return "NotAddressedToMe";
    case ApprovalError::BadProviderSignature: return "BadProviderSignature";
    case ApprovalError::DigestMismatch: return "DigestMismatch";
    case ApprovalError::DownloadFailed: return "DownloadFailed";
  }
  return "?";
}

bool Oem::trust_provider(const crypto::Certificate& cert) {
  if (!crypto::verify_certificate(cert, ca_pk_)) return false;
  providers_.insert(cert.subject_pk);
  return true;
}

Status<ApprovalError> Oem::precheck(const Transaction& pending) const {
  if (!pending.pk_2 || *pending.pk_2 != public_key() || !pending.is_pending() ||
      pending.payload_tag != ledger::PayloadTag::SwUpdate) {
    return ApprovalError::NotAddressedToMe;
  }
  if (!providers_.contains(pending.pk_1) || !ledger::is_authentic(pending)) {
    return ApprovalError::BadProviderSignature;
  }
  return Unit{};
}

Result<Transaction, ApprovalError> Oem::finish_approval(const Transaction& pending,
                                                        const Result<Bytes, cloud::CloudError>& download) {
  if (auto ok = precheck(pending); !ok) return ok.error();
  if (!download) return ApprovalError::DownloadFailed;
  if (crypto::digest(download.value()) != pending.payload_digest) return ApprovalError::DigestMismatch;
  auto signed_tx = ledger::countersign(pending, keys_.identity());
  if (!signed_tx) return ApprovalError::NotAddressedToMe;
  ++countersigned_;
  return *signed_tx;
}

Result<Transaction, ApprovalError> Oem::oem_approve(const Transaction& pending, cloud::CloudStore& cloud) {
  if (auto ok = precheck(pending); !ok) return ok.error();
  return finish_approval(pending,
                         cloud.fetch(cloud_account_, keys_.identity(), sw_object_id(pending.payload_digest)));
}

std::optional<Transaction> Oem::message_to(const PublicKey& recipient, const Digest& payload) {
  if (!can_message()) return std::nullopt;
  auto& cursor = cursors_.at(public_key());
  auto tx = ledger::build_transaction(ledger::TxKind::Multisig, cursor.previous(), payload,
                                      ledger::PayloadTag::Generic, keys_.identity(), recipient);
  cursor.issued();
  return tx;
}

std::string_view to_string(ClaimError e) {
  switch (e) {
    case ClaimError::AnchorNotFound: return "AnchorNotFound";
    case ClaimError::KeyNotRegistered: return "KeyNotRegistered";
    case ClaimError::DigestMismatch: return "DigestMismatch";
  }
  return "?";
}

OpenedAccount Insurer::insurer_open_account(const std::string& owner_identity, cloud::CloudStore& cloud,
                                            std::uint64_t seed) {
  OpenedAccount acct{"ins-" + std::to_string(next_account_++), crypto::generate_keypair(seed)};
  const auto prefix = data_prefix(acct.account_id) + "*";
  cloud.create_account(acct.account_id, acct.key.public_key, cloud::AccessGrant{{prefix}, {prefix}});
  registry_[acct.account_id] = InsuranceAccount{owner_identity, acct.key.public_key, true};
  pk_db_[acct.key.public_key] = acct.account_id;
  return acct;
}

bool Insurer::insurer_close_account(const std::string& account_id, cloud::CloudStore& cloud, bool retain_objects) {
  auto it = registry_.find(account_id);
  if (it == registry_.end() || !it->second.open) return false;
  cloud.close_account(account_id, retain_objects);
  it->second.open = false;
  return true;
}

Status<ClaimError> Insurer::insurer_verify_claim(const Claim& claim, const ledger::Chain& chain) const {
  const Transaction* tx = chain.find(claim.anchor_t_id);
  if (!tx || (tx->payload_tag != ledger::PayloadTag::StorageAnchor &&
              tx->payload_tag != ledger::PayloadTag::BackupAnchor)) {
    return ClaimError::AnchorNotFound;
  }
  auto owner = pk_db_.find(tx->pk_1);
  if (owner == pk_db_.end() || owner->second != claim.account_id) return ClaimError::KeyNotRegistered;
  if (store_digest(claim.records) != tx->payload_digest) return ClaimError::DigestMismatch;
  return Unit{};
}

std::optional<std::string> Insurer::owner_of(const PublicKey& pk) const {
  auto it = pk_db_.find(pk);
  if (it == pk_db_.end()) return std::nullopt;
  return registry_.at(it->second).owner_identity;
}

}  // namespace autochain::actors
