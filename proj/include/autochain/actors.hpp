#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "autochain/cloud.hpp"
#include "autochain/crypto.hpp"
#include "autochain/ledger.hpp"
#include "autochain/records.hpp"
#include "autochain/result.hpp"

namespace autochain::actors {

using crypto::Digest;
using crypto::KeyPair;
using crypto::PublicKey;
using ledger::Transaction;

class CertificateAuthority {
 public:
  explicit CertificateAuthority(KeyPair key) : key_(key) {}
  const PublicKey& public_key() const { return key_.public_key; }
  crypto::Certificate certify(std::string identity, const PublicKey& subject) const {
    return crypto::issue_certificate(key_, std::move(identity), subject);
  }
  /// Certified key ring whose identity key is `identity_key`.
  crypto::KeyRing enroll(std::string identity, KeyPair identity_key, KeyPair auxiliary) const;

 private:
  KeyPair key_;
};

enum class PublishError { CloudWriteDenied, LedgerBusy };
std::string_view to_string(PublishError e);

struct PublishedUpdate {
  Transaction tx;
  std::string object_id;
  UpdatePackage package;
};

class SwProvider {
 public:
  SwProvider(std::string id, crypto::KeyRing keys, std::string cloud_account)
      : id_(std::move(id)), keys_(std::move(keys)), cloud_account_(std::move(cloud_account)) {}

  const std::string& id() const { return id_; }
  const crypto::KeyRing& keys() const { return keys_; }
  const PublicKey& public_key() const { return keys_.identity().public_key; }
  const std::string& cloud_account() const { return cloud_account_; }
  const ledger::CursorSet& cursors() const { return cursors_; }
  bool observe_stored(const ledger::TxHead& head) { return cursors_.observe_stored(head); }
  bool can_publish() const { return cursors_.can_issue(public_key()); }

  /// Stores the package in the cloud and builds the pending update addressed to the OEM.
  Result<PublishedUpdate, PublishError> publish_update(const UpdatePackage& package, cloud::CloudStore& cloud,
                                                       const PublicKey& oem_pk);
  /// Builds the pending update for a package already stored under its object id.
  Result<Transaction, PublishError> build_update(const UpdatePackage& package, const PublicKey& oem_pk);

 private:
  std::string id_;
  crypto::KeyRing keys_;
  std::string cloud_account_;
  ledger::CursorSet cursors_;
};

enum class ApprovalError { NotAddressedToMe, BadProviderSignature, DigestMismatch, DownloadFailed };
std::string_view to_string(ApprovalError e);

class Oem {
 public:
  Oem(std::string id, crypto::KeyRing keys, PublicKey ca_pk, std::string cloud_account)
      : id_(std::move(id)), keys_(std::move(keys)), ca_pk_(ca_pk), cloud_account_(std::move(cloud_account)) {}

  const std::string& id() const { return id_; }
  const crypto::KeyRing& keys() const { return keys_; }
  const PublicKey& public_key() const { return keys_.identity().public_key; }
  const std::string& cloud_account() const { return cloud_account_; }
  const ledger::CursorSet& cursors() const { return cursors_; }
  bool observe_stored(const ledger::TxHead& head) { return cursors_.observe_stored(head); }

  /// Accepts a provider only if its certificate verifies under the CA.
  bool trust_provider(const crypto::Certificate& cert);
  const std::set<PublicKey>& providers() const { return providers_; }

  /// Transaction checks that need no binary: addressee, then provider signature.
  Status<ApprovalError> precheck(const Transaction& pending) const;
  /// Digest check on the downloaded binary, then the countersignature.
  Result<Transaction, ApprovalError> finish_approval(const Transaction& pending,
                                                     const Result<Bytes, cloud::CloudError>& download);
  Result<Transaction, ApprovalError> oem_approve(const Transaction& pending, cloud::CloudStore& cloud);
  std::uint64_t countersigned() const { return countersigned_; }

  bool can_message() const { return cursors_.can_issue(public_key()); }
  /// Pending Generic multisig addressed to `recipient`. Needs a free cursor.
  std::optional<Transaction> message_to(const PublicKey& recipient, const Digest& payload);
  /// Frees the cursor after a message that will never be stored.
  void abandon_message() { cursors_.at(public_key()).abandon(); }

 private:
  std::string id_;
  crypto::KeyRing keys_;
  PublicKey ca_pk_;
  std::string cloud_account_;
  std::set<PublicKey> providers_;
  ledger::CursorSet cursors_;
  std::uint64_t countersigned_ = 0;
};

enum class ClaimError { AnchorNotFound, KeyNotRegistered, DigestMismatch };
std::string_view to_string(ClaimError e);

struct Claim {
  std::string account_id;
  Digest anchor_t_id;
  std::vector<StorageRecord> records;
};

struct OpenedAccount {
  std::string account_id;
  KeyPair key;
};

struct InsuranceAccount {
  std::string owner_identity;
  PublicKey pk;
  bool open = true;
};

class Insurer {
 public:
  Insurer(std::string id, crypto::KeyRing keys) : id_(std::move(id)), keys_(std::move(keys)) {}

  const std::string& id() const { return id_; }
  const PublicKey& public_key() const { return keys_.identity().public_key; }

  /// New cloud account with a fresh key pair for `owner_identity`.
  OpenedAccount insurer_open_account(const std::string& owner_identity, cloud::CloudStore& cloud, std::uint64_t seed);
  /// False (no-op) when the account is unknown or already closed.
  bool insurer_close_account(const std::string& account_id, cloud::CloudStore& cloud, bool retain_objects = true);
  Status<ClaimError> insurer_verify_claim(const Claim& claim, const ledger::Chain& chain) const;

  const std::map<std::string, InsuranceAccount>& registry() const { return registry_; }
  std::optional<std::string> owner_of(const PublicKey& pk) const;
  /// Object-id prefix an account may read and write.
  static std::string data_prefix(const std::string& account_id) { return "ins/" + account_id + "/"; }

 private:
  std::string id_;
  crypto::KeyRing keys_;
  std::map<std::string, InsuranceAccount> registry_;
  std::map<PublicKey, std::string> pk_db_;
  std::uint64_t next_account_ = 1;
};

}  // namespace autochain::actors
