#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "autochain/bytes.hpp"
#include "autochain/crypto.hpp"
#include "autochain/result.hpp"

namespace autochain::cloud {

enum class CloudError { UnknownAccount, BadProof, AccessDenied, NotFound };
std::string_view to_string(CloudError e);

/// Object-id patterns: an exact id, or a prefix ending in '*'.
struct AccessGrant {
  std::vector<std::string> read;
  std::vector<std::string> write;
};

bool pattern_matches(std::string_view pattern, std::string_view object_id);

struct Challenge {
  std::uint64_t id = 0;
  Bytes nonce;
};

struct Proof {
  std::uint64_t challenge_id = 0;
  crypto::Signature signature;
};

struct Session {
  std::string account_id;
  std::uint64_t token = 0;
};

/// Bytes a client signs to answer a challenge: binds the nonce to the account.
Bytes challenge_message(std::string_view account_id, const Challenge& challenge);
Proof answer_challenge(std::string_view account_id, const Challenge& challenge, const crypto::KeyPair& account_key);

/// Object store with key-based accounts. Every read or write needs a session,
/// and a session is only granted after the client signs a fresh nonce with the
/// account's secret key.
class CloudStore {
 public:
  explicit CloudStore(std::uint64_t nonce_seed = 0) : nonce_state_(nonce_seed) {}

  void create_account(const std::string& account_id, const crypto::PublicKey& pk, AccessGrant grant);
  /// Returns false when the account does not exist.
  bool close_account(const std::string& account_id, bool retain_objects = true);
  bool has_account(const std::string& account_id) const { return accounts_.contains(account_id); }
  void grant(const std::string& account_id, const AccessGrant& extra);

  Result<Challenge, CloudError> issue_challenge(const std::string& account_id);
  Result<Session, CloudError> cloud_authenticate(const std::string& account_id, const Proof& proof);
  Result<Bytes, CloudError> cloud_get(const Session& session, const std::string& object_id) const;
  Status<CloudError> cloud_put(const Session& session, const std::string& object_id, Bytes data);

  /// Rewrites an object bypassing access control (models a compromised store).
  void tamper(const std::string& object_id, Bytes data) { objects_[object_id] = std::move(data); }
  const Bytes* peek(const std::string& object_id) const;
  std::size_t object_count() const { return objects_.size(); }

  /// Challenge, authenticate and read in one call, for callers without a network.
  Result<Bytes, CloudError> fetch(const std::string& account_id, const crypto::KeyPair& key,
                                  const std::string& object_id);
  Status<CloudError> store(const std::string& account_id, const crypto::KeyPair& key,
                           const std::string& object_id, Bytes data);

 private:
  struct Account {
    crypto::PublicKey pk;
    AccessGrant grant;
  };
  struct PendingChallenge {
    std::string account_id;
    Challenge challenge;
  };

  const Account* session_account(const Session& session) const;

  std::map<std::string, Bytes> objects_;
  std::map<std::string, Account> accounts_;
  std::map<std::uint64_t, PendingChallenge> challenges_;
  std::map<std::uint64_t, std::string> sessions_;
  std::uint64_t next_id_ = 1;
  std::uint64_t nonce_state_;
};

}  // namespace autochain::cloud
