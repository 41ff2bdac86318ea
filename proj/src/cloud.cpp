#include "autochain/cloud.hpp"

#include <algorithm>

namespace autochain::cloud {

std::string_view to_string(CloudError e) {
  switch (e) {
    case CloudError::UnknownAccount: return "UnknownAccount";
    case CloudError::BadProof: return "BadProof";
    case CloudError::AccessDenied: return "AccessDenied";
    case CloudError::NotFound: return "NotFound";
  }
  return "?";
}

bool pattern_matches(std::string_view pattern, std::string_view object_id) {
  if (!pattern.empty() && pattern.back() == '*') {
    pattern.remove_suffix(1);
    return object_id.starts_with(pattern);
  }
  return pattern == object_id;
}

namespace {
bool any_match(const std::vector<std::string>& patterns, std::string_view object_id) {
  return std::any_of(patterns.begin(), patterns.end(),
                     [&](const std::string& p) { return pattern_matches(p, object_id); });
}
}  // namespace

Bytes challenge_message(std::string_view account_id, const Challenge& challenge) {
  CanonicalWriter w;
  w.field(std::string_view{"autochain.cloud.challenge"}).field(account_id).u64(challenge.id).field(ByteView{challenge.nonce});
  return std::move(w).bytes();
}

Proof answer_challenge(std::string_view account_id, const Challenge& challenge, const crypto::KeyPair& account_key) {
  return Proof{challenge.id, crypto::sign(challenge_message(account_id, challenge), account_key.secret_key)};
}

void CloudStore::create_account(const std::string& account_id, const crypto::PublicKey& pk, AccessGrant grant) {
  accounts_[account_id] = Account{pk, std::move(grant)};
}

bool CloudStore::close_account(const std::string& account_id, bool retain_objects) {
  auto it = accounts_.find(account_id);
  if (it == accounts_.end()) return false;
  if (!retain_objects) {
    std::erase_if(objects_, [&](const auto& kv) { return any_match(it->second.grant.write, kv.first); });
  }
  accounts_.erase(it);
  std::erase_if(sessions_, [&](const auto& kv) { return kv.second == account_id; });
  std::erase_if(challenges_, [&](const auto& kv) { return kv.second.account_id == account_id; });
  return true;
}

void CloudStore::grant(const std::string& account_id, const AccessGrant& extra) {
  auto it = accounts_.find(account_id);
  if (it == accounts_.end()) return;
  auto& g = it->second.grant;
  g.read.insert(g.read.end(), extra.read.begin(), extra.read.end());
  g.write.insert(g.write.end(), extra.write.begin(), extra.write.end());
}

Result<Challenge, CloudError> CloudStore::issue_challenge(const std::string& account_id) {
  if (!accounts_.contains(account_id)) return CloudError::UnknownAccount;
  CanonicalWriter w;
  w.field(std::string_view{"autochain.cloud.nonce"}).u64(nonce_state_++).u64(next_id_);
  const auto d = crypto::digest(w.bytes());
  Challenge c{next_id_++, Bytes(d.bytes.begin(), d.bytes.end())};
  challenges_[c.id] = PendingChallenge{account_id, c};
  return c;
}

Result<Session, CloudError> CloudStore::cloud_authenticate(const std::string& account_id, const Proof& proof) {
  auto acct = accounts_.find(account_id);
  if (acct == accounts_.end()) return CloudError::UnknownAccount;
  auto it = challenges_.find(proof.challenge_id);
  if (it == challenges_.end() || it->second.account_id != account_id) return CloudError::BadProof;
  // Nonces are single use whether or not the answer verifies.
  const Challenge challenge = it->second.challenge;
  challenges_.erase(it);
  if (!crypto::verify(challenge_message(account_id, challenge), proof.signature, acct->second.pk)) {
    return CloudError::BadProof;
  }
  Session s{account_id, next_id_++};
  sessions_[s.token] = account_id;
  return s;
}

const CloudStore::Account* CloudStore::session_account(const Session& session) const {
  auto it = sessions_.find(session.token);
  if (it == sessions_.end() || it->second != session.account_id) return nullptr;
  auto acct = accounts_.find(session.account_id);
  return acct == accounts_.end() ? nullptr : &acct->second;
}

Result<Bytes, CloudError> CloudStore::cloud_get(const Session& session, const std::string& object_id) const {
  const Account* acct = session_account(session);
  if (!acct) return accounts_.contains(session.account_id) ? CloudError::AccessDenied : CloudError::UnknownAccount;
  if (!any_match(acct->grant.read, object_id)) return CloudError::AccessDenied;
  auto it = objects_.find(object_id);
  if (it == objects_.end()) return CloudError::NotFound;
  return it->second;
}

Status<CloudError> CloudStore::cloud_put(const Session& session, const std::string& object_id, Bytes data) {
  const Account* acct = session_account(session);
  if (!acct) return accounts_.contains(session.account_id) ? CloudError::AccessDenied : CloudError::UnknownAccount;
  if (!any_match(acct->grant.write, object_id)) return CloudError::AccessDenied;
  objects_[object_id] = std::move(data);
  return Unit{};
}

const Bytes* CloudStore::peek(const std::string& object_id) const {
  auto it = objects_.find(object_id);
  return it == objects_.end() ? nullptr : &it->second;
}

Result<Bytes, CloudError> CloudStore::fetch(const std::string& account_id, const crypto::KeyPair& key,
                                            const std::string& object_id) {
  auto challenge = issue_challenge(account_id);
  if (!challenge) return challenge.error();
  auto session = cloud_authenticate(account_id, answer_challenge(account_id, *challenge, key));
  if (!session) return session.error();
  return cloud_get(*session, object_id);
}

Status<CloudError> CloudStore::store(const std::string& account_id, const crypto::KeyPair& key,
                                     const std::string& object_id, Bytes data) {
  auto challenge = issue_challenge(account_id);
  if (!challenge) return challenge.error();
  auto session = cloud_authenticate(account_id, answer_challenge(account_id, *challenge, key));
  if (!session) return session.error();
  return cloud_put(*session, object_id, std::move(data));
}

}  // namespace autochain::cloud
