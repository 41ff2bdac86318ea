#include <gtest/gtest.h>

#include "autochain/actors.hpp"
#include "autochain/cloud.hpp"
#include "support.hpp"

using namespace autochain;
using namespace autochain::actors;
using autochain::testing::append;
using cloud::CloudError;
using cloud::CloudStore;

namespace {

const KeyPair kCa = crypto::generate_keypair(1);
const KeyPair kObm = crypto::generate_keypair(2);

struct Wrsu {
  CertificateAuthority ca{kCa};
  CloudStore cloud{3};
  SwProvider provider{"prov1", ca.enroll("prov1", crypto::generate_keypair(10), crypto::generate_keypair(11)),
                      "prov-acct"};
  Oem oem{"oem1", ca.enroll("oem1", crypto::generate_keypair(20), crypto::generate_keypair(21)), kCa.public_key,
          "oem-acct"};
  UpdatePackage package{"ecu-main", "2.1", Bytes(256, 0x5a)};

  Wrsu() {
    cloud.create_account("prov-acct", provider.public_key(), {{"sw/*"}, {"sw/*"}});
    cloud.create_account("oem-acct", oem.public_key(), {{"sw/*"}, {}});
    oem.trust_provider(*provider.keys().certificate());
  }
};

}  // namespace

TEST(Cloud, PatternMatching) {
  EXPECT_TRUE(cloud::pattern_matches("sw/*", "sw/abc"));
  EXPECT_TRUE(cloud::pattern_matches("*", "anything"));
  EXPECT_TRUE(cloud::pattern_matches("a/b", "a/b"));
  EXPECT_FALSE(cloud::pattern_matches("a/b", "a/bc"));
  EXPECT_FALSE(cloud::pattern_matches("sw/*", "ins/x"));
}

TEST(Cloud, ChallengeResponseGrantsSession) {
  CloudStore c(1);
  const auto key = crypto::generate_keypair(5);
  c.create_account("a", key.public_key, {{"d/*"}, {"d/*"}});
  const auto ch = c.issue_challenge("a");
  ASSERT_TRUE(ch);
  const auto session = c.cloud_authenticate("a", cloud::answer_challenge("a", *ch, key));
  ASSERT_TRUE(session);
  EXPECT_TRUE(c.cloud_put(*session, "d/1", Bytes{1, 2, 3}));
  EXPECT_EQ(*c.cloud_get(*session, "d/1"), (Bytes{1, 2, 3}));
  EXPECT_EQ(c.cloud_get(*session, "d/2").error(), CloudError::NotFound);
  EXPECT_EQ(c.cloud_get(*session, "e/1").error(), CloudError::AccessDenied);
  EXPECT_EQ(c.cloud_put(*session, "e/1", {}).error(), CloudError::AccessDenied);
}

TEST(Cloud, WrongKeyAndReplayedProofRejected) {
  CloudStore c(1);
  const auto key = crypto::generate_keypair(5);
  c.create_account("a", key.public_key, {{"*"}, {}});
  const auto ch = *c.issue_challenge("a");
  EXPECT_EQ(c.cloud_authenticate("a", cloud::answer_challenge("a", ch, crypto::generate_keypair(6))).error(),
            CloudError::BadProof);
  EXPECT_EQ(c.cloud_authenticate("a", cloud::answer_challenge("a", ch, key)).error(), CloudError::BadProof);
}

TEST(Cloud, ProofBoundToAccount) {
  CloudStore c(1);
  const auto key = crypto::generate_keypair(5);
  c.create_account("a", key.public_key, {{"*"}, {}});
  c.create_account("b", key.public_key, {{"*"}, {}});
  const auto ch = *c.issue_challenge("a");
  EXPECT_EQ(c.cloud_authenticate("b", cloud::answer_challenge("b", ch, key)).error(), CloudError::BadProof);
}

TEST(Cloud, UnknownAccountAndClosure) {
  CloudStore c(1);
  const auto key = crypto::generate_keypair(5);
  EXPECT_EQ(c.issue_challenge("nobody").error(), CloudError::UnknownAccount);
  c.create_account("a", key.public_key, {{"*"}, {"d/*"}});
  const auto session = *c.cloud_authenticate("a", cloud::answer_challenge("a", *c.issue_challenge("a"), key));
  ASSERT_TRUE(c.cloud_put(session, "d/1", {9}));
  EXPECT_TRUE(c.close_account("a"));
  EXPECT_FALSE(c.close_account("a"));
  EXPECT_EQ(c.cloud_get(session, "d/1").error(), CloudError::UnknownAccount);
  EXPECT_EQ(c.fetch("a", key, "d/1").error(), CloudError::UnknownAccount);
  EXPECT_NE(c.peek("d/1"), nullptr);
}

TEST(Cloud, ClosureCanDropObjects) {
  CloudStore c(1);
  const auto key = crypto::generate_keypair(5);
  c.create_account("a", key.public_key, {{"*"}, {"d/*"}});
  ASSERT_TRUE(c.store("a", key, "d/1", {9}));
  c.close_account("a", false);
  EXPECT_EQ(c.peek("d/1"), nullptr);
}

TEST(Provider, PublishStoresBinaryAndBuildsPendingUpdate) {
  Wrsu w;
  const auto pub = w.provider.publish_update(w.package, w.cloud, w.oem.public_key());
  ASSERT_TRUE(pub);
  EXPECT_TRUE(pub->tx.is_pending());
  EXPECT_EQ(pub->tx.pk_1, w.provider.public_key());
  EXPECT_EQ(*pub->tx.pk_2, w.oem.public_key());
  EXPECT_EQ(pub->tx.payload_digest, crypto::digest(w.package.encode()));
  ASSERT_NE(w.cloud.peek(pub->object_id), nullptr);
  EXPECT_EQ(*w.cloud.peek(pub->object_id), w.package.encode());
  EXPECT_EQ(w.provider.publish_update(w.package, w.cloud, w.oem.public_key()).error(), PublishError::LedgerBusy);
}

TEST(Provider, PublishWithoutCloudAccessFails) {
  Wrsu w;
  w.cloud.close_account("prov-acct");
  EXPECT_EQ(w.provider.publish_update(w.package, w.cloud, w.oem.public_key()).error(), PublishError::CloudWriteDenied);
}

TEST(Oem, ApprovesGenuineUpdate) {
  Wrsu w;
  const auto pub = *w.provider.publish_update(w.package, w.cloud, w.oem.public_key());
  const auto approved = w.oem.oem_approve(pub.tx, w.cloud);
  ASSERT_TRUE(approved);
  EXPECT_FALSE(approved->is_pending());
  EXPECT_EQ(ledger::validate_transaction(*approved, ledger::Chain{}), ledger::TxVerdict::Ok);
  EXPECT_EQ(w.oem.countersigned(), 1u);
}

TEST(Oem, RejectsTamperedBinary) {
  Wrsu w;
  const auto pub = *w.provider.publish_update(w.package, w.cloud, w.oem.public_key());
  w.cloud.tamper(pub.object_id, Bytes{0xde, 0xad});
  EXPECT_EQ(w.oem.oem_approve(pub.tx, w.cloud).error(), ApprovalError::DigestMismatch);
  EXPECT_EQ(w.oem.countersigned(), 0u);
}

TEST(Oem, RejectsUncertifiedProvider) {
  Wrsu w;
  const auto mallory = crypto::generate_keypair(66);
  const auto forged = ledger::build_transaction(ledger::TxKind::Multisig, crypto::zero_digest(),
                                                crypto::digest(w.package.encode()), ledger::PayloadTag::SwUpdate,
                                                mallory, w.oem.public_key());
  EXPECT_EQ(w.oem.oem_approve(forged, w.cloud).error(), ApprovalError::BadProviderSignature);
  EXPECT_FALSE(w.oem.trust_provider(crypto::issue_certificate(mallory, "prov1", mallory.public_key)));
}

TEST(Oem, RejectsImpersonatedProviderKeyWithoutSecret) {
  Wrsu w;
  auto forged = ledger::build_transaction(ledger::TxKind::Multisig, crypto::zero_digest(),
                                          crypto::digest(w.package.encode()), ledger::PayloadTag::SwUpdate,
                                          crypto::generate_keypair(66), w.oem.public_key());
  forged.pk_1 = w.provider.public_key();
  forged.t_id = forged.compute_id();
  EXPECT_EQ(w.oem.oem_approve(forged, w.cloud).error(), ApprovalError::BadProviderSignature);
}

TEST(Oem, RejectsUpdateAddressedElsewhere) {
  Wrsu w;
  const auto pub = *w.provider.publish_update(w.package, w.cloud, crypto::generate_keypair(77).public_key);
  EXPECT_EQ(w.oem.oem_approve(pub.tx, w.cloud).error(), ApprovalError::NotAddressedToMe);
}

TEST(Oem, MissingBinaryIsDownloadFailure) {
  Wrsu w;
  const auto tx = *w.provider.build_update(w.package, w.oem.public_key());
  EXPECT_EQ(w.oem.oem_approve(tx, w.cloud).error(), ApprovalError::DownloadFailed);
}

TEST(Oem, MessagesNeedFreeCursor) {
  Wrsu w;
  const auto target = crypto::generate_keypair(50).public_key;
  const auto m = w.oem.message_to(target, crypto::digest({}));
  ASSERT_TRUE(m);
  EXPECT_TRUE(m->is_pending());
  EXPECT_FALSE(w.oem.message_to(target, crypto::digest({})));
  w.oem.abandon_message();
  EXPECT_TRUE(w.oem.message_to(target, crypto::digest({})));
}

class InsurerTest : public ::testing::Test {
 protected:
  CloudStore cloud{9};
  Insurer insurer{"ins1", crypto::KeyRing::rotating(crypto::generate_keypair(60))};
};

TEST_F(InsurerTest, OpenAccountRegistersDistinctKeys) {
  const auto a = insurer.insurer_open_account("v1", cloud, 100);
  const auto b = insurer.insurer_open_account("v2", cloud, 101);
  EXPECT_NE(a.account_id, b.account_id);
  EXPECT_NE(a.key.public_key, b.key.public_key);
  EXPECT_EQ(insurer.owner_of(a.key.public_key), "v1");
  EXPECT_TRUE(cloud.has_account(a.account_id));
  EXPECT_TRUE(cloud.store(a.account_id, a.key, Insurer::data_prefix(a.account_id) + "r1", {1}));
  EXPECT_EQ(cloud.store(a.account_id, a.key, Insurer::data_prefix(b.account_id) + "r1", {1}).error(),
            CloudError::AccessDenied);
}

TEST_F(InsurerTest, CloseIsIdempotent) {
  const auto a = insurer.insurer_open_account("v1", cloud, 100);
  EXPECT_TRUE(insurer.insurer_close_account(a.account_id, cloud));
  EXPECT_FALSE(insurer.insurer_close_account(a.account_id, cloud));
  EXPECT_FALSE(insurer.insurer_close_account("ins-404", cloud));
  EXPECT_EQ(cloud.fetch(a.account_id, a.key, Insurer::data_prefix(a.account_id) + "r1").error(),
            CloudError::UnknownAccount);
  EXPECT_FALSE(insurer.registry().at(a.account_id).open);
}

TEST_F(InsurerTest, ClaimVerification) {
  const auto acct = insurer.insurer_open_account("v1", cloud, 100);
  const std::vector<StorageRecord> records{{1, RecordCategory::Location, {1}}, {2, RecordCategory::Braking, {2}}};
  const auto anchor = ledger::build_transaction(ledger::TxKind::SingleSig, crypto::zero_digest(),
                                                store_digest(records), ledger::PayloadTag::StorageAnchor, acct.key);
  ledger::Chain chain;
  append(chain, {anchor}, kObm);

  EXPECT_TRUE(insurer.insurer_verify_claim({acct.account_id, anchor.t_id, records}, chain));

  auto tampered = records;
  tampered[0].payload[0] = 7;
  EXPECT_EQ(insurer.insurer_verify_claim({acct.account_id, anchor.t_id, tampered}, chain).error(),
            ClaimError::DigestMismatch);
  EXPECT_EQ(insurer.insurer_verify_claim({acct.account_id, crypto::digest({}), records}, chain).error(),
            ClaimError::AnchorNotFound);
  EXPECT_EQ(insurer.insurer_verify_claim({"ins-999", anchor.t_id, records}, chain).error(),
            ClaimError::KeyNotRegistered);
}

TEST_F(InsurerTest, AnchorUnderUnregisteredKeyRejected) {
  insurer.insurer_open_account("v1", cloud, 100);
  const std::vector<StorageRecord> records{{1, RecordCategory::Location, {1}}};
  const auto anchor =
      ledger::build_transaction(ledger::TxKind::SingleSig, crypto::zero_digest(), store_digest(records),
                                ledger::PayloadTag::StorageAnchor, crypto::generate_keypair(555));
  ledger::Chain chain;
  append(chain, {anchor}, kObm);
  EXPECT_EQ(insurer.insurer_verify_claim({"ins-1", anchor.t_id, records}, chain).error(),
            ClaimError::KeyNotRegistered);
}
