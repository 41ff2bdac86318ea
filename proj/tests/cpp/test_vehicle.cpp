#include <gtest/gtest.h>

#include "autochain/vehicle.hpp"
#include "support.hpp"

using namespace autochain;
using namespace autochain::vehicle;
using autochain::testing::append;
using ledger::PayloadTag;
using ledger::TxKind;

namespace {

const crypto::KeyPair kOem = crypto::generate_keypair(20);
const crypto::KeyPair kOtherOem = crypto::generate_keypair(21);
const crypto::KeyPair kProvider = crypto::generate_keypair(22);
const crypto::KeyPair kObm = crypto::generate_keypair(23);

Vehicle make_vehicle(VehicleParams p = {}) {
  return Vehicle("v1", crypto::KeyRing::rotating(crypto::generate_keypair(30)), "obmA", kOem.public_key, p);
}

StorageRecord rec(double t, std::string text = "x") {
  return StorageRecord{t, RecordCategory::Speed, Bytes(text.begin(), text.end())};
}

ledger::Transaction signed_update(const crypto::KeyPair& oem, const Bytes& binary) {
  const auto pending = ledger::build_transaction(TxKind::Multisig, crypto::zero_digest(), crypto::digest(binary),
                                                 PayloadTag::SwUpdate, kProvider, oem.public_key);
  return *ledger::countersign(pending, oem);
}

DelayProbe table(std::map<NodeId, double> delays) {
  return [delays](const NodeId& n) { return delays.at(n); };
}

}  // namespace

TEST(StoreDigest, MatchesIndependentEncoding) {
  EXPECT_EQ(store_digest({}).hex(), "af5570f5a1810b7af78caf4bc70a660f0df51e42baf91d4de5b2328de0e83dfc");
  const std::vector<StorageRecord> one{{12.5, RecordCategory::Braking, Bytes{'a', 'b', 'c'}}};
  EXPECT_EQ(store_digest(one).hex(), "e41863e767a1cb3a12a57f690398cece75ccac3c82cd0395745fdae57a9c6327");
}

TEST(Storage, RejectsOutOfOrderRecords) {
  auto v = make_vehicle();
  EXPECT_TRUE(v.record(rec(5)));
  EXPECT_TRUE(v.record(rec(5)));
  EXPECT_FALSE(v.record(rec(4)));
  EXPECT_EQ(v.in_vehicle_storage().size(), 2u);
}

TEST(Anchor, EmptyStoreAnchorsEmptyDigest) {
  auto v = make_vehicle();
  const auto tx = v.anchor_storage(0);
  ASSERT_TRUE(tx);
  EXPECT_EQ(tx->payload_digest, store_digest({}));
  EXPECT_EQ(tx->payload_tag, PayloadTag::StorageAnchor);
  EXPECT_TRUE(tx->p_t_id.is_zero());
  EXPECT_EQ(tx->pk_1, v.current_pk());
}

TEST(Anchor, SecondAnchorChainsOnFirstOnceStored) {
  auto v = make_vehicle();
  v.record(rec(1));
  const auto a1 = *v.anchor_storage(0);
  EXPECT_FALSE(v.anchor_storage(1));
  EXPECT_TRUE(v.observe_stored(ledger::head_of(a1)));
  v.record(rec(2));
  const auto a2 = *v.anchor_storage(2);
  EXPECT_EQ(a2.p_t_id, a1.t_id);
  EXPECT_EQ(v.anchors().size(), 2u);
  EXPECT_EQ(*v.last_anchor_tx(), a2.t_id);
}

TEST(Anchor, DueAfterInterval) {
  VehicleParams p;
  p.anchor_interval = 20;
  auto v = make_vehicle(p);
  EXPECT_TRUE(v.anchor_due(0));
  v.anchor_storage(3);
  EXPECT_FALSE(v.anchor_due(22));
  EXPECT_TRUE(v.anchor_due(23));
}

TEST(Backup, ConservesRecordsAndAnchorsBackup) {
  auto v = make_vehicle();
  for (int i = 0; i < 7; ++i) v.record(rec(i, std::to_string(i)));
  const auto before = v.history();
  const auto tx = v.transfer_to_backup(10, 4);
  ASSERT_TRUE(tx);
  EXPECT_EQ(tx->payload_tag, PayloadTag::BackupAnchor);
  EXPECT_EQ(v.backup_store().size(), 4u);
  EXPECT_EQ(v.in_vehicle_storage().size(), 3u);
  EXPECT_EQ(v.history(), before);
  EXPECT_EQ(tx->payload_digest, store_digest(v.backup_store()));
}

TEST(Backup, NoopWhenEmpty) {
  auto v = make_vehicle();
  EXPECT_FALSE(v.transfer_to_backup(0, 10));
}

TEST(Handover, PicksFastestWithinThreshold) {
  auto v = make_vehicle();
  const std::vector<NodeId> c{"obmA", "obmB", "obmC"};
  const auto d = v.evaluate_handover(c, table({{"obmA", 30}, {"obmB", 12}, {"obmC", 45}}));
  EXPECT_EQ(d.target, "obmB");
  EXPECT_EQ(d.delays.size(), 3u);
}

TEST(Handover, StaysWhenAllAboveThreshold) {
  auto v = make_vehicle();
  const std::vector<NodeId> c{"obmA", "obmB"};
  EXPECT_FALSE(v.evaluate_handover(c, table({{"obmA", 130}, {"obmB", 120}})).target);
}

TEST(Handover, HysteresisSuppressesMarginalGain) {
  auto v = make_vehicle();
  const std::vector<NodeId> c{"obmA", "obmB"};
  EXPECT_FALSE(v.evaluate_handover(c, table({{"obmA", 30}, {"obmB", 25}})).target);
  EXPECT_EQ(v.evaluate_handover(c, table({{"obmA", 30}, {"obmB", 24}})).target, "obmB");
}

TEST(Handover, CommitChangesAssociation) {
  auto v = make_vehicle();
  v.commit_handover("obmB");
  EXPECT_EQ(v.obm(), "obmB");
}

TEST(Update, InstallsOnDigestMatch) {
  auto v = make_vehicle();
  const UpdatePackage pkg{"ecu", "2.0", Bytes(64, 7)};
  const Bytes bin = pkg.encode();
  const auto tx = signed_update(kOem, bin);
  const auto pending = v.check_update(tx);
  ASSERT_TRUE(pending);
  EXPECT_EQ(pending->object_id, sw_object_id(crypto::digest(bin)));
  const auto sw = v.complete_update(*pending, Result<Bytes, cloud::CloudError>(bin));
  ASSERT_TRUE(sw);
  EXPECT_EQ(sw->version, "2.0");
  EXPECT_EQ(v.installed_sw().at("ecu").digest, crypto::digest(bin));
}

TEST(Update, RejectsOtherOem) {
  auto v = make_vehicle();
  const auto tx = signed_update(kOtherOem, UpdatePackage{"ecu", "2.0", {}}.encode());
  EXPECT_EQ(v.check_update(tx).error(), UpdateRejection::NotFromMyOem);
}

TEST(Update, RejectsTamperedBinary) {
  auto v = make_vehicle();
  const Bytes bin = UpdatePackage{"ecu", "2.0", Bytes(16, 1)}.encode();
  const auto pending = *v.check_update(signed_update(kOem, bin));
  Bytes infected = bin;
  infected.back() ^= 0xff;
  EXPECT_EQ(v.complete_update(pending, Result<Bytes, cloud::CloudError>(infected)).error(),
            UpdateRejection::HashMismatch);
  EXPECT_TRUE(v.installed_sw().empty());
}

TEST(Update, RejectsPendingOrForged) {
  auto v = make_vehicle();
  const auto pending = ledger::build_transaction(TxKind::Multisig, crypto::zero_digest(), crypto::digest({}),
                                                 PayloadTag::SwUpdate, kProvider, kOem.public_key);
  EXPECT_EQ(v.check_update(pending).error(), UpdateRejection::InvalidTransaction);
  auto forged = signed_update(kOem, {});
  forged.sig_2->bytes[0] ^= 1;
  forged.t_id = forged.compute_id();
  EXPECT_EQ(v.check_update(forged).error(), UpdateRejection::InvalidTransaction);
}

TEST(Update, DownloadFailuresMapToRejections) {
  auto v = make_vehicle();
  const auto pending = *v.check_update(signed_update(kOem, {}));
  EXPECT_EQ(v.complete_update(pending, Result<Bytes, cloud::CloudError>(cloud::CloudError::NotFound)).error(),
            UpdateRejection::DownloadMissing);
  EXPECT_EQ(v.complete_update(pending, Result<Bytes, cloud::CloudError>(cloud::CloudError::BadProof)).error(),
            UpdateRejection::CloudAuthFailed);
}

TEST(Update, EndToEndThroughCloud) {
  auto v = make_vehicle();
  cloud::CloudStore cloud(5);
  const auto acct_key = crypto::generate_keypair(99);
  cloud.create_account("wrsu-v1", acct_key.public_key, {{"sw/*"}, {}});
  v.set_wrsu_account({"wrsu-v1", acct_key});
  const Bytes bin = UpdatePackage{"ecu", "3.1", Bytes(32, 9)}.encode();
  const auto tx = signed_update(kOem, bin);
  EXPECT_EQ(v.handle_update_notification(tx, cloud).error(), UpdateRejection::DownloadMissing);
  cloud.tamper(sw_object_id(crypto::digest(bin)), bin);
  EXPECT_TRUE(v.handle_update_notification(tx, cloud));
}

TEST(StorageProof, AnchoredRecordsProve) {
  auto v = make_vehicle();
  for (int i = 0; i < 3; ++i) v.record(rec(i));
  ledger::Chain chain;
  append(chain, {*v.anchor_storage(5)}, kObm);
  EXPECT_TRUE(v.prove_storage_integrity(v.in_vehicle_storage(), chain));

  auto altered = v.in_vehicle_storage();
  altered[1].payload.push_back('!');
  EXPECT_FALSE(v.prove_storage_integrity(altered, chain));
}

TEST(StorageProof, NeverAnchoredFails) {
  auto v = make_vehicle();
  v.record(rec(1));
  EXPECT_FALSE(v.prove_storage_integrity(v.in_vehicle_storage(), ledger::Chain{}));
}

TEST(StorageProof, SurvivesKeyRotation) {
  auto v = make_vehicle();
  v.record(rec(1));
  ledger::Chain chain;
  append(chain, {*v.anchor_storage(1)}, kObm);
  v.rotate(777);
  EXPECT_TRUE(v.prove_storage_integrity(v.in_vehicle_storage(), chain));
}

TEST(Rotation, PerInteractionOnlyWhenEnabled) {
  auto off = make_vehicle();
  EXPECT_FALSE(off.after_interaction(off.current_pk(), 1));

  VehicleParams p;
  p.rotate_per_interaction = true;
  auto on = make_vehicle(p);
  const auto before = on.current_pk();
  EXPECT_FALSE(on.after_interaction(kOem.public_key, 1));
  EXPECT_TRUE(on.after_interaction(before, 1));
  EXPECT_NE(on.current_pk(), before);
  EXPECT_TRUE(on.keys().owns(before));
}

TEST(AccessPairs, CoverOemInsurerAndRequesters) {
  auto v = make_vehicle();
  EXPECT_EQ(v.access_pairs().size(), 1u);
  const auto ins = crypto::generate_keypair(40);
  v.set_insurance_account({"ins-1", crypto::generate_keypair(41)}, ins.public_key);
  v.add_requester(kProvider.public_key);
  const auto pairs = v.access_pairs();
  ASSERT_EQ(pairs.size(), 4u);
  EXPECT_EQ(pairs.back().member_pk, crypto::generate_keypair(41).public_key);
  EXPECT_EQ(v.anchor_key().public_key, crypto::generate_keypair(41).public_key);
}

TEST(Countersign, OnlyForOwnKeys) {
  auto v = make_vehicle();
  const auto to_me = ledger::build_transaction(TxKind::Multisig, crypto::zero_digest(), crypto::digest({}),
                                               PayloadTag::Generic, kOem, v.current_pk());
  EXPECT_TRUE(v.countersign_request(to_me));
  const auto to_other = ledger::build_transaction(TxKind::Multisig, crypto::zero_digest(), crypto::digest({}),
                                                  PayloadTag::Generic, kOem, kProvider.public_key);
  EXPECT_EQ(v.countersign_request(to_other).error(), ledger::CountersignError::WrongRecipient);
}
