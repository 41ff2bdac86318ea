#include <gtest/gtest.h>

#include "autochain/obm.hpp"
#include "support.hpp"

using namespace autochain;
using namespace autochain::obm;
using autochain::testing::first_tx;
using autochain::testing::fresh_txs;
using autochain::testing::payload;
using ledger::PayloadTag;
using ledger::TxKind;

namespace {

const crypto::KeyPair kOem = crypto::generate_keypair(10);
const crypto::KeyPair kVehicle = crypto::generate_keypair(11);
const crypto::KeyPair kProvider = crypto::generate_keypair(12);
const crypto::KeyPair kStranger = crypto::generate_keypair(13);

ObmParams params(std::size_t block_size = 4) {
  ObmParams p;
  p.dtm.block_size = block_size;
  p.dtm.block_period = 10;
  return p;
}

Obm make_obm(const std::string& id, std::uint64_t seed, std::size_t block_size = 4) {
  Obm o(id, crypto::generate_keypair(seed), params(block_size), seed);
  o.add_member("oem1");
  o.add_member("v1");
  o.add_member("prov1");
  o.add_member("atk");
  return o;
}

ledger::Transaction message(const crypto::KeyPair& from, const crypto::PublicKey& to, std::uint64_t n = 0) {
  return ledger::build_transaction(TxKind::Multisig, crypto::zero_digest(), payload(n), PayloadTag::Generic, from, to);
}

}  // namespace

TEST(KeyList, UploadRequiresMembership) {
  auto o = make_obm("obm1", 1);
  EXPECT_FALSE(o.upload_key_pair("ghost", kOem.public_key, kVehicle.public_key));
  EXPECT_TRUE(o.upload_key_pair("v1", kOem.public_key, kVehicle.public_key));
  EXPECT_TRUE(o.upload_key_pair("v1", kOem.public_key, kVehicle.public_key));
  EXPECT_EQ(o.key_list().size(), 1u);
}

TEST(KeyList, RemoveMemberDropsEntriesAndMembership) {
  auto o = make_obm("obm1", 1);
  o.upload_key_pair("v1", kOem.public_key, kVehicle.public_key);
  o.upload_key_pair("v1", kProvider.public_key, kVehicle.public_key);
  o.upload_key_pair("oem1", kVehicle.public_key, kOem.public_key);
  EXPECT_EQ(o.remove_member("v1"), 2u);
  EXPECT_EQ(o.key_list().count_for("v1"), 0u);
  EXPECT_EQ(o.key_list().size(), 1u);
  EXPECT_FALSE(o.members().contains("v1"));
}

TEST(KeyList, PairMatchIsUnordered) {
  KeyList kl;
  kl.add({kOem.public_key, kVehicle.public_key, "v1"});
  EXPECT_EQ(kl.match_pair(kOem.public_key, kVehicle.public_key), std::set<NodeId>{"v1"});
  EXPECT_EQ(kl.match_pair(kVehicle.public_key, kOem.public_key), std::set<NodeId>{"v1"});
  EXPECT_TRUE(kl.match_pair(kStranger.public_key, kVehicle.public_key).empty());
  EXPECT_EQ(kl.authorising(kOem.public_key), std::set<NodeId>{"v1"});
  EXPECT_EQ(kl.owners_of(kVehicle.public_key), std::set<NodeId>{"v1"});
}

TEST(Routing, MatchedPendingIsForwardedNotPooled) {
  auto o = make_obm("obm1", 1);
  o.upload_key_pair("v1", kOem.public_key, kVehicle.public_key);
  const auto tx = message(kOem, kVehicle.public_key);
  const auto out = o.receive_transaction(tx, Origin::Member, "oem1", 0);
  EXPECT_FALSE(out.dropped);
  ASSERT_EQ(out.deliveries.size(), 1u);
  EXPECT_EQ(out.deliveries[0].member, "v1");
  EXPECT_EQ(out.deliveries[0].kind, DeliveryKind::Forward);
  EXPECT_FALSE(out.pooled);
  EXPECT_EQ(o.pending_count(), 1u);
}

TEST(Routing, CountersignedIsPooledAndUpdateNoticeFansOut) {
  auto o = make_obm("obm1", 1);
  o.upload_key_pair("v1", kOem.public_key, kVehicle.public_key);
  const auto pending = ledger::build_transaction(TxKind::Multisig, crypto::zero_digest(), payload(1),
                                                 PayloadTag::SwUpdate, kProvider, kOem.public_key);
  const auto full = *ledger::countersign(pending, kOem);
  const auto out = o.receive_transaction(full, Origin::Member, "oem1", 0);
  EXPECT_TRUE(out.pooled);
  EXPECT_EQ(o.pool().size(), 1u);
  ASSERT_EQ(out.deliveries.size(), 1u);
  EXPECT_EQ(out.deliveries[0].member, "v1");
  EXPECT_EQ(out.deliveries[0].kind, DeliveryKind::UpdateNotice);
}

TEST(Routing, MemberOriginIsBroadcastToPeers) {
  auto o = make_obm("obm1", 1);
  o.set_peers({"obm2", "obm3"});
  const auto out = o.receive_transaction(first_tx(kVehicle), Origin::Member, "v1", 0);
  EXPECT_TRUE(out.broadcast);
  EXPECT_TRUE(out.pooled);
  const auto again = o.receive_transaction(first_tx(kVehicle), Origin::PeerBroadcast, "", 1);
  EXPECT_EQ(again.dropped, DropReason::Duplicate);
}

TEST(Routing, PeerBroadcastIsNotRebroadcast) {
  auto o = make_obm("obm2", 2);
  o.set_peers({"obm1"});
  const auto out = o.receive_transaction(first_tx(kVehicle), Origin::PeerBroadcast, "", 0);
  EXPECT_FALSE(out.broadcast);
  EXPECT_TRUE(out.pooled);
}

TEST(Routing, UnmatchedPendingFromPeerIsDropped) {
  auto o = make_obm("obm2", 2);
  o.set_peers({"obm1"});
  const auto out = o.receive_transaction(message(kStranger, kVehicle.public_key), Origin::PeerBroadcast, "", 0);
  EXPECT_EQ(out.dropped, DropReason::NoMatch);
  EXPECT_EQ(o.drops().no_match, 1u);
}

TEST(Routing, AttackTransactionNeverReachesTarget) {
  auto o = make_obm("obm1", 1);
  o.upload_key_pair("v1", kOem.public_key, kVehicle.public_key);
  const auto out = o.receive_transaction(message(kStranger, kVehicle.public_key), Origin::Member, "atk", 0);
  EXPECT_EQ(out.dropped, DropReason::NoMatch);
  EXPECT_TRUE(out.deliveries.empty());
}

TEST(Routing, InvalidAndNonMemberDropped) {
  auto o = make_obm("obm1", 1);
  auto forged = first_tx(kVehicle);
  forged.sig_1.bytes[0] ^= 1;
  forged.t_id = forged.compute_id();
  auto out = o.receive_transaction(forged, Origin::Member, "v1", 0);
  EXPECT_EQ(out.dropped, DropReason::Invalid);
  EXPECT_EQ(out.detail, "BadSignature");
  out = o.receive_transaction(first_tx(kStranger), Origin::Member, "ghost", 0);
  EXPECT_EQ(out.dropped, DropReason::Invalid);
  EXPECT_EQ(out.detail, "non_member");
  EXPECT_EQ(o.drops().invalid, 2u);
}

TEST(Routing, ConflictingSuccessorInPoolDropped) {
  auto o = make_obm("obm1", 1);
  o.receive_transaction(first_tx(kVehicle, 1), Origin::Member, "v1", 0);
  const auto out = o.receive_transaction(first_tx(kVehicle, 2), Origin::Member, "v1", 0);
  EXPECT_EQ(out.dropped, DropReason::Invalid);
  EXPECT_EQ(out.detail, "conflict");
}

TEST(Routing, PendingExpires) {
  auto o = make_obm("obm1", 1);
  o.upload_key_pair("v1", kOem.public_key, kVehicle.public_key);
  o.receive_transaction(message(kOem, kVehicle.public_key), Origin::Member, "oem1", 0);
  o.expire_pending(o.params().pending_timeout - 1);
  EXPECT_EQ(o.pending_count(), 1u);
  o.expire_pending(o.params().pending_timeout);
  EXPECT_EQ(o.pending_count(), 0u);
  EXPECT_EQ(o.pending_expired(), 1u);
}

TEST(PeriodTick, OnlyScheduledObmFormsBlock) {
  const std::vector<NodeId> schedule{"obm1", "obm2"};
  auto a = make_obm("obm1", 1);
  auto b = make_obm("obm2", 2);
  for (const auto& tx : fresh_txs(4)) {
    a.receive_transaction(tx, Origin::PeerBroadcast, "", 0);
    b.receive_transaction(tx, Origin::PeerBroadcast, "", 0);
  }
  const auto ra = a.on_period_tick(1, schedule, 10, 10);
  const auto rb = b.on_period_tick(1, schedule, 10, 10);
  EXPECT_FALSE(ra.my_turn);
  EXPECT_FALSE(ra.block);
  ASSERT_TRUE(rb.my_turn);
  ASSERT_TRUE(rb.block);
  EXPECT_EQ(b.chain().height(), 1u);

  const auto receipt = a.on_block_received(*rb.block);
  EXPECT_EQ(receipt.status, BlockReceipt::Status::Appended);
  EXPECT_TRUE(a.pool().empty());
  EXPECT_EQ(a.chain().encode(), b.chain().encode());
  EXPECT_EQ(a.on_block_received(*rb.block).status, BlockReceipt::Status::Stale);
}

TEST(PeriodTick, MeasuresRateAndAdjustsPeriod) {
  auto o = make_obm("obm1", 1, 10);
  for (const auto& tx : fresh_txs(20)) o.receive_transaction(tx, Origin::PeerBroadcast, "", 1);
  const std::vector<NodeId> schedule{"obm1"};
  const auto r = o.on_period_tick(0, schedule, 10, 10);
  EXPECT_DOUBLE_EQ(r.observed_rate, 2.0);
  EXPECT_DOUBLE_EQ(r.utilization_before, 2.0);
  EXPECT_DOUBLE_EQ(r.dtm_after.block_period, 5.0);
}

TEST(BlockReceipt, OutOfOrderBlocksAreBuffered) {
  const std::vector<NodeId> schedule{"obm2"};
  auto gen = make_obm("obm2", 2, 2);
  std::vector<ledger::Block> blocks;
  for (int i = 0; i < 2; ++i) {
    for (const auto& tx : fresh_txs(2, 100 + i * 10)) gen.receive_transaction(tx, Origin::PeerBroadcast, "", 0);
    blocks.push_back(*gen.on_period_tick(i, schedule, 10.0 * (i + 1), 10).block);
  }
  auto o = make_obm("obm1", 1, 2);
  EXPECT_EQ(o.on_block_received(blocks[1]).status, BlockReceipt::Status::Buffered);
  const auto receipt = o.on_block_received(blocks[0]);
  EXPECT_EQ(receipt.status, BlockReceipt::Status::Appended);
  EXPECT_EQ(receipt.appended.size(), 2u);
  EXPECT_EQ(o.chain().height(), 2u);
}

TEST(BlockReceipt, ByzantineBlockRejectedAndTrustReset) {
  ObmParams p = params(2);
  p.byzantine = true;
  Obm bad("obm2", crypto::generate_keypair(2), p, 2);
  const std::vector<NodeId> schedule{"obm2"};
  for (const auto& tx : fresh_txs(2)) bad.receive_transaction(tx, Origin::PeerBroadcast, "", 0);
  const auto forged = bad.on_period_tick(0, schedule, 10, 10);
  ASSERT_TRUE(forged.block);
  EXPECT_EQ(bad.chain().height(), 0u);

  auto o = make_obm("obm1", 1, 2);
  const auto receipt = o.on_block_received(*forged.block);
  EXPECT_EQ(receipt.status, BlockReceipt::Status::Rejected);
  EXPECT_EQ(receipt.check.verdict, ledger::BlockVerdict::BadTransaction);
  EXPECT_EQ(o.trust().score(bad.keypair().public_key), 0.0);
  EXPECT_EQ(o.blocks_rejected(), 1u);
}

TEST(Notices, OwnerOfGeneratorKeyIsNotified) {
  auto o = make_obm("obm1", 1, 1);
  o.upload_key_pair("v1", kOem.public_key, kVehicle.public_key);
  const auto tx = first_tx(kVehicle);
  o.receive_transaction(tx, Origin::Member, "v1", 0);
  const std::vector<NodeId> schedule{"obm1"};
  const auto r = o.on_period_tick(0, schedule, 10, 10);
  ASSERT_TRUE(r.block);
  const auto notices = o.notices_for(*r.block);
  ASSERT_TRUE(notices.contains("v1"));
  EXPECT_EQ(notices.at("v1").front(), ledger::head_of(tx));
  EXPECT_EQ(o.ledger_heads_for("v1").front().t_id, tx.t_id);
}
