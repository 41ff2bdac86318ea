#include <gtest/gtest.h>

#include "autochain/report.hpp"

using namespace autochain::report;
using nlohmann::ordered_json;

namespace {

std::string lines(std::initializer_list<const char*> ls) {
  std::string out;
  for (const auto* l : ls) (out += l) += "\n";
  return out;
}

std::string header(const char* expect = "{}") {
  return std::string(R"({"t":0,"actor":"world","ev":"scenario_start","name":"synthetic","seed":5,"vehicles":["v1","v2"],)") +
         R"("block_size":4,"utilization_low":0.5,"utilization_high":1.0,"expect":)" + expect + "}\n";
}

}  // namespace

TEST(CheckExpectation, Operators) {
  EXPECT_TRUE(check_expectation(20, "20"));
  EXPECT_TRUE(check_expectation(20, ">= 20"));
  EXPECT_FALSE(check_expectation(19, ">= 20"));
  EXPECT_TRUE(check_expectation(0.33, "<= 0.5"));
  EXPECT_TRUE(check_expectation(3, "< 5"));
  EXPECT_FALSE(check_expectation(5, "> 5"));
  EXPECT_TRUE(check_expectation(true, "true"));
  EXPECT_FALSE(check_expectation(true, "false"));
  EXPECT_FALSE(check_expectation(ordered_json(), "0"));
  EXPECT_FALSE(check_expectation(3, "three"));
  EXPECT_TRUE(check_expectation("x", "x"));
}

TEST(BuildReport, RejectsMalformedLines) {
  EXPECT_THROW(build_report("{not json}\n"), TraceError);
  EXPECT_THROW(build_report(R"({"t":0,"actor":"a"})" "\n"), TraceError);
}

TEST(BuildReport, EmptyTraceHasNeutralMetrics) {
  const auto r = build_report("");
  EXPECT_EQ(r.metric("installs"), 0);
  EXPECT_EQ(r.metric("chains_valid"), false);
  EXPECT_TRUE(r.passed());
}

TEST(BuildReport, InstallsCountDigestMatches) {
  const auto trace = header(R"({"installs":"2","installs_digest_match":"1"})") +
                     lines({R"({"t":1,"actor":"prov1","ev":"publish","digest":"aa"})",
                            R"({"t":5,"actor":"v1","ev":"installed","t_id":"01","version":"2","digest":"aa"})",
                            R"({"t":6,"actor":"v2","ev":"installed","t_id":"01","version":"2","digest":"bb"})",
                            R"({"t":7,"actor":"v2","ev":"update_rejected","reason":"HashMismatch"})",
                            R"({"t":8,"actor":"v2","ev":"update_rejected","reason":"HashMismatch"})"});
  const auto r = build_report(trace);
  EXPECT_EQ(r.name, "synthetic");
  EXPECT_EQ(r.seed, 5u);
  EXPECT_EQ(r.metric("installed_vehicles"), 2);
  EXPECT_EQ(r.metric("rejections.HashMismatch"), 2);
  EXPECT_EQ(r.metric("rejected_vehicles.HashMismatch"), 1);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.expectations.size(), 2u);
}

TEST(BuildReport, FailedExpectationIsReported) {
  const auto r = build_report(header(R"({"installs":"1"})"));
  ASSERT_EQ(r.expectations.size(), 1u);
  EXPECT_FALSE(r.expectations[0].passed);
  EXPECT_FALSE(r.passed());
  EXPECT_NE(format_plain(r).find("FAIL  installs"), std::string::npos);
  EXPECT_EQ(to_json(r)["passed"], false);
}

TEST(BuildReport, AttackDropsAndTargetDeliveries) {
  const auto trace = header() + lines({R"({"t":1,"actor":"atk1","ev":"ddos_start","target":"v1"})",
                                       R"({"t":2,"actor":"atk1","ev":"attack_tx","t_id":"a1","target":"v1"})",
                                       R"({"t":2,"actor":"atk1","ev":"attack_tx","t_id":"a2","target":"v1"})",
                                       R"({"t":3,"actor":"obm1","ev":"drop","t_id":"a1","reason":"no_match"})",
                                       R"({"t":3,"actor":"obm2","ev":"drop","t_id":"a1","reason":"no_match"})",
                                       R"({"t":3,"actor":"obm1","ev":"deliver","t_id":"a2","to":"v1","kind":"forward"})"});
  const auto r = build_report(trace);
  EXPECT_EQ(r.metric("attack_tx"), 2);
  EXPECT_EQ(r.metric("attack_dropped"), 1);
  EXPECT_EQ(r.metric("drops.no_match"), 2);
  EXPECT_EQ(r.metric("target_attack_deliveries"), 1);
}

TEST(BuildReport, MessageDeliveryCountsExactlyOnce) {
  const auto trace = header() + lines({R"({"t":1,"actor":"oem1","ev":"message_sent","t_id":"m1","to":"v1"})",
                                       R"({"t":1,"actor":"oem1","ev":"message_sent","t_id":"m2","to":"v1"})",
                                       R"({"t":2,"actor":"obm1","ev":"deliver","t_id":"m1","to":"v1","kind":"forward"})",
                                       R"({"t":2,"actor":"obm1","ev":"deliver","t_id":"m2","to":"v1","kind":"forward"})",
                                       R"({"t":2,"actor":"obm2","ev":"deliver","t_id":"m2","to":"v1","kind":"forward"})"});
  const auto r = build_report(trace);
  EXPECT_EQ(r.metric("messages_delivered_once"), 1);
  EXPECT_DOUBLE_EQ(r.metric("message_delivery_rate").get<double>(), 0.5);
}

TEST(BuildReport, VerificationThirdsUseFullBlocksPerGeneratorPair) {
  std::string trace = header();
  const int counts[] = {4, 4, 3, 2, 2, 1, 1, 1, 1};
  for (int c : counts) {
    trace += R"({"t":1,"actor":"obm1","ev":"block_appended","generator":"obm2","n_tx":4,"verification_count":)" +
             std::to_string(c) + "}\n";
  }
  trace += R"({"t":1,"actor":"obm1","ev":"block_appended","generator":"obm2","n_tx":2,"verification_count":2})" "\n";
  const auto r = build_report(trace);
  EXPECT_EQ(r.metric("verification_pairs"), 1);
  EXPECT_EQ(r.metric("verification_blocks_min"), 9);
  EXPECT_NEAR(r.metric("verification_first_third").get<double>(), 11.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.metric("verification_last_third").get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(r.metric("verification_ratio").get<double>(), 3.0 / 11.0, 1e-12);
}

TEST(BuildReport, DtmReentryCountsFromLastUpwardStep) {
  std::string trace = header();
  trace += R"({"t":0,"actor":"load","ev":"load_start","multiple":0.5})" "\n";
  trace += R"({"t":100,"actor":"load","ev":"load_start","multiple":3.0})" "\n";
  const std::pair<int, double> periods[] = {{90, 0.7}, {110, 0.8}, {120, 2.4}, {130, 1.3}, {140, 0.9}, {150, 0.95}};
  for (const auto& [t, u] : periods) {
    trace += R"({"t":)" + std::to_string(t) + R"(,"actor":"obm1","ev":"period","utilization":)" + std::to_string(u) +
             "}\n";
  }
  const auto r = build_report(trace);
  EXPECT_EQ(r.metric("dtm_reentry_periods"), 4);
  EXPECT_EQ(r.metric("periods"), 6);
  EXPECT_EQ(r.metric("periods_in_band"), 4);
  EXPECT_EQ(r.utilization.size(), 6u);
}

TEST(BuildReport, DtmReentryZeroWhenNeverOutOfBand) {
  std::string trace = header();
  trace += R"({"t":0,"actor":"load","ev":"load_start","multiple":1.0})" "\n";
  trace += R"({"t":10,"actor":"obm1","ev":"period","utilization":0.7})" "\n";
  EXPECT_EQ(build_report(trace).metric("dtm_reentry_periods"), 0);
}

TEST(BuildReport, ChainsCompareFinalDigests) {
  const auto trace =
      header() +
      lines({R"({"t":9,"actor":"obm1","ev":"obm_final","height":3,"tx_count":9,"chain_valid":true,"chain_digest":"d1","keylist":{"v1":1},"drops":{"invalid":0,"duplicate":1,"no_match":0},"sw_updates":[]})",
             R"({"t":9,"actor":"obm2","ev":"obm_final","height":3,"tx_count":9,"chain_valid":true,"chain_digest":"d2","keylist":{"v1":2},"drops":{"invalid":0,"duplicate":0,"no_match":0},"sw_updates":[]})",
             R"({"t":9,"actor":"v1","ev":"vehicle_final","obm":"obm1","installed":{},"anchors":0})",
             R"({"t":9,"actor":"obm1","ev":"drop","t_id":"x","reason":"duplicate"})"});
  const auto r = build_report(trace);
  EXPECT_EQ(r.metric("chains_valid"), true);
  EXPECT_EQ(r.metric("chains_identical"), false);
  EXPECT_EQ(r.metric("stale_keylist_entries"), 2);
  EXPECT_EQ(r.metric("drops_reconciled"), true);
  EXPECT_EQ(r.metric("stored_tx"), 9);
}

TEST(BuildReport, AnchorSoundnessReplaysRecordDigests) {
  // Digest of one record {ts 12.5, Braking, "abc"}, computed independently.
  const auto trace =
      header() +
      lines({R"({"t":1,"actor":"v1","ev":"record","ts":12.5,"cat":"Braking","payload":"616263"})",
             R"({"t":2,"actor":"v1","ev":"anchor","t_id":"x","tag":"StorageAnchor","pk":"p","start":0,"count":1,"digest":"e41863e767a1cb3a12a57f690398cece75ccac3c82cd0395745fdae57a9c6327"})",
             R"({"t":3,"actor":"v1","ev":"anchor","t_id":"y","tag":"StorageAnchor","pk":"p","start":0,"count":1,"digest":"00"})"});
  const auto r = build_report(trace);
  EXPECT_EQ(r.metric("anchors"), 2);
  EXPECT_EQ(r.metric("anchors_sound"), 1);
}
