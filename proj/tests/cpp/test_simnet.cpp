#include <gtest/gtest.h>

#include <sstream>

#include "autochain/simnet.hpp"

using namespace autochain::simnet;

namespace {

Network<int> make_net(double jitter = 0.0, std::uint64_t seed = 1) {
  LinkModel links(jitter);
  links.set_link("a", "b", 10);
  links.set_link("v", "obm1", 12);
  return Network<int>(std::move(links), seed);
}

std::vector<int> drain(Network<int>& net, std::vector<double>* times = nullptr) {
  std::vector<int> order;
  net.loop().run(
      [&](Event<int>& ev) {
        order.push_back(ev.msg);
        if (times) times->push_back(ev.deliver_at);
      },
      1e9);
  return order;
}

}  // namespace

TEST(Network, DeliversAfterBaseDelayWithoutJitter) {
  auto net = make_net();
  EXPECT_DOUBLE_EQ(net.send("a", "b", 1), 10.0);
  std::vector<double> times;
  drain(net, &times);
  EXPECT_EQ(times, std::vector<double>{10.0});
}

TEST(Network, MissingLinkThrows) {
  auto net = make_net();
  EXPECT_THROW(net.send("a", "v", 1), SimError);
}

TEST(EventLoop, SimultaneousEventsKeepScheduleOrder) {
  EventLoop<int> loop;
  for (int i = 0; i < 5; ++i) loop.schedule(3.0, "x", "y", i);
  std::vector<int> order;
  loop.run([&](Event<int>& ev) { order.push_back(ev.msg); }, 10);
  EXPECT_EQ(order, (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST(EventLoop, RejectsPastEvents) {
  EventLoop<int> loop;
  loop.schedule(5, "x", "x", 0);
  loop.pop();
  EXPECT_THROW(loop.schedule(4, "x", "x", 1), SimError);
}

TEST(EventLoop, StopsAtHorizon) {
  EventLoop<int> loop;
  loop.schedule(1, "x", "x", 0);
  loop.schedule(50, "x", "x", 1);
  const auto out = loop.run([](Event<int>&) {}, 10);
  EXPECT_FALSE(out.quiescent);
  EXPECT_EQ(out.dispatched, 1u);
  EXPECT_EQ(loop.size(), 1u);
}

TEST(EventLoop, ClockIsMonotonic) {
  auto net = make_net(0.5, 3);
  for (int i = 0; i < 200; ++i) net.send(i % 2 ? "a" : "b", i % 2 ? "b" : "a", i);
  double last = 0;
  net.loop().run(
      [&](Event<int>& ev) {
        EXPECT_GE(ev.deliver_at, last);
        last = ev.deliver_at;
      },
      1e9);
}

TEST(Network, LinkIsFifoUnderJitter) {
  auto net = make_net(0.9, 11);
  for (int i = 0; i < 100; ++i) net.send("a", "b", i);
  const auto order = drain(net);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(order[i], i);
}

TEST(Network, CausalityReplyAfterRequest) {
  auto net = make_net(0.3, 5);
  net.send("a", "b", 1);
  std::vector<double> times;
  net.loop().run(
      [&](Event<int>& ev) {
        times.push_back(net.now());
        if (ev.msg == 1) net.send("b", "a", 2);
      },
      1e9);
  ASSERT_EQ(times.size(), 2u);
  EXPECT_GE(times[1], times[0] + 10.0);
}

TEST(Network, JitterStaysWithinFraction) {
  auto net = make_net(0.25, 9);
  for (int i = 0; i < 500; ++i) {
    const double d = net.links().sample("a", "b", 0, net.rng().stream("a"));
    EXPECT_GE(d, 10.0);
    EXPECT_LT(d, 12.5);
  }
}

TEST(Probe, MeanRoundTripFollowsSchedule) {
  LinkModel links;
  links.set_link("v", "obm1", 12);
  links.schedule("v", "obm1", 100, 40);
  Network<int> net(std::move(links), 1);
  EXPECT_DOUBLE_EQ(net.probe_delay("v", "obm1", 3), 24.0);
  net.timer("v", 100, 0);
  drain(net);
  EXPECT_DOUBLE_EQ(net.probe_delay("v", "obm1", 3), 80.0);
  EXPECT_THROW(net.probe_delay("v", "obm1", 0), SimError);
}

TEST(LinkModel, ScheduleAppliesInTimeOrder) {
  LinkModel links;
  links.set_link("a", "b", 5);
  links.schedule("a", "b", 20, 7);
  links.schedule("a", "b", 10, 6);
  EXPECT_DOUBLE_EQ(links.base_delay("a", "b", 9), 5);
  EXPECT_DOUBLE_EQ(links.base_delay("b", "a", 10), 6);
  EXPECT_DOUBLE_EQ(links.base_delay("a", "b", 25), 7);
  EXPECT_DOUBLE_EQ(links.max_delay_among({"a", "b"}), 7);
  EXPECT_THROW(links.set_link("a", "c", 0), SimError);
}

TEST(Rng, SameSeedSameDraws) {
  RngStreams a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.stream("n1")(), b.stream("n1")());
  EXPECT_NE(RngStreams(42).stream("n1")(), c.stream("n1")());
}

TEST(Rng, StreamsAreIndependentOfOtherNodes) {
  RngStreams a(42), b(42);
  a.stream("other")();
  a.stream("other")();
  EXPECT_EQ(a.stream("n1")(), b.stream("n1")());
  EXPECT_NE(derive_seed(1, "n1"), derive_seed(1, "n2"));
}

TEST(Trace, LinesAreOrderedJsonObjects) {
  Trace t;
  t.emit(1.5, "obm1", "drop", {{"reason", "invalid"}});
  t.emit(2, "v1", "installed");
  EXPECT_EQ(t.lines()[0], R"({"t":1.5,"actor":"obm1","ev":"drop","reason":"invalid"})");
  EXPECT_EQ(t.str(), t.lines()[0] + "\n" + t.lines()[1] + "\n");
}
