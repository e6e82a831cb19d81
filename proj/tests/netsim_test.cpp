// Copyright 2026 The ivotesim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ivotesim/netsim.hpp"

#include <gtest/gtest.h>

#include "ivotesim/minitls.hpp"
#include "ivotesim/rng.hpp"
#include "test_util.hpp"

namespace ivotesim::net {

using TestPayload = std::variant<std::string, HttpRedirect, Bytes>;

std::string describe(const TestPayload& p) {
  if (const auto* s = std::get_if<std::string>(&p)) return "text " + *s;
  if (const auto* r = std::get_if<HttpRedirect>(&p)) return "redirect " + r->target;
  return "bytes " + to_hex(std::get<Bytes>(p));
}

namespace {

using namespace std::chrono_literals;
using Sim = Simulator<TestPayload>;

struct Recorder {
  std::vector<std::string> got;
  Sim::Handler handler() {
    return [this](const Sim::EventT& e) { got.push_back(describe(e.payload)); };
  }
};

TEST(Netsim, EqualTimesDeliverInInsertionOrder) {
  Sim sim;
  Recorder r;
  sim.add_endpoint("cvs", r.handler());
  for (int i = 0; i < 10; ++i) sim.schedule(at(5s), "voter[" + std::to_string(i) + "]", "cvs", std::to_string(i));
  sim.schedule(at(1s), "voter[x]", "cvs", std::string("early"));
  sim.run_until(at(10s));
  ASSERT_EQ(r.got.size(), 11u);
  EXPECT_EQ(r.got[0], "text early");
  for (int i = 0; i < 10; ++i) EXPECT_EQ(r.got[i + 1], "text " + std::to_string(i));
}

TEST(Netsim, RunUntilStopsAtTime) {
  Sim sim;
  Recorder r;
  sim.add_endpoint("a", r.handler());
  sim.schedule(at(1s), "b", "a", std::string("x"));
  sim.schedule(at(3s), "b", "a", std::string("y"));
  EXPECT_EQ(sim.run_until(at(2s)).size(), 1u);
  EXPECT_EQ(sim.now(), at(2s));
  EXPECT_EQ(sim.counters().pending, 1u);
  EXPECT_EQ(sim.run_until(at(3s)).size(), 1u);
}

TEST(Netsim, DropTapStopsDelivery) {
  Sim sim;
  Recorder cvs, piwik;
  sim.add_endpoint("cvs", cvs.handler());
  sim.add_endpoint("piwik", piwik.handler());
  sim.install_tap({"drop-all", path_prefix("voter", "cvs"),
                   [](const Sim::EventT&, const Sim&) { return Decision<TestPayload>::drop(); }});
  for (int i = 0; i < 5; ++i) {
    sim.schedule(at(1s), "voter[" + std::to_string(i) + "]", "cvs", std::string("ballot"));
    sim.schedule(at(1s), "voter[" + std::to_string(i) + "]", "piwik", std::string("fetch"));
  }
  sim.run_until(at(2s));
  EXPECT_TRUE(cvs.got.empty());
  EXPECT_EQ(piwik.got.size(), 5u);
  EXPECT_EQ(sim.counters().dropped, 5u);
}

TEST(Netsim, TapLifecycleAndComposition) {
  Sim sim;
  Recorder r;
  sim.add_endpoint("cvs", r.handler());
  auto upper = sim.install_tap({"a", path_prefix("", "cvs"), [](const Sim::EventT& e, const Sim&) {
                                  return Decision<TestPayload>::modify(std::get<std::string>(e.payload) + "+a");
                                }});
  sim.install_tap({"b", path_prefix("", "cvs"), [](const Sim::EventT& e, const Sim&) {
                     return Decision<TestPayload>::modify(std::get<std::string>(e.payload) + "+b");
                   }});
  sim.schedule(at(1s), "v", "cvs", std::string("m"));
  sim.run_until(at(1s));
  EXPECT_EQ(r.got.back(), "text m+a+b");
  sim.remove_tap(upper);
  EXPECT_ERRC(sim.remove_tap(upper), Errc::UnknownHandle);
  EXPECT_ERRC(sim.remove_tap(TapHandle{99}), Errc::UnknownHandle);
  sim.schedule(at(2s), "v", "cvs", std::string("m"));
  sim.run_until(at(2s));
  EXPECT_EQ(r.got.back(), "text m+b");
}

TEST(Netsim, MatcherScoping) {
  Sim sim;
  Recorder cvs, piwik;
  sim.add_endpoint("cvs", cvs.handler());
  sim.add_endpoint("piwik", piwik.handler());
  sim.install_tap({"piwik-only", path_prefix("voter", "piwik"), [](const Sim::EventT&, const Sim&) {
                     return Decision<TestPayload>::modify(std::string("evil"));
                   }});
  sim.schedule(at(1s), "voter[1]", "cvs", std::string("vote"));
  sim.schedule(at(1s), "voter[1]", "piwik", std::string("fetch"));
  sim.schedule(at(1s), "auditor", "piwik", std::string("fetch"));
  sim.run_until(at(1s));
  EXPECT_EQ(cvs.got, std::vector<std::string>{"text vote"});
  EXPECT_EQ(piwik.got, (std::vector<std::string>{"text evil", "text fetch"}));
}

TEST(Netsim, InjectionsAndOwnInjectionRule) {
  Sim sim;
  Recorder r;
  sim.add_endpoint("b", r.handler());
  int seen = 0;
  sim.install_tap({"echo", path_prefix("", "b"), [&](const Sim::EventT& e, const Sim&) {
                     ++seen;
                     auto d = Decision<TestPayload>::forward();
                     if (std::get<std::string>(e.payload) == "go")
                       d.and_inject({"tap", "b", std::string("copy"), 5s});
                     return d;
                   }});
  sim.schedule(at(1s), "a", "b", std::string("go"));
  sim.run_until(at(10s));
  EXPECT_EQ(r.got, (std::vector<std::string>{"text go", "text copy"}));
  EXPECT_EQ(seen, 1);
  EXPECT_EQ(sim.counters().injected, 1u);
}

TEST(Netsim, SchedulingAfterFinalize) {
  Sim sim;
  sim.add_endpoint("a");
  sim.schedule(at(1s), "x", "a", std::string("1"));
  sim.schedule(at(9s), "x", "a", std::string("2"));
  sim.run_until(at(5s));
  sim.finalize();
  EXPECT_EQ(sim.counters().pending, 1u);
  EXPECT_ERRC(sim.schedule(at(6s), "x", "a", std::string("3")), Errc::SchedulingAfterFinalize);
  EXPECT_ERRC(sim.run_until(at(10s)), Errc::SchedulingAfterFinalize);
}

// Random traffic with random drops and injections; counts must reconcile.
TEST(Netsim, ConservationUnderRandomTaps) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Sim sim;
    Rng rng(seed);
    for (int i = 0; i < 4; ++i) sim.add_endpoint("n" + std::to_string(i), [](const Sim::EventT&) {});
    Rng tap_rng = rng.fork("tap");
    sim.install_tap({"chaos", path_prefix("", ""), [&](const Sim::EventT&, const Sim&) {
                       auto r = tap_rng.below(10);
                       if (r < 3) return Decision<TestPayload>::drop();
                       auto d = Decision<TestPayload>::forward();
                       if (r == 9) d.and_inject({"n0", "n1", std::string("inj"), 3s});
                       return d;
                     }});
    for (int i = 0; i < 500; ++i)
      sim.schedule(at(std::chrono::seconds(rng.below(100))), "n" + std::to_string(rng.below(4)),
                   "n" + std::to_string(rng.below(4)), std::to_string(i));
    sim.run_until(at(60s));
    sim.finalize();
    auto c = sim.counters();
    EXPECT_TRUE(c.reconciles()) << c.scheduled << " " << c.delivered << " " << c.dropped << " " << c.pending;
    EXPECT_GT(c.dropped, 0u);
    EXPECT_GT(c.pending, 0u);
    EXPECT_EQ(c.scheduled, 500u + c.injected);
  }
}

std::pair<std::string, std::vector<std::string>> random_run(std::uint64_t seed) {
  Sim sim;
  Rng rng(seed);
  std::vector<std::string> names{"cvs", "piwik", "voter[0]", "voter[1]"};
  for (const auto& n : names) {
    sim.add_endpoint(n, [&sim, &rng, n](const Sim::EventT& e) {
      if (rng.bernoulli(0.5)) sim.send(n, e.src, std::string("reply"));
    });
  }
  for (int i = 0; i < 200; ++i)
    sim.schedule(at(std::chrono::milliseconds(rng.below(10000))), names[rng.below(4)], names[rng.below(4)],
                 std::to_string(rng.next()));
  sim.run_all();
  return {sim.trace_digest(), sim.trace()};
}

TEST(Netsim, SameSeedIdenticalTrace) {
  auto a = random_run(77), b = random_run(77), c = random_run(78);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_NE(a.first, c.first);
}

TEST(Netsim, TraceLineFormat) {
  Sim sim;
  sim.add_endpoint("cvs", {}, ChannelKind::Https);
  sim.schedule(at(1500ms), "voter[0]", "cvs", std::string("hello"));
  sim.run_all();
  ASSERT_EQ(sim.trace().size(), 1u);
  EXPECT_EQ(sim.trace()[0], "1500 #0 voter[0] -> cvs [https] DELIVER text hello");
}

TEST(Netsim, PolicyResolution) {
  Sim sim;
  sim.add_endpoint("cvs", {}, ChannelKind::Https);
  sim.add_endpoint("voter[0]");
  sim.add_endpoint("ivr", {}, ChannelKind::PhoneIvr);
  EXPECT_EQ(sim.policy("voter[0]", "cvs"), ChannelKind::Https);
  EXPECT_EQ(sim.policy("cvs", "voter[0]"), ChannelKind::Https);
  EXPECT_EQ(sim.policy("voter[0]", "ivr"), ChannelKind::PhoneIvr);
  sim.set_policy("voter[0]", "cvs", ChannelKind::PlainHttp);
  EXPECT_EQ(sim.policy("cvs", "voter[0]"), ChannelKind::PlainHttp);
  EXPECT_ERRC(sim.add_endpoint("cvs"), Errc::ConfigInvalid);
  EXPECT_ERRC(sim.schedule(at(1s), "a", "nowhere", std::string()), Errc::ConfigInvalid);
}

TEST(Sslstrip, RewritesOnlyPlainRedirects) {
  for (bool fixed : {false, true}) {
    Sim sim;
    std::vector<std::string> targets;
    sim.add_endpoint("gateway", {}, fixed ? ChannelKind::Https : ChannelKind::PlainHttp);
    sim.add_endpoint("voter[0]", [&](const Sim::EventT& e) {
      targets.push_back(std::get<HttpRedirect>(e.payload).target);
    });
    sim.install_tap({"strip", path_prefix("gateway", "voter"), [](const Sim::EventT& e, const Sim& s) {
                       return sslstrip(e, s, "attacker-registration");
                     }});
    for (int i = 0; i < 3; ++i) sim.send("gateway", "voter[0]", HttpRedirect{"registration", true});
    sim.run_all();
    EXPECT_EQ(targets, std::vector<std::string>(3, fixed ? "registration" : "attacker-registration"));
    EXPECT_EQ(sim.counters().modified, fixed ? 0u : 3u);
    int redirects = 0;
    for (const auto& l : sim.trace()) redirects += l.find("MODIFY by strip") != std::string::npos;
    EXPECT_EQ(redirects, fixed ? 0 : 3);
  }
}

TEST(Sslstrip, HttpsPathForwarded) {
  Sim sim;
  sim.add_endpoint("cvs", {}, ChannelKind::Https);
  Event<TestPayload> ev{at(1s), 0, "cvs", "voter[0]", HttpRedirect{"registration", true}, 0};
  EXPECT_EQ(sslstrip(ev, sim, "evil").kind, Decision<TestPayload>::Kind::Forward);
}

// Flipping ciphertext in transit without the key always fails at the receiver.
TEST(Netsim, CiphertextTamperIsDetected) {
  Sim sim;
  Bytes key(32, 9);
  int ok = 0, rejected = 0;
  sim.add_endpoint("cvs",
                   [&](const Sim::EventT& e) {
                     try {
                       tls::open_record(key, tls::Role::Client, 0, std::get<Bytes>(e.payload));
                       ++ok;
                     } catch (const Error& err) {
                       EXPECT_EQ(err.code(), Errc::AuthFailure);
                       ++rejected;
                     }
                   },
                   ChannelKind::Https);
  Rng rng(4);
  sim.install_tap({"flip", path_prefix("voter", "cvs"), [&](const Sim::EventT& e, const Sim&) {
                     auto b = std::get<Bytes>(e.payload);
                     b[rng.below(b.size())] ^= static_cast<std::uint8_t>(1u << rng.below(8));
                     return Decision<TestPayload>::modify(b);
                   }});
  for (int i = 0; i < 200; ++i)
    sim.send("voter[0]", "cvs", tls::seal_record(key, tls::Role::Client, 0, to_bytes("ballot " + std::to_string(i))));
  sim.run_all();
  EXPECT_EQ(ok, 0);
  EXPECT_EQ(rejected, 200);
}

}  // namespace
}  // namespace ivotesim::net
