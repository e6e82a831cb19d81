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

#include "ivotesim/election.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace ivotesim::election {
namespace {

ElectionManifest test_manifest() {
  auto m = ElectionManifest::synthetic(4, 16, 6);
  m.add_default_cards();
  return m;
}

// Services wired by hand, without the network.
struct Desk {
  ElectionManifest manifest = test_manifest();
  SimTime close = at(std::chrono::hours(10));
  ElGamalParams params;
  ElGamalKeyPair election_keys, verification_keys;
  Rng rng{42};
  RegistrationService reg{close, Rng(1)};
  CoreVotingSystem cvs{reg, close, Rng(2)};
  std::unique_ptr<VerificationService> ver;

  Desk() {
    params = crypto_groups(CryptoSizes{}).envelope;
    election_keys = gen_keypair(params, rng);
    verification_keys = gen_keypair(params, rng);
    ver = std::make_unique<VerificationService>(manifest, params, verification_keys.x, close);
  }

  CastSubmit submission(const Credentials& c, const Ballot& b) {
    CastSubmit s{c.ivote_id, c.pin, Channel::Web,
                 seal(encode_ballot(b, manifest), {params, election_keys.y}, {params, verification_keys.y}, rng)};
    sign_envelope(s.envelope, client_signing_key(c.ivote_id, c.pin));
    return s;
  }

  ReceiptNumber cast(const Credentials& c, const Ballot& b, SimTime now = at(std::chrono::hours(1))) {
    auto res = cvs.cast(submission(c, b), now);
    ver->ingest(res.forward);
    return res.receipt;
  }

  DedupResult count() const { return dedup_and_count(cvs, reg, params, election_keys.x, manifest); }
};

Ballot atl(std::initializer_list<std::uint16_t> groups) {
  std::vector<GroupId> g;
  for (auto x : groups) g.push_back(GroupId{x});
  return Ballot::above_the_line(g, {CandidateId{1}});
}

TEST(Registration, FreshVoterGetsCredentialsAndLink) {
  Desk d;
  auto c = d.reg.register_voter(7, std::nullopt, at(std::chrono::hours(1)));
  EXPECT_EQ(c.ivote_id.str().size(), 8u);
  EXPECT_EQ(c.pin.str().size(), 6u);
  EXPECT_TRUE(d.reg.check(c.ivote_id, c.pin));
  EXPECT_EQ(d.reg.voter_of(c.ivote_id), VoterId{7});
}

TEST(Registration, ChosenPinIsKept) {
  Desk d;
  auto c = d.reg.register_voter(1, Pin("123456"), at(std::chrono::hours(1)));
  EXPECT_EQ(c.pin.str(), "123456");
}

TEST(Registration, ReRegistrationSupersedesEarlierVote) {
  Desk d;
  auto first = d.reg.register_voter(3, std::nullopt, at(std::chrono::hours(1)));
  auto old_receipt = d.cast(first, atl({1}));
  auto second = d.reg.register_voter(3, std::nullopt, at(std::chrono::hours(2)));
  EXPECT_NE(first.ivote_id, second.ivote_id);
  EXPECT_EQ(d.reg.latest_id(3), second.ivote_id);
  auto new_receipt = d.cast(second, atl({2}));
  auto r = d.count();
  ASSERT_EQ(r.counted.size(), 1u);
  EXPECT_EQ(r.counted[0].receipt, new_receipt);
  EXPECT_EQ(r.superseded, 1u);
  EXPECT_NE(old_receipt, new_receipt);
}

TEST(Registration, AfterCloseIsRejected) {
  Desk d;
  EXPECT_ERRC(d.reg.register_voter(1, std::nullopt, d.close + kTick), Errc::PollsClosed);
}

TEST(Cast, HonestCastAgreesAcrossServers) {
  Desk d;
  auto c = d.reg.register_voter(1, std::nullopt, at(std::chrono::hours(1)));
  auto b = atl({2, 3});
  auto receipt = d.cast(c, b);
  ASSERT_EQ(d.cvs.records().size(), 1u);
  const auto* v = d.ver->find(receipt);
  ASSERT_NE(v, nullptr);
  EXPECT_EQ(v->ballot, b);
  auto counted = d.count();
  ASSERT_EQ(counted.counted.size(), 1u);
  EXPECT_EQ(counted.counted[0].ballot, b);
  EXPECT_TRUE(d.reg.check(c.ivote_id, c.pin));
  EXPECT_TRUE(audit_reconcile(d.cvs, *d.ver, d.params, d.election_keys.x, d.manifest, AuditMode::Honest)
                  .inconsistencies.empty());
}

TEST(Cast, WrongPinIsBadCredentials) {
  Desk d;
  auto c = d.reg.register_voter(1, Pin("111111"), at(std::chrono::hours(1)));
  Credentials wrong = c;
  wrong.pin = Pin("111112");
  auto s = d.submission(wrong, atl({1}));
  EXPECT_ERRC(d.cvs.cast(s, at(std::chrono::hours(1))), Errc::BadCredentials);
}

TEST(Cast, TamperedEnvelopeSignatureIsRejected) {
  Desk d;
  auto c = d.reg.register_voter(1, std::nullopt, at(std::chrono::hours(1)));
  auto s = d.submission(c, atl({1}));
  s.envelope.vote_ciphertext[0] ^= 1;
  EXPECT_ERRC(d.cvs.cast(s, at(std::chrono::hours(1))), Errc::BadCredentials);
}

TEST(Cast, DeadlineIsInclusive) {
  Desk d;
  auto c = d.reg.register_voter(1, std::nullopt, at(std::chrono::hours(1)));
  EXPECT_NO_THROW(d.cvs.cast(d.submission(c, atl({1})), d.close));
  EXPECT_ERRC(d.cvs.cast(d.submission(c, atl({1})), d.close + kTick), Errc::PollsClosed);
}

TEST(Verify, ReadsBackCastBallot) {
  Desk d;
  auto c = d.reg.register_voter(1, std::nullopt, at(std::chrono::hours(1)));
  auto b = atl({4, 1});
  auto receipt = d.cast(c, b);
  EXPECT_EQ(d.ver->verify(c.ivote_id, c.pin, receipt, d.close - kTick), b);
}

TEST(Verify, ClosesAtPollsClose) {
  Desk d;
  auto c = d.reg.register_voter(1, std::nullopt, at(std::chrono::hours(1)));
  auto receipt = d.cast(c, atl({1}));
  EXPECT_ERRC(d.ver->verify(c.ivote_id, c.pin, receipt, d.close), Errc::ServiceClosed);
}

TEST(Verify, WrongReceiptOrPinIsNoSuchRecord) {
  Desk d;
  auto c = d.reg.register_voter(1, Pin("222222"), at(std::chrono::hours(1)));
  auto c2 = d.reg.register_voter(2, std::nullopt, at(std::chrono::hours(1)));
  d.cast(c, atl({1}));
  auto other = d.cast(c2, atl({2}));
  EXPECT_ERRC(d.ver->verify(c.ivote_id, c.pin, other, at(std::chrono::hours(2))), Errc::NoSuchRecord);
  EXPECT_ERRC(d.ver->verify(c.ivote_id, c.pin, ReceiptNumber("000000000000"), at(std::chrono::hours(2))),
              Errc::NoSuchRecord);
  EXPECT_ERRC(d.ver->verify(c2.ivote_id, Pin("000000"), other, at(std::chrono::hours(2))), Errc::NoSuchRecord);
}

TEST(Dedup, VotingTwiceCountsTheLater) {
  Desk d;
  auto c = d.reg.register_voter(1, std::nullopt, at(std::chrono::hours(1)));
  d.cast(c, atl({1}));
  auto later = d.cast(c, atl({3}));
  auto r = d.count();
  ASSERT_EQ(r.counted.size(), 1u);
  EXPECT_EQ(r.counted[0].receipt, later);
  EXPECT_EQ(r.tally.counts.at(GroupId{3}), 1u);
}

TEST(Dedup, NoVotesGiveEmptyTally) {
  Desk d;
  auto r = d.count();
  EXPECT_EQ(r.tally.total, 0u);
  EXPECT_TRUE(r.tally.counts.empty());
  EXPECT_FALSE(r.tally.margin().has_value());
}

TEST(Dedup, RandomRevotesMatchBruteForceRecount) {
  Desk d;
  Rng rng(9);
  std::map<VoterId, Ballot> last;  // oracle: the final ballot per voter
  std::vector<Credentials> creds;
  for (VoterId v = 0; v < 100; ++v) {
    creds.push_back(d.reg.register_voter(v, std::nullopt, at(std::chrono::hours(1))));
    Ballot b = atl({static_cast<std::uint16_t>(1 + rng.below(4))});
    d.cast(creds[v], b);
    last[v] = b;
  }
  for (int k = 0; k < 10; ++k) {
    VoterId v = static_cast<VoterId>(k * 7);
    if (k % 2) creds[v] = d.reg.register_voter(v, std::nullopt, at(std::chrono::hours(2)));
    Ballot b = atl({static_cast<std::uint16_t>(1 + rng.below(4))});
    d.cast(creds[v], b, at(std::chrono::hours(3)));
    last[v] = b;
  }
  std::map<std::uint16_t, std::uint64_t> oracle;
  for (const auto& [v, b] : last) ++oracle[b.council_prefs.front()];
  auto r = d.count();
  EXPECT_EQ(r.counted.size(), 100u);
  EXPECT_EQ(r.superseded, 10u);
  std::map<std::uint16_t, std::uint64_t> got;
  for (const auto& [g, n] : r.tally.counts) got[g.value] = n;
  EXPECT_EQ(got, oracle);
}

TEST(Receipts, LookupFollowsDedup) {
  ElectionConfig cfg;
  cfg.voter_count = 1;
  World w(cfg);
  // Drive the services directly; the world's network is not used here.
  auto& reg = w.registration();
  auto c = reg.register_voter(0, std::nullopt, at(std::chrono::hours(1)));
  Rng rng(5);
  auto submit = [&](const Ballot& b) {
    CastSubmit s{c.ivote_id, c.pin, Channel::Web,
                 seal(encode_ballot(b, w.manifest()), w.election_public(), w.verification_public(), rng)};
    sign_envelope(s.envelope, client_signing_key(c.ivote_id, c.pin));
    return w.cvs().cast(s, at(std::chrono::hours(1))).receipt;
  };
  auto first = submit(atl({1}));
  EXPECT_TRUE(w.receipt_lookup(first));
  auto second = submit(atl({2}));
  EXPECT_FALSE(w.receipt_lookup(first));
  EXPECT_TRUE(w.receipt_lookup(second));
  EXPECT_FALSE(w.receipt_lookup(ReceiptNumber("123456789012")));
}

TEST(Linkage, EmptySetLinksNobody) {
  LinkageHoldings h;
  h.registration.emplace_back(1, IVoteId("00000001"));
  h.verification_ballots.emplace_back(IVoteId("00000001"), atl({1}));
  EXPECT_TRUE(linkage_report(h, {}).empty());
}

TEST(Linkage, UnknownComponentName) {
  EXPECT_ERRC(component_from_name("Printer"), Errc::UnknownComponent);
  EXPECT_EQ(component_from_name("PhoneTap+CallerId"), Component::PhoneTapCallerId);
}

// --- full world -------------------------------------------------------------

ElectionConfig small_world(std::uint64_t seed, std::size_t voters) {
  ElectionConfig cfg;
  cfg.seed = seed;
  cfg.voter_count = voters;
  cfg.timeline.polls_close = at(std::chrono::hours(48));
  cfg.timeline.receipt_service_end = at(std::chrono::hours(96));
  cfg.behavior.registration_lead_max = std::chrono::hours(6);
  cfg.behavior.verify_delay_max = std::chrono::hours(12);
  cfg.behavior.p_verify_ivr = 0.4;
  cfg.behavior.p_check_receipt_only = 0.3;
  cfg.behavior.p_revote = 0.1;
  cfg.behavior.p_phone = 0.05;
  cfg.behavior.p_polling_place = 0.05;
  return cfg;
}

TEST(World, HonestRunCountsEveryIntent) {
  World w(small_world(3, 300));
  w.run();
  auto counted = w.dedup_and_count();
  EXPECT_EQ(counted.tally, w.intent_tally());
  EXPECT_EQ(counted.counted.size(), 300u);
  EXPECT_EQ(w.tls_failures(), 0u);
  for (const auto& c : w.complaints().entries()) EXPECT_EQ(c.kind, ComplaintKind::FalseComplaint);
  EXPECT_TRUE(w.audit_reconcile(AuditMode::Honest).inconsistencies.empty());
  EXPECT_TRUE(w.sim().counters().reconciles());
  // Every accepted cast has a verification record.
  EXPECT_EQ(w.cvs().records().size(), w.verification().records().size());
}

TEST(World, VerificationSucceedsOnlyBeforeClose) {
  World w(small_world(4, 300));
  w.run();
  std::size_t before = 0, after = 0;
  for (const auto& e : w.verify_log()) {
    if (e.time < w.timeline().polls_close) {
      EXPECT_FALSE(e.error.has_value()) << errc_name(*e.error);
      ++before;
    } else {
      EXPECT_EQ(e.error, Errc::ServiceClosed);
      ++after;
    }
  }
  EXPECT_GT(before, 0u);
  EXPECT_GT(after, 0u);
}

TEST(World, SameSeedSameTrace) {
  World a(small_world(5, 60)), b(small_world(5, 60)), c(small_world(6, 60));
  a.run();
  b.run();
  c.run();
  EXPECT_EQ(a.sim().trace(), b.sim().trace());
  EXPECT_EQ(a.sim().trace_digest(), b.sim().trace_digest());
  EXPECT_NE(a.sim().trace_digest(), c.sim().trace_digest());
}

TEST(World, GatewayIsPlainUntilFixed) {
  auto cfg = small_world(7, 5);
  cfg.timeline.gateway_fixed_at = at(std::chrono::hours(1));
  World w(cfg);
  EXPECT_EQ(w.sim().policy(names::kGateway, names::browser(0)), net::ChannelKind::PlainHttp);
  w.run();
  EXPECT_EQ(w.sim().policy(names::kGateway, names::browser(0)), net::ChannelKind::Https);
  EXPECT_EQ(w.dedup_and_count().tally, w.intent_tally());
}

TEST(World, LinkageExamples) {
  World w(small_world(8, 200));
  w.run();
  const auto& plans = w.plans();
  std::set<VoterId> web, callers;
  for (const auto& p : plans)
    if (p.channel != Channel::Phone) web.insert(p.id);
  for (const auto& e : w.verify_log())
    if (!e.error && e.caller_id) callers.insert(e.voter);

  auto voters_in = [](const LinkedPairs& s) {
    std::set<VoterId> out;
    for (const auto& [v, b] : s) out.insert(v);
    return out;
  };
  auto reg_ver = w.linkage_report({Component::Registration, Component::VerificationServer});
  EXPECT_TRUE(std::includes(voters_in(reg_ver).begin(), voters_in(reg_ver).end(), web.begin(), web.end()));
  EXPECT_EQ(voters_in(w.linkage_report({Component::VerificationServer})), callers);
  EXPECT_FALSE(callers.empty());
  EXPECT_TRUE(w.linkage_report({Component::Auditor}).empty());
  EXPECT_TRUE(w.linkage_report({Component::Registration}).empty());

  std::set<VoterId> booth;
  for (const auto& p : plans)
    if (p.channel == Channel::PollingPlace) booth.insert(p.id);
  EXPECT_EQ(voters_in(w.linkage_report({Component::PollingPlaceMachine})), booth);

  // Linked ballots are the voters' real (final) ballots.
  for (const auto& [v, b] : reg_ver) {
    const auto& list = w.intents().at(v);
    bool found = false;
    for (const auto& x : list) found = found || raw_ballot_bytes(x) == b;
    EXPECT_TRUE(found) << v;
  }
}

TEST(Codec, TlsCarriedMessagesRoundTrip) {
  Desk d;
  auto c = d.reg.register_voter(1, Pin("654321"), at(std::chrono::hours(1)));
  std::vector<AppMessage> msgs = {GatewayRequest{},
                                  net::HttpRedirect{"registration", true},
                                  RegisterRequest{4, Pin("000001")},
                                  RegisterRequest{5, std::nullopt},
                                  RegisterResponse{c.ivote_id, c.pin},
                                  FetchApp{},
                                  AppPage{"verification-ivr"},
                                  FetchScript{},
                                  ScriptBody{true},
                                  d.submission(c, atl({2})),
                                  CastAccepted{ReceiptNumber("000000000042")},
                                  ServiceError{Errc::PollsClosed, "closed"},
                                  ReceiptQuery{ReceiptNumber("999999999999")},
                                  ReceiptStatus{ReceiptNumber("999999999999"), true}};
  for (const auto& m : msgs) {
    auto back = decode_app(encode_app(m));
    EXPECT_EQ(back.index(), m.index());
    EXPECT_EQ(encode_app(back), encode_app(m)) << app_type_name(m);
  }
  EXPECT_ERRC(encode_app(PageClosed{}), Errc::MalformedEncoding);
  auto bytes = encode_app(FetchApp{});
  bytes.push_back(0);
  EXPECT_ERRC(decode_app(bytes), Errc::MalformedEncoding);
}

}  // namespace
}  // namespace ivotesim::election
