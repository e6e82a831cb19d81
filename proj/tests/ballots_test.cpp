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

#include "ivotesim/ballots.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "test_util.hpp"

namespace ivotesim {
namespace {

ElectionManifest reference_manifest() {
  auto m = ElectionManifest::synthetic(24, 394, 6);
  m.add_default_cards();
  return m;
}

Ballot random_ballot(const ElectionManifest& m, Rng& rng) {
  Ballot b;
  std::vector<CandidateId> assembly;
  for (const auto& c : m.assembly_candidates()) assembly.push_back(c.id);
  rng.shuffle(assembly.begin(), assembly.end());
  b.assembly_prefs.assign(assembly.begin(), assembly.begin() + static_cast<long>(rng.below(assembly.size() + 1)));
  std::vector<std::uint16_t> ids;
  if (rng.bernoulli(0.5)) {
    b.council_mode = CouncilMode::AboveTheLine;
    for (const auto& g : m.groups()) ids.push_back(g.id.value);
    rng.shuffle(ids.begin(), ids.end());
    ids.resize(rng.below(ids.size() + 1));
  } else {
    b.council_mode = CouncilMode::BelowTheLine;
    for (const auto& c : m.council_candidates()) ids.push_back(c.id.value);
    rng.shuffle(ids.begin(), ids.end());
    ids.resize(1 + rng.below(20));
  }
  b.council_prefs = ids;
  return b;
}

TEST(BallotEncoding, CanonicalBytesForSingleAbovePreference) {
  auto m = reference_manifest();
  auto b = Ballot::above_the_line({GroupId{3}});
  auto bytes = encode_ballot(b, m);
  // mode 0, one council id (3), zero assembly ids.
  EXPECT_EQ(to_hex(bytes), "00000100030000");
  EXPECT_EQ(decode_ballot(bytes, m), b);
}

TEST(BallotEncoding, PreferenceOrderMatters) {
  auto m = reference_manifest();
  auto a = Ballot::above_the_line({GroupId{1}, GroupId{2}});
  auto b = Ballot::above_the_line({GroupId{2}, GroupId{1}});
  EXPECT_NE(encode_ballot(a, m), encode_ballot(b, m));
}

TEST(BallotEncoding, ExhaustiveSinglePreferenceRoundTripOnFourGroups) {
  auto m = ElectionManifest::synthetic(4, 8, 2);
  std::set<Bytes> seen;
  for (std::uint16_t g = 1; g <= 4; ++g) {
    auto b = Ballot::above_the_line({GroupId{g}});
    auto bytes = encode_ballot(b, m);
    EXPECT_EQ(decode_ballot(bytes, m), b);
    seen.insert(bytes);
  }
  EXPECT_EQ(seen.size(), 4u);
}

// Every ordered non-empty subset of five groups, crossed with every ordered
// subset of two assembly candidates: 325 * 5 ballots, all distinct bytes.
TEST(BallotEncoding, InjectiveOnEnumeratedFiveGroupUniverse) {
  auto m = ElectionManifest::synthetic(5, 10, 2);
  std::vector<std::vector<std::uint16_t>> orderings;
  std::vector<std::uint16_t> cur;
  std::function<void()> rec = [&] {
    if (!cur.empty()) orderings.push_back(cur);
    for (std::uint16_t g = 1; g <= 5; ++g) {
      if (std::find(cur.begin(), cur.end(), g) != cur.end()) continue;
      cur.push_back(g);
      rec();
      cur.pop_back();
    }
  };
  rec();
  ASSERT_EQ(orderings.size(), 325u);
  std::vector<std::vector<CandidateId>> assemblies = {
      {}, {CandidateId{1}}, {CandidateId{2}}, {CandidateId{1}, CandidateId{2}}, {CandidateId{2}, CandidateId{1}}};
  std::set<Bytes> seen;
  std::size_t total = 0;
  for (const auto& o : orderings) {
    for (const auto& a : assemblies) {
      Ballot b;
      b.council_prefs = o;
      b.assembly_prefs = a;
      auto bytes = encode_ballot(b, m);
      EXPECT_EQ(decode_ballot(bytes, m), b);
      seen.insert(bytes);
      ++total;
    }
  }
  EXPECT_EQ(seen.size(), total);
}

TEST(BallotEncoding, TruncatedInputIsMalformed) {
  auto m = reference_manifest();
  auto bytes = encode_ballot(Ballot::above_the_line({GroupId{3}, GroupId{7}}), m);
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    EXPECT_ERRC(decode_ballot(ByteView(bytes).first(len), m), Errc::MalformedEncoding);
  }
  bytes.push_back(0);
  EXPECT_ERRC(decode_ballot(bytes, m), Errc::MalformedEncoding);
}

TEST(BallotEncoding, UnknownGroupIsInvalid) {
  auto m = reference_manifest();
  // Hand-built per the wire format: ATL, one preference for group 25.
  Bytes bytes = {0x00, 0x00, 0x01, 0x00, 0x19, 0x00, 0x00};
  EXPECT_ERRC(decode_ballot(bytes, m), Errc::InvalidBallot);
  Bytes duplicate = {0x00, 0x00, 0x02, 0x00, 0x01, 0x00, 0x01, 0x00, 0x00};
  EXPECT_ERRC(decode_ballot(duplicate, m), Errc::InvalidBallot);
  Bytes bad_mode = {0x07, 0x00, 0x00, 0x00, 0x00};
  EXPECT_ERRC(decode_ballot(bad_mode, m), Errc::MalformedEncoding);
}

TEST(BallotEncoding, BelowTheLineMinimumEnforced) {
  auto m = ElectionManifest::synthetic(4, 12, 2, 3);
  Ballot b;
  b.council_mode = CouncilMode::BelowTheLine;
  b.council_prefs = {1, 2};
  EXPECT_ERRC(encode_ballot(b, m), Errc::InvalidBallot);
  b.council_prefs.push_back(3);
  EXPECT_EQ(decode_ballot(encode_ballot(b, m), m), b);
}

TEST(BallotEncoding, RandomRoundTripProperty) {
  auto m = reference_manifest();
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    auto b = random_ballot(m, rng);
    ASSERT_EQ(decode_ballot(encode_ballot(b, m), m), b);
  }
}

TEST(Manifest, RejectsDuplicateGroups) {
  std::vector<Group> groups = {{GroupId{1}, "a"}, {GroupId{1}, "b"}};
  std::vector<Candidate> c = {{CandidateId{1}, GroupId{1}, "c"}};
  EXPECT_ERRC(ElectionManifest(groups, c, c), Errc::ConfigInvalid);
}

TEST(DrawBallot, CardFollowerGetsCard) {
  auto m = reference_manifest();
  Rng rng(1);
  VoterProfile p{GroupId{1}, true};
  EXPECT_EQ(draw_ballot(p, m, rng), m.card(GroupId{1}));
}

TEST(DrawBallot, NonFollowerLeadsWithLeaning) {
  auto m = reference_manifest();
  Rng rng(2);
  VoterProfile p{GroupId{1}, false};
  for (int i = 0; i < 200; ++i) {
    auto b = draw_ballot(p, m, rng);
    ASSERT_EQ(b.council_prefs.at(0), 1);
    ASSERT_NE(b, m.card(GroupId{1}));
    validate_ballot(b, m);
  }
}

TEST(DrawBallot, CardFollowingRateConverges) {
  auto m = reference_manifest();
  Rng rng(40);
  const int n = 10000;
  int exact = 0;
  for (int i = 0; i < n; ++i) {
    VoterProfile p;
    p.party_leaning = GroupId{static_cast<std::uint16_t>(1 + rng.below(24))};
    p.follows_card = rng.bernoulli(0.40);
    if (draw_ballot(p, m, rng) == m.card(p.party_leaning)) ++exact;
  }
  double frac = static_cast<double>(exact) / n;
  EXPECT_NEAR(frac, 0.40, 0.02);
  // 3 binomial standard deviations.
  EXPECT_LE(std::abs(frac - 0.40), 3 * std::sqrt(0.4 * 0.6 / n));
}

TEST(Tally, EmptyHasNoMargin) {
  auto m = reference_manifest();
  auto t = tally_first_preferences({}, m);
  EXPECT_TRUE(t.counts.empty());
  EXPECT_FALSE(t.margin().has_value());
}

TEST(Tally, DirectCount) {
  auto m = reference_manifest();
  std::vector<Ballot> bs(3, Ballot::above_the_line({GroupId{1}}));
  bs.push_back(Ballot::above_the_line({GroupId{2}, GroupId{1}}));
  auto t = tally_first_preferences(bs, m);
  EXPECT_EQ(t.counts.at(GroupId{1}), 3u);
  EXPECT_EQ(t.counts.at(GroupId{2}), 1u);
  EXPECT_EQ(t.margin(), 2);
  EXPECT_EQ(t.leader(), GroupId{1});
}

TEST(Tally, BelowTheLineCountsCandidatesGroup) {
  auto m = reference_manifest();
  Ballot b;
  b.council_mode = CouncilMode::BelowTheLine;
  b.council_prefs = {26};  // candidate 26 sits in group 2 (round-robin over 24)
  auto t = tally_first_preferences(std::vector<Ballot>{b}, m);
  EXPECT_EQ(t.counts.at(GroupId{2}), 1u);
}

// 1:100 scale of the vulnerable-window numbers: 660 votes, honest margin 31,
// 32 votes moved from the leader to the runner-up.
TEST(Tally, MarginFlipAtScale) {
  auto m = reference_manifest();
  std::vector<Ballot> bs;
  for (int i = 0; i < 200; ++i) bs.push_back(Ballot::above_the_line({GroupId{1}}));
  for (int i = 0; i < 169; ++i) bs.push_back(Ballot::above_the_line({GroupId{2}}));
  for (int i = 0; i < 291; ++i) bs.push_back(Ballot::above_the_line({GroupId{static_cast<std::uint16_t>(3 + i % 22)}}));
  ASSERT_EQ(bs.size(), 660u);
  auto honest = tally_first_preferences(bs, m);
  EXPECT_EQ(honest.margin(), 31);
  EXPECT_EQ(honest.leader(), GroupId{1});

  int flipped = 0;
  for (auto& b : bs) {
    if (flipped < 32 && b.council_prefs[0] == 1) {
      b = Ballot::above_the_line({GroupId{2}});
      ++flipped;
    }
  }
  // Independent recount of the manipulated multiset.
  std::map<std::uint16_t, int> recount;
  for (const auto& b : bs) ++recount[b.council_prefs[0]];
  EXPECT_EQ(recount[1], 168);
  EXPECT_EQ(recount[2], 201);
  auto manipulated = tally_first_preferences(bs, m);
  EXPECT_EQ(manipulated.leader(), GroupId{2});
  EXPECT_EQ(manipulated.margin(), 33);
}

TEST(Tally, PermutationInvariantAndAdditive) {
  auto m = reference_manifest();
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Ballot> a, b;
    for (int i = 0; i < 40; ++i) a.push_back(random_ballot(m, rng));
    for (int i = 0; i < 25; ++i) b.push_back(random_ballot(m, rng));
    auto ta = tally_first_preferences(a, m);
    auto shuffled = a;
    rng.shuffle(shuffled.begin(), shuffled.end());
    EXPECT_EQ(tally_first_preferences(shuffled, m), ta);
    auto both = a;
    both.insert(both.end(), b.begin(), b.end());
    auto sum = ta;
    sum += tally_first_preferences(b, m);
    EXPECT_EQ(tally_first_preferences(both, m), sum);
  }
}

}  // namespace
}  // namespace ivotesim
