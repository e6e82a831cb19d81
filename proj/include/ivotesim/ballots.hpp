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

#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ivotesim/bytes.hpp"
#include "ivotesim/error.hpp"
#include "ivotesim/rng.hpp"
#include "ivotesim/simtime.hpp"

namespace ivotesim {

struct GroupId {
  std::uint16_t value = 0;
  friend auto operator<=>(const GroupId&, const GroupId&) = default;
};

/// Council tallies put first preferences for ungrouped candidates here.
inline constexpr GroupId kUngrouped{0};

struct CandidateId {
  std::uint16_t value = 0;
  friend auto operator<=>(const CandidateId&, const CandidateId&) = default;
};

enum class CouncilMode : std::uint8_t { AboveTheLine = 0, BelowTheLine = 1 };

/// One vote for each house. Preference numbers are implicit: list position
/// 0 is preference 1. `council_prefs` holds group ids above the line and
/// candidate ids below it.
struct Ballot {
  std::vector<CandidateId> assembly_prefs;
  CouncilMode council_mode = CouncilMode::AboveTheLine;
  std::vector<std::uint16_t> council_prefs;

  friend bool operator==(const Ballot&, const Ballot&) = default;

  static Ballot above_the_line(std::vector<GroupId> groups, std::vector<CandidateId> assembly = {}) {
    Ballot b;
    b.assembly_prefs = std::move(assembly);
    for (auto g : groups) b.council_prefs.push_back(g.value);
    return b;
  }
};

struct Group {
  GroupId id;
  std::string name;
};

struct Candidate {
  CandidateId id;
  std::optional<GroupId> group;
  std::string name;
};

class ElectionManifest {
 public:
  ElectionManifest() = default;

  /// Throws ConfigInvalid when ids repeat, a candidate names an unknown
  /// group, or a house has no entries.
  ElectionManifest(std::vector<Group> groups, std::vector<Candidate> council, std::vector<Candidate> assembly,
                   std::size_t min_below_line_prefs = 1)
      : groups_(std::move(groups)),
        council_(std::move(council)),
        assembly_(std::move(assembly)),
        min_below_line_prefs_(min_below_line_prefs) {
    if (groups_.empty() || council_.empty() || assembly_.empty())
      fail(Errc::ConfigInvalid, "manifest needs at least one group, council candidate and assembly candidate");
    if (min_below_line_prefs_ < 1) fail(Errc::ConfigInvalid, "min_below_line_prefs must be positive");
    for (const auto& g : groups_) {
      if (g.id.value == 0) fail(Errc::ConfigInvalid, "group id 0 is reserved");
      if (!group_index_.emplace(g.id.value, group_index_.size()).second)
        fail(Errc::ConfigInvalid, "duplicate group id " + std::to_string(g.id.value));
    }
    for (const auto& c : council_) {
      if (c.group && !has_group(*c.group))
        fail(Errc::ConfigInvalid, "candidate " + std::to_string(c.id.value) + " in unknown group");
      if (!council_group_.emplace(c.id.value, c.group.value_or(kUngrouped)).second)
        fail(Errc::ConfigInvalid, "duplicate council candidate id " + std::to_string(c.id.value));
    }
    for (const auto& c : assembly_) {
      if (!assembly_ids_.insert(c.id.value).second)
        fail(Errc::ConfigInvalid, "duplicate assembly candidate id " + std::to_string(c.id.value));
    }
  }

  /// Synthetic manifest: groups g1..gN, council candidates spread round-robin
  /// over the groups (the last few left ungrouped when there are more than
  /// three per group), assembly candidates aligned with the first groups.
  static ElectionManifest synthetic(std::size_t group_count, std::size_t candidate_count,
                                    std::size_t assembly_count, std::size_t min_below_line_prefs = 1) {
    std::vector<Group> groups;
    for (std::size_t i = 1; i <= group_count; ++i)
      groups.push_back({GroupId{static_cast<std::uint16_t>(i)}, "g" + std::to_string(i)});
    std::size_t ungrouped = candidate_count >= 3 * group_count + 2 ? 2 : 0;
    std::vector<Candidate> council;
    for (std::size_t i = 0; i < candidate_count; ++i) {
      std::optional<GroupId> g;
      if (i < candidate_count - ungrouped) g = GroupId{static_cast<std::uint16_t>(i % group_count + 1)};
      council.push_back({CandidateId{static_cast<std::uint16_t>(i + 1)}, g, "c" + std::to_string(i + 1)});
    }
    std::vector<Candidate> assembly;
    for (std::size_t i = 0; i < assembly_count; ++i) {
      assembly.push_back({CandidateId{static_cast<std::uint16_t>(i + 1)},
                          GroupId{static_cast<std::uint16_t>(i % group_count + 1)}, "a" + std::to_string(i + 1)});
    }
    return ElectionManifest(std::move(groups), std::move(council), std::move(assembly), min_below_line_prefs);
  }

  const std::vector<Group>& groups() const { return groups_; }
  const std::vector<Candidate>& council_candidates() const { return council_; }
  const std::vector<Candidate>& assembly_candidates() const { return assembly_; }
  std::size_t min_below_line_prefs() const { return min_below_line_prefs_; }

  bool has_group(GroupId g) const { return group_index_.contains(g.value); }
  bool has_council_candidate(std::uint16_t id) const { return council_group_.contains(id); }
  bool has_assembly_candidate(CandidateId id) const { return assembly_ids_.contains(id.value); }
  GroupId group_of_council_candidate(std::uint16_t id) const { return council_group_.at(id); }

  /// How-to-vote cards, one per group.
  void set_card(GroupId g, Ballot card);
  const Ballot& card(GroupId g) const {
    auto it = cards_.find(g.value);
    if (it == cards_.end()) fail(Errc::ConfigInvalid, "no how-to-vote card for group " + std::to_string(g.value));
    return it->second;
  }
  bool has_card(GroupId g) const { return cards_.contains(g.value); }

  /// Default card for every group lacking one: that group first above the
  /// line followed by the next two groups in list order, and the group's
  /// first assembly candidate (or the first assembly candidate overall).
  void add_default_cards() {
    const std::size_t n = groups_.size();
    for (std::size_t i = 0; i < n; ++i) {
      GroupId g = groups_[i].id;
      if (has_card(g)) continue;
      std::vector<GroupId> order;
      for (std::size_t k = 0; k < std::min<std::size_t>(3, n); ++k) order.push_back(groups_[(i + k) % n].id);
      CandidateId rep = assembly_.front().id;
      for (const auto& c : assembly_) {
        if (c.group == g) {
          rep = c.id;
          break;
        }
      }
      set_card(g, Ballot::above_the_line(order, {rep}));
    }
  }

 private:
  std::vector<Group> groups_;
  std::vector<Candidate> council_;
  std::vector<Candidate> assembly_;
  std::size_t min_below_line_prefs_ = 1;
  std::unordered_map<std::uint16_t, std::size_t> group_index_;
  std::unordered_map<std::uint16_t, GroupId> council_group_;
  std::unordered_set<std::uint16_t> assembly_ids_;
  std::map<std::uint16_t, Ballot> cards_;
};

/// Throws InvalidBallot if `b` breaks any ballot invariant against `m`.
inline void validate_ballot(const Ballot& b, const ElectionManifest& m) {
  std::unordered_set<std::uint16_t> seen;
  for (auto c : b.assembly_prefs) {
    if (!m.has_assembly_candidate(c)) fail(Errc::InvalidBallot, "unknown assembly candidate " + std::to_string(c.value));
    if (!seen.insert(c.value).second) fail(Errc::InvalidBallot, "duplicate assembly preference");
  }
  seen.clear();
  for (auto id : b.council_prefs) {
    if (b.council_mode == CouncilMode::AboveTheLine) {
      if (!m.has_group(GroupId{id})) fail(Errc::InvalidBallot, "unknown group " + std::to_string(id));
    } else if (!m.has_council_candidate(id)) {
      fail(Errc::InvalidBallot, "unknown council candidate " + std::to_string(id));
    }
    if (!seen.insert(id).second) fail(Errc::InvalidBallot, "duplicate council preference");
  }
  if (b.council_mode == CouncilMode::BelowTheLine && b.council_prefs.size() < m.min_below_line_prefs())
    fail(Errc::InvalidBallot, "too few below-the-line preferences");
}

inline void ElectionManifest::set_card(GroupId g, Ballot card) {
  if (!has_group(g)) fail(Errc::ConfigInvalid, "card for unknown group " + std::to_string(g.value));
  try {
    validate_ballot(card, *this);
  } catch (const Error& e) {
    fail(Errc::ConfigInvalid, "card for group " + std::to_string(g.value) + ": " + e.what());
  }
  cards_[g.value] = std::move(card);
}

// Wire format (big-endian):
//   u8  council mode (0 = above the line, 1 = below the line)
//   u16 council preference count, then that many u16 ids
//   u16 assembly preference count, then that many u16 ids
inline Bytes encode_ballot(const Ballot& b, const ElectionManifest& m) {
  validate_ballot(b, m);
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(b.council_mode));
  w.u16(static_cast<std::uint16_t>(b.council_prefs.size()));
  for (auto id : b.council_prefs) w.u16(id);
  w.u16(static_cast<std::uint16_t>(b.assembly_prefs.size()));
  for (auto c : b.assembly_prefs) w.u16(c.value);
  return std::move(w).bytes();
}

inline Ballot decode_ballot(ByteView bytes, const ElectionManifest& m) {
  ByteReader r(bytes);
  Ballot b;
  auto mode = r.u8();
  if (mode > 1) fail(Errc::MalformedEncoding, "unknown council mode byte");
  b.council_mode = static_cast<CouncilMode>(mode);
  auto n = r.u16();
  for (std::uint16_t i = 0; i < n; ++i) b.council_prefs.push_back(r.u16());
  auto k = r.u16();
  for (std::uint16_t i = 0; i < k; ++i) b.assembly_prefs.push_back(CandidateId{r.u16()});
  r.expect_done();
  validate_ballot(b, m);
  return b;
}

struct VoterProfile {
  GroupId party_leaning;
  bool follows_card = false;
  double p_verify_ivr = 0.0;
  double p_check_receipt_only = 0.0;
  double p_false_complaint = 0.0;
  SimTime cast_time{};

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_verify_ivr) || !prob(p_check_receipt_only) || !prob(p_false_complaint) ||
        p_verify_ivr + p_check_receipt_only > 1.0)
      fail(Errc::ConfigInvalid, "voter profile probabilities out of range");
  }
};

/// Card-followers get their group's card. Everyone else gets an
/// above-the-line ballot led by their leaning: up to five further groups in
/// random order and one to three random assembly preferences. That draw is
/// uniform over those shapes and never reproduces the card (modeling
/// assumption: nothing is known about non-card ballots).
inline Ballot draw_ballot(const VoterProfile& profile, const ElectionManifest& m, Rng& rng) {
  const Ballot& card = m.card(profile.party_leaning);
  if (profile.follows_card) return card;

  std::vector<GroupId> others;
  for (const auto& g : m.groups())
    if (g.id != profile.party_leaning) others.push_back(g.id);
  std::vector<CandidateId> assembly;
  for (const auto& c : m.assembly_candidates()) assembly.push_back(c.id);

  // Tiny manifests may admit no ballot other than the card; give up after a
  // bounded number of redraws rather than loop forever.
  for (int attempt = 0;; ++attempt) {
    rng.shuffle(others.begin(), others.end());
    auto extra = static_cast<std::size_t>(rng.below(std::min<std::size_t>(5, others.size()) + 1));
    std::vector<GroupId> council{profile.party_leaning};
    council.insert(council.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(extra));

    rng.shuffle(assembly.begin(), assembly.end());
    auto na = 1 + static_cast<std::size_t>(rng.below(std::min<std::size_t>(3, assembly.size())));
    Ballot b = Ballot::above_the_line(
        std::move(council), std::vector<CandidateId>(assembly.begin(), assembly.begin() + static_cast<std::ptrdiff_t>(na)));
    if (b != card || attempt >= 64) return b;
  }
}

struct Tally {
  std::map<GroupId, std::uint64_t> counts;
  std::uint64_t total = 0;

  /// Leader and runner-up ordered by count, ties broken by lower group id.
  std::vector<std::pair<GroupId, std::uint64_t>> ranking() const {
    std::vector<std::pair<GroupId, std::uint64_t>> r(counts.begin(), counts.end());
    std::stable_sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return r;
  }
  std::optional<GroupId> leader() const {
    auto r = ranking();
    if (r.empty()) return std::nullopt;
    return r.front().first;
  }
  /// count(1st) - count(2nd); with a single group the runner-up counts 0.
  std::optional<std::int64_t> margin() const {
    auto r = ranking();
    if (r.empty()) return std::nullopt;
    std::int64_t second = r.size() > 1 ? static_cast<std::int64_t>(r[1].second) : 0;
    return static_cast<std::int64_t>(r[0].second) - second;
  }

  Tally& operator+=(const Tally& o) {
    for (const auto& [g, n] : o.counts) counts[g] += n;
    total += o.total;
    return *this;
  }
  friend bool operator==(const Tally&, const Tally&) = default;
};

inline std::optional<GroupId> first_council_group(const Ballot& b, const ElectionManifest& m) {
  if (b.council_prefs.empty()) return std::nullopt;
  if (b.council_mode == CouncilMode::AboveTheLine) return GroupId{b.council_prefs.front()};
  return m.group_of_council_candidate(b.council_prefs.front());
}

inline Tally tally_first_preferences(std::span<const Ballot> ballots, const ElectionManifest& m) {
  Tally t;
  for (const auto& b : ballots) {
    if (auto g = first_council_group(b, m)) {
      ++t.counts[*g];
      ++t.total;
    }
  }
  return t;
}

}  // namespace ivotesim
