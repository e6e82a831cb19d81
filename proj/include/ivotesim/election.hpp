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
#include <chrono>
#include <map>
#include <memory>
#include <set>
#include <tuple>

#include "ivotesim/election_messages.hpp"

namespace ivotesim::election {

using Sim = net::Simulator<Message>;
using SimEvent = net::Event<Message>;
using namespace std::chrono_literals;

namespace names {
inline const std::string kGateway = "registration-gateway";
inline const std::string kRegistration = "registration";
inline const std::string kCvs = "cvs";
inline const std::string kVerification = "verification";
inline const std::string kVerificationIvr = "verification-ivr";
inline const std::string kVotingIvr = "voting-ivr";
inline const std::string kReceiptService = "receipt-service";
inline const std::string kPiwik = "piwik";
inline const std::string kAuthority = "authority";
inline const std::string kTimeline = "timeline";

inline std::string voter(VoterId v) { return "voter[" + std::to_string(v) + "]"; }
inline std::string browser(VoterId v) { return voter(v) + ".browser"; }

/// Voter index from "voter[N]" or "voter[N].browser".
inline std::optional<VoterId> voter_of(std::string_view endpoint) {
  if (!net::has_prefix(endpoint, "voter[")) return std::nullopt;
  auto close = endpoint.find(']');
  if (close == std::string_view::npos) return std::nullopt;
  return static_cast<VoterId>(std::stoul(std::string(endpoint.substr(6, close - 6))));
}
inline bool is_browser(std::string_view endpoint) {
  return net::has_prefix(endpoint, "voter[") && endpoint.size() > 8 && endpoint.substr(endpoint.size() - 8) == ".browser";
}
}  // namespace names

// ---------------------------------------------------------------------------
// Configuration.

struct ElectionTimeline {
  SimTime polls_open = at(SimDuration::zero());
  SimTime polls_close = at(std::chrono::hours(24 * 12));
  SimTime receipt_service_end = at(std::chrono::hours(24 * 26));
  /// The registration gateway is served over plain HTTP until this time
  /// (forever when unset and `gateway_plain_http` is on).
  bool gateway_plain_http = true;
  std::optional<SimTime> gateway_fixed_at;
  std::optional<SimTime> piwik_disabled_at;

  SimTime verification_shutdown() const { return polls_close; }

  void validate() const {
    if (polls_close <= polls_open) fail(Errc::ConfigInvalid, "polls must close after they open");
    if (receipt_service_end <= polls_close) fail(Errc::ConfigInvalid, "receipt service must outlive the polls");
  }
};

struct BehaviorParams {
  double card_rate = 0.40;
  double p_verify_ivr = 0.2;
  double p_check_receipt_only = 0.3;
  double p_false_complaint = 0.005;
  double p_leave_without_receipt = 0.3;
  double p_dial_genuine_anyway = 0.0;
  double p_caller_id = 0.7;
  double p_choose_pin = 0.5;
  double p_revote = 0.0;
  double p_phone = 0.0;
  double p_polling_place = 0.0;
  double patch_rate = 0.5;
  /// Chance that a voter who chose a PIN and is shown a different one
  /// re-registers directly. Default 0, which favors a clash attacker.
  double suspicion = 0.0;

  SimDuration registration_lead_min = 10min;
  SimDuration registration_lead_max = 48h;
  SimDuration compose_min = 1min;
  SimDuration compose_max = 8min;
  /// Page-open times are uniform over [polls_open, polls_close - cast_cutoff
  /// - compose_max - 1 min], so every honest cast lands before the close.
  SimDuration cast_cutoff = SimDuration::zero();
  SimDuration verify_delay_min = 5min;
  SimDuration verify_delay_max = 2h;
  SimDuration leave_delay_min = 2s;
  SimDuration leave_delay_max = 8s;
  SimDuration revote_gap_min = 10min;
  SimDuration revote_gap_max = 24h;

  void validate() const {
    auto prob = [](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0)) fail(Errc::ConfigInvalid, std::string(name) + " must be in [0,1]");
    };
    prob(card_rate, "card_rate");
    prob(p_verify_ivr, "p_verify_ivr");
    prob(p_check_receipt_only, "p_check_receipt_only");
    prob(p_false_complaint, "p_false_complaint");
    prob(p_leave_without_receipt, "p_leave_without_receipt");
    prob(p_dial_genuine_anyway, "p_dial_genuine_anyway");
    prob(p_caller_id, "p_caller_id");
    prob(p_choose_pin, "p_choose_pin");
    prob(p_revote, "p_revote");
    prob(p_phone, "p_phone");
    prob(p_polling_place, "p_polling_place");
    prob(patch_rate, "patch_rate");
    prob(suspicion, "suspicion");
    if (p_verify_ivr + p_check_receipt_only > 1.0)
      fail(Errc::ConfigInvalid, "p_verify_ivr + p_check_receipt_only exceeds 1");
    if (p_phone + p_polling_place > 1.0) fail(Errc::ConfigInvalid, "p_phone + p_polling_place exceeds 1");
    auto range = [](SimDuration lo, SimDuration hi, const char* name) {
      if (lo < SimDuration::zero() || hi < lo) fail(Errc::ConfigInvalid, std::string(name) + " range is empty");
    };
    range(registration_lead_min, registration_lead_max, "registration_lead");
    range(compose_min, compose_max, "compose");
    range(verify_delay_min, verify_delay_max, "verify_delay");
    range(leave_delay_min, leave_delay_max, "leave_delay");
    range(revote_gap_min, revote_gap_max, "revote_gap");
    if (cast_cutoff < SimDuration::zero()) fail(Errc::ConfigInvalid, "cast_cutoff must be >= 0");
  }
};

/// Party leanings: exact head counts for some groups, the rest drawn from
/// weights (uniform over the groups without a quota when none are given).
struct LeaningSpec {
  std::map<GroupId, std::size_t> quota;
  std::map<GroupId, double> weights;
};

struct TlsSettings {
  std::set<tls::CipherSuite> service_suites{tls::CipherSuite::RSA, tls::CipherSuite::DHE};
  std::set<tls::CipherSuite> piwik_suites{tls::CipherSuite::RSA, tls::CipherSuite::DHE};
  SimDuration temp_rsa_rotation = 1h;
  SimDuration connection_lifetime = 21h;
  unsigned export_rsa_bits = 64;
  unsigned cert_rsa_bits = 256;
};

struct CryptoSizes {
  std::uint64_t group_seed = 1;
  unsigned envelope_bits = 64;
  unsigned dhe_bits = 128;
  unsigned export_dh_p_bits = 64;
  unsigned export_dh_q_bits = 32;
};

struct ElectionConfig {
  std::uint64_t seed = 1;
  std::size_t voter_count = 100;
  ElectionManifest manifest = [] {
    auto m = ElectionManifest::synthetic(4, 16, 6);
    m.add_default_cards();
    return m;
  }();
  ElectionTimeline timeline;
  BehaviorParams behavior;
  LeaningSpec leaning;
  TlsSettings tls;
  CryptoSizes crypto;
  bool piwik_enabled = true;
  SimDuration network_delay = 20ms;
  bool keep_trace = true;

  void validate() const {
    timeline.validate();
    behavior.validate();
    if (voter_count == 0) fail(Errc::ConfigInvalid, "voter_count must be positive");
    std::size_t quota_total = 0;
    for (const auto& [g, n] : leaning.quota) {
      if (!manifest.has_group(g)) fail(Errc::ConfigInvalid, "leaning quota for unknown group " + std::to_string(g.value));
      quota_total += n;
    }
    if (quota_total > voter_count) fail(Errc::ConfigInvalid, "leaning quotas exceed voter_count");
    for (const auto& [g, w] : leaning.weights) {
      if (!manifest.has_group(g)) fail(Errc::ConfigInvalid, "leaning weight for unknown group " + std::to_string(g.value));
      if (!(w >= 0.0)) fail(Errc::ConfigInvalid, "leaning weights must be >= 0");
    }
    for (const auto& g : manifest.groups())
      if (!manifest.has_card(g.id)) fail(Errc::ConfigInvalid, "group " + g.name + " has no how-to-vote card");
  }
};

// ---------------------------------------------------------------------------
// Crypto groups, cached per size class.

struct CryptoGroups {
  ElGamalParams envelope;
  ElGamalParams dhe;
  ElGamalParams dhe_export;
};

inline const CryptoGroups& crypto_groups(const CryptoSizes& s) {
  static std::map<std::tuple<std::uint64_t, unsigned, unsigned, unsigned, unsigned>, CryptoGroups> cache;
  auto key = std::make_tuple(s.group_seed, s.envelope_bits, s.dhe_bits, s.export_dh_p_bits, s.export_dh_q_bits);
  auto it = cache.find(key);
  if (it == cache.end()) {
    Rng rng = Rng(s.group_seed).fork("groups");
    CryptoGroups g;
    g.envelope = gen_params(s.envelope_bits, rng);
    g.dhe = gen_params(s.dhe_bits, rng);
    g.dhe_export = gen_schnorr_params(s.export_dh_p_bits, s.export_dh_q_bits, rng);
    it = cache.emplace(key, std::move(g)).first;
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// Services.

inline Bytes pin_hash(const IVoteId& id, const Pin& pin) {
  return as_bytes(FieldHasher("pin").add(id.str()).add(pin.str()).digest());
}

/// Key for the client signature on an envelope, derived from the
/// credentials so the CVS can check it without extra key distribution.
inline Bytes client_signing_key(const IVoteId& id, const Pin& pin) {
  return as_bytes(FieldHasher("client-sign").add(id.str()).add(pin.str()).digest());
}

class RegistrationService {
 public:
  RegistrationService(SimTime polls_close, Rng rng) : close_(polls_close), rng_(std::move(rng)) {}

  /// Re-registration is allowed; the newest iVote ID supersedes older ones.
  Credentials register_voter(VoterId voter, std::optional<Pin> pin_choice, SimTime now) {
    if (now > close_) fail(Errc::PollsClosed, "registration closed");
    Credentials c = registry_.issue_credentials(pin_choice, rng_);
    entries_.emplace(c.ivote_id.str(), Entry{voter, pin_hash(c.ivote_id, c.pin)});
    ids_by_voter_[voter].push_back(c.ivote_id);
    return c;
  }

  bool check(const IVoteId& id, const Pin& pin) const {
    auto it = entries_.find(id.str());
    return it != entries_.end() && it->second.pin_hash == pin_hash(id, pin);
  }
  std::optional<VoterId> voter_of(const IVoteId& id) const {
    auto it = entries_.find(id.str());
    if (it == entries_.end()) return std::nullopt;
    return it->second.voter;
  }
  std::optional<IVoteId> latest_id(VoterId voter) const {
    auto it = ids_by_voter_.find(voter);
    if (it == ids_by_voter_.end()) return std::nullopt;
    return it->second.back();
  }
  const std::map<VoterId, std::vector<IVoteId>>& ids_by_voter() const { return ids_by_voter_; }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    VoterId voter;
    Bytes pin_hash;
  };
  SimTime close_;
  Rng rng_;
  CredentialRegistry registry_;
  std::unordered_map<std::string, Entry> entries_;
  std::map<VoterId, std::vector<IVoteId>> ids_by_voter_;
};

struct CoreVotingRecord {
  IVoteId ivote_id;
  DigitalEnvelope envelope;
  ReceiptNumber receipt;
  SimTime cast_time{};
  Channel channel = Channel::Web;
  bool superseded = false;  // filled in by dedup
};

class CoreVotingSystem {
 public:
  /// Lets a compromised CVS store a different envelope from the one it
  /// forwards to verification.
  using StorageHook = std::function<std::optional<DigitalEnvelope>(const CastSubmit&, SimTime)>;

  struct CastResult {
    ReceiptNumber receipt;
    VerificationForward forward;
  };

  CoreVotingSystem(const RegistrationService& registration, SimTime polls_close, Rng rng)
      : registration_(&registration), close_(polls_close), rng_(std::move(rng)) {}

  CastResult cast(const CastSubmit& submit, SimTime now) {
    if (now > close_) fail(Errc::PollsClosed, "polls closed");
    if (!registration_->check(submit.ivote_id, submit.pin)) fail(Errc::BadCredentials, "unknown iVote ID or wrong PIN");
    if (!verify_envelope_signature(submit.envelope, client_signing_key(submit.ivote_id, submit.pin)))
      fail(Errc::BadCredentials, "client signature does not verify");
    CoreVotingRecord rec;
    rec.ivote_id = submit.ivote_id;
    rec.envelope = submit.envelope;
    if (hook_) {
      if (auto replaced = hook_(submit, now)) rec.envelope = std::move(*replaced);
    }
    rec.receipt = receipts_.issue(rng_);
    rec.cast_time = now;
    rec.channel = submit.channel;
    records_.push_back(rec);
    return {rec.receipt, VerificationForward{submit.ivote_id, pin_hash(submit.ivote_id, submit.pin), rec.receipt,
                                             submit.envelope}};
  }

  void set_storage_hook(StorageHook hook) { hook_ = std::move(hook); }
  const std::vector<CoreVotingRecord>& records() const { return records_; }

 private:
  const RegistrationService* registration_;
  SimTime close_;
  Rng rng_;
  ReceiptRegistry receipts_;
  std::vector<CoreVotingRecord> records_;
  StorageHook hook_;
};

struct VerificationRecord {
  IVoteId ivote_id;
  Bytes pin_hash;
  ReceiptNumber receipt;
  Ballot ballot;
};

/// Holds its own envelope secret and decrypts each vote as it arrives.
class VerificationService {
 public:
  VerificationService(const ElectionManifest& manifest, ElGamalParams params, BigInt secret, SimTime shutdown)
      : manifest_(&manifest), params_(std::move(params)), secret_(std::move(secret)), shutdown_(shutdown) {}

  void ingest(const VerificationForward& fwd) {
    try {
      Ballot b = decode_ballot(open(fwd.envelope, EnvelopeServer::Verification, params_, secret_), *manifest_);
      by_receipt_.emplace(fwd.receipt.str(), records_.size());
      records_.push_back({fwd.ivote_id, fwd.pin_hash, fwd.receipt, std::move(b)});
    } catch (const Error&) {
      ++rejected_;
    }
  }

  Ballot verify(const IVoteId& id, const Pin& pin, const ReceiptNumber& receipt, SimTime now) const {
    if (now >= shutdown_) fail(Errc::ServiceClosed, "verification closed at the close of polls");
    auto it = by_receipt_.find(receipt.str());
    if (it == by_receipt_.end()) fail(Errc::NoSuchRecord, "no vote with that receipt");
    const auto& rec = records_[it->second];
    if (rec.ivote_id != id || rec.pin_hash != pin_hash(id, pin)) fail(Errc::NoSuchRecord, "credentials do not match");
    return rec.ballot;
  }

  const VerificationRecord* find(const ReceiptNumber& receipt) const {
    auto it = by_receipt_.find(receipt.str());
    return it == by_receipt_.end() ? nullptr : &records_[it->second];
  }
  const std::vector<VerificationRecord>& records() const { return records_; }
  std::size_t rejected() const { return rejected_; }

 private:
  const ElectionManifest* manifest_;
  ElGamalParams params_;
  BigInt secret_;
  SimTime shutdown_;
  std::vector<VerificationRecord> records_;
  std::unordered_map<std::string, std::size_t> by_receipt_;
  std::size_t rejected_ = 0;
};

struct ComplaintEntry {
  VoterId voter = 0;
  SimTime time{};
  ComplaintKind kind = ComplaintKind::MismatchRead;
};

class ComplaintLog {
 public:
  void append(ComplaintEntry e) { entries_.push_back(e); }
  const std::vector<ComplaintEntry>& entries() const { return entries_; }

 private:
  std::vector<ComplaintEntry> entries_;
};

struct VerifyLogEntry {
  VoterId voter = 0;
  SimTime time{};
  std::string number;
  std::optional<Errc> error;
  bool caller_id = false;
};

// ---------------------------------------------------------------------------
// Dedup, count, audit.

/// A record counts when its iVote ID is the voter's newest and no later
/// record carries the same ID.
inline std::vector<std::size_t> effective_record_indices(const std::vector<CoreVotingRecord>& records,
                                                         const RegistrationService& registration) {
  std::unordered_map<std::string, std::size_t> last_for_id;
  for (std::size_t i = 0; i < records.size(); ++i) last_for_id[records[i].ivote_id.str()] = i;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (last_for_id[r.ivote_id.str()] != i) continue;
    auto voter = registration.voter_of(r.ivote_id);
    if (!voter || registration.latest_id(*voter) != r.ivote_id) continue;
    out.push_back(i);
  }
  return out;
}

struct CountedVote {
  IVoteId ivote_id;
  ReceiptNumber receipt;
  Ballot ballot;
  Channel channel = Channel::Web;
  VoterId voter = 0;
};

struct DedupResult {
  Tally tally;
  std::vector<CountedVote> counted;
  std::vector<CoreVotingRecord> records;  // with `superseded` filled in
  std::size_t superseded = 0;
  std::size_t undecryptable = 0;
};

inline DedupResult dedup_and_count(const CoreVotingSystem& cvs, const RegistrationService& registration,
                                   const ElGamalParams& params, const BigInt& election_secret,
                                   const ElectionManifest& manifest) {
  DedupResult out;
  out.records = cvs.records();
  for (auto& r : out.records) r.superseded = true;
  std::vector<Ballot> ballots;
  for (auto i : effective_record_indices(cvs.records(), registration)) {
    auto& r = out.records[i];
    r.superseded = false;
    try {
      Ballot b = decode_ballot(open(r.envelope, EnvelopeServer::Election, params, election_secret), manifest);
      ballots.push_back(b);
      out.counted.push_back({r.ivote_id, r.receipt, std::move(b), r.channel, registration.voter_of(r.ivote_id).value_or(0)});
    } catch (const Error&) {
      ++out.undecryptable;
    }
  }
  out.superseded = static_cast<std::size_t>(
      std::count_if(out.records.begin(), out.records.end(), [](const auto& r) { return r.superseded; }));
  out.tally = tally_first_preferences(ballots, manifest);
  return out;
}

enum class AuditMode { Honest, BlindEye };

struct AuditFinding {
  IVoteId ivote_id;
  ReceiptNumber receipt;
  std::string kind;  // "mismatch", "missing-verification", "missing-cvs", "undecryptable"
};

struct AuditReport {
  std::vector<AuditFinding> inconsistencies;
  std::size_t examined = 0;

  std::string to_text() const {
    std::string s = "audit examined=" + std::to_string(examined) + " inconsistencies=" +
                    std::to_string(inconsistencies.size()) + "\n";
    for (const auto& f : inconsistencies) s += f.kind + " id=" + f.ivote_id.str() + " receipt=" + f.receipt.str() + "\n";
    return s;
  }
};

inline AuditReport audit_reconcile(const CoreVotingSystem& cvs, const VerificationService& verification,
                                   const ElGamalParams& params, const BigInt& election_secret,
                                   const ElectionManifest& manifest, AuditMode mode) {
  AuditReport out;
  if (mode == AuditMode::BlindEye) return out;
  std::set<std::string> seen;
  for (const auto& r : cvs.records()) {
    ++out.examined;
    seen.insert(r.receipt.str());
    const auto* v = verification.find(r.receipt);
    if (!v || v->ivote_id != r.ivote_id) {
      out.inconsistencies.push_back({r.ivote_id, r.receipt, "missing-verification"});
      continue;
    }
    try {
      Ballot b = decode_ballot(open(r.envelope, EnvelopeServer::Election, params, election_secret), manifest);
      if (b != v->ballot) out.inconsistencies.push_back({r.ivote_id, r.receipt, "mismatch"});
    } catch (const Error&) {
      out.inconsistencies.push_back({r.ivote_id, r.receipt, "undecryptable"});
    }
  }
  for (const auto& v : verification.records()) {
    if (!seen.contains(v.receipt.str())) {
      ++out.examined;
      out.inconsistencies.push_back({v.ivote_id, v.receipt, "missing-cvs"});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linkage.

enum class Component { Registration, VerificationServer, VoiceServer, Auditor, PollingPlaceMachine, PhoneTapCallerId };

inline constexpr std::string_view component_name(Component c) {
  switch (c) {
    case Component::Registration: return "Registration";
    case Component::VerificationServer: return "VerificationServer";
    case Component::VoiceServer: return "VoiceServer";
    case Component::Auditor: return "Auditor";
    case Component::PollingPlaceMachine: return "PollingPlaceMachine";
    case Component::PhoneTapCallerId: return "PhoneTap+CallerId";
  }
  return "?";
}

inline Component component_from_name(std::string_view n) {
  for (auto c : {Component::Registration, Component::VerificationServer, Component::VoiceServer, Component::Auditor,
                 Component::PollingPlaceMachine, Component::PhoneTapCallerId})
    if (component_name(c) == n) return c;
  fail(Errc::UnknownComponent, "unknown component '" + std::string(n) + "'");
}

/// What each component stores. Edges are voter-id, id-ballot, or a direct
/// voter-ballot pair.
struct LinkageHoldings {
  std::vector<std::pair<VoterId, IVoteId>> registration;
  std::vector<std::pair<IVoteId, Ballot>> verification_ballots;
  std::vector<std::pair<VoterId, IVoteId>> verification_callers;
  std::vector<std::pair<IVoteId, Ballot>> voice_ballots;
  std::vector<std::pair<VoterId, IVoteId>> voice_callers;
  std::vector<std::pair<IVoteId, Ballot>> auditor_ballots;
  std::vector<std::pair<VoterId, Ballot>> polling_place;
  std::vector<std::pair<VoterId, Ballot>> phone_tap;
};

using LinkedPairs = std::set<std::pair<VoterId, Bytes>>;  // ballot as raw_ballot_bytes

inline LinkedPairs linkage_report(const LinkageHoldings& h, const std::set<Component>& compromised) {
  std::multimap<std::string, VoterId> voter_by_id;
  std::multimap<std::string, Bytes> ballot_by_id;
  LinkedPairs out;
  auto has = [&](Component c) { return compromised.contains(c); };
  auto add_voters = [&](const auto& v) {
    for (const auto& [voter, id] : v) voter_by_id.emplace(id.str(), voter);
  };
  auto add_ballots = [&](const auto& v) {
    for (const auto& [id, b] : v) ballot_by_id.emplace(id.str(), raw_ballot_bytes(b));
  };
  if (has(Component::Registration)) add_voters(h.registration);
  if (has(Component::VerificationServer)) {
    add_voters(h.verification_callers);
    add_ballots(h.verification_ballots);
  }
  if (has(Component::VoiceServer)) {
    add_voters(h.voice_callers);
    add_ballots(h.voice_ballots);
  }
  if (has(Component::Auditor)) add_ballots(h.auditor_ballots);
  if (has(Component::PollingPlaceMachine))
    for (const auto& [v, b] : h.polling_place) out.emplace(v, raw_ballot_bytes(b));
  if (has(Component::PhoneTapCallerId))
    for (const auto& [v, b] : h.phone_tap) out.emplace(v, raw_ballot_bytes(b));
  for (auto it = voter_by_id.begin(); it != voter_by_id.end(); ++it) {
    auto [lo, hi] = ballot_by_id.equal_range(it->first);
    for (auto b = lo; b != hi; ++b) out.emplace(it->second, b->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// TLS over the simulator.

class TlsClientSide {
 public:
  using MessageFn = std::function<void(std::uint64_t conn, const std::string& peer, const AppMessage&)>;
  using FailureFn = std::function<void(std::uint64_t conn, const std::string& peer, Errc)>;

  TlsClientSide(Sim& sim, std::string self, std::uint64_t* conn_counter, Rng rng)
      : sim_(&sim), self_(std::move(self)), counter_(conn_counter), rng_(std::move(rng)) {}

  void set_callbacks(MessageFn on_message, FailureFn on_failure) {
    on_message_ = std::move(on_message);
    on_failure_ = std::move(on_failure);
  }

  std::uint64_t open(const std::string& server, const tls::ClientTlsConfig& cfg, const tls::RsaPublicKey& trusted) {
    const auto id = ++*counter_;
    auto& c = conns_.emplace(id, Conn{server, tls::ClientHandshake(cfg, trusted, rng_.fork("conn", id))}).first->second;
    auto hello = c.hs.start();
    sim_->send(self_, server, Message{TlsHandshake{id, hello}});
    return id;
  }

  /// Queued until the handshake completes.
  void send(std::uint64_t conn, AppMessage msg) {
    auto it = conns_.find(conn);
    if (it == conns_.end() || it->second.failed) return;
    if (!it->second.hs.established()) {
      it->second.outbox.push_back(std::move(msg));
      return;
    }
    transmit(conn, it->second, msg);
  }

  bool owns(const Message& m) const {
    if (const auto* h = std::get_if<TlsHandshake>(&m)) return conns_.contains(h->conn);
    if (const auto* r = std::get_if<TlsRecord>(&m)) return conns_.contains(r->conn);
    return false;
  }

  void handle(const SimEvent& ev) {
    if (const auto* h = std::get_if<TlsHandshake>(&ev.payload)) {
      auto& c = conns_.at(h->conn);
      if (c.failed) return;
      try {
        for (auto& reply : c.hs.receive(h->msg)) sim_->send(self_, c.peer, Message{TlsHandshake{h->conn, reply}});
        if (c.hs.established()) {
          auto pending = std::move(c.outbox);
          c.outbox.clear();
          for (const auto& m : pending) transmit(h->conn, c, m);
        }
      } catch (const Error& e) {
        failed(h->conn, c, e);
      }
      return;
    }
    const auto& r = std::get<TlsRecord>(ev.payload);
    auto& c = conns_.at(r.conn);
    if (c.failed || !c.hs.established()) return;
    try {
      auto pt = tls::open_record(c.hs.session_key(), tls::Role::Server, c.recv_seq++, r.sealed);
      auto msg = decode_app(pt);
      if (on_message_) on_message_(r.conn, c.peer, msg);
    } catch (const Error& e) {
      failed(r.conn, c, e);
    }
  }

  bool established(std::uint64_t conn) const {
    auto it = conns_.find(conn);
    return it != conns_.end() && it->second.hs.established();
  }
  std::optional<tls::CipherSuite> suite(std::uint64_t conn) const {
    auto it = conns_.find(conn);
    if (it == conns_.end() || !it->second.hs.established()) return std::nullopt;
    return it->second.hs.suite();
  }
  std::size_t failures() const { return failures_; }

 private:
  struct Conn {
    Conn(std::string p, tls::ClientHandshake h) : peer(std::move(p)), hs(std::move(h)) {}
    std::string peer;
    tls::ClientHandshake hs;
    std::vector<AppMessage> outbox;
    std::uint64_t send_seq = 0;
    std::uint64_t recv_seq = 0;
    bool failed = false;
  };

  void transmit(std::uint64_t id, Conn& c, const AppMessage& m) {
    auto sealed = tls::seal_record(c.hs.session_key(), tls::Role::Client, c.send_seq, encode_app(m));
    sim_->send(self_, c.peer, Message{TlsRecord{id, tls::Role::Client, c.send_seq++, std::move(sealed)}});
  }

  void failed(std::uint64_t id, Conn& c, const Error& e) {
    c.failed = true;
    ++failures_;
    sim_->note(self_, "tls conn=" + std::to_string(id) + " failed " + std::string(errc_name(e.code())));
    if (on_failure_) on_failure_(id, c.peer, e.code());
  }

  Sim* sim_;
  std::string self_;
  std::uint64_t* counter_;
  Rng rng_;
  std::map<std::uint64_t, Conn> conns_;
  MessageFn on_message_;
  FailureFn on_failure_;
  std::size_t failures_ = 0;
};

/// App handler: request from `peer` -> replies to send back.
using AppFn = std::function<std::vector<AppMessage>(const std::string& peer, const AppMessage&)>;

class TlsServerSide {
 public:
  TlsServerSide(Sim& sim, std::string self, tls::TlsServer& server, AppFn app)
      : sim_(&sim), self_(std::move(self)), server_(&server), app_(std::move(app)) {}

  void handle(const SimEvent& ev) {
    const SimTime now = sim_->now();
    if (const auto* h = std::get_if<TlsHandshake>(&ev.payload)) {
      auto it = conns_.find(h->conn);
      if (it == conns_.end()) {
        if (!std::holds_alternative<tls::ClientHello>(h->msg)) return;
        it = conns_.emplace(h->conn, Conn{ev.src, server_->accept(now)}).first;
      }
      try {
        for (auto& reply : it->second.conn->receive(h->msg, now))
          sim_->send(self_, it->second.peer, Message{TlsHandshake{h->conn, reply}});
      } catch (const Error& e) {
        ++failures_;
        sim_->note(self_, "tls conn=" + std::to_string(h->conn) + " failed " + std::string(errc_name(e.code())));
        conns_.erase(it);
      }
      return;
    }
    const auto& r = std::get<TlsRecord>(ev.payload);
    auto it = conns_.find(r.conn);
    if (it == conns_.end()) return;
    auto& c = it->second;
    auto key = c.conn->session_key();
    if (!key) return;
    try {
      auto msg = decode_app(tls::open_record(*key, tls::Role::Client, c.recv_seq++, r.sealed));
      for (const auto& reply : app_(c.peer, msg)) {
        auto sealed = tls::seal_record(*key, tls::Role::Server, c.send_seq, encode_app(reply));
        sim_->send(self_, c.peer, Message{TlsRecord{r.conn, tls::Role::Server, c.send_seq++, std::move(sealed)}});
      }
    } catch (const Error& e) {
      ++failures_;
      sim_->note(self_, "record conn=" + std::to_string(r.conn) + " rejected " + std::string(errc_name(e.code())));
    }
  }

  std::size_t failures() const { return failures_; }
  std::size_t connections() const { return conns_.size(); }

 private:
  struct Conn {
    std::string peer;
    std::unique_ptr<tls::ServerConnection> conn;
    std::uint64_t send_seq = 0;
    std::uint64_t recv_seq = 0;
  };

  Sim* sim_;
  std::string self_;
  tls::TlsServer* server_;
  AppFn app_;
  std::map<std::uint64_t, Conn> conns_;
  std::size_t failures_ = 0;
};

/// Replies to a plain request. A redirect goes out as a bare HTTP redirect.
inline void send_plain_replies(Sim& sim, const std::string& self, const std::string& peer,
                               const std::vector<AppMessage>& replies) {
  for (const auto& m : replies) {
    if (const auto* r = std::get_if<net::HttpRedirect>(&m))
      sim.send(self, peer, Message{*r});
    else
      sim.send(self, peer, Message{m});
  }
}

// ---------------------------------------------------------------------------
// Voter plans.

enum class CheckKind { None, Ivr, ReceiptOnly };

struct VoterPlan {
  VoterId id = 0;
  VoterProfile profile;
  Channel channel = Channel::Web;
  std::vector<Ballot> intents;          // first vote, then an optional revote
  std::vector<SimTime> page_open_times;  // one per intent
  SimTime register_time{};
  SimDuration compose_delay{};
  CheckKind check = CheckKind::None;
  SimDuration verify_delay{};
  SimTime receipt_check_time{};
  bool false_complaint = false;
  SimTime complaint_time{};
  bool leaves_without_receipt = false;
  SimDuration leave_delay{};
  bool dials_genuine_anyway = false;
  bool reveals_caller_id = false;
  bool patched_browser = false;
  std::optional<Pin> pin_choice;
  bool suspicious = false;
};

namespace detail {
inline SimDuration uniform_duration(Rng& rng, SimDuration lo, SimDuration hi) {
  return SimDuration(rng.between(ticks(lo), ticks(hi)));
}
inline SimTime uniform_time(Rng& rng, SimTime lo, SimTime hi) {
  return at(SimDuration(rng.between(ticks(lo), ticks(hi))));
}
}  // namespace detail

inline std::vector<GroupId> assign_leanings(const ElectionConfig& cfg) {
  Rng rng = Rng(cfg.seed).fork("leaning");
  std::vector<GroupId> out;
  for (const auto& [g, n] : cfg.leaning.quota) out.insert(out.end(), n, g);
  std::vector<std::pair<GroupId, double>> weights(cfg.leaning.weights.begin(), cfg.leaning.weights.end());
  if (weights.empty()) {
    for (const auto& g : cfg.manifest.groups())
      if (!cfg.leaning.quota.contains(g.id)) weights.emplace_back(g.id, 1.0);
    if (weights.empty())
      for (const auto& g : cfg.manifest.groups()) weights.emplace_back(g.id, 1.0);
  }
  double total = 0;
  for (const auto& [g, w] : weights) total += w;
  if (!(total > 0)) fail(Errc::ConfigInvalid, "leaning weights sum to zero");
  while (out.size() < cfg.voter_count) {
    double u = rng.uniform() * total;
    GroupId pick = weights.back().first;
    for (const auto& [g, w] : weights) {
      if (u < w) {
        pick = g;
        break;
      }
      u -= w;
    }
    out.push_back(pick);
  }
  rng.shuffle(out.begin(), out.end());
  return out;
}

/// Every random choice about a voter, drawn up front in a fixed order so
/// runs that differ only in attacker settings see the same electorate.
inline std::vector<VoterPlan> draw_plans(const ElectionConfig& cfg) {
  const auto& b = cfg.behavior;
  const auto& tl = cfg.timeline;
  const SimTime latest_open = tl.polls_close - b.cast_cutoff - b.compose_max - 1min;
  if (latest_open < tl.polls_open) fail(Errc::ConfigInvalid, "voting period too short for cast_cutoff and compose_max");
  auto leanings = assign_leanings(cfg);
  std::vector<VoterPlan> plans;
  plans.reserve(cfg.voter_count);
  for (std::size_t i = 0; i < cfg.voter_count; ++i) {
    Rng rng = Rng(cfg.seed).fork("voter", i);
    VoterPlan p;
    p.id = static_cast<VoterId>(i);
    p.profile.party_leaning = leanings[i];
    p.profile.follows_card = rng.bernoulli(b.card_rate);
    p.profile.p_verify_ivr = b.p_verify_ivr;
    p.profile.p_check_receipt_only = b.p_check_receipt_only;
    p.profile.p_false_complaint = b.p_false_complaint;
    p.intents.push_back(draw_ballot(p.profile, cfg.manifest, rng));

    const double ch = rng.uniform();
    p.channel = ch < b.p_phone ? Channel::Phone : ch < b.p_phone + b.p_polling_place ? Channel::PollingPlace : Channel::Web;
    const SimTime open = detail::uniform_time(rng, tl.polls_open, latest_open);
    p.profile.cast_time = open;
    p.page_open_times.push_back(open);
    const auto lead = detail::uniform_duration(rng, b.registration_lead_min, b.registration_lead_max);
    p.register_time = std::max(at(SimDuration::zero()), open - lead);
    p.compose_delay = detail::uniform_duration(rng, b.compose_min, b.compose_max);

    const double ck = rng.uniform();
    p.check = ck < b.p_verify_ivr ? CheckKind::Ivr : ck < b.p_verify_ivr + b.p_check_receipt_only ? CheckKind::ReceiptOnly
                                                                                                  : CheckKind::None;
    p.verify_delay = detail::uniform_duration(rng, b.verify_delay_min, b.verify_delay_max);
    p.receipt_check_time = detail::uniform_time(rng, tl.polls_close + 1h, tl.receipt_service_end - 1min);
    p.false_complaint = rng.bernoulli(b.p_false_complaint);
    p.complaint_time = detail::uniform_time(rng, tl.polls_open, tl.receipt_service_end - 1min);
    p.leaves_without_receipt = rng.bernoulli(b.p_leave_without_receipt);
    p.leave_delay = detail::uniform_duration(rng, b.leave_delay_min, b.leave_delay_max);
    p.dials_genuine_anyway = rng.bernoulli(b.p_dial_genuine_anyway);
    p.reveals_caller_id = rng.bernoulli(b.p_caller_id);
    p.patched_browser = rng.bernoulli(b.patch_rate);
    const bool chooses = rng.bernoulli(b.p_choose_pin);
    Pin pin(ivotesim::detail::random_digits(rng, Pin::kDigits));
    if (chooses) p.pin_choice = pin;
    p.suspicious = rng.bernoulli(b.suspicion);

    const bool revotes = rng.bernoulli(b.p_revote);
    VoterProfile second = p.profile;
    second.follows_card = rng.bernoulli(b.card_rate);
    Ballot again = draw_ballot(second, cfg.manifest, rng);
    const SimTime revote_at = open + b.compose_max + detail::uniform_duration(rng, b.revote_gap_min, b.revote_gap_max);
    if (revotes && revote_at <= latest_open) {
      p.intents.push_back(std::move(again));
      p.page_open_times.push_back(revote_at);
    }
    plans.push_back(std::move(p));
  }
  return plans;
}

// ---------------------------------------------------------------------------
// The world: services, voters and the network between them.

class World {
 public:
  explicit World(ElectionConfig cfg)
      : cfg_(std::move(cfg)),
        groups_((cfg_.validate(), crypto_groups(cfg_.crypto))),
        plans_(draw_plans(cfg_)),
        registration_(cfg_.timeline.polls_close, Rng(cfg_.seed).fork("registration")),
        cvs_(registration_, cfg_.timeline.polls_close, Rng(cfg_.seed).fork("cvs")),
        election_keys_(make_keys("election")),
        verification_keys_(make_keys("verification")),
        verification_(cfg_.manifest, groups_.envelope, verification_keys_.x, cfg_.timeline.verification_shutdown()) {
    sim_.set_default_delay(cfg_.network_delay);
    sim_.set_trace_enabled(cfg_.keep_trace);
    build_servers();
    build_voters();
  }

  World(const World&) = delete;
  World& operator=(const World&) = delete;

  Sim& sim() { return sim_; }
  const Sim& sim() const { return sim_; }
  const ElectionConfig& config() const { return cfg_; }
  const ElectionManifest& manifest() const { return cfg_.manifest; }
  const ElectionTimeline& timeline() const { return cfg_.timeline; }
  const std::vector<VoterPlan>& plans() const { return plans_; }
  const CryptoGroups& groups() const { return groups_; }

  RegistrationService& registration() { return registration_; }
  const RegistrationService& registration() const { return registration_; }
  CoreVotingSystem& cvs() { return cvs_; }
  const CoreVotingSystem& cvs() const { return cvs_; }
  const VerificationService& verification() const { return verification_; }
  const ComplaintLog& complaints() const { return complaints_; }
  const std::vector<VerifyLogEntry>& verify_log() const { return verify_log_; }

  ElGamalPublicKey election_public() const { return {groups_.envelope, election_keys_.y}; }
  ElGamalPublicKey verification_public() const { return {groups_.envelope, verification_keys_.y}; }
  /// Simulator-side access for ground truth; no in-world party uses this.
  const BigInt& election_secret() const { return election_keys_.x; }

  tls::TlsServer& tls_server(const std::string& name) { return *tls_servers_.at(name); }
  std::uint64_t* conn_counter() { return &next_conn_; }
  Rng fork_rng(std::string_view label, std::uint64_t index = 0) const { return Rng(cfg_.seed).fork(label, index); }

  /// Intents as the voters formed them, in order.
  const std::map<VoterId, std::vector<Ballot>>& intents() const { return intents_; }
  Tally intent_tally() const {
    std::vector<Ballot> last;
    for (const auto& [v, list] : intents_) last.push_back(list.back());
    return tally_first_preferences(last, cfg_.manifest);
  }
  std::optional<Ballot> last_intent(VoterId v) const {
    auto it = intents_.find(v);
    if (it == intents_.end()) return std::nullopt;
    return it->second.back();
  }

  /// Malicious analytics script delivered to a browser.
  std::function<void(VoterId)> on_malicious_script;

  /// Runs the election to the end of the receipt service and finalizes.
  void run() {
    if (ran_) fail(Errc::ConfigInvalid, "world already ran");
    ran_ = true;
    schedule_agents();
    sim_.run_until(cfg_.timeline.receipt_service_end + 24h, false);
    sim_.note("cvs", "records=" + std::to_string(cvs_.records().size()));
    sim_.note(names::kVerification, "records=" + std::to_string(verification_.records().size()));
    sim_.note(names::kAuthority, "complaints=" + std::to_string(complaints_.entries().size()));
    sim_.finalize();
  }

  DedupResult dedup_and_count() const {
    return election::dedup_and_count(cvs_, registration_, groups_.envelope, election_keys_.x, cfg_.manifest);
  }

  AuditReport audit_reconcile(AuditMode mode) const {
    return election::audit_reconcile(cvs_, verification_, groups_.envelope, election_keys_.x, cfg_.manifest, mode);
  }

  /// True iff a non-superseded record with this receipt exists.
  bool receipt_lookup(const ReceiptNumber& receipt) const {
    const auto& records = cvs_.records();
    if (included_cache_size_ != records.size() || included_cache_regs_ != registration_.size()) {
      included_.clear();
      for (auto i : effective_record_indices(records, registration_)) included_.insert(records[i].receipt.str());
      included_cache_size_ = records.size();
      included_cache_regs_ = registration_.size();
    }
    return included_.contains(receipt.str());
  }

  LinkageHoldings linkage_holdings() const {
    LinkageHoldings h;
    for (const auto& [voter, ids] : registration_.ids_by_voter())
      for (const auto& id : ids) h.registration.emplace_back(voter, id);
    for (const auto& r : verification_.records()) h.verification_ballots.emplace_back(r.ivote_id, r.ballot);
    h.verification_callers = verification_callers_;
    h.voice_ballots = voice_ballots_;
    h.voice_callers = voice_callers_;
    for (const auto& c : dedup_and_count().counted) h.auditor_ballots.emplace_back(c.ivote_id, c.ballot);
    h.polling_place = polling_place_;
    h.phone_tap = phone_tap_;
    return h;
  }

  LinkedPairs linkage_report(const std::set<Component>& compromised) const {
    return election::linkage_report(linkage_holdings(), compromised);
  }

  std::size_t tls_failures() const {
    std::size_t n = 0;
    for (const auto& [name, side] : server_sides_) n += side->failures();
    for (const auto& c : browser_tls_) n += c->failures();
    return n;
  }
  std::size_t malicious_scripts_loaded() const { return malicious_scripts_; }

  /// Browsers notify the world when a script arrives; attackers call this
  /// when their tap delivers one.
  void note_malicious_script(VoterId v) {
    ++malicious_scripts_;
    if (on_malicious_script) on_malicious_script(v);
  }

 private:
  struct VoterState {
    std::optional<Credentials> creds;
    std::size_t vote_index = 0;
    bool vote_scheduled = false;
    bool re_registered = false;
    bool left = false;
    std::optional<ReceiptNumber> final_receipt;
    std::optional<Ballot> verifying;
  };

  struct BrowserState {
    std::optional<Pin> pin_choice;
    std::optional<std::uint64_t> cvs_conn;
    std::string ivr_number = names::kVerificationIvr;
  };

  ElGamalKeyPair make_keys(std::string_view label) {
    Rng rng = Rng(cfg_.crypto.group_seed).fork("envelope-keys").fork(label, cfg_.seed);
    return gen_keypair(groups_.envelope, rng);
  }

  tls::ServerTlsConfig tls_config(const std::string& name, const std::set<tls::CipherSuite>& suites) const {
    tls::ServerTlsConfig c;
    c.name = name;
    c.enabled_suites = suites;
    c.temp_rsa_rotation = cfg_.tls.temp_rsa_rotation;
    c.connection_lifetime = cfg_.tls.connection_lifetime;
    c.export_rsa_bits = cfg_.tls.export_rsa_bits;
    c.cert_rsa_bits = cfg_.tls.cert_rsa_bits;
    c.dhe_params = groups_.dhe;
    c.dhe_export_params = groups_.dhe_export;
    return c;
  }

  void add_service(const std::string& name, net::ChannelKind serving, AppFn app, bool with_tls,
                   const std::set<tls::CipherSuite>& suites = {}) {
    TlsServerSide* side = nullptr;
    if (with_tls) {
      auto& server = tls_servers_[name];
      server = std::make_unique<tls::TlsServer>(tls_config(name, suites), fork_rng("tls", tls_servers_.size()).next());
      auto& s = server_sides_[name];
      s = std::make_unique<TlsServerSide>(sim_, name, *server, app);
      side = s.get();
    }
    sim_.add_endpoint(
        name,
        [this, name, side, app](const SimEvent& ev) {
          if (const auto* m = std::get_if<AppMessage>(&ev.payload)) {
            send_plain_replies(sim_, name, ev.src, app(ev.src, *m));
          } else if (side && !std::holds_alternative<net::HttpRedirect>(ev.payload)) {
            side->handle(ev);
          }
        },
        serving);
  }

  static std::vector<AppMessage> error_reply(const Error& e) { return {ServiceError{e.code(), e.what()}}; }

  void build_servers() {
    using net::ChannelKind;
    const auto& svc = cfg_.tls.service_suites;
    const bool gateway_plain = cfg_.timeline.gateway_plain_http;
    add_service(
        names::kGateway, gateway_plain ? ChannelKind::PlainHttp : ChannelKind::Https,
        [](const std::string&, const AppMessage& m) -> std::vector<AppMessage> {
          if (std::holds_alternative<GatewayRequest>(m)) return {net::HttpRedirect{names::kRegistration, true}};
          return {};
        },
        true, svc);
    add_service(
        names::kRegistration, ChannelKind::Https,
        [this](const std::string&, const AppMessage& m) -> std::vector<AppMessage> {
          const auto* req = std::get_if<RegisterRequest>(&m);
          if (!req) return {};
          try {
            auto c = registration_.register_voter(req->voter, req->pin_choice, sim_.now());
            return {RegisterResponse{c.ivote_id, c.pin}};
          } catch (const Error& e) {
            return error_reply(e);
          }
        },
        true, svc);
    add_service(
        names::kCvs, ChannelKind::Https,
        [this](const std::string&, const AppMessage& m) -> std::vector<AppMessage> {
          if (std::holds_alternative<FetchApp>(m)) return {AppPage{names::kVerificationIvr}};
          const auto* submit = std::get_if<CastSubmit>(&m);
          if (!submit) return {};
          try {
            auto res = cvs_.cast(*submit, sim_.now());
            sim_.send(names::kCvs, names::kVerification, Message{AppMessage{res.forward}});
            return {CastAccepted{res.receipt}};
          } catch (const Error& e) {
            return error_reply(e);
          }
        },
        true, svc);
    add_service(
        names::kVerification, ChannelKind::Https,
        [this](const std::string&, const AppMessage& m) -> std::vector<AppMessage> {
          if (const auto* f = std::get_if<VerificationForward>(&m)) verification_.ingest(*f);
          return {};
        },
        false);
    add_service(
        names::kVerificationIvr, ChannelKind::PhoneIvr,
        [this](const std::string& peer, const AppMessage& m) -> std::vector<AppMessage> {
          const auto* call = std::get_if<VerifyCall>(&m);
          if (!call) return {};
          VerifyLogEntry log{names::voter_of(peer).value_or(0), sim_.now(), names::kVerificationIvr, std::nullopt,
                             call->caller_id.has_value()};
          try {
            Ballot b = verification_.verify(call->ivote_id, call->pin, call->receipt, sim_.now());
            verify_log_.push_back(log);
            if (call->caller_id) {
              verification_callers_.emplace_back(*call->caller_id, call->ivote_id);
              phone_tap_.emplace_back(*call->caller_id, b);
            }
            return {VerifyReadBack{std::move(b)}};
          } catch (const Error& e) {
            log.error = e.code();
            verify_log_.push_back(log);
            return error_reply(e);
          }
        },
        false);
    add_service(
        names::kVotingIvr, ChannelKind::PhoneIvr,
        [this, rng = fork_rng("voting-ivr")](const std::string&, const AppMessage& m) mutable -> std::vector<AppMessage> {
          const auto* call = std::get_if<PhoneCast>(&m);
          if (!call) return {};
          try {
            CastSubmit submit{call->ivote_id, call->pin, Channel::Phone,
                              seal(encode_ballot(call->ballot, cfg_.manifest), election_public(), verification_public(), rng)};
            sign_envelope(submit.envelope, client_signing_key(call->ivote_id, call->pin));
            auto res = cvs_.cast(submit, sim_.now());
            sim_.send(names::kCvs, names::kVerification, Message{AppMessage{res.forward}});
            voice_ballots_.emplace_back(call->ivote_id, call->ballot);
            if (call->caller_id) {
              voice_callers_.emplace_back(*call->caller_id, call->ivote_id);
              phone_tap_.emplace_back(*call->caller_id, call->ballot);
            }
            return {ReceiptShown{res.receipt, names::kVerificationIvr}};
          } catch (const Error& e) {
            return {CastFailed{e.code()}};
          }
        },
        false);
    add_service(
        names::kReceiptService, ChannelKind::Https,
        [this](const std::string&, const AppMessage& m) -> std::vector<AppMessage> {
          const auto* q = std::get_if<ReceiptQuery>(&m);
          if (!q) return {};
          if (sim_.now() >= cfg_.timeline.receipt_service_end) return {ServiceError{Errc::ServiceClosed, "receipt service closed"}};
          return {ReceiptStatus{q->receipt, receipt_lookup(q->receipt)}};
        },
        true, svc);
    add_service(
        names::kPiwik, ChannelKind::Https,
        [](const std::string&, const AppMessage& m) -> std::vector<AppMessage> {
          if (std::holds_alternative<FetchScript>(m)) return {ScriptBody{false}};
          return {};
        },
        true, cfg_.tls.piwik_suites);
    add_service(
        names::kAuthority, ChannelKind::Https,
        [this](const std::string&, const AppMessage& m) -> std::vector<AppMessage> {
          if (const auto* c = std::get_if<Complaint>(&m)) complaints_.append({c->voter, sim_.now(), c->kind});
          return {};
        },
        false);
    sim_.add_endpoint(names::kTimeline, [this](const SimEvent& ev) {
      const auto* app = std::get_if<AppMessage>(&ev.payload);
      const auto* mark = app ? std::get_if<TimelineMark>(app) : nullptr;
      if (!mark) return;
      if (mark->what == "gateway-fixed") sim_.set_serving_policy(names::kGateway, net::ChannelKind::Https);
      if (mark->what == "piwik-disabled") piwik_active_ = false;
    });
    piwik_active_ = cfg_.piwik_enabled;
  }

  void build_voters() {
    states_.resize(plans_.size());
    browsers_.resize(plans_.size());
    browser_tls_.reserve(plans_.size());
    for (const auto& p : plans_) {
      const VoterId v = p.id;
      const auto human = names::voter(v);
      const auto browser = names::browser(v);
      browsers_[v].pin_choice = p.pin_choice;
      browser_tls_.push_back(std::make_unique<TlsClientSide>(sim_, browser, &next_conn_, fork_rng("browser-tls", v)));
      browser_tls_.back()->set_callbacks(
          [this, v](std::uint64_t, const std::string& peer, const AppMessage& m) { browser_app(v, peer, m); },
          [this, v](std::uint64_t, const std::string& peer, Errc code) {
            if (peer == names::kCvs || peer == names::kRegistration || peer == names::kGateway)
              sim_.send(names::browser(v), names::voter(v), Message{AppMessage{CastFailed{code}}});
          });
      sim_.add_endpoint(human, [this, v](const SimEvent& ev) { on_human(v, ev); });
      sim_.add_endpoint(browser, [this, v](const SimEvent& ev) { on_browser(v, ev); });
    }
  }

  void schedule_agents() {
    const auto& tl = cfg_.timeline;
    if (tl.gateway_plain_http && tl.gateway_fixed_at)
      sim_.schedule(*tl.gateway_fixed_at, names::kTimeline, names::kTimeline, Message{AppMessage{TimelineMark{"gateway-fixed"}}});
    if (tl.piwik_disabled_at)
      sim_.schedule(*tl.piwik_disabled_at, names::kTimeline, names::kTimeline, Message{AppMessage{TimelineMark{"piwik-disabled"}}});
    for (const auto& p : plans_) {
      sim_.schedule(p.register_time, names::voter(p.id), names::browser(p.id),
                    Message{AppMessage{StartRegistration{p.pin_choice}}});
      if (p.false_complaint)
        sim_.schedule(p.complaint_time, names::voter(p.id), names::kAuthority,
                      Message{AppMessage{Complaint{p.id, ComplaintKind::FalseComplaint}}});
    }
  }

  // -- voter (the human) ---------------------------------------------------

  void complain(VoterId v, ComplaintKind kind) {
    sim_.send(names::voter(v), names::kAuthority, Message{AppMessage{Complaint{v, kind}}});
  }

  void schedule_vote(VoterId v) {
    auto& st = states_[v];
    const auto& p = plans_[v];
    const SimTime when = std::max(sim_.now(), p.page_open_times[st.vote_index]);
    if (p.channel == Channel::Phone) {
      const Ballot& intent = p.intents[st.vote_index];
      intents_[v].push_back(intent);
      std::optional<VoterId> caller;
      if (p.reveals_caller_id) caller = v;
      sim_.schedule(when, names::voter(v), names::kVotingIvr,
                    Message{AppMessage{PhoneCast{st.creds->ivote_id, st.creds->pin, intent, caller}}});
    } else {
      sim_.schedule(when, names::voter(v), names::browser(v), Message{AppMessage{OpenVotingPage{}}});
    }
  }

  void on_human(VoterId v, const SimEvent& ev) {
    const auto* app = std::get_if<AppMessage>(&ev.payload);
    if (!app) return;
    auto& st = states_[v];
    const auto& p = plans_[v];
    const auto human = names::voter(v);
    const auto browser = names::browser(v);

    if (const auto* c = std::get_if<CredentialsShown>(app)) {
      st.creds = Credentials{c->ivote_id, c->pin, std::nullopt};
      if (p.pin_choice && c->pin != *p.pin_choice && p.suspicious && !st.re_registered) {
        st.re_registered = true;
        sim_.send(human, browser, Message{AppMessage{StartRegistration{p.pin_choice}}});
        return;
      }
      if (!st.vote_scheduled) {
        st.vote_scheduled = true;
        schedule_vote(v);
      }
    } else if (std::holds_alternative<PageReady>(*app)) {
      if (!st.creds || st.vote_index >= p.intents.size()) return;
      const Ballot& intent = p.intents[st.vote_index];
      intents_[v].push_back(intent);
      st.left = false;
      sim_.send(human, browser, Message{AppMessage{CastIntent{intent, st.creds->ivote_id, st.creds->pin}}}, p.compose_delay);
    } else if (std::holds_alternative<ProgressShown>(*app)) {
      if (p.leaves_without_receipt && !st.left) {
        st.left = true;
        sim_.send(human, browser, Message{AppMessage{PageClosed{}}}, p.leave_delay);
      }
    } else if (const auto* r = std::get_if<ReceiptShown>(app)) {
      if (st.left) return;
      ++st.vote_index;
      if (st.vote_index < p.intents.size()) {
        schedule_vote(v);
        return;
      }
      st.final_receipt = r->receipt;
      st.verifying = intents_[v].back();
      if (p.check == CheckKind::Ivr) {
        const std::string number = p.dials_genuine_anyway ? names::kVerificationIvr : r->ivr_number;
        std::optional<VoterId> caller;
        if (p.reveals_caller_id) caller = v;
        sim_.send(human, number, Message{AppMessage{VerifyCall{st.creds->ivote_id, st.creds->pin, r->receipt, caller}}},
                  p.verify_delay);
      } else if (p.check == CheckKind::ReceiptOnly) {
        sim_.schedule(std::max(sim_.now(), p.receipt_check_time), human, browser,
                      Message{AppMessage{CheckReceipt{r->receipt}}});
      }
    } else if (const auto* rb = std::get_if<VerifyReadBack>(app)) {
      if (st.verifying && rb->ballot != *st.verifying) complain(v, ComplaintKind::MismatchRead);
    } else if (const auto* err = std::get_if<ServiceError>(app)) {
      if (err->code == Errc::NoSuchRecord) complain(v, ComplaintKind::MissingVote);
    } else if (const auto* rs = std::get_if<ReceiptStatusShown>(app)) {
      if (!rs->included) complain(v, ComplaintKind::ReceiptAbsent);
    }
  }

  // -- browser -------------------------------------------------------------

  void request(VoterId v, const std::string& server, AppMessage msg, bool use_tls) {
    if (!use_tls) {
      sim_.send(names::browser(v), server, Message{std::move(msg)});
      return;
    }
    tls::ClientTlsConfig cfg;
    cfg.patched = plans_[v].patched_browser;
    auto& client = *browser_tls_[v];
    auto conn = client.open(server, cfg, tls_server(server).certificate());
    if (server == names::kCvs) browsers_[v].cvs_conn = conn;
    client.send(conn, std::move(msg));
  }

  bool uses_tls(VoterId v, const std::string& server) const {
    return tls_servers_.contains(server) && sim_.policy(names::browser(v), server) == net::ChannelKind::Https;
  }

  void on_browser(VoterId v, const SimEvent& ev) {
    auto& client = *browser_tls_[v];
    if (client.owns(ev.payload)) {
      client.handle(ev);
      return;
    }
    if (const auto* redirect = std::get_if<net::HttpRedirect>(&ev.payload)) {
      browser_app(v, ev.src, AppMessage{*redirect});
      return;
    }
    if (const auto* app = std::get_if<AppMessage>(&ev.payload)) browser_app(v, ev.src, *app);
  }

  void browser_app(VoterId v, const std::string& peer, const AppMessage& m) {
    auto& bs = browsers_[v];
    const auto& p = plans_[v];
    const auto human = names::voter(v);
    const auto self = names::browser(v);
    auto to_human = [&](AppMessage out) { sim_.send(self, human, Message{std::move(out)}); };

    if (const auto* start = std::get_if<StartRegistration>(&m)) {
      bs.pin_choice = start->pin_choice;
      // A second registration goes straight to the registration server.
      if (states_[v].re_registered)
        request(v, names::kRegistration, RegisterRequest{v, bs.pin_choice}, true);
      else
        request(v, names::kGateway, GatewayRequest{}, uses_tls(v, names::kGateway));
    } else if (const auto* redirect = std::get_if<net::HttpRedirect>(&m)) {
      const bool secure = redirect->https && tls_servers_.contains(redirect->target);
      request(v, redirect->target, RegisterRequest{v, bs.pin_choice}, secure);
    } else if (const auto* resp = std::get_if<RegisterResponse>(&m)) {
      to_human(CredentialsShown{resp->ivote_id, resp->pin});
    } else if (std::holds_alternative<OpenVotingPage>(m)) {
      request(v, names::kCvs, FetchApp{}, true);
      if (piwik_active_) request(v, names::kPiwik, FetchScript{}, true);
    } else if (const auto* page = std::get_if<AppPage>(&m)) {
      bs.ivr_number = page->ivr_number;
      to_human(PageReady{page->ivr_number});
    } else if (const auto* script = std::get_if<ScriptBody>(&m)) {
      if (script->malicious) note_malicious_script(v);
    } else if (const auto* intent = std::get_if<CastIntent>(&m)) {
      CastSubmit submit{intent->ivote_id, intent->pin, p.channel == Channel::PollingPlace ? Channel::PollingPlace : Channel::Web,
                        seal(encode_ballot(intent->ballot, cfg_.manifest), election_public(), verification_public(),
                             browser_rng(v))};
      sign_envelope(submit.envelope, client_signing_key(intent->ivote_id, intent->pin));
      if (submit.channel == Channel::PollingPlace) polling_place_.emplace_back(v, intent->ballot);
      if (bs.cvs_conn)
        browser_tls_[v]->send(*bs.cvs_conn, std::move(submit));
      else
        request(v, names::kCvs, std::move(submit), true);
    } else if (const auto* acc = std::get_if<CastAccepted>(&m)) {
      to_human(ReceiptShown{acc->receipt, bs.ivr_number});
    } else if (const auto* err = std::get_if<ServiceError>(&m)) {
      if (peer == names::kCvs) to_human(CastFailed{err->code});
    } else if (const auto* check = std::get_if<CheckReceipt>(&m)) {
      request(v, names::kReceiptService, ReceiptQuery{check->receipt}, true);
    } else if (const auto* status = std::get_if<ReceiptStatus>(&m)) {
      to_human(ReceiptStatusShown{status->receipt, status->included});
    }
  }

  Rng& browser_rng(VoterId v) {
    auto it = browser_rngs_.find(v);
    if (it == browser_rngs_.end()) it = browser_rngs_.emplace(v, fork_rng("browser", v)).first;
    return it->second;
  }

  ElectionConfig cfg_;
  const CryptoGroups& groups_;
  std::vector<VoterPlan> plans_;
  Sim sim_;
  RegistrationService registration_;
  CoreVotingSystem cvs_;
  ElGamalKeyPair election_keys_;
  ElGamalKeyPair verification_keys_;
  VerificationService verification_;
  ComplaintLog complaints_;
  std::vector<VerifyLogEntry> verify_log_;

  std::map<std::string, std::unique_ptr<tls::TlsServer>> tls_servers_;
  std::map<std::string, std::unique_ptr<TlsServerSide>> server_sides_;
  std::vector<std::unique_ptr<TlsClientSide>> browser_tls_;
  std::vector<VoterState> states_;
  std::vector<BrowserState> browsers_;
  std::map<VoterId, Rng> browser_rngs_;
  std::uint64_t next_conn_ = 0;
  bool piwik_active_ = true;
  bool ran_ = false;
  std::size_t malicious_scripts_ = 0;

  std::map<VoterId, std::vector<Ballot>> intents_;
  std::vector<std::pair<VoterId, IVoteId>> verification_callers_;
  std::vector<std::pair<IVoteId, Ballot>> voice_ballots_;
  std::vector<std::pair<VoterId, IVoteId>> voice_callers_;
  std::vector<std::pair<VoterId, Ballot>> polling_place_;
  std::vector<std::pair<VoterId, Ballot>> phone_tap_;

  mutable std::set<std::string> included_;
  mutable std::size_t included_cache_size_ = static_cast<std::size_t>(-1);
  mutable std::size_t included_cache_regs_ = 0;
};

}  // namespace ivotesim::election
