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

#include <map>
#include <memory>
#include <set>

#include "ivotesim/cryptanalysis.hpp"
#include "ivotesim/election.hpp"
#include "ivotesim/mitm.hpp"

namespace ivotesim::attacks {

using election::AppMessage;
using election::Message;
using election::SimEvent;
using election::VoterId;
using election::World;
using namespace std::chrono_literals;

namespace names {
inline const std::string kC2 = "attacker-c2";
inline const std::string kRegistration = "attacker-registration";
inline const std::string kIvr = "attacker-ivr";
}  // namespace names

namespace strategy {
inline const std::string kRewrite = "rewrite";
inline const std::string kLastMinute = "last-minute";
inline const std::string kReceiptDelay = "receipt-delay";
inline const std::string kClash = "clash";
inline const std::string kServerCvs = "server-cvs";
}  // namespace strategy

/// How the attacker comes to control a voter's client.
enum class CompromiseVector { None, Freak, Logjam, Granted };

/// What the in-page code does with a compromised session.
enum class ScriptStrategy { None, Rewrite, LastMinute, ReceiptDelay };

enum class ClashPrediction { Card, Perfect };

struct ClashConfig {
  bool enabled = false;
  ClashPrediction prediction = ClashPrediction::Card;
  /// How many victims may be handed one pool entry.
  std::size_t max_reuse = 1;
};

struct AttackConfig {
  CompromiseVector vector = CompromiseVector::None;
  /// Share of voters whose traffic the attacker sits on.
  double interception_rate = 0.0;
  /// Granted vector: share of voters whose client is compromised outright.
  double granted_rate = 0.0;
  SimTime attack_start{};
  std::optional<GroupId> target;
  std::optional<Ballot> attacker_ballot;  // defaults to the target group's card

  ScriptStrategy strategy = ScriptStrategy::None;
  SimDuration safety_window = 1h;
  SimDuration gambit_delay = 10s;
  bool fake_ivr = false;
  ClashConfig clash;
  bool server_cvs = false;
  double server_cvs_rate = 1.0;

  SimDuration factoring_delay = 7h;
  SimDuration oracle_restagger = 12h;
  crypto::FactoringBudget factoring_budget;
  SimDuration dlog_delay = 90s;
  std::optional<std::uint64_t> dlog_baby_steps;

  bool any() const {
    return vector != CompromiseVector::None || strategy != ScriptStrategy::None || fake_ivr || clash.enabled ||
           server_cvs;
  }

  void validate() const {
    auto prob = [](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0)) fail(Errc::ConfigInvalid, std::string(name) + " must be in [0,1]");
    };
    prob(interception_rate, "interception_rate");
    prob(granted_rate, "granted_rate");
    prob(server_cvs_rate, "server_cvs_rate");
    if (safety_window < SimDuration::zero()) fail(Errc::ConfigInvalid, "safety_window must be >= 0");
    if (gambit_delay <= SimDuration::zero()) fail(Errc::ConfigInvalid, "gambit_delay must be > 0");
    if (clash.max_reuse == 0) fail(Errc::ConfigInvalid, "clash max_reuse must be positive");
    if (oracle_restagger <= SimDuration::zero()) fail(Errc::ConfigInvalid, "oracle_restagger must be > 0");
    if ((strategy != ScriptStrategy::None || clash.enabled || server_cvs) && !target && !attacker_ballot)
      fail(Errc::ConfigInvalid, "attack needs a target group or an attacker ballot");
  }
};

struct LedgerEntry {
  VoterId voter = 0;
  std::optional<IVoteId> ivote_id;
  Ballot intended;
  Ballot submitted;
  std::string strategy;
  SimTime time{};
  bool masked = false;  // voter later shown the attacker's verification number
};

struct C2Entry {
  VoterId voter = 0;
  IVoteId ivote_id;
  Pin pin;
  Ballot intended;
  SimTime time{};
};

struct PoolEntry {
  VoterId owner = 0;
  IVoteId ivote_id;
  Pin pin;
  ReceiptNumber receipt;
  Ballot ballot;
  std::size_t uses = 0;
};

struct AttackerState {
  std::vector<C2Entry> c2_log;
  std::map<Bytes, std::vector<PoolEntry>> clash_pool;
  std::vector<VoterId> stolen_registrations;
  std::vector<LedgerEntry> ledger;

  std::set<VoterId> intercepted;
  std::set<VoterId> compromised;
  std::vector<election::VerifyLogEntry> fake_ivr_log;
  std::size_t hijack_attempts = 0;
  std::size_t hijacked_sessions = 0;
  std::size_t hijack_errors = 0;
  std::size_t oracle_connections = 0;
  std::size_t oracle_failures = 0;
  std::size_t attacker_casts = 0;
  std::size_t clash_victims = 0;
  std::size_t strip_blocked = 0;
};

struct DetectionMetrics {
  std::size_t manipulated = 0;
  std::size_t complaints_true = 0;
  std::size_t complaints_false = 0;
  std::size_t complaints_other = 0;  // not explained by the ledger
  std::size_t verify_attempts = 0;
  std::size_t masked = 0;
  std::optional<double> detection_ratio;
};

/// Counts against the ledger. With `strategy` set, only that strategy's
/// entries (and their voters) are considered.
inline DetectionMetrics compute_metrics(const std::vector<LedgerEntry>& ledger,
                                        const std::vector<election::ComplaintEntry>& complaints,
                                        const std::vector<election::VerifyLogEntry>& verify_log,
                                        const std::optional<std::string>& strategy = std::nullopt) {
  DetectionMetrics m;
  std::set<VoterId> voters;
  for (const auto& e : ledger) {
    if (strategy && e.strategy != *strategy) continue;
    ++m.manipulated;
    if (e.masked) ++m.masked;
    voters.insert(e.voter);
  }
  for (const auto& c : complaints) {
    const bool mine = voters.contains(c.voter);
    if (c.kind == election::ComplaintKind::FalseComplaint) {
      if (!strategy || mine) ++m.complaints_false;
    } else if (mine) {
      ++m.complaints_true;
    } else if (!strategy) {
      ++m.complaints_other;
    }
  }
  for (const auto& v : verify_log)
    if (voters.contains(v.voter)) ++m.verify_attempts;
  if (m.manipulated > 0) m.detection_ratio = static_cast<double>(m.complaints_true) / static_cast<double>(m.manipulated);
  return m;
}

/// One baby-step table per export group, shared across runs in a process.
inline const crypto::DlogTable& cached_dlog_table(const ElGamalParams& params, std::optional<std::uint64_t> m) {
  static std::map<std::pair<std::string, std::uint64_t>, std::unique_ptr<crypto::DlogTable>> cache;
  auto key = std::make_pair(to_hex(to_bytes(params.p)) + ":" + to_hex(to_bytes(params.g)), m.value_or(0));
  auto& slot = cache[key];
  if (!slot) slot = std::make_unique<crypto::DlogTable>(crypto::dlog_precompute(params, m));
  return *slot;
}

// ---------------------------------------------------------------------------

class Attacker {
 public:
  /// Installs taps, endpoints and hooks on `world`; must precede world.run().
  Attacker(World& world, AttackConfig cfg)
      : world_(&world), cfg_(std::move(cfg)), rng_(world.fork_rng("attacker")) {
    cfg_.validate();
    if (cfg_.attacker_ballot) {
      validate_ballot(*cfg_.attacker_ballot, world.manifest());
      attacker_ballot_ = *cfg_.attacker_ballot;
    } else if (cfg_.target) {
      attacker_ballot_ = world.manifest().card(*cfg_.target);
    }
    for (const auto& p : world.plans()) {
      if (world.fork_rng("intercept", p.id).bernoulli(cfg_.interception_rate)) state_.intercepted.insert(p.id);
      if (cfg_.vector == CompromiseVector::Granted && world.fork_rng("granted", p.id).bernoulli(cfg_.granted_rate))
        state_.compromised.insert(p.id);
    }
    install_endpoints();
    if (cfg_.clash.enabled) install_clash();
    if (cfg_.vector == CompromiseVector::Freak || cfg_.vector == CompromiseVector::Logjam) install_piwik_tap();
    if (cfg_.strategy != ScriptStrategy::None || cfg_.fake_ivr) install_script_tap();
    if (cfg_.server_cvs) install_server_cvs();
    world.on_malicious_script = [this](VoterId v) { state_.compromised.insert(v); };
  }

  Attacker(const Attacker&) = delete;
  Attacker& operator=(const Attacker&) = delete;

  const AttackerState& state() const { return state_; }
  const AttackConfig& config() const { return cfg_; }
  const std::optional<Ballot>& attacker_ballot() const { return attacker_ballot_; }

  /// Per strategy plus "all".
  std::map<std::string, DetectionMetrics> metrics() const {
    std::map<std::string, DetectionMetrics> out;
    out["all"] = compute_metrics(state_.ledger, world_->complaints().entries(), world_->verify_log());
    for (const auto& s : {strategy::kRewrite, strategy::kLastMinute, strategy::kReceiptDelay, strategy::kClash,
                          strategy::kServerCvs})
      out[s] = compute_metrics(state_.ledger, world_->complaints().entries(), world_->verify_log(), s);
    return out;
  }

  /// Entry point of the look-alike registration page. Only reachable while
  /// the gateway still redirects over plain HTTP.
  void clash_register(VoterId v, std::optional<Pin> pin_choice) {
    if (world_->sim().policy(election::names::kGateway, election::names::browser(v)) != net::ChannelKind::PlainHttp)
      fail(Errc::GatewayNotStripped, "registration gateway is served over HTTPS");
    (void)pin_choice;  // the attacker assigns its own PIN
    state_.stolen_registrations.push_back(v);
    state_.compromised.insert(v);
    Pin assigned(ivotesim::detail::random_digits(rng_, Pin::kDigits));
    const Bytes key = election::raw_ballot_bytes(predict(v));
    auto& bucket = state_.clash_pool[key];
    auto it = std::find_if(bucket.begin(), bucket.end(), [&](const PoolEntry& e) { return e.uses < cfg_.clash.max_reuse; });
    if (it != bucket.end()) {
      ++it->uses;
      ++state_.clash_victims;
      victims_[v] = *it;
      send_plain(names::kRegistration, election::names::browser(v), election::RegisterResponse{it->ivote_id, it->pin});
      attacker_request(election::names::kRegistration, election::RegisterRequest{v, assigned}, Purpose{Purpose::Entitlement, v});
    } else {
      attacker_request(election::names::kRegistration, election::RegisterRequest{v, assigned}, Purpose{Purpose::Relay, v});
    }
  }

  /// Submits an envelope for the attacker ballot with the given credentials.
  election::CastSubmit attacker_submission(const IVoteId& id, const Pin& pin) {
    election::CastSubmit s{id, pin, election::Channel::Web,
                           seal(encode_ballot(*attacker_ballot_, world_->manifest()), world_->election_public(),
                                world_->verification_public(), rng_)};
    sign_envelope(s.envelope, election::client_signing_key(id, pin));
    return s;
  }

 private:
  struct Purpose {
    enum Kind { Relay, Entitlement, Cast } kind;
    VoterId voter;
  };

  struct Oracle {
    SimTime opened{};
    SimTime ready{};
    std::unique_ptr<tls::Connection> conn;
    std::optional<tls::RsaPrivateKey> key;
  };

  enum class Mode { Passthrough, Freak, Logjam, Broken };

  struct PiwikConn {
    Mode mode = Mode::Passthrough;
    VoterId voter = 0;
    std::unique_ptr<tls::Interposer> interposer;
    SimTime client_hold_until{};
    std::uint64_t to_client_seq = 0;
    bool counted = false;
  };

  // -- plumbing ------------------------------------------------------------

  void send_plain(const std::string& from, const std::string& to, AppMessage m) {
    world_->sim().send(from, to, Message{std::move(m)});
  }

  bool compromised(VoterId v) const { return state_.compromised.contains(v); }

  Ballot predict(VoterId v) const {
    const auto& plan = world_->plans().at(v);
    if (cfg_.clash.prediction == ClashPrediction::Perfect) return plan.intents.front();
    return world_->manifest().card(plan.profile.party_leaning);
  }

  void attacker_request(const std::string& server, AppMessage m, Purpose purpose) {
    auto conn = attacker_tls_->open(server, tls::ClientTlsConfig{}, world_->tls_server(server).certificate());
    purposes_.emplace(conn, purpose);
    attacker_tls_->send(conn, std::move(m));
  }

  void on_attacker_reply(std::uint64_t conn, const AppMessage& m) {
    auto it = purposes_.find(conn);
    if (it == purposes_.end()) return;
    const Purpose p = it->second;
    if (const auto* resp = std::get_if<election::RegisterResponse>(&m)) {
      if (p.kind == Purpose::Relay) {
        send_plain(names::kRegistration, election::names::browser(p.voter), *resp);
      } else if (p.kind == Purpose::Entitlement) {
        entitlement_ids_[p.voter] = resp->ivote_id;
        attacker_request(election::names::kCvs, attacker_submission(resp->ivote_id, resp->pin),
                         Purpose{Purpose::Cast, p.voter});
      }
    } else if (std::holds_alternative<election::CastAccepted>(m)) {
      ++state_.attacker_casts;
    }
  }

  void install_endpoints() {
    auto& sim = world_->sim();
    sim.add_endpoint(names::kC2, [this](const SimEvent& ev) {
      const auto* app = std::get_if<AppMessage>(&ev.payload);
      if (!app) return;
      if (const auto* x = std::get_if<election::Exfiltrate>(app))
        state_.c2_log.push_back({x->voter, x->ivote_id, x->pin, x->intended, world_->sim().now()});
    });
    // Fake verification line, fed from the C2 log.
    sim.add_endpoint(
        names::kIvr,
        [this](const SimEvent& ev) {
          const auto* app = std::get_if<AppMessage>(&ev.payload);
          const auto* call = app ? std::get_if<election::VerifyCall>(app) : nullptr;
          if (!call) return;
          auto& s = world_->sim();
          election::VerifyLogEntry log{election::names::voter_of(ev.src).value_or(0), s.now(), names::kIvr, std::nullopt,
                                       call->caller_id.has_value()};
          std::optional<AppMessage> reply;
          if (s.now() >= world_->timeline().verification_shutdown()) {
            log.error = Errc::ServiceClosed;
            reply = election::ServiceError{Errc::ServiceClosed, "closed"};
          } else {
            for (auto it = state_.c2_log.rbegin(); it != state_.c2_log.rend(); ++it) {
              if (it->ivote_id == call->ivote_id && it->pin == call->pin) {
                reply = election::VerifyReadBack{it->intended};
                break;
              }
            }
            if (!reply) {
              log.error = Errc::NoSuchRecord;
              reply = election::ServiceError{Errc::NoSuchRecord, "no such record"};
            }
          }
          state_.fake_ivr_log.push_back(log);
          s.send(names::kIvr, ev.src, Message{*reply});
        },
        net::ChannelKind::PhoneIvr);
    sim.add_endpoint(names::kRegistration, [this](const SimEvent& ev) {
      if (attacker_tls_->owns(ev.payload)) {
        attacker_tls_->handle(ev);
        return;
      }
      const auto* app = std::get_if<AppMessage>(&ev.payload);
      const auto* req = app ? std::get_if<election::RegisterRequest>(app) : nullptr;
      if (!req) return;
      try {
        clash_register(req->voter, req->pin_choice);
      } catch (const Error& e) {
        world_->sim().note(names::kRegistration, errc_name(e.code()));
      }
    });
    attacker_tls_ = std::make_unique<election::TlsClientSide>(sim, names::kRegistration, world_->conn_counter(),
                                                              world_->fork_rng("attacker-tls"));
    attacker_tls_->set_callbacks([this](std::uint64_t conn, const std::string&, const AppMessage& m) { on_attacker_reply(conn, m); },
                                 {});
  }

  // -- clash ---------------------------------------------------------------

  void install_clash() {
    auto& sim = world_->sim();
    sim.install_tap({"sslstrip",
                     [](std::string_view src, std::string_view dst) {
                       return src == election::names::kGateway && election::names::is_browser(dst);
                     },
                     [this](const SimEvent& ev, const election::Sim& s) {
                       auto v = election::names::voter_of(ev.dst);
                       if (!v || !state_.intercepted.contains(*v)) return net::Decision<Message>::forward();
                       if (s.policy(ev.src, ev.dst) != net::ChannelKind::PlainHttp) {
                         ++state_.strip_blocked;
                         return net::Decision<Message>::forward();
                       }
                       return net::sslstrip(ev, s, names::kRegistration);
                     },
                     false});
    sim.install_tap({"clash", same_voter_page,
                     [this](const SimEvent& ev, const election::Sim& s) { return clash_decision(ev, s); }, false});
  }

  net::Decision<Message> clash_decision(const SimEvent& ev, const election::Sim& s) {
    const auto* app = std::get_if<AppMessage>(&ev.payload);
    auto v = election::names::voter_of(ev.src);
    if (!app || !v) return net::Decision<Message>::forward();
    if (const auto* ci = std::get_if<election::CastIntent>(app)) {
      auto vit = victims_.find(*v);
      if (vit != victims_.end() && vit->second.ivote_id == ci->ivote_id) {
        LedgerEntry e{*v, std::nullopt, ci->ballot, *attacker_ballot_, strategy::kClash, s.now(), false};
        auto eid = entitlement_ids_.find(*v);
        if (eid != entitlement_ids_.end()) e.ivote_id = eid->second;
        state_.ledger.push_back(std::move(e));
        // Swallow the vote and show the pool entry's receipt.
        auto d = net::Decision<Message>::drop();
        d.and_inject({ev.dst, ev.src,
                      Message{AppMessage{election::ReceiptShown{vit->second.receipt, election::names::kVerificationIvr}}},
                      2 * s.delay(ev.dst, election::names::kCvs)});
        return d;
      }
      if (compromised(*v) && !victims_.contains(*v)) candidate_intents_[*v] = {ci->ivote_id, ci->pin, ci->ballot};
    } else if (const auto* rs = std::get_if<election::ReceiptShown>(app)) {
      auto it = candidate_intents_.find(*v);
      if (it != candidate_intents_.end()) {
        const auto& [id, pin, ballot] = it->second;
        state_.clash_pool[election::raw_ballot_bytes(ballot)].push_back({*v, id, pin, rs->receipt, ballot, 0});
        candidate_intents_.erase(it);
      }
    }
    return net::Decision<Message>::forward();
  }

  // -- piwik interception --------------------------------------------------

  static bool same_voter_page(std::string_view src, std::string_view dst) {
    auto a = election::names::voter_of(src), b = election::names::voter_of(dst);
    return a && b && *a == *b;
  }

  void install_piwik_tap() {
    world_->sim().install_tap(
        {"piwik-mitm",
         [](std::string_view src, std::string_view dst) {
           return (election::names::is_browser(src) && dst == election::names::kPiwik) ||
                  (src == election::names::kPiwik && election::names::is_browser(dst));
         },
         [this](const SimEvent& ev, const election::Sim& s) { return piwik_decision(ev, s); }, false});
  }

  Oracle* usable_oracle(SimTime now) {
    if (now < cfg_.attack_start) return nullptr;
    const auto lifetime = world_->config().tls.connection_lifetime;
    // Open every oracle connection scheduled up to now.
    for (;;) {
      const SimTime next = cfg_.attack_start + cfg_.oracle_restagger * static_cast<std::int64_t>(oracles_.size());
      if (next > now) break;
      Oracle o;
      o.opened = next;
      o.ready = next + cfg_.factoring_delay;
      try {
        o.conn = std::make_unique<tls::Connection>(world_->tls_server(election::names::kPiwik), tls::ClientTlsConfig{},
                                                   next, world_->fork_rng("oracle", oracles_.size()));
        auto offer = o.conn->signature_oracle(tls::random_nonce(rng_), next);
        const auto& params = std::get<tls::RsaKeyParams>(offer.key_exchange.params);
        o.key = crypto::recover_rsa_private_key({params.n, params.e}, cfg_.factoring_budget);
        ++state_.oracle_connections;
      } catch (const Error& e) {
        ++state_.oracle_failures;
        world_->sim().note("attacker", std::string("oracle unavailable ") + std::string(errc_name(e.code())));
      }
      oracles_.push_back(std::move(o));
    }
    Oracle* best = nullptr;
    for (auto& o : oracles_) {
      if (!o.key || o.ready > now || now + 1min >= o.opened + lifetime) continue;
      if (!best || o.opened > best->opened) best = &o;
    }
    return best;
  }

  net::Decision<Message> piwik_decision(const SimEvent& ev, const election::Sim& s) {
    const bool from_client = election::names::is_browser(ev.src);
    const std::string browser = from_client ? ev.src : ev.dst;
    const VoterId v = *election::names::voter_of(browser);
    if (const auto* h = std::get_if<election::TlsHandshake>(&ev.payload)) {
      auto it = piwik_.find(h->conn);
      if (it == piwik_.end()) {
        if (!from_client || !std::holds_alternative<tls::ClientHello>(h->msg)) return net::Decision<Message>::forward();
        PiwikConn pc;
        pc.voter = v;
        if (state_.intercepted.contains(v) && s.now() >= cfg_.attack_start) {
          if (cfg_.vector == CompromiseVector::Freak) {
            if (auto* o = usable_oracle(s.now())) {
              pc.mode = Mode::Freak;
              pc.interposer = std::make_unique<mitm::FreakInterposer>(*o->conn, o->key, s.now());
            }
          } else {
            pc.mode = Mode::Logjam;
            pc.interposer = std::make_unique<mitm::LogjamInterposer>(
                &cached_dlog_table(world_->groups().dhe_export, cfg_.dlog_baby_steps));
          }
          if (pc.mode != Mode::Passthrough) ++state_.hijack_attempts;
        }
        it = piwik_.emplace(h->conn, std::move(pc)).first;
      }
      auto& pc = it->second;
      if (pc.mode == Mode::Passthrough) return net::Decision<Message>::forward();
      if (pc.mode == Mode::Broken) return net::Decision<Message>::drop();
      tls::Routed routed;
      try {
        routed = from_client ? pc.interposer->from_client(h->msg) : pc.interposer->from_server(h->msg);
      } catch (const Error& e) {
        ++state_.hijack_errors;
        pc.mode = Mode::Broken;
        world_->sim().note("attacker", "hijack conn=" + std::to_string(h->conn) + " " + std::string(errc_name(e.code())));
        return net::Decision<Message>::drop();
      }
      const bool solved_dlog = pc.mode == Mode::Logjam && !from_client &&
                               std::holds_alternative<tls::ServerKeyExchange>(h->msg);
      if (solved_dlog) pc.client_hold_until = s.now() + cfg_.dlog_delay;
      auto d = net::Decision<Message>::drop();
      for (auto& m : routed.to_server)
        d.and_inject({browser, election::names::kPiwik, Message{election::TlsHandshake{h->conn, m}},
                      s.delay(browser, election::names::kPiwik)});
      for (auto& m : routed.to_client) {
        SimDuration wait = s.delay(election::names::kPiwik, browser);
        if (pc.client_hold_until > s.now()) wait += pc.client_hold_until - s.now();
        d.and_inject({election::names::kPiwik, browser, Message{election::TlsHandshake{h->conn, m}}, wait});
      }
      if (!pc.counted && recovered(pc)) {
        pc.counted = true;
        ++state_.hijacked_sessions;
      }
      return d;
    }
    const auto& rec = std::get<election::TlsRecord>(ev.payload);
    auto it = piwik_.find(rec.conn);
    if (it == piwik_.end() || it->second.mode == Mode::Passthrough) return net::Decision<Message>::forward();
    auto& pc = it->second;
    if (pc.mode == Mode::Broken || !recovered(pc)) return net::Decision<Message>::drop();
    const Bytes& key = *recovered(pc);
    const auto malicious =
        election::encode_app(election::ScriptBody{true});
    if (pc.mode == Mode::Freak) {
      // The real server never saw this connection; answer for it.
      if (!from_client) return net::Decision<Message>::drop();
      auto d = net::Decision<Message>::drop();
      const auto seq = pc.to_client_seq++;
      d.and_inject({election::names::kPiwik, browser,
                    Message{election::TlsRecord{rec.conn, tls::Role::Server, seq,
                                                tls::seal_record(key, tls::Role::Server, seq, malicious)}},
                    2 * s.delay(browser, election::names::kPiwik)});
      return d;
    }
    if (from_client) return net::Decision<Message>::forward();
    return net::Decision<Message>::modify(Message{election::TlsRecord{
        rec.conn, tls::Role::Server, rec.seq, tls::seal_record(key, tls::Role::Server, rec.seq, malicious)}});
  }

  static const std::optional<Bytes>& recovered(const PiwikConn& pc) {
    static const std::optional<Bytes> none;
    if (pc.mode == Mode::Freak) return static_cast<const mitm::FreakInterposer&>(*pc.interposer).recovered_key();
    if (pc.mode == Mode::Logjam) return static_cast<const mitm::LogjamInterposer&>(*pc.interposer).recovered_key();
    return none;
  }

  // -- in-page strategies --------------------------------------------------

  void install_script_tap() {
    world_->sim().install_tap(
        {"script",
         [](std::string_view src, std::string_view dst) {
           return same_voter_page(src, dst) && (election::names::is_browser(src) || election::names::is_browser(dst));
         },
         [this](const SimEvent& ev, const election::Sim& s) { return script_decision(ev, s); }, true});
  }

  void exfiltrate(net::Decision<Message>& d, const std::string& browser, VoterId v, const election::CastIntent& ci) {
    d.and_inject({browser, names::kC2, Message{AppMessage{election::Exfiltrate{v, ci.ivote_id, ci.pin, ci.ballot}}},
                  world_->sim().delay(browser, names::kC2)});
  }

  net::Decision<Message> rewrite(const SimEvent& ev, VoterId v, const election::CastIntent& ci, const std::string& tag) {
    election::CastIntent forged = ci;
    forged.ballot = *attacker_ballot_;
    auto d = ci.ballot == *attacker_ballot_ ? net::Decision<Message>::forward()
                                            : net::Decision<Message>::modify(Message{AppMessage{forged}});
    if (ci.ballot != *attacker_ballot_)
      state_.ledger.push_back({v, ci.ivote_id, ci.ballot, *attacker_ballot_, tag, world_->sim().now(), false});
    exfiltrate(d, ev.dst, v, ci);
    return d;
  }

  net::Decision<Message> script_decision(const SimEvent& ev, const election::Sim& s) {
    const auto* app = std::get_if<AppMessage>(&ev.payload);
    if (!app) return net::Decision<Message>::forward();
    const VoterId v = *election::names::voter_of(ev.src);
    if (!compromised(v)) return net::Decision<Message>::forward();
    const bool to_page = election::names::is_browser(ev.dst) && !election::names::is_browser(ev.src);

    if (const auto* ci = std::get_if<election::CastIntent>(app); ci && to_page) {
      switch (cfg_.strategy) {
        case ScriptStrategy::None: {
          auto d = net::Decision<Message>::forward();
          exfiltrate(d, ev.dst, v, *ci);
          return d;
        }
        case ScriptStrategy::Rewrite: return rewrite(ev, v, *ci, strategy::kRewrite);
        case ScriptStrategy::LastMinute:
          if (s.now() >= world_->timeline().polls_close - cfg_.safety_window)
            return rewrite(ev, v, *ci, strategy::kLastMinute);
          return net::Decision<Message>::forward();
        case ScriptStrategy::ReceiptDelay: {
          const auto token = ++next_token_;
          held_[v] = {token, *ci};
          auto d = net::Decision<Message>::drop();
          d.and_inject({ev.dst, ev.src, Message{AppMessage{election::ProgressShown{}}}, SimDuration::zero()});
          d.and_inject({ev.dst, ev.dst, Message{AppMessage{election::ScriptTimer{token}}}, cfg_.gambit_delay});
          exfiltrate(d, ev.dst, v, *ci);
          return d;
        }
      }
    }
    if (std::holds_alternative<election::PageClosed>(*app) && to_page) {
      auto it = held_.find(v);
      if (it == held_.end()) return net::Decision<Message>::forward();
      auto ci = it->second.second;
      held_.erase(it);
      if (ci.ballot != *attacker_ballot_)
        state_.ledger.push_back({v, ci.ivote_id, ci.ballot, *attacker_ballot_, strategy::kReceiptDelay, s.now(), false});
      ci.ballot = *attacker_ballot_;
      return net::Decision<Message>::modify(Message{AppMessage{ci}});
    }
    if (const auto* timer = std::get_if<election::ScriptTimer>(app)) {
      auto it = held_.find(v);
      if (it == held_.end() || it->second.first != timer->token) return net::Decision<Message>::drop();
      // The voter waited: give up and submit the genuine vote.
      auto ci = it->second.second;
      held_.erase(it);
      return net::Decision<Message>::modify(Message{AppMessage{ci}});
    }
    if (const auto* rs = std::get_if<election::ReceiptShown>(app); rs && cfg_.fake_ivr && !to_page) {
      for (auto& e : state_.ledger)
        if (e.voter == v) e.masked = true;
      auto shown = *rs;
      shown.ivr_number = names::kIvr;
      return net::Decision<Message>::modify(Message{AppMessage{shown}});
    }
    return net::Decision<Message>::forward();
  }

  // -- compromised CVS -----------------------------------------------------

  void install_server_cvs() {
    world_->cvs().set_storage_hook([this](const election::CastSubmit& submit, SimTime now) -> std::optional<DigitalEnvelope> {
      if (!rng_.bernoulli(cfg_.server_cvs_rate)) return std::nullopt;
      // Ground truth for the ledger comes from the simulator's view of the
      // vote; the compromised server itself just swaps the envelope.
      const auto& g = world_->groups();
      Ballot intended = decode_ballot(open(submit.envelope, EnvelopeServer::Election, g.envelope, world_->election_secret()),
                                      world_->manifest());
      if (intended == *attacker_ballot_) return std::nullopt;
      auto voter = world_->registration().voter_of(submit.ivote_id);
      state_.ledger.push_back({voter.value_or(0), submit.ivote_id, intended, *attacker_ballot_, strategy::kServerCvs, now, false});
      auto forged = attacker_submission(submit.ivote_id, submit.pin);
      return forged.envelope;
    });
  }

  World* world_;
  AttackConfig cfg_;
  Rng rng_;
  std::optional<Ballot> attacker_ballot_;
  AttackerState state_;
  std::unique_ptr<election::TlsClientSide> attacker_tls_;
  std::map<std::uint64_t, Purpose> purposes_;
  std::map<VoterId, PoolEntry> victims_;
  std::map<VoterId, IVoteId> entitlement_ids_;
  std::map<VoterId, std::tuple<IVoteId, Pin, Ballot>> candidate_intents_;
  std::vector<Oracle> oracles_;
  std::map<std::uint64_t, PiwikConn> piwik_;
  std::map<VoterId, std::pair<std::uint64_t, election::CastIntent>> held_;
  std::uint64_t next_token_ = 0;
};

}  // namespace ivotesim::attacks
