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

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>

#include "ivotesim/scenario.hpp"

namespace {

using namespace ivotesim;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

scenario::ScenarioConfig bundled(const std::string& name) {
  return scenario::load_scenario(scenario::resolve_scenario(name));
}

// 1. FREAK iff unpatched client and export RSA; Logjam iff export DHE.
Outcome downgrade_matrix() {
  const auto t0 = Clock::now();
  const auto& g = election::crypto_groups({});
  const auto& table = attacks::cached_dlog_table(g.dhe_export, std::nullopt);
  std::size_t cells = 0, exceptions = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    mitm::DowngradeSetup setup{g.dhe, g.dhe_export, &table, seed, {}};
    for (const auto& c : mitm::downgrade_matrix(setup)) {
      ++cells;
      const bool freak_expected = !c.client_patched && c.server_export_rsa;
      const bool logjam_expected = c.server_export_dhe;
      exceptions += (c.freak_hijacked != freak_expected) + (c.logjam_hijacked != logjam_expected);
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << cells << " cells, " << exceptions << " exceptions, " << std::fixed << std::setprecision(2) << secs << " s";
  return {exceptions == 0 && cells == 24 && secs < 30.0, os.str()};
}

// 2. The temporary key is pinned to a connection, and rotates hourly.
Outcome pinning() {
  tls::ServerTlsConfig cfg;
  cfg.name = "pinning";
  cfg.enabled_suites.insert(tls::CipherSuite::RSA_EXPORT);
  const auto& g = election::crypto_groups({});
  cfg.dhe_params = g.dhe;
  cfg.dhe_export_params = g.dhe_export;
  tls::TlsServer server(cfg, 2);
  auto modulus = [](const tls::HandshakeTranscript& t) {
    return std::get<tls::RsaKeyParams>(t.all<tls::ServerKeyExchange>().at(0).params).n;
  };
  const tls::ClientTlsConfig export_only{{tls::CipherSuite::RSA_EXPORT}, false};
  tls::Connection conn(server, export_only, at(0h), Rng(1));
  std::set<BigInt> reneg{modulus(conn.transcript())};
  for (int i = 1; i <= 100; ++i) reneg.insert(modulus(tls::renegotiate(conn, at(std::chrono::minutes(6 * i)))));
  std::set<BigInt> across;
  for (int h = 0; h < 5; ++h) {
    tls::Connection c(server, export_only, at(std::chrono::hours(h) + 30min), Rng(10 + h));
    across.insert(modulus(c.transcript()));
  }
  std::ostringstream os;
  os << "100 renegotiations -> " << reneg.size() << " key(s); 5 connections over 5 h -> " << across.size() << " keys";
  return {reneg.size() == 1 && across.size() == 5, os.str()};
}

// 3. Per-target discrete log is cheap next to the per-group precomputation.
Outcome logjam_asymmetry() {
  Rng rng(3);
  const auto params = gen_schnorr_params(64, 32, rng);
  const auto t0 = Clock::now();
  const auto table = crypto::dlog_precompute(params);
  const double pre = seconds_since(t0);
  double total = 0.0;
  std::size_t correct = 0;
  constexpr int kTrials = 20;
  for (int i = 0; i < kTrials; ++i) {
    const BigInt x = rng.below(static_cast<std::uint64_t>(params.q));
    const BigInt y = powmod(params.g, x, params.p);
    const auto t1 = Clock::now();
    const BigInt got = crypto::dlog_individual(y, table);
    total += seconds_since(t1);
    correct += powmod(params.g, got, params.p) == y;
  }
  const double mean = total / kTrials;
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << "precompute " << pre << " s, individual mean " << mean << " s ("
     << std::fixed << std::setprecision(4) << 100.0 * mean / pre << "%), " << correct << "/20 correct";
  return {correct == kTrials && mean <= 0.01 * pre, os.str()};
}

// 4. Envelopes: both servers open them, tampering is caught, ballots survive.
Outcome envelopes() {
  Rng rng(4);
  const auto& params = election::crypto_groups({}).envelope;
  const auto ek = gen_keypair(params, rng), vk = gen_keypair(params, rng);
  auto m = ElectionManifest::synthetic(4, 16, 6);
  m.add_default_cards();
  std::size_t dual = 0, tamper = 0, round = 0;
  constexpr int kSeals = 1000;
  auto rejects = [&](const DigitalEnvelope& env, EnvelopeServer s, const BigInt& x) {
    try {
      open(env, s, params, x);
      return false;
    } catch (const Error& e) {
      return e.code() == Errc::AuthFailure;
    }
  };
  for (int i = 0; i < kSeals; ++i) {
    VoterProfile profile;
    profile.party_leaning = m.groups()[rng.below(m.groups().size())].id;
    profile.follows_card = rng.bernoulli(0.4);
    const Ballot b = draw_ballot(profile, m, rng);
    const Bytes plain = encode_ballot(b, m);
    const auto env = seal(plain, {params, ek.y}, {params, vk.y}, rng);
    const Bytes a = open(env, EnvelopeServer::Election, params, ek.x);
    const Bytes v = open(env, EnvelopeServer::Verification, params, vk.x);
    dual += a == plain && v == plain;
    round += decode_ballot(a, m) == b && decode_ballot(v, m) == b;

    auto flipped = env;
    flipped.vote_ciphertext[rng.below(flipped.vote_ciphertext.size())] ^= static_cast<std::uint8_t>(1u << rng.below(8));
    auto rewrapped = env;
    rewrapped.wrapped_key_election.c2 = mulmod(rewrapped.wrapped_key_election.c2, params.g, params.p);
    tamper += rejects(flipped, EnvelopeServer::Election, ek.x) && rejects(flipped, EnvelopeServer::Verification, vk.x) &&
              rejects(rewrapped, EnvelopeServer::Election, ek.x) &&
              rejects(rewrapped, EnvelopeServer::Verification, vk.x);
  }
  std::ostringstream os;
  os << "dual " << dual << "/1000, tamper rejected " << tamper << "/1000, round trip " << round << "/1000";
  return {dual == kSeals && tamper == kSeals && round == kSeals, os.str()};
}

// 5. Honest elections count exactly what voters intended.
Outcome honest() {
  std::size_t exact = 0, read_backs = 0, pre_errors = 0, post_ok = 0, post_calls = 0, bad_complaints = 0;
  constexpr int kSeeds = 50;
  for (int s = 1; s <= kSeeds; ++s) {
    election::ElectionConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.voter_count = 1000;
    cfg.keep_trace = false;
    cfg.timeline.polls_close = at(48h);
    cfg.timeline.receipt_service_end = at(96h);
    cfg.behavior.registration_lead_max = 6h;
    cfg.behavior.verify_delay_max = 12h;  // some calls land after the close
    cfg.behavior.p_verify_ivr = 0.4;
    cfg.behavior.p_revote = 0.05;
    cfg.behavior.p_phone = 0.05;
    cfg.behavior.p_polling_place = 0.05;
    election::World w(cfg);
    w.run();
    // Recount oracle: first preferences of each voter's last intent.
    std::vector<Ballot> last;
    for (const auto& p : w.plans())
      if (auto b = w.last_intent(p.id)) last.push_back(*b);
    exact += w.dedup_and_count().tally == tally_first_preferences(last, w.manifest());
    for (const auto& l : w.verify_log()) {
      if (l.number != election::names::kVerificationIvr) continue;
      if (l.time < w.timeline().polls_close) {
        if (l.error)
          ++pre_errors;
        else
          ++read_backs;
      } else {
        ++post_calls;
        post_ok += !l.error;
      }
    }
    for (const auto& c : w.complaints().entries()) bad_complaints += c.kind != election::ComplaintKind::FalseComplaint;
  }
  std::ostringstream os;
  os << exact << "/50 exact tallies, " << read_backs << " read-backs (" << pre_errors << " errors, " << bad_complaints
     << " mismatch complaints), " << post_ok << "/" << post_calls << " post-close calls answered";
  return {exact == kSeeds && pre_errors == 0 && bad_complaints == 0 && post_ok == 0 && post_calls > 0 && read_backs > 0,
          os.str()};
}

// 6. Votes rewritten inside the window are never reported.
Outcome last_minute() {
  auto sc = bundled("last-minute");
  std::size_t manipulated = 0, detected = 0, outside = 0;
  for (int s = 1; s <= 20; ++s) {
    sc.election.seed = static_cast<std::uint64_t>(s);
    sc.election.keep_trace = false;
    election::World w(sc.election);
    attacks::Attacker a(w, sc.attack);
    w.run();
    const auto m = a.metrics().at(attacks::strategy::kLastMinute);
    manipulated += m.manipulated;
    detected += m.complaints_true;
    for (const auto& e : a.state().ledger) outside += e.time < w.timeline().polls_close - sc.attack.safety_window;
  }
  std::ostringstream os;
  os << manipulated << " window votes over 20 seeds, " << detected << " complaints, ratio "
     << (manipulated ? static_cast<double>(detected) / manipulated : NAN);
  return {manipulated > 0 && detected == 0 && outside == 0, os.str()};
}

// 7. Clash complaints follow victims x (1 - match) x p(verify).
Outcome clash() {
  auto sc = bundled("clash");
  const double p = (1.0 - sc.election.behavior.card_rate) * sc.election.behavior.p_verify_ivr;
  std::size_t victims = 0, complaints = 0;
  std::uint64_t seed = 1;
  while (victims < 10000) {
    sc.election.seed = seed++;
    sc.election.keep_trace = false;
    election::World w(sc.election);
    attacks::Attacker a(w, sc.attack);
    w.run();
    const auto m = a.metrics().at(attacks::strategy::kClash);
    victims += m.manipulated;
    complaints += m.complaints_true;
  }
  const double expected = static_cast<double>(victims) * p;
  const double sigma = std::sqrt(static_cast<double>(victims) * p * (1.0 - p));
  const double z = (static_cast<double>(complaints) - expected) / sigma;

  auto perfect = sc;
  perfect.election.seed = 1;
  perfect.attack.clash.prediction = attacks::ClashPrediction::Perfect;
  election::World w(perfect.election);
  attacks::Attacker a(w, perfect.attack);
  w.run();
  const auto pm = a.metrics().at(attacks::strategy::kClash);

  std::ostringstream os;
  os << victims << " victims over " << (seed - 1) << " seeds, " << complaints << " complaints vs " << std::fixed
     << std::setprecision(1) << expected << " +- " << sigma << " (z=" << std::setprecision(2) << z
     << "); perfect prediction: " << pm.manipulated << " manipulated, " << pm.complaints_true << " complaints";
  return {std::abs(z) <= 3.0 && pm.manipulated > 0 && pm.complaints_true == 0, os.str()};
}

// 8. The scaled vulnerable window is enough to change the winner.
Outcome freak_window() {
  auto sc = bundled("freak-window");
  int flips = 0, feasible = 0;
  double controlled = 0.0;
  constexpr int kSeeds = 100;
  for (int s = 1; s <= kSeeds; ++s) {
    sc.election.seed = static_cast<std::uint64_t>(s);
    sc.election.keep_trace = false;
    election::World w(sc.election);
    attacks::Attacker a(w, sc.attack);
    w.run();
    const auto honest = w.intent_tally(), reported = w.dedup_and_count().tally;
    flips += honest.leader() != reported.leader();
    // Feasibility oracle: net first-preference swing from the ledger against
    // each challenger's honest deficit.
    bool can = false;
    const auto ranking = honest.ranking();
    for (std::size_t i = 1; i < ranking.size(); ++i) {
      std::int64_t swing = 0;
      for (const auto& e : a.state().ledger) {
        auto score = [&](const Ballot& b) {
          auto fp = first_council_group(b, w.manifest());
          return static_cast<int>(fp == ranking[i].first) - static_cast<int>(fp == ranking[0].first);
        };
        swing += score(e.submitted) - score(e.intended);
      }
      can |= swing > static_cast<std::int64_t>(ranking[0].second - ranking[i].second);
    }
    feasible += can;
    std::size_t unpatched = 0, hit = 0;
    for (const auto& pl : w.plans()) {
      if (pl.patched_browser) continue;
      ++unpatched;
      hit += a.state().compromised.contains(pl.id);
    }
    controlled += unpatched ? static_cast<double>(hit) / unpatched : 0.0;
  }
  std::ostringstream os;
  os << "winner flipped in " << flips << "/100 seeds, feasible in " << feasible << "/100, mean control of unpatched "
     << std::fixed << std::setprecision(3) << controlled / kSeeds;
  return {flips >= 95 && feasible >= 95, os.str()};
}

// 9. An honest audit finds exactly the server-side swaps; a blind one, none.
Outcome blind_auditor() {
  auto sc = bundled("blind-auditor");
  std::size_t tp = 0, fp = 0, fn = 0, blind = 0, same_tally = 0;
  for (int s = 1; s <= 5; ++s) {
    sc.election.seed = static_cast<std::uint64_t>(s);
    election::World w(sc.election);
    attacks::Attacker a(w, sc.attack);
    w.run();
    std::set<std::string> truth, found;
    for (const auto& e : a.state().ledger)
      if (e.strategy == attacks::strategy::kServerCvs) truth.insert(e.ivote_id->str());
    for (const auto& f : w.audit_reconcile(election::AuditMode::Honest).inconsistencies) found.insert(f.ivote_id.str());
    for (const auto& id : found) (truth.contains(id) ? tp : fp)++;
    for (const auto& id : truth) fn += !found.contains(id);
    blind += w.audit_reconcile(election::AuditMode::BlindEye).inconsistencies.size();
    same_tally += w.dedup_and_count().tally == w.intent_tally();
  }
  const double precision = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double recall = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
  std::ostringstream os;
  os << "precision " << precision << ", recall " << recall << " over " << tp + fn << " swapped votes; blind-eye findings "
     << blind << "; runs with tally == intent " << same_tally;
  return {tp > 0 && precision == 1.0 && recall == 1.0 && blind == 0 && same_tally == 0, os.str()};
}

// 10. Identical config and seed give identical bytes.
Outcome determinism() {
  std::size_t same = 0, total = 0;
  std::string broken;
  for (const auto& path : scenario::bundled_scenarios()) {
    const auto sc = scenario::load_scenario(path);
    const auto a = scenario::run_scenario(sc, true), b = scenario::run_scenario(sc, true);
    ++total;
    if (scenario::report_text(a.report) == scenario::report_text(b.report) && a.trace == b.trace &&
        a.metrics_csv == b.metrics_csv)
      ++same;
    else
      broken += " " + sc.name;
  }
  std::ostringstream os;
  os << same << "/" << total << " bundled scenarios byte-identical" << (broken.empty() ? "" : ", differing:" + broken);
  return {same == total && total == 9, os.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria{
      {"downgrade-matrix", downgrade_matrix}, {"signature-oracle-pinning", pinning},
      {"logjam-asymmetry", logjam_asymmetry}, {"envelope", envelopes},
      {"honest-election", honest},            {"last-minute", last_minute},
      {"clash", clash},                       {"freak-window-flip", freak_window},
      {"blind-auditor", blind_auditor},       {"determinism", determinism},
  };
  int failed = 0, n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << n << " " << name << ": " << o.detail << " [" << std::fixed
              << std::setprecision(1) << seconds_since(t0) << " s]" << std::endl;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << (n - failed) << "/" << n << std::endl;
  return failed ? 1 : 0;
}
