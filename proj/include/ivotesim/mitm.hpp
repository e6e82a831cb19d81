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

#include <optional>
#include <string>
#include <vector>

#include "ivotesim/cryptanalysis.hpp"
#include "ivotesim/minitls.hpp"

namespace ivotesim::mitm {

using tls::CipherSuite;
using tls::HandshakeMessage;
using tls::Routed;

/// Impersonates a server whose temporary export RSA key the attacker has
/// factored. The real server is only reached through the oracle connection;
/// the victim's messages never reach it.
class FreakInterposer final : public tls::Interposer {
 public:
  FreakInterposer(tls::Connection& oracle, std::optional<tls::RsaPrivateKey> factored, SimTime now)
      : oracle_(&oracle), factored_(std::move(factored)), now_(now) {}

  Routed from_client(const HandshakeMessage& msg) override {
    Routed out;
    if (const auto* ch = std::get_if<tls::ClientHello>(&msg)) {
      view_.reset();
      view_.add(msg);
      client_nonce_ = ch->nonce;
      CipherSuite pick;
      if (std::find(ch->suites.begin(), ch->suites.end(), CipherSuite::RSA) != ch->suites.end())
        pick = CipherSuite::RSA;
      else if (std::find(ch->suites.begin(), ch->suites.end(), CipherSuite::RSA_EXPORT) != ch->suites.end())
        pick = CipherSuite::RSA_EXPORT;
      else
        fail(Errc::NoCommonSuite, "victim offers no RSA key transport");
      auto offer = oracle_->signature_oracle(ch->nonce, now_);
      server_nonce_ = offer.server_hello.nonce;
      offered_key_ = std::get<tls::RsaKeyParams>(offer.key_exchange.params);
      out.to_client = {tls::ServerHello{server_nonce_, pick}, offer.key_exchange, tls::ServerHelloDone{}};
      for (const auto& m : out.to_client) view_.add(m);
      return out;
    }
    if (const auto* cke = std::get_if<tls::ClientKeyExchange>(&msg)) {
      view_.add(msg);
      if (factored_ && factored_->n == offered_key_.n) {
        auto premaster = tls::rsa_decrypt(*factored_, cke->exchange);
        key_ = tls::derive_session_key(premaster, client_nonce_, server_nonce_);
      }
      return out;
    }
    if (std::holds_alternative<tls::Finished>(msg) && key_) {
      out.to_client.push_back(tls::Finished{tls::Role::Server, view_.finished(*key_, tls::Role::Server)});
    }
    return out;
  }

  Routed from_server(const HandshakeMessage&) override { return {}; }

  const std::optional<Bytes>& recovered_key() const { return key_; }

 private:
  tls::Connection* oracle_;
  std::optional<tls::RsaPrivateKey> factored_;
  SimTime now_;
  tls::TranscriptHash view_;
  Bytes client_nonce_, server_nonce_;
  tls::RsaKeyParams offered_key_;
  std::optional<Bytes> key_;
};

/// Rewrites the victim's offer to export-grade DHE, solves the server's
/// share with a precomputed table and forges both Finished messages.
class LogjamInterposer final : public tls::Interposer {
 public:
  explicit LogjamInterposer(const crypto::DlogTable* table) : table_(table) {}

  Routed from_client(const HandshakeMessage& msg) override {
    if (const auto* ch = std::get_if<tls::ClientHello>(&msg)) {
      client_view_.add(msg);
      client_offer_ = ch->suites;
      client_nonce_ = ch->nonce;
      tls::ClientHello downgraded{ch->nonce, {CipherSuite::DHE_EXPORT}};
      server_view_.add(downgraded);
      return {{downgraded}, {}};
    }
    if (const auto* cke = std::get_if<tls::ClientKeyExchange>(&msg)) {
      client_view_.add(msg);
      server_view_.add(msg);
      if (server_secret_) {
        auto premaster = powmod(cke->exchange, *server_secret_, dh_p_);
        key_ = tls::derive_session_key(premaster, client_nonce_, server_nonce_);
      }
      return {{msg}, {}};
    }
    if (std::holds_alternative<tls::Finished>(msg) && key_)
      return {{tls::Finished{tls::Role::Client, server_view_.finished(*key_, tls::Role::Client)}}, {}};
    return {{msg}, {}};
  }

  Routed from_server(const HandshakeMessage& msg) override {
    if (const auto* sh = std::get_if<tls::ServerHello>(&msg)) {
      server_view_.add(msg);
      server_nonce_ = sh->nonce;
      tls::ServerHello shown = *sh;
      if (std::find(client_offer_.begin(), client_offer_.end(), CipherSuite::DHE) != client_offer_.end())
        shown.suite = CipherSuite::DHE;
      client_view_.add(shown);
      return {{}, {shown}};
    }
    if (const auto* ske = std::get_if<tls::ServerKeyExchange>(&msg)) {
      server_view_.add(msg);
      client_view_.add(msg);
      if (const auto* dh = std::get_if<tls::DhKeyParams>(&ske->params)) {
        if (!table_) fail(Errc::PrecomputeMissing, "no precomputed table for the server's group");
        if (!table_->matches(dh->p)) fail(Errc::DlogBudgetExceeded, "table was built for a different prime");
        server_secret_ = crypto::dlog_individual(dh->ys, *table_);
        dh_p_ = dh->p;
      }
      return {{}, {msg}};
    }
    if (std::holds_alternative<tls::Finished>(msg) && key_)
      return {{}, {tls::Finished{tls::Role::Server, client_view_.finished(*key_, tls::Role::Server)}}};
    server_view_.add(msg);
    client_view_.add(msg);
    return {{}, {msg}};
  }

  const std::optional<Bytes>& recovered_key() const { return key_; }

 private:
  const crypto::DlogTable* table_;
  tls::TranscriptHash client_view_, server_view_;
  std::vector<CipherSuite> client_offer_;
  Bytes client_nonce_, server_nonce_;
  std::optional<BigInt> server_secret_;
  BigInt dh_p_;
  std::optional<Bytes> key_;
};

struct HijackResult {
  tls::HandshakeTranscript transcript;  // as the victim saw it
  bool client_established = false;
  std::optional<Bytes> client_key;
  std::optional<Bytes> attacker_key;
  std::optional<Bytes> server_key;

  bool hijacked() const { return client_established && attacker_key && client_key == attacker_key; }
};

/// Runs a victim handshake against an attacker holding `oracle` (a live
/// connection to the genuine server) and, optionally, the factored temporary
/// key. Throws ClientPatched when the victim refuses the unsolicited key.
inline HijackResult mitm_freak(const tls::ClientTlsConfig& victim, const tls::RsaPublicKey& trusted,
                               tls::Connection& oracle, std::optional<tls::RsaPrivateKey> factored, Rng rng,
                               SimTime now) {
  tls::ClientHandshake client(victim, trusted, rng.fork("victim"));
  FreakInterposer attacker(oracle, std::move(factored), now);
  auto hello = client.start();
  tls::HandshakeOutcome o;
  try {
    o = tls::drive_handshake(client, nullptr, attacker, now, hello);
  } catch (const Error& e) {
    if (e.code() == Errc::UnexpectedMessage) fail(Errc::ClientPatched, std::string("victim aborted: ") + e.what());
    throw;
  }
  return {o.transcript, o.client_established, o.client_key, attacker.recovered_key(), std::nullopt};
}

/// Victim handshake with the genuine server through a Logjam interposer.
inline HijackResult mitm_logjam(const tls::ClientTlsConfig& victim, tls::TlsServer& server,
                                const crypto::DlogTable* table, Rng rng, SimTime now) {
  tls::ClientHandshake client(victim, server.certificate(), rng.fork("victim"));
  auto conn = server.accept(now);
  LogjamInterposer attacker(table);
  auto hello = client.start();
  auto o = tls::drive_handshake(client, conn.get(), attacker, now, hello);
  return {o.transcript, o.client_established, o.client_key, attacker.recovered_key(), o.server_key};
}

// ---------------------------------------------------------------------------
// Downgrade outcome matrix over client patch level and server export suites.

struct DowngradeCell {
  bool client_patched = false;
  bool server_export_rsa = false;
  bool server_export_dhe = false;
  bool freak_hijacked = false;
  bool logjam_hijacked = false;
  std::string freak_outcome;   // "hijacked" or the error name
  std::string logjam_outcome;
};

struct DowngradeSetup {
  ElGamalParams dhe_params;
  ElGamalParams dhe_export_params;
  const crypto::DlogTable* table = nullptr;  // for dhe_export_params
  std::uint64_t seed = 1;
  crypto::FactoringBudget factoring{};
};

inline DowngradeCell downgrade_cell(const DowngradeSetup& s, bool patched, bool export_rsa, bool export_dhe) {
  DowngradeCell cell;
  cell.client_patched = patched;
  cell.server_export_rsa = export_rsa;
  cell.server_export_dhe = export_dhe;
  tls::ServerTlsConfig scfg;
  scfg.name = "matrix-server";
  scfg.dhe_params = s.dhe_params;
  scfg.dhe_export_params = s.dhe_export_params;
  if (export_rsa) scfg.enabled_suites.insert(CipherSuite::RSA_EXPORT);
  if (export_dhe) scfg.enabled_suites.insert(CipherSuite::DHE_EXPORT);
  const std::uint64_t cell_seed = mix64(s.seed ^ (patched * 4 + export_rsa * 2 + export_dhe));
  tls::TlsServer server(scfg, cell_seed);
  tls::ClientTlsConfig victim{{CipherSuite::RSA, CipherSuite::DHE}, patched};
  Rng rng(cell_seed);
  const SimTime now{};

  try {
    tls::Connection oracle(server, tls::ClientTlsConfig{{CipherSuite::RSA_EXPORT}, false}, now, rng.fork("oracle"));
    auto offers = oracle.transcript().all<tls::ServerKeyExchange>();
    const auto& temp = std::get<tls::RsaKeyParams>(offers.at(0).params);
    auto key = crypto::recover_rsa_private_key({temp.n, temp.e}, s.factoring);
    auto r = mitm_freak(victim, server.certificate(), oracle, key, rng.fork("freak"), now);
    cell.freak_hijacked = r.hijacked();
    cell.freak_outcome = r.hijacked() ? "hijacked" : "incomplete";
  } catch (const Error& e) {
    cell.freak_outcome = std::string(errc_name(e.code()));
  }

  try {
    auto r = mitm_logjam(victim, server, s.table, rng.fork("logjam"), now);
    cell.logjam_hijacked = r.hijacked();
    cell.logjam_outcome = r.hijacked() ? "hijacked" : "incomplete";
  } catch (const Error& e) {
    cell.logjam_outcome = std::string(errc_name(e.code()));
  }
  return cell;
}

inline std::vector<DowngradeCell> downgrade_matrix(const DowngradeSetup& s) {
  std::vector<DowngradeCell> out;
  for (bool patched : {false, true})
    for (bool rsa : {false, true})
      for (bool dhe : {false, true}) out.push_back(downgrade_cell(s, patched, rsa, dhe));
  return out;
}

}  // namespace ivotesim::mitm
