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
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "ivotesim/aead.hpp"
#include "ivotesim/bigint.hpp"
#include "ivotesim/bytes.hpp"
#include "ivotesim/envelope.hpp"
#include "ivotesim/error.hpp"
#include "ivotesim/hash.hpp"
#include "ivotesim/rng.hpp"
#include "ivotesim/simtime.hpp"

namespace ivotesim::tls {

enum class CipherSuite : std::uint8_t { RSA = 1, RSA_EXPORT = 2, DHE = 3, DHE_EXPORT = 4 };

constexpr bool is_export(CipherSuite s) { return s == CipherSuite::RSA_EXPORT || s == CipherSuite::DHE_EXPORT; }
constexpr bool is_dhe(CipherSuite s) { return s == CipherSuite::DHE || s == CipherSuite::DHE_EXPORT; }

constexpr std::string_view suite_name(CipherSuite s) {
  switch (s) {
    case CipherSuite::RSA: return "RSA";
    case CipherSuite::RSA_EXPORT: return "RSA_EXPORT";
    case CipherSuite::DHE: return "DHE";
    case CipherSuite::DHE_EXPORT: return "DHE_EXPORT";
  }
  return "?";
}

inline CipherSuite suite_from_name(std::string_view n) {
  for (auto s : {CipherSuite::RSA, CipherSuite::RSA_EXPORT, CipherSuite::DHE, CipherSuite::DHE_EXPORT})
    if (suite_name(s) == n) return s;
  fail(Errc::ConfigInvalid, "unknown cipher suite '" + std::string(n) + "'");
}

// ---------------------------------------------------------------------------
// Textbook RSA, used for certificate signatures and key transport.

struct RsaPublicKey {
  BigInt n;
  BigInt e;
  friend bool operator==(const RsaPublicKey&, const RsaPublicKey&) = default;
};

struct RsaPrivateKey {
  BigInt n;
  BigInt e;
  BigInt d;
  RsaPublicKey pub() const { return {n, e}; }
};

inline std::optional<RsaPrivateKey> rsa_from_factors(const BigInt& p, const BigInt& q, const BigInt& e = 65537) {
  BigInt phi = (p - 1) * (q - 1);
  BigInt d = modinv(e, phi);
  if (d == 0) return std::nullopt;
  return RsaPrivateKey{p * q, e, d};
}

inline RsaPrivateKey gen_rsa(unsigned bits, Rng& rng) {
  for (;;) {
    BigInt p = random_prime(rng, bits / 2);
    BigInt q = random_prime(rng, bits - bits / 2);
    if (p == q || bit_length(p * q) != bits) continue;
    if (auto key = rsa_from_factors(p, q)) return *key;
  }
}

inline BigInt rsa_encrypt(const RsaPublicKey& k, const BigInt& m) { return powmod(m, k.e, k.n); }
inline BigInt rsa_decrypt(const RsaPrivateKey& k, const BigInt& c) { return powmod(c, k.d, k.n); }

inline BigInt rsa_digest(const RsaPublicKey& k, ByteView msg) {
  auto h = sha256(msg);
  return bigint_from_bytes(h) % k.n;
}
inline BigInt rsa_sign(const RsaPrivateKey& k, ByteView msg) { return powmod(rsa_digest(k.pub(), msg), k.d, k.n); }
inline bool rsa_verify(const RsaPublicKey& k, ByteView msg, const BigInt& sig) {
  return sig < k.n && powmod(sig, k.e, k.n) == rsa_digest(k, msg);
}

// ---------------------------------------------------------------------------
// Handshake messages.

enum class Role : std::uint8_t { Client = 0, Server = 1 };

struct ClientHello {
  Bytes nonce;
  std::vector<CipherSuite> suites;
};
struct ServerHello {
  Bytes nonce;
  CipherSuite suite;
};
struct RsaKeyParams {
  BigInt n;
  BigInt e;
};
struct DhKeyParams {
  BigInt p;
  BigInt g;
  BigInt ys;
};
struct ServerKeyExchange {
  std::variant<RsaKeyParams, DhKeyParams> params;
  BigInt signature;
};
struct ServerHelloDone {};
struct ClientKeyExchange {
  BigInt exchange;  // RSA-encrypted premaster, or the client's DH share
};
struct Finished {
  Role role;
  Bytes verify_data;
};

using HandshakeMessage =
    std::variant<ClientHello, ServerHello, ServerKeyExchange, ServerHelloDone, ClientKeyExchange, Finished>;

inline constexpr std::size_t kNonceSize = 32;

inline Bytes encode_key_params(const std::variant<RsaKeyParams, DhKeyParams>& params) {
  ByteWriter w;
  if (const auto* rsa = std::get_if<RsaKeyParams>(&params)) {
    w.u8(1);
    write_bigint(w, rsa->n);
    write_bigint(w, rsa->e);
  } else {
    const auto& dh = std::get<DhKeyParams>(params);
    w.u8(2);
    write_bigint(w, dh.p);
    write_bigint(w, dh.g);
    write_bigint(w, dh.ys);
  }
  return std::move(w).bytes();
}

/// What the server signs in ServerKeyExchange: both nonces and the key
/// parameters. The negotiated suite is not covered.
inline Bytes ske_signed_bytes(ByteView client_nonce, ByteView server_nonce,
                              const std::variant<RsaKeyParams, DhKeyParams>& params) {
  ByteWriter w;
  w.str("ske").blob(client_nonce).blob(server_nonce).blob(encode_key_params(params));
  return std::move(w).bytes();
}

inline Bytes serialize(const HandshakeMessage& msg) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(msg.index() + 1));
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ClientHello>) {
          w.blob(m.nonce);
          w.u8(static_cast<std::uint8_t>(m.suites.size()));
          for (auto s : m.suites) w.u8(static_cast<std::uint8_t>(s));
        } else if constexpr (std::is_same_v<T, ServerHello>) {
          w.blob(m.nonce);
          w.u8(static_cast<std::uint8_t>(m.suite));
        } else if constexpr (std::is_same_v<T, ServerKeyExchange>) {
          w.blob(encode_key_params(m.params));
          write_bigint(w, m.signature);
        } else if constexpr (std::is_same_v<T, ServerHelloDone>) {
        } else if constexpr (std::is_same_v<T, ClientKeyExchange>) {
          write_bigint(w, m.exchange);
        } else if constexpr (std::is_same_v<T, Finished>) {
          w.u8(static_cast<std::uint8_t>(m.role));
          w.blob(m.verify_data);
        }
      },
      msg);
  return std::move(w).bytes();
}

inline CipherSuite read_suite(ByteReader& r) {
  auto v = r.u8();
  if (v < 1 || v > 4) fail(Errc::MalformedEncoding, "unknown suite code");
  return static_cast<CipherSuite>(v);
}

inline HandshakeMessage parse_handshake(ByteView bytes) {
  ByteReader r(bytes);
  HandshakeMessage out;
  switch (r.u8()) {
    case 1: {
      ClientHello m;
      m.nonce = r.blob();
      auto n = r.u8();
      for (int i = 0; i < n; ++i) m.suites.push_back(read_suite(r));
      out = std::move(m);
      break;
    }
    case 2: {
      ServerHello m;
      m.nonce = r.blob();
      m.suite = read_suite(r);
      out = std::move(m);
      break;
    }
    case 3: {
      ServerKeyExchange m;
      auto pb = r.blob();
      ByteReader pr(pb);
      auto kind = pr.u8();
      if (kind == 1) {
        RsaKeyParams k;
        k.n = read_bigint(pr);
        k.e = read_bigint(pr);
        m.params = k;
      } else if (kind == 2) {
        DhKeyParams k;
        k.p = read_bigint(pr);
        k.g = read_bigint(pr);
        k.ys = read_bigint(pr);
        m.params = k;
      } else {
        fail(Errc::MalformedEncoding, "unknown key params kind");
      }
      pr.expect_done();
      m.signature = read_bigint(r);
      out = std::move(m);
      break;
    }
    case 4: out = ServerHelloDone{}; break;
    case 5: out = ClientKeyExchange{read_bigint(r)}; break;
    case 6: {
      Finished m;
      auto role = r.u8();
      if (role > 1) fail(Errc::MalformedEncoding, "bad role");
      m.role = static_cast<Role>(role);
      m.verify_data = r.blob();
      out = std::move(m);
      break;
    }
    default: fail(Errc::MalformedEncoding, "unknown handshake message type");
  }
  r.expect_done();
  return out;
}

inline std::string message_type(const HandshakeMessage& msg) {
  static constexpr std::string_view kNames[] = {"ClientHello",     "ServerHello",       "ServerKeyExchange",
                                                "ServerHelloDone", "ClientKeyExchange", "Finished"};
  return std::string(kNames[msg.index()]);
}

/// One-line rendering: message type followed by key=hex fields.
inline std::string describe(const HandshakeMessage& msg) {
  std::ostringstream os;
  os << message_type(msg);
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ClientHello>) {
          Bytes codes;
          for (auto s : m.suites) codes.push_back(static_cast<std::uint8_t>(s));
          os << " nonce=" << to_hex(m.nonce) << " suites=" << to_hex(codes);
        } else if constexpr (std::is_same_v<T, ServerHello>) {
          os << " nonce=" << to_hex(m.nonce) << " suite=" << to_hex(Bytes{static_cast<std::uint8_t>(m.suite)});
        } else if constexpr (std::is_same_v<T, ServerKeyExchange>) {
          if (const auto* rsa = std::get_if<RsaKeyParams>(&m.params))
            os << " rsa_n=" << to_hex(rsa->n) << " rsa_e=" << to_hex(rsa->e);
          else {
            const auto& dh = std::get<DhKeyParams>(m.params);
            os << " dh_p=" << to_hex(dh.p) << " dh_g=" << to_hex(dh.g) << " dh_ys=" << to_hex(dh.ys);
          }
          os << " sig=" << to_hex(m.signature);
        } else if constexpr (std::is_same_v<T, ClientKeyExchange>) {
          os << " exchange=" << to_hex(m.exchange);
        } else if constexpr (std::is_same_v<T, Finished>) {
          os << " role=" << (m.role == Role::Client ? "00" : "01") << " verify=" << to_hex(m.verify_data);
        }
      },
      msg);
  return os.str();
}

// ---------------------------------------------------------------------------
// Key schedule.

inline Bytes derive_session_key(const BigInt& premaster, ByteView client_nonce, ByteView server_nonce) {
  return as_bytes(FieldHasher("tls/kdf").add(to_bytes(premaster)).add(client_nonce).add(server_nonce).digest());
}

/// Running hash input over the handshake messages one side has seen, from
/// ClientHello through ClientKeyExchange.
class TranscriptHash {
 public:
  void reset() { data_.clear(); }
  void add(const HandshakeMessage& msg) {
    auto b = serialize(msg);
    ByteWriter w;
    w.blob(b);
    auto framed = std::move(w).bytes();
    data_.insert(data_.end(), framed.begin(), framed.end());
  }
  Bytes finished(ByteView session_key, Role role) const {
    return as_bytes(FieldHasher("tls/finished")
                        .add(static_cast<std::uint64_t>(role))
                        .add(as_bytes(sha256(data_)))
                        .mac(session_key));
  }

 private:
  Bytes data_;
};

inline Bytes random_nonce(Rng& rng, std::size_t n = kNonceSize) {
  Bytes out(n);
  for (std::size_t i = 0; i < n; i += 8) {
    auto v = rng.next();
    for (std::size_t j = 0; j < 8 && i + j < n; ++j) out[i + j] = static_cast<std::uint8_t>(v >> (8 * j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration.

struct ServerTlsConfig {
  std::string name;
  std::set<CipherSuite> enabled_suites{CipherSuite::RSA, CipherSuite::DHE};
  SimDuration temp_rsa_rotation = std::chrono::hours(1);
  SimDuration connection_lifetime = std::chrono::hours(21);
  unsigned export_rsa_bits = 64;
  unsigned cert_rsa_bits = 256;
  ElGamalParams dhe_params;         // full-strength group
  ElGamalParams dhe_export_params;  // export-grade group
  /// Temporary RSA key stays fixed for a connection's whole life, across
  /// renegotiations. Observed behavior; not configurable.
  static constexpr bool kPinTempKeyToConnection = true;

  void validate() const {
    if (temp_rsa_rotation <= SimDuration::zero()) fail(Errc::ConfigInvalid, name + ": rotation period must be > 0");
    if (connection_lifetime <= SimDuration::zero()) fail(Errc::ConfigInvalid, name + ": connection lifetime must be > 0");
  }
};

struct ClientTlsConfig {
  std::vector<CipherSuite> offered_suites{CipherSuite::RSA, CipherSuite::DHE};
  bool patched = false;

  /// The FREAK flaw: a temporary export RSA key is accepted even when the
  /// negotiated suite is plain RSA.
  bool accepts_unsolicited_export_rsa_key() const { return !patched; }
};

// ---------------------------------------------------------------------------
// Client state machine.

class ClientHandshake {
 public:
  ClientHandshake(ClientTlsConfig cfg, RsaPublicKey trusted_server_key, Rng rng)
      : cfg_(std::move(cfg)), trusted_(std::move(trusted_server_key)), rng_(std::move(rng)) {}

  /// Begins (or restarts, for renegotiation) with a fresh ClientHello. The
  /// nonce may be supplied by the caller.
  ClientHello start(std::optional<Bytes> nonce = std::nullopt,
                    std::optional<std::vector<CipherSuite>> suites = std::nullopt) {
    *this = ClientHandshake(cfg_, trusted_, std::move(rng_));
    ClientHello ch{nonce ? *nonce : random_nonce(rng_), suites ? *suites : cfg_.offered_suites};
    offered_ = ch.suites;
    client_nonce_ = ch.nonce;
    transcript_.add(ch);
    state_ = State::AwaitServerHello;
    return ch;
  }

  std::vector<HandshakeMessage> receive(const HandshakeMessage& msg) {
    if (const auto* sh = std::get_if<ServerHello>(&msg)) {
      expect(State::AwaitServerHello);
      if (std::find(offered_.begin(), offered_.end(), sh->suite) == offered_.end())
        fail(Errc::UnexpectedMessage, "server selected a suite that was not offered");
      suite_ = sh->suite;
      server_nonce_ = sh->nonce;
      transcript_.add(msg);
      state_ = State::AwaitKeyExchangeOrDone;
      return {};
    }
    if (const auto* ske = std::get_if<ServerKeyExchange>(&msg)) {
      expect(State::AwaitKeyExchangeOrDone);
      accept_key_exchange(*ske);
      transcript_.add(msg);
      state_ = State::AwaitDone;
      return {};
    }
    if (std::holds_alternative<ServerHelloDone>(msg)) {
      if (state_ != State::AwaitKeyExchangeOrDone && state_ != State::AwaitDone)
        fail(Errc::UnexpectedMessage, "ServerHelloDone out of order");
      transcript_.add(msg);
      ClientKeyExchange cke = make_key_exchange();
      transcript_.add(cke);
      Finished fin{Role::Client, transcript_.finished(session_key_, Role::Client)};
      state_ = State::AwaitFinished;
      return {cke, fin};
    }
    if (const auto* fin = std::get_if<Finished>(&msg)) {
      expect(State::AwaitFinished);
      if (fin->role != Role::Server || !tags_equal(fin->verify_data, transcript_.finished(session_key_, Role::Server)))
        fail(Errc::FinishedMismatch, "server Finished does not match client transcript");
      state_ = State::Established;
      return {};
    }
    fail(Errc::UnexpectedMessage, "client received " + message_type(msg));
  }

  bool established() const { return state_ == State::Established; }
  CipherSuite suite() const { return *suite_; }
  const Bytes& session_key() const { return session_key_; }
  const Bytes& client_nonce() const { return client_nonce_; }
  const ClientTlsConfig& config() const { return cfg_; }

 private:
  enum class State { Idle, AwaitServerHello, AwaitKeyExchangeOrDone, AwaitDone, AwaitFinished, Established };

  void expect(State s) const {
    if (state_ != s) fail(Errc::UnexpectedMessage, "handshake message out of order");
  }

  void accept_key_exchange(const ServerKeyExchange& ske) {
    const CipherSuite s = *suite_;
    if (const auto* rsa = std::get_if<RsaKeyParams>(&ske.params)) {
      const bool solicited = s == CipherSuite::RSA_EXPORT;
      const bool freak = s == CipherSuite::RSA && cfg_.accepts_unsolicited_export_rsa_key();
      if (!solicited && !freak) fail(Errc::UnexpectedMessage, "unsolicited temporary RSA key");
      verify_signature(ske);
      key_transport_ = RsaPublicKey{rsa->n, rsa->e};
    } else {
      if (!is_dhe(s)) fail(Errc::UnexpectedMessage, "DH parameters for a non-DHE suite");
      const auto& dh = std::get<DhKeyParams>(ske.params);
      verify_signature(ske);
      // Any signed group is accepted; nothing ties its size to the suite.
      if (dh.p < 5 || dh.ys <= 1 || dh.ys >= dh.p - 1) fail(Errc::UnexpectedMessage, "degenerate DH parameters");
      dh_ = dh;
    }
  }

  void verify_signature(const ServerKeyExchange& ske) const {
    if (!rsa_verify(trusted_, ske_signed_bytes(client_nonce_, server_nonce_, ske.params), ske.signature))
      fail(Errc::BadSignature, "ServerKeyExchange signature does not verify");
  }

  ClientKeyExchange make_key_exchange() {
    const CipherSuite s = *suite_;
    BigInt premaster;
    BigInt exchange;
    if (is_dhe(s)) {
      if (!dh_) fail(Errc::UnexpectedMessage, "missing DH parameters");
      BigInt x = random_between(rng_, 2, dh_->p - 2);
      exchange = powmod(dh_->g, x, dh_->p);
      premaster = powmod(dh_->ys, x, dh_->p);
    } else {
      RsaPublicKey target = trusted_;
      if (key_transport_) target = *key_transport_;
      else if (s == CipherSuite::RSA_EXPORT) fail(Errc::UnexpectedMessage, "missing temporary RSA key");
      premaster = random_between(rng_, 2, target.n - 1);
      exchange = rsa_encrypt(target, premaster);
    }
    session_key_ = derive_session_key(premaster, client_nonce_, server_nonce_);
    return ClientKeyExchange{exchange};
  }

  ClientTlsConfig cfg_;
  RsaPublicKey trusted_;
  Rng rng_;
  State state_ = State::Idle;
  std::vector<CipherSuite> offered_;
  std::optional<CipherSuite> suite_;
  Bytes client_nonce_, server_nonce_;
  std::optional<RsaPublicKey> key_transport_;
  std::optional<DhKeyParams> dh_;
  Bytes session_key_;
  TranscriptHash transcript_;
};

// ---------------------------------------------------------------------------
// Server side.

class ServerConnection;

/// A TLS server instance: certificate key, suite policy and the rotating
/// temporary export RSA key.
class TlsServer {
 public:
  TlsServer(ServerTlsConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
    cfg_.validate();
    Rng rng = Rng(seed).fork("tls/cert");
    cert_ = gen_rsa(cfg_.cert_rsa_bits, rng);
  }

  const ServerTlsConfig& config() const { return cfg_; }
  ServerTlsConfig& mutable_config() { return cfg_; }
  RsaPublicKey certificate() const { return cert_.pub(); }
  const RsaPrivateKey& cert_key() const { return cert_; }

  std::int64_t rotation_epoch(SimTime now) const { return ticks(now) / cfg_.temp_rsa_rotation.count(); }

  /// The temporary key in force at `now`; a new one every rotation period.
  const RsaPrivateKey& temp_rsa_key(SimTime now) {
    auto epoch = rotation_epoch(now);
    auto it = temp_keys_.find(epoch);
    if (it == temp_keys_.end()) {
      Rng rng = Rng(seed_).fork("tls/temp-rsa", static_cast<std::uint64_t>(epoch));
      it = temp_keys_.emplace(epoch, gen_rsa(cfg_.export_rsa_bits, rng)).first;
    }
    return it->second;
  }

  std::unique_ptr<ServerConnection> accept(SimTime now);

 private:
  ServerTlsConfig cfg_;
  std::uint64_t seed_;
  RsaPrivateKey cert_;
  std::map<std::int64_t, RsaPrivateKey> temp_keys_;
  std::uint64_t accepted_ = 0;
};

/// Server end of one connection. A ClientHello after the first starts a
/// renegotiation that reuses the connection's pinned temporary key.
class ServerConnection {
 public:
  ServerConnection(TlsServer& server, SimTime opened, Rng rng)
      : server_(&server), opened_(opened), rng_(std::move(rng)), pinned_(server.temp_rsa_key(opened)) {}

  bool is_open(SimTime now) const { return !closed_ && now - opened_ < server_->config().connection_lifetime; }
  void close() { closed_ = true; }

  std::vector<HandshakeMessage> receive(const HandshakeMessage& msg, SimTime now) {
    if (!is_open(now)) fail(Errc::ConnectionClosed, "connection closed");
    if (const auto* ch = std::get_if<ClientHello>(&msg)) return on_client_hello(*ch);
    if (const auto* cke = std::get_if<ClientKeyExchange>(&msg)) {
      expect(State::AwaitKeyExchange);
      transcript_.add(msg);
      session_key_candidate_ = derive_session_key(recover_premaster(cke->exchange), client_nonce_, server_nonce_);
      state_ = State::AwaitFinished;
      return {};
    }
    if (const auto* fin = std::get_if<Finished>(&msg)) {
      expect(State::AwaitFinished);
      if (fin->role != Role::Client ||
          !tags_equal(fin->verify_data, transcript_.finished(session_key_candidate_, Role::Client)))
        fail(Errc::FinishedMismatch, "client Finished does not match server transcript");
      session_key_ = session_key_candidate_;
      state_ = State::Established;
      return {Finished{Role::Server, transcript_.finished(session_key_, Role::Server)}};
    }
    fail(Errc::UnexpectedMessage, "server received " + message_type(msg));
  }

  const RsaPrivateKey& pinned_temp_key() const { return pinned_; }
  std::optional<Bytes> session_key() const {
    if (state_ != State::Established) return std::nullopt;
    return session_key_;
  }
  bool established() const { return state_ == State::Established; }
  int renegotiation_count() const { return std::max(0, hellos_ - 1); }
  std::optional<CipherSuite> suite() const { return suite_; }
  SimTime opened() const { return opened_; }

 private:
  enum class State { AwaitHello, AwaitKeyExchange, AwaitFinished, Established };

  void expect(State s) const {
    if (state_ != s) fail(Errc::UnexpectedMessage, "handshake message out of order");
  }

  std::vector<HandshakeMessage> on_client_hello(const ClientHello& ch) {
    ++hellos_;
    state_ = State::AwaitHello;
    transcript_.reset();
    dh_secret_.reset();
    const auto& enabled = server_->config().enabled_suites;
    std::optional<CipherSuite> chosen;
    for (auto s : ch.suites) {
      if (enabled.contains(s)) {
        chosen = s;
        break;
      }
    }
    if (!chosen) fail(Errc::NoCommonSuite, "no offered suite is enabled on " + server_->config().name);
    suite_ = chosen;
    client_nonce_ = ch.nonce;
    server_nonce_ = random_nonce(rng_);
    transcript_.add(ch);

    std::vector<HandshakeMessage> out;
    out.push_back(ServerHello{server_nonce_, *chosen});
    if (*chosen == CipherSuite::RSA_EXPORT) {
      RsaKeyParams params{pinned_.n, pinned_.e};
      out.push_back(sign_params(params));
    } else if (is_dhe(*chosen)) {
      const auto& group =
          *chosen == CipherSuite::DHE ? server_->config().dhe_params : server_->config().dhe_export_params;
      BigInt x = random_between(rng_, 1, group.q - 1);
      dh_secret_ = x;
      dh_group_ = group;
      out.push_back(sign_params(DhKeyParams{group.p, group.g, powmod(group.g, x, group.p)}));
    }
    out.push_back(ServerHelloDone{});
    for (const auto& m : out) transcript_.add(m);
    state_ = State::AwaitKeyExchange;
    return out;
  }

  ServerKeyExchange sign_params(std::variant<RsaKeyParams, DhKeyParams> params) const {
    BigInt sig = rsa_sign(server_->cert_key(), ske_signed_bytes(client_nonce_, server_nonce_, params));
    return ServerKeyExchange{std::move(params), sig};
  }

  BigInt recover_premaster(const BigInt& exchange) const {
    switch (*suite_) {
      case CipherSuite::RSA: return rsa_decrypt(server_->cert_key(), exchange);
      case CipherSuite::RSA_EXPORT: return rsa_decrypt(pinned_, exchange);
      case CipherSuite::DHE:
      case CipherSuite::DHE_EXPORT:
        if (exchange <= 1 || exchange >= dh_group_.p - 1) fail(Errc::UnexpectedMessage, "degenerate DH share");
        return powmod(exchange, *dh_secret_, dh_group_.p);
    }
    return 0;
  }

  TlsServer* server_;
  SimTime opened_;
  Rng rng_;
  RsaPrivateKey pinned_;
  bool closed_ = false;
  State state_ = State::AwaitHello;
  int hellos_ = 0;
  std::optional<CipherSuite> suite_;
  Bytes client_nonce_, server_nonce_;
  std::optional<BigInt> dh_secret_;
  ElGamalParams dh_group_;
  Bytes session_key_candidate_, session_key_;
  TranscriptHash transcript_;
};

inline std::unique_ptr<ServerConnection> TlsServer::accept(SimTime now) {
  Rng rng = Rng(seed_).fork("tls/conn", accepted_++);
  return std::make_unique<ServerConnection>(*this, now, std::move(rng));
}

// ---------------------------------------------------------------------------
// Transcripts and the in-process driver.

enum class Direction { ClientToServer, ServerToClient };

struct TranscriptEntry {
  Direction direction;
  HandshakeMessage message;
};

struct HandshakeTranscript {
  std::vector<TranscriptEntry> messages;  // as the client saw them
  std::optional<CipherSuite> negotiated_suite;
  Bytes session_key;
  int renegotiation_count = 0;

  /// Line-oriented dump: "C>S <Type> field=hex ..." per message.
  std::string to_log() const {
    std::ostringstream os;
    for (const auto& e : messages)
      os << (e.direction == Direction::ClientToServer ? "C>S " : "S>C ") << describe(e.message) << '\n';
    return os.str();
  }

  template <class T>
  std::vector<T> all() const {
    std::vector<T> out;
    for (const auto& e : messages)
      if (const auto* m = std::get_if<T>(&e.message)) out.push_back(*m);
    return out;
  }
};

struct Routed {
  std::vector<HandshakeMessage> to_server;
  std::vector<HandshakeMessage> to_client;
};

/// Something sitting on the wire between client and server. Each message a
/// side emits is handed to the interposer, which decides what each side
/// actually receives.
class Interposer {
 public:
  virtual ~Interposer() = default;
  virtual Routed from_client(const HandshakeMessage& msg) = 0;
  virtual Routed from_server(const HandshakeMessage& msg) = 0;
};

class Passthrough final : public Interposer {
 public:
  Routed from_client(const HandshakeMessage& msg) override { return {{msg}, {}}; }
  Routed from_server(const HandshakeMessage& msg) override { return {{}, {msg}}; }
};

/// Applies a mutation to every message of one type in one direction.
class MutatingChannel final : public Interposer {
 public:
  using Mutator = std::function<void(HandshakeMessage&)>;
  MutatingChannel(Direction dir, std::size_t message_index, Mutator m)
      : dir_(dir), index_(message_index), mutate_(std::move(m)) {}

  Routed from_client(const HandshakeMessage& msg) override {
    auto copy = msg;
    if (dir_ == Direction::ClientToServer && msg.index() == index_) mutate_(copy);
    return {{copy}, {}};
  }
  Routed from_server(const HandshakeMessage& msg) override {
    auto copy = msg;
    if (dir_ == Direction::ServerToClient && msg.index() == index_) mutate_(copy);
    return {{}, {copy}};
  }

 private:
  Direction dir_;
  std::size_t index_;
  Mutator mutate_;
};

struct HandshakeOutcome {
  HandshakeTranscript transcript;
  bool client_established = false;
  std::optional<Bytes> client_key;
  std::optional<Bytes> server_key;
};

/// Pumps messages between a client state machine and a server connection
/// through `channel` until both queues drain. Errors raised by either
/// endpoint propagate as ivotesim::Error.
inline HandshakeOutcome drive_handshake(ClientHandshake& client, ServerConnection* server, Interposer& channel,
                                        SimTime now, const ClientHello& first) {
  HandshakeOutcome out;
  struct Pending {
    bool to_server;
    HandshakeMessage msg;
  };
  std::vector<Pending> queue;
  std::size_t head = 0;
  auto route = [&](const Routed& r) {
    for (const auto& m : r.to_server) queue.push_back({true, m});
    for (const auto& m : r.to_client) queue.push_back({false, m});
  };
  out.transcript.messages.push_back({Direction::ClientToServer, first});
  route(channel.from_client(first));
  while (head < queue.size()) {
    Pending p = queue[head++];
    if (p.to_server) {
      if (!server) continue;
      for (const auto& reply : server->receive(p.msg, now)) route(channel.from_server(reply));
    } else {
      out.transcript.messages.push_back({Direction::ServerToClient, p.msg});
      for (const auto& reply : client.receive(p.msg)) {
        out.transcript.messages.push_back({Direction::ClientToServer, reply});
        route(channel.from_client(reply));
      }
    }
  }
  out.client_established = client.established();
  if (client.established()) {
    out.client_key = client.session_key();
    out.transcript.negotiated_suite = client.suite();
    out.transcript.session_key = client.session_key();
  }
  if (server) {
    out.server_key = server->session_key();
    out.transcript.renegotiation_count = server->renegotiation_count();
  }
  return out;
}

/// A fresh connection's full handshake over `channel`.
inline HandshakeOutcome handshake(const ClientTlsConfig& client_cfg, TlsServer& server, Interposer& channel, Rng rng,
                                  SimTime now = SimTime{}) {
  ClientHandshake client(client_cfg, server.certificate(), rng.fork("client"));
  auto conn = server.accept(now);
  auto hello = client.start();
  return drive_handshake(client, conn.get(), channel, now, hello);
}

inline HandshakeOutcome handshake(const ClientTlsConfig& client_cfg, TlsServer& server, Rng rng,
                                  SimTime now = SimTime{}) {
  Passthrough honest;
  return handshake(client_cfg, server, honest, std::move(rng), now);
}

/// A live, honestly routed client connection to `server`; the attacker's
/// long-lived renegotiation channel is one of these.
class Connection {
 public:
  Connection(TlsServer& server, ClientTlsConfig cfg, SimTime now, Rng rng)
      : client_(cfg, server.certificate(), rng.fork("client")), server_conn_(server.accept(now)) {
    auto hello = client_.start();
    Passthrough honest;
    transcript_ = drive_handshake(client_, server_conn_.get(), honest, now, hello).transcript;
  }

  bool is_open(SimTime now) const { return server_conn_->is_open(now); }
  void close() { server_conn_->close(); }
  const HandshakeTranscript& transcript() const { return transcript_; }
  const ServerConnection& server_side() const { return *server_conn_; }

  /// Client-initiated renegotiation with a fresh nonce.
  HandshakeTranscript renegotiate(SimTime now) {
    if (!is_open(now)) fail(Errc::ConnectionClosed, "renegotiate on a closed connection");
    auto hello = client_.start();
    Passthrough honest;
    transcript_ = drive_handshake(client_, server_conn_.get(), honest, now, hello).transcript;
    return transcript_;
  }

  struct SignedOffer {
    ServerHello server_hello;
    ServerKeyExchange key_exchange;
  };

  /// Starts a renegotiation whose ClientHello carries `victim_nonce` and asks
  /// only for RSA_EXPORT, and returns the server's signed key offer. The
  /// renegotiation is then abandoned.
  SignedOffer signature_oracle(const Bytes& victim_nonce, SimTime now) {
    if (!is_open(now)) fail(Errc::ConnectionClosed, "signature oracle on a closed connection");
    ClientHello ch{victim_nonce, {CipherSuite::RSA_EXPORT}};
    auto replies = server_conn_->receive(ch, now);
    SignedOffer offer{};
    bool have_hello = false, have_ske = false;
    for (const auto& m : replies) {
      if (const auto* sh = std::get_if<ServerHello>(&m)) offer.server_hello = *sh, have_hello = true;
      if (const auto* ske = std::get_if<ServerKeyExchange>(&m)) offer.key_exchange = *ske, have_ske = true;
    }
    if (!have_hello || !have_ske) fail(Errc::UnexpectedMessage, "server did not offer a temporary key");
    ++oracle_queries_;
    return offer;
  }

  int oracle_queries() const { return oracle_queries_; }

 private:
  ClientHandshake client_;
  std::unique_ptr<ServerConnection> server_conn_;
  HandshakeTranscript transcript_;
  int oracle_queries_ = 0;
};

inline HandshakeTranscript renegotiate(Connection& conn, SimTime now) { return conn.renegotiate(now); }

inline Connection::SignedOffer signature_oracle(Connection& conn, const Bytes& victim_nonce, SimTime now) {
  return conn.signature_oracle(victim_nonce, now);
}

// ---------------------------------------------------------------------------
// Application records.

inline Bytes record_nonce(Role sender, std::uint64_t seq) {
  auto d = FieldHasher("tls/record-nonce").add(static_cast<std::uint64_t>(sender)).add(seq).digest();
  return Bytes(d.begin(), d.begin() + StreamAead::kNonceSize);
}

inline Bytes record_aad(Role sender, std::uint64_t seq) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(sender)).u64(seq);
  return std::move(w).bytes();
}

inline Bytes seal_record(ByteView key, Role sender, std::uint64_t seq, ByteView plaintext) {
  return StreamAead(key).seal(record_nonce(sender, seq), plaintext, record_aad(sender, seq));
}

/// AuthFailure on any tampering, wrong key, or out-of-sequence record.
inline Bytes open_record(ByteView key, Role sender, std::uint64_t seq, ByteView sealed) {
  return StreamAead(key).open(sealed, record_aad(sender, seq));
}

}  // namespace ivotesim::tls
