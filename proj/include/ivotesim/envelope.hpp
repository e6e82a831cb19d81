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
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>

#include "ivotesim/aead.hpp"
#include "ivotesim/bigint.hpp"
#include "ivotesim/bytes.hpp"
#include "ivotesim/error.hpp"
#include "ivotesim/fixtures.hpp"
#include "ivotesim/hash.hpp"
#include "ivotesim/rng.hpp"

namespace ivotesim {

// ---------------------------------------------------------------------------
// ElGamal over a prime-order subgroup of Z_p^*.

struct ElGamalParams {
  BigInt p;
  BigInt q;  // order of the subgroup generated by g
  BigInt g;
  unsigned bit_length = 0;
  /// False for constant records (the historical 512-bit group) that are kept
  /// as metadata and never produced by the generator.
  bool generable = true;

  friend bool operator==(const ElGamalParams& a, const ElGamalParams& b) {
    return a.p == b.p && a.q == b.q && a.g == b.g;
  }

  bool in_subgroup(const BigInt& m) const { return m > 0 && m < p && powmod(m, q, p) == 1; }

  /// Throws ConfigInvalid unless p and q are prime, 1 < g < p and g^q = 1.
  void validate() const {
    if (!is_prime(p) || !is_prime(q)) fail(Errc::ConfigInvalid, "group modulus or order is not prime");
    if (g <= 1 || g >= p || powmod(g, q, p) != 1) fail(Errc::ConfigInvalid, "bad subgroup generator");
    if ((p - 1) % q != 0) fail(Errc::ConfigInvalid, "subgroup order does not divide p - 1");
  }
};

/// Random generator of the order-q subgroup; rejects the degenerate g = 1.
inline BigInt find_subgroup_generator(const BigInt& p, const BigInt& q, Rng& rng) {
  const BigInt cofactor = (p - 1) / q;
  for (;;) {
    BigInt h = random_between(rng, 2, p - 2);
    BigInt g = powmod(h, cofactor, p);
    if (g != 1) return g;
  }
}

inline ElGamalParams historical_export_group() {
  ElGamalParams params;
  params.p = bigint_from_hex(fixtures::kHistoricalExportDhPrime);
  params.q = (params.p - 1) / 2;
  params.g = 2;
  params.bit_length = fixtures::kHistoricalExportBits;
  params.generable = false;
  return params;
}

/// Safe-prime group (p = 2q + 1, g generating the quadratic residues) for
/// 32, 64 or 128 bits. 512 returns the historical export group record.
inline ElGamalParams gen_params(unsigned bits, Rng& rng) {
  if (bits == fixtures::kHistoricalExportBits) return historical_export_group();
  if (bits != 32 && bits != 64 && bits != 128)
    fail(Errc::UnsupportedSize, "group size " + std::to_string(bits) + " not in {32, 64, 128, 512}");
  ElGamalParams params;
  std::tie(params.p, params.q) = random_safe_prime(rng, bits);
  params.g = find_subgroup_generator(params.p, params.q, rng);
  params.bit_length = bits;
  return params;
}

/// Schnorr group: p with `p_bits` bits whose p - 1 has a prime factor q of
/// `q_bits` bits. Used for export-grade DHE where a safe prime would leave
/// the subgroup too large for desk-scale discrete logs.
inline ElGamalParams gen_schnorr_params(unsigned p_bits, unsigned q_bits, Rng& rng) {
  if (q_bits + 2 > p_bits || q_bits < 8) fail(Errc::UnsupportedSize, "bad Schnorr group sizes");
  BigInt q = random_prime(rng, q_bits);
  for (;;) {
    BigInt k = random_bits(rng, p_bits - q_bits);
    if (k % 2 != 0) k += 1;
    BigInt p = k * q + 1;
    if (bit_length(p) != p_bits || !is_prime(p)) continue;
    ElGamalParams params;
    params.p = p;
    params.q = q;
    params.g = find_subgroup_generator(p, q, rng);
    params.bit_length = p_bits;
    return params;
  }
}

struct ElGamalKeyPair {
  BigInt x;  // secret exponent in [1, q-1]
  BigInt y;  // g^x mod p
};

inline ElGamalKeyPair gen_keypair(const ElGamalParams& params, Rng& rng) {
  ElGamalKeyPair kp;
  kp.x = random_between(rng, 1, params.q - 1);
  kp.y = powmod(params.g, kp.x, params.p);
  return kp;
}

struct ElGamalCiphertext {
  BigInt c1;
  BigInt c2;
  friend bool operator==(const ElGamalCiphertext&, const ElGamalCiphertext&) = default;
};

/// Messages must already be subgroup elements (see the envelope's
/// exponent encoding); anything else is MessageOutOfRange.
inline ElGamalCiphertext elgamal_encrypt(const ElGamalParams& params, const BigInt& y, const BigInt& msg, Rng& rng) {
  if (!params.in_subgroup(msg)) fail(Errc::MessageOutOfRange, "message is not a subgroup element");
  BigInt r = random_between(rng, 1, params.q - 1);
  return {powmod(params.g, r, params.p), mulmod(msg, powmod(y, r, params.p), params.p)};
}

inline BigInt elgamal_decrypt(const ElGamalParams& params, const BigInt& x, const ElGamalCiphertext& ct) {
  // c1^(q - x) is the inverse of c1^x inside the subgroup.
  BigInt shared_inv = powmod(ct.c1, params.q - (x % params.q), params.p);
  return mulmod(ct.c2, shared_inv, params.p);
}

// ---------------------------------------------------------------------------
// Digital envelope.

struct ElGamalPublicKey {
  ElGamalParams params;
  BigInt y;
};

enum class EnvelopeServer { Election, Verification };

struct DigitalEnvelope {
  ElGamalCiphertext wrapped_key_election;
  ElGamalCiphertext wrapped_key_verification;
  Bytes vote_ciphertext;  // nonce || stream ciphertext || tag
  Bytes client_signature;

  friend bool operator==(const DigitalEnvelope&, const DigitalEnvelope&) = default;

  /// Bytes bound into the symmetric tag and covered by the client signature.
  Bytes wrapped_keys_bytes() const {
    ByteWriter w;
    write_bigint(w, wrapped_key_election.c1);
    write_bigint(w, wrapped_key_election.c2);
    write_bigint(w, wrapped_key_verification.c1);
    write_bigint(w, wrapped_key_verification.c2);
    return std::move(w).bytes();
  }

  Bytes serialize() const {
    ByteWriter w;
    w.raw(wrapped_keys_bytes());
    w.blob(vote_ciphertext);
    w.blob(client_signature);
    return std::move(w).bytes();
  }

  static DigitalEnvelope deserialize(ByteView bytes) {
    ByteReader r(bytes);
    DigitalEnvelope e;
    e.wrapped_key_election.c1 = read_bigint(r);
    e.wrapped_key_election.c2 = read_bigint(r);
    e.wrapped_key_verification.c1 = read_bigint(r);
    e.wrapped_key_verification.c2 = read_bigint(r);
    e.vote_ciphertext = r.blob();
    e.client_signature = r.blob();
    r.expect_done();
    return e;
  }
};

namespace detail {
inline Digest envelope_key(const BigInt& element) { return FieldHasher("envelope/key").add(to_bytes(element)).digest(); }
}  // namespace detail

/// The symmetric key is a random subgroup element g^k; the stream key is its
/// hash. The element is wrapped once under each server key.
inline DigitalEnvelope seal(ByteView ballot_bytes, const ElGamalPublicKey& election_pub,
                            const ElGamalPublicKey& verification_pub, Rng& rng) {
  if (!(election_pub.params == verification_pub.params))
    fail(Errc::MessageOutOfRange, "server keys are not in a common group");
  const auto& params = election_pub.params;
  BigInt element = powmod(params.g, random_between(rng, 1, params.q - 1), params.p);

  DigitalEnvelope env;
  env.wrapped_key_election = elgamal_encrypt(params, election_pub.y, element, rng);
  env.wrapped_key_verification = elgamal_encrypt(params, verification_pub.y, element, rng);
  Bytes nonce(StreamAead::kNonceSize);
  for (std::size_t i = 0; i < nonce.size(); i += 8) {
    std::uint64_t v = rng.next();
    for (std::size_t j = 0; j < 8; ++j) nonce[i + j] = static_cast<std::uint8_t>(v >> (8 * j));
  }
  auto key = detail::envelope_key(element);
  env.vote_ciphertext = StreamAead(key).seal(nonce, ballot_bytes, env.wrapped_keys_bytes());
  return env;
}

/// Any failure, including a secret key that does not match the selected
/// wrapped key, is reported as AuthFailure.
inline Bytes open(const DigitalEnvelope& env, EnvelopeServer which, const ElGamalParams& params,
                  const BigInt& secret) {
  const auto& wrapped =
      which == EnvelopeServer::Election ? env.wrapped_key_election : env.wrapped_key_verification;
  if (!params.in_subgroup(wrapped.c1) || !params.in_subgroup(wrapped.c2)) fail(Errc::AuthFailure, "bad wrapped key");
  BigInt element = elgamal_decrypt(params, secret, wrapped);
  return StreamAead(detail::envelope_key(element)).open(env.vote_ciphertext, env.wrapped_keys_bytes());
}

inline Bytes signature_message(const DigitalEnvelope& env) {
  ByteWriter w;
  w.blob(env.wrapped_keys_bytes());
  w.blob(env.vote_ciphertext);
  return std::move(w).bytes();
}

inline void sign_envelope(DigitalEnvelope& env, ByteView signing_key) {
  env.client_signature = as_bytes(hmac_sha256(signing_key, signature_message(env)));
}

inline bool verify_envelope_signature(const DigitalEnvelope& env, ByteView signing_key) {
  return tags_equal(hmac_sha256(signing_key, signature_message(env)), env.client_signature);
}

// ---------------------------------------------------------------------------
// Credentials.

namespace detail {
inline bool all_digits(const std::string& s, std::size_t len) {
  return s.size() == len && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}
inline std::string random_digits(Rng& rng, std::size_t len) {
  std::string s(len, '0');
  for (auto& c : s) c = static_cast<char>('0' + rng.below(10));
  return s;
}
}  // namespace detail

template <std::size_t Digits, class Tag>
class DigitString {
 public:
  static constexpr std::size_t kDigits = Digits;
  DigitString() = default;
  explicit DigitString(std::string s) : value_(std::move(s)) {
    if (!detail::all_digits(value_, Digits))
      fail(Errc::MalformedEncoding, "expected " + std::to_string(Digits) + " decimal digits");
  }
  const std::string& str() const { return value_; }
  friend auto operator<=>(const DigitString&, const DigitString&) = default;

 private:
  std::string value_;
};

using IVoteId = DigitString<8, struct IVoteIdTag>;
using Pin = DigitString<6, struct PinTag>;
using ReceiptNumber = DigitString<12, struct ReceiptTag>;

struct Credentials {
  IVoteId ivote_id;
  Pin pin;
  std::optional<ReceiptNumber> receipt;  // assigned when a vote is accepted
};

/// Issues zero-padded random numbers of a fixed digit length, never the same
/// one twice. Single writer.
template <class Number>
class UniqueNumberRegistry {
 public:
  Number issue(Rng& rng) {
    if (issued_.size() >= capacity()) fail(Errc::RegistryExhausted, "all numbers issued");
    for (;;) {
      auto s = detail::random_digits(rng, Number::kDigits);
      if (issued_.insert(s).second) return Number(std::move(s));
    }
  }
  bool contains(const Number& n) const { return issued_.contains(n.str()); }
  std::size_t size() const { return issued_.size(); }

 private:
  static constexpr std::size_t capacity() {
    std::size_t c = 1;
    for (std::size_t i = 0; i < Number::kDigits; ++i) c *= 10;
    return c;
  }
  std::unordered_set<std::string> issued_;
};

class CredentialRegistry {
 public:
  /// Fresh unique iVote ID. The PIN is `pin_choice` when given (voter's own
  /// choice, or one assigned by whoever runs the registration page);
  /// otherwise a random one.
  Credentials issue_credentials(std::optional<Pin> pin_choice, Rng& rng) {
    Credentials c;
    c.ivote_id = ids_.issue(rng);
    c.pin = pin_choice ? *pin_choice : Pin(detail::random_digits(rng, Pin::kDigits));
    return c;
  }

  bool issued(const IVoteId& id) const { return ids_.contains(id); }
  std::size_t size() const { return ids_.size(); }

 private:
  UniqueNumberRegistry<IVoteId> ids_;
};

using ReceiptRegistry = UniqueNumberRegistry<ReceiptNumber>;

}  // namespace ivotesim
