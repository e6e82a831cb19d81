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

#include <boost/multiprecision/cpp_int.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "ivotesim/bytes.hpp"
#include "ivotesim/error.hpp"
#include "ivotesim/rng.hpp"

namespace ivotesim {

using BigInt = boost::multiprecision::cpp_int;
using u128 = unsigned __int128;

inline unsigned bit_length(const BigInt& n) {
  return n == 0 ? 0 : static_cast<unsigned>(boost::multiprecision::msb(n)) + 1;
}

inline bool fits_u64(const BigInt& n) { return n >= 0 && bit_length(n) <= 64; }

inline std::uint64_t mulmod64(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return static_cast<std::uint64_t>(static_cast<u128>(a) * b % m);
}

inline std::uint64_t powmod64(std::uint64_t base, std::uint64_t exp, std::uint64_t m) {
  std::uint64_t result = 1 % m;
  base %= m;
  while (exp) {
    if (exp & 1) result = mulmod64(result, base, m);
    base = mulmod64(base, base, m);
    exp >>= 1;
  }
  return result;
}

inline BigInt powmod(const BigInt& base, const BigInt& exp, const BigInt& m) {
  if (fits_u64(m) && fits_u64(exp) && base >= 0) {
    auto b = static_cast<std::uint64_t>(base % m);
    return BigInt(powmod64(b, static_cast<std::uint64_t>(exp), static_cast<std::uint64_t>(m)));
  }
  return boost::multiprecision::powm(base, exp, m);
}

inline BigInt mulmod(const BigInt& a, const BigInt& b, const BigInt& m) { return (a * b) % m; }

/// Modular inverse via extended Euclid; returns 0 when gcd(a, m) != 1.
inline BigInt modinv(BigInt a, const BigInt& m) {
  BigInt old_r = ((a % m) + m) % m, r = m;
  BigInt old_s = 1, s = 0;
  while (r != 0) {
    BigInt q = old_r / r;
    BigInt t = old_r - q * r;
    old_r = r;
    r = t;
    t = old_s - q * s;
    old_s = s;
    s = t;
  }
  if (old_r != 1) return 0;
  return ((old_s % m) + m) % m;
}

namespace detail {

inline constexpr std::array<std::uint32_t, 20> kWitnesses = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                                             31, 37, 41, 43, 47, 53, 59, 61, 67, 71};

inline bool miller_rabin_u64(std::uint64_t n) {
  if (n < 2) return false;
  for (std::uint64_t p : kWitnesses) {
    if (n % p == 0) return n == p;
  }
  std::uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  // The first twelve prime bases are a deterministic test below 2^64.
  for (int i = 0; i < 12; ++i) {
    std::uint64_t x = powmod64(kWitnesses[i], d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = mulmod64(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

}  // namespace detail

/// Deterministic below 2^64; above that a fixed-base Miller-Rabin (20 bases),
/// which is adequate for the non-adversarial parameters generated here.
inline bool is_prime(const BigInt& n) {
  if (n < 2) return false;
  if (fits_u64(n)) return detail::miller_rabin_u64(static_cast<std::uint64_t>(n));
  for (std::uint32_t p : detail::kWitnesses) {
    if (n % p == 0) return false;
  }
  static constexpr std::array<std::uint32_t, 120> kSmall = {
      73,  79,  83,  89,  97,  101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
      179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281,
      283, 293, 307, 311, 313, 317, 331, 337, 347, 349, 353, 359, 367, 373, 379, 383, 389, 397, 401, 409,
      419, 421, 431, 433, 439, 443, 449, 457, 461, 463, 467, 479, 487, 491, 499, 503, 509, 521, 523, 541,
      547, 557, 563, 569, 571, 577, 587, 593, 599, 601, 607, 613, 617, 619, 631, 641, 643, 647, 653, 659,
      661, 673, 677, 683, 691, 701, 709, 719, 727, 733, 739, 743, 751, 757, 761, 769, 773, 787, 797, 809};
  for (std::uint32_t p : kSmall) {
    if (n % p == 0) return false;
  }
  BigInt d = n - 1;
  unsigned s = 0;
  while (!boost::multiprecision::bit_test(d, 0)) {
    d >>= 1;
    ++s;
  }
  for (std::uint32_t a : detail::kWitnesses) {
    BigInt x = boost::multiprecision::powm(BigInt(a), d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (unsigned r = 1; r < s; ++r) {
      x = (x * x) % n;
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

/// Uniform random integer with exactly `bits` bits (top bit set).
inline BigInt random_bits(Rng& rng, unsigned bits) {
  BigInt v = 0;
  unsigned have = 0;
  while (have < bits) {
    v <<= 64;
    v |= rng.next();
    have += 64;
  }
  v >>= (have - bits);
  boost::multiprecision::bit_set(v, bits - 1);
  return v;
}

/// Uniform in [0, n).
inline BigInt random_below(Rng& rng, const BigInt& n) {
  if (fits_u64(n)) return BigInt(rng.below(static_cast<std::uint64_t>(n)));
  const unsigned bits = bit_length(n);
  for (;;) {
    BigInt v = 0;
    unsigned have = 0;
    while (have < bits) {
      v <<= 64;
      v |= rng.next();
      have += 64;
    }
    v >>= (have - bits);
    if (v < n) return v;
  }
}

/// Uniform in [lo, hi].
inline BigInt random_between(Rng& rng, const BigInt& lo, const BigInt& hi) {
  return lo + random_below(rng, hi - lo + 1);
}

inline BigInt random_prime(Rng& rng, unsigned bits) {
  for (;;) {
    BigInt c = random_bits(rng, bits) | 1;
    if (is_prime(c)) return c;
  }
}

/// Safe prime p = 2q + 1 with exactly `bits` bits; returns {p, q}.
inline std::pair<BigInt, BigInt> random_safe_prime(Rng& rng, unsigned bits) {
  for (;;) {
    BigInt q = random_bits(rng, bits - 1) | 1;
    // q = 2 mod 3 is required for p = 2q + 1 to avoid 3 | p.
    if (q % 3 != 2) continue;
    BigInt p = 2 * q + 1;
    if (bit_length(p) != bits) continue;
    if (is_prime(q) && is_prime(p)) return {p, q};
  }
}

inline std::string to_hex(const BigInt& n) {
  if (n == 0) return "0";
  std::string out;
  BigInt v = n;
  static constexpr char kDigits[] = "0123456789abcdef";
  while (v > 0) {
    out.push_back(kDigits[static_cast<unsigned>(v & 0xf)]);
    v >>= 4;
  }
  return std::string(out.rbegin(), out.rend());
}

inline BigInt bigint_from_hex(std::string_view hex) {
  if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
  if (hex.empty()) fail(Errc::MalformedEncoding, "empty hex integer");
  BigInt v = 0;
  for (char c : hex) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else fail(Errc::MalformedEncoding, "non-hex character in integer");
    v = (v << 4) | d;
  }
  return v;
}

/// Minimal big-endian magnitude; zero encodes as an empty string.
inline Bytes to_bytes(const BigInt& n) {
  Bytes out;
  boost::multiprecision::export_bits(n, std::back_inserter(out), 8);
  if (out.size() == 1 && out[0] == 0) out.clear();
  return out;
}

inline BigInt bigint_from_bytes(ByteView b) {
  BigInt v = 0;
  if (!b.empty()) boost::multiprecision::import_bits(v, b.begin(), b.end(), 8);
  return v;
}

inline void write_bigint(ByteWriter& w, const BigInt& n) { w.blob(to_bytes(n)); }
inline BigInt read_bigint(ByteReader& r) { return bigint_from_bytes(r.blob()); }

}  // namespace ivotesim
