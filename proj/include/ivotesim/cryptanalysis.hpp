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
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/integer/common_factor_rt.hpp>

#include "ivotesim/bigint.hpp"
#include "ivotesim/envelope.hpp"
#include "ivotesim/error.hpp"
#include "ivotesim/minitls.hpp"

namespace ivotesim::crypto {

// ---------------------------------------------------------------------------
// Factoring: Pollard rho with Brent's cycle detection and batched gcds.

struct FactoringBudget {
  std::uint64_t max_iterations = std::uint64_t{1} << 26;
};

namespace detail {

struct U64Ops {
  std::uint64_t n;
  std::uint64_t c;
  std::uint64_t f(std::uint64_t x) const {
    u128 v = static_cast<u128>(x) * x + c;
    return static_cast<std::uint64_t>(v % n);
  }
  std::uint64_t mul(std::uint64_t a, std::uint64_t b) const { return mulmod64(a, b, n); }
  static std::uint64_t diff(std::uint64_t a, std::uint64_t b) { return a > b ? a - b : b - a; }
  std::uint64_t gcd(std::uint64_t a) const { return std::gcd(a, n); }
};

struct BigOps {
  BigInt n;
  BigInt c;
  BigInt f(const BigInt& x) const { return (x * x + c) % n; }
  BigInt mul(const BigInt& a, const BigInt& b) const { return (a * b) % n; }
  static BigInt diff(const BigInt& a, const BigInt& b) { return a > b ? BigInt(a - b) : BigInt(b - a); }
  BigInt gcd(const BigInt& a) const { return boost::multiprecision::gcd(a, n); }
};

// One rho walk. Returns a nontrivial factor, nullopt when the walk
// degenerates (retry with another c). `spent` accumulates f evaluations.
template <class T, class Ops>
std::optional<T> brent(const Ops& ops, T y, std::uint64_t& spent, std::uint64_t budget) {
  constexpr std::uint64_t kBatch = 128;
  T x = y, ys = y, q = 1, g = 1;
  std::uint64_t r = 1;
  while (g == 1) {
    x = y;
    for (std::uint64_t i = 0; i < r; ++i) y = ops.f(y);
    spent += r;
    for (std::uint64_t k = 0; k < r && g == 1; k += kBatch) {
      ys = y;
      const std::uint64_t steps = std::min(kBatch, r - k);
      for (std::uint64_t i = 0; i < steps; ++i) {
        y = ops.f(y);
        q = ops.mul(q, Ops::diff(x, y));
      }
      spent += steps;
      g = ops.gcd(q);
      if (spent > budget) return std::nullopt;
    }
    r *= 2;
  }
  if (g == ops.n) {
    do {
      ys = ops.f(ys);
      g = ops.gcd(Ops::diff(x, ys));
      ++spent;
    } while (g == 1 && spent <= budget);
  }
  if (g == 1 || g == ops.n) return std::nullopt;
  return g;
}

}  // namespace detail

/// Splits an RSA modulus into (p, q) with p <= q and p * q = n. Throws
/// NotFactorable if n is prime or the iteration budget runs out.
inline std::pair<BigInt, BigInt> factor_export_modulus(const BigInt& n, FactoringBudget budget = {}) {
  if (n < 4) fail(Errc::NotFactorable, "modulus too small to factor");
  if (n % 2 == 0) return {BigInt(2), BigInt(n / 2)};
  if (is_prime(n)) fail(Errc::NotFactorable, "modulus is prime");
  std::uint64_t spent = 0;
  std::optional<BigInt> found;
  for (std::uint64_t c = 1; !found && spent <= budget.max_iterations; ++c) {
    if (fits_u64(n)) {
      detail::U64Ops ops{static_cast<std::uint64_t>(n), c};
      if (auto f = detail::brent<std::uint64_t>(ops, 2, spent, budget.max_iterations)) found = BigInt(*f);
    } else {
      detail::BigOps ops{n, BigInt(c)};
      found = detail::brent<BigInt>(ops, BigInt(2), spent, budget.max_iterations);
    }
  }
  if (!found)
    fail(Errc::NotFactorable,
         std::to_string(bit_length(n)) + "-bit modulus not factored within " +
             std::to_string(budget.max_iterations) + " iterations");
  BigInt p = *found, q = n / *found;
  if (p > q) std::swap(p, q);
  if (!is_prime(p) || !is_prime(q)) fail(Errc::NotFactorable, "modulus is not a product of two primes");
  return {p, q};
}

/// Factors the public modulus and rebuilds the private key.
inline tls::RsaPrivateKey recover_rsa_private_key(const tls::RsaPublicKey& pub, FactoringBudget budget = {}) {
  auto [p, q] = factor_export_modulus(pub.n, budget);
  auto key = tls::rsa_from_factors(p, q, pub.e);
  if (!key) fail(Errc::NotFactorable, "public exponent not invertible for recovered factors");
  return *key;
}

// ---------------------------------------------------------------------------
// Discrete logs: baby-step giant-step split into a per-group precomputation
// and a cheap per-target phase.

struct DlogTable {
  ElGamalParams params;
  std::uint64_t baby_steps = 0;  // m
  std::vector<std::pair<std::uint64_t, std::uint32_t>> table;  // (g^j mod p, j), sorted
  std::uint64_t giant = 0;                                     // g^-m mod p
  std::uint64_t precompute_ops = 0;

  bool matches(const BigInt& p) const { return params.p == p; }
};

/// Builds the baby-step table for `params`. Only export-size groups
/// (p < 2^64) are supported. By default m = 2^floor(2*|q|/3), so that the
/// per-target phase costs about q/m << m steps.
inline DlogTable dlog_precompute(const ElGamalParams& params, std::optional<std::uint64_t> baby_steps = std::nullopt) {
  if (!fits_u64(params.p)) fail(Errc::UnsupportedSize, "dlog tables only for groups below 2^64");
  const unsigned qbits = bit_length(params.q);
  std::uint64_t m = baby_steps ? *baby_steps : std::uint64_t{1} << std::min(22u, 2 * qbits / 3);
  m = std::max<std::uint64_t>(1, std::min<std::uint64_t>(m, static_cast<std::uint64_t>(params.q)));
  const auto p = static_cast<std::uint64_t>(params.p);
  const auto g = static_cast<std::uint64_t>(params.g);

  DlogTable t;
  t.params = params;
  t.baby_steps = m;
  t.table.reserve(m);
  std::uint64_t cur = 1;
  for (std::uint64_t j = 0; j < m; ++j) {
    t.table.emplace_back(cur, static_cast<std::uint32_t>(j));
    cur = mulmod64(cur, g, p);
  }
  std::sort(t.table.begin(), t.table.end());
  // cur == g^m now.
  t.giant = static_cast<std::uint64_t>(modinv(BigInt(cur), params.p));
  t.precompute_ops = m;
  return t;
}

/// x in [0, q) with g^x = y. Throws NoSolution when y is outside the
/// subgroup. `steps`, if given, receives the number of giant steps taken.
inline BigInt dlog_individual(const BigInt& y, const DlogTable& t, std::uint64_t* steps = nullptr) {
  if (!t.params.in_subgroup(y)) fail(Errc::NoSolution, "target is not in the table's subgroup");
  const auto p = static_cast<std::uint64_t>(t.params.p);
  const auto q = static_cast<std::uint64_t>(t.params.q);
  const std::uint64_t rounds = q / t.baby_steps + 1;
  std::uint64_t gamma = static_cast<std::uint64_t>(y);
  for (std::uint64_t i = 0; i < rounds; ++i) {
    auto it = std::lower_bound(t.table.begin(), t.table.end(), std::make_pair(gamma, std::uint32_t{0}));
    if (it != t.table.end() && it->first == gamma) {
      if (steps) *steps = i + 1;
      return BigInt((static_cast<u128>(i) * t.baby_steps + it->second) % q);
    }
    gamma = mulmod64(gamma, t.giant, p);
  }
  fail(Errc::NoSolution, "no logarithm found");
}

// ---------------------------------------------------------------------------
// Real-world cost figures reported alongside simulated results. These are
// published measurements for 512-bit parameters, not simulator outputs.

struct AttackCost {
  std::string attack;
  std::string phase;
  double wall_clock_hours;
  std::optional<double> dollars;
  std::string hardware;
};

inline std::vector<AttackCost> real_world_costs() {
  return {
      {"freak", "factor 512-bit temporary RSA key", 7.0, 100.0, "cloud compute (EC2)"},
      {"freak", "sustained attack window per oracle connection", 12.0, 100.0, "staggered long-lived connections"},
      {"logjam", "precomputation for one 512-bit prime", 7.0 * 24.0, std::nullopt, "idle cycles on a cluster"},
      {"logjam", "individual discrete log", 90.0 / 3600.0, std::nullopt, "single 24-core machine"},
  };
}

}  // namespace ivotesim::crypto
