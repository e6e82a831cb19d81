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

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <array>
#include <cstdint>
#include <string_view>

#include "ivotesim/bytes.hpp"

namespace ivotesim {

using Digest = std::array<std::uint8_t, 32>;

inline Digest sha256(ByteView data) {
  Digest out{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr);
  return out;
}

inline Digest hmac_sha256(ByteView key, ByteView data) {
  Digest out{};
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(), out.data(), &len);
  return out;
}

inline Bytes as_bytes(const Digest& d) { return Bytes(d.begin(), d.end()); }

/// Hashes a sequence of length-prefixed fields under a domain label, so
/// distinct field splits never collide.
class FieldHasher {
 public:
  explicit FieldHasher(std::string_view domain) { w_.str(domain); }
  FieldHasher& add(ByteView v) {
    w_.blob(v);
    return *this;
  }
  FieldHasher& add(std::string_view s) {
    w_.str(s);
    return *this;
  }
  FieldHasher& add(std::uint64_t v) {
    w_.u64(v);
    return *this;
  }
  Digest digest() const { return sha256(w_.bytes()); }
  Digest mac(ByteView key) const { return hmac_sha256(key, w_.bytes()); }

 private:
  ByteWriter w_;
};

/// Constant-time comparison for tags.
inline bool tags_equal(ByteView a, ByteView b) {
  if (a.size() != b.size()) return false;
  std::uint8_t acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc |= a[i] ^ b[i];
  return acc == 0;
}

}  // namespace ivotesim
