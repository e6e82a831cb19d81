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
#include <array>
#include <cstdint>

#include "ivotesim/bytes.hpp"
#include "ivotesim/error.hpp"
#include "ivotesim/hash.hpp"

namespace ivotesim {

/// Authenticated stream construction: HMAC-SHA256 in counter mode for the
/// keystream, encrypt-then-MAC with an independent HMAC key for the tag.
/// Stand-in for the AES layer of the real client; any AEAD with the same
/// seal/open contract can replace it.
class StreamAead {
 public:
  static constexpr std::size_t kNonceSize = 16;
  static constexpr std::size_t kTagSize = 32;

  explicit StreamAead(ByteView key)
      : enc_key_(FieldHasher("aead/enc").add(key).digest()),
        mac_key_(FieldHasher("aead/mac").add(key).digest()) {}

  /// Output layout: nonce || ciphertext || tag.
  Bytes seal(ByteView nonce, ByteView plaintext, ByteView aad = {}) const {
    if (nonce.size() != kNonceSize) fail(Errc::MessageOutOfRange, "nonce must be 16 bytes");
    Bytes out(nonce.begin(), nonce.end());
    Bytes body(plaintext.begin(), plaintext.end());
    apply_keystream(nonce, body);
    out.insert(out.end(), body.begin(), body.end());
    auto t = tag(aad, nonce, body);
    out.insert(out.end(), t.begin(), t.end());
    return out;
  }

  /// Throws AuthFailure on any modification of nonce, ciphertext, tag or aad.
  Bytes open(ByteView sealed, ByteView aad = {}) const {
    if (sealed.size() < kNonceSize + kTagSize) fail(Errc::AuthFailure, "ciphertext too short");
    ByteView nonce = sealed.first(kNonceSize);
    ByteView body = sealed.subspan(kNonceSize, sealed.size() - kNonceSize - kTagSize);
    ByteView given = sealed.last(kTagSize);
    auto expected = tag(aad, nonce, body);
    if (!tags_equal(expected, given)) fail(Errc::AuthFailure, "tag mismatch");
    Bytes plain(body.begin(), body.end());
    apply_keystream(nonce, plain);
    return plain;
  }

 private:
  void apply_keystream(ByteView nonce, Bytes& data) const {
    for (std::size_t off = 0, block = 0; off < data.size(); off += 32, ++block) {
      auto ks = FieldHasher("aead/stream").add(nonce).add(static_cast<std::uint64_t>(block)).mac(enc_key_);
      for (std::size_t i = 0; i < 32 && off + i < data.size(); ++i) data[off + i] ^= ks[i];
    }
  }

  Digest tag(ByteView aad, ByteView nonce, ByteView body) const {
    return FieldHasher("aead/tag").add(aad).add(nonce).add(body).mac(mac_key_);
  }

  Digest enc_key_;
  Digest mac_key_;
};

}  // namespace ivotesim
