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

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "ivotesim/ballots.hpp"
#include "ivotesim/bytes.hpp"
#include "ivotesim/envelope.hpp"
#include "ivotesim/minitls.hpp"
#include "ivotesim/netsim.hpp"

namespace ivotesim::election {

using VoterId = std::uint32_t;

enum class Channel : std::uint8_t { Web = 0, Phone = 1, PollingPlace = 2 };
enum class ComplaintKind : std::uint8_t { MismatchRead, MissingVote, ReceiptAbsent, FalseComplaint };

constexpr std::string_view channel_label(Channel c) {
  switch (c) {
    case Channel::Web: return "web";
    case Channel::Phone: return "phone";
    case Channel::PollingPlace: return "polling-place";
  }
  return "?";
}

constexpr std::string_view complaint_label(ComplaintKind k) {
  switch (k) {
    case ComplaintKind::MismatchRead: return "MismatchRead";
    case ComplaintKind::MissingVote: return "MissingVote";
    case ComplaintKind::ReceiptAbsent: return "ReceiptAbsent";
    case ComplaintKind::FalseComplaint: return "FalseComplaint";
  }
  return "?";
}

// Browser <-> servers. These may travel inside TLS records.
struct GatewayRequest {};
struct RegisterRequest {
  VoterId voter = 0;
  std::optional<Pin> pin_choice;
};
struct RegisterResponse {
  IVoteId ivote_id;
  Pin pin;
};
struct FetchApp {};
struct AppPage {
  std::string ivr_number;
};
struct FetchScript {};
struct ScriptBody {
  bool malicious = false;
};
struct CastSubmit {
  IVoteId ivote_id;
  Pin pin;
  Channel channel = Channel::Web;
  DigitalEnvelope envelope;
};
struct CastAccepted {
  ReceiptNumber receipt;
};
struct ServiceError {
  Errc code;
  std::string detail;
};
struct ReceiptQuery {
  ReceiptNumber receipt;
};
struct ReceiptStatus {
  ReceiptNumber receipt;
  bool included = false;
};

// Voter <-> their own browser page.
struct StartRegistration {
  std::optional<Pin> pin_choice;
};
struct CredentialsShown {
  IVoteId ivote_id;
  Pin pin;
};
struct OpenVotingPage {};
struct PageReady {
  std::string ivr_number;
};
struct CastIntent {
  Ballot ballot;
  IVoteId ivote_id;
  Pin pin;
};
struct ProgressShown {};
struct PageClosed {};
struct ReceiptShown {
  ReceiptNumber receipt;
  std::string ivr_number;
};
struct CastFailed {
  Errc code;
};
struct CheckReceipt {
  ReceiptNumber receipt;
};
struct ReceiptStatusShown {
  ReceiptNumber receipt;
  bool included = false;
};
struct ScriptTimer {
  std::uint64_t token = 0;
};

// Telephone.
struct VerifyCall {
  IVoteId ivote_id;
  Pin pin;
  ReceiptNumber receipt;
  std::optional<VoterId> caller_id;
};
struct VerifyReadBack {
  Ballot ballot;
};
struct PhoneCast {
  IVoteId ivote_id;
  Pin pin;
  Ballot ballot;
  std::optional<VoterId> caller_id;
};

struct Complaint {
  VoterId voter = 0;
  ComplaintKind kind = ComplaintKind::MismatchRead;
};

// Backend and control traffic.
struct VerificationForward {
  IVoteId ivote_id;
  Bytes pin_hash;
  ReceiptNumber receipt;
  DigitalEnvelope envelope;
};
struct TimelineMark {
  std::string what;
};

// Attacker plumbing.
struct Exfiltrate {
  VoterId voter = 0;
  IVoteId ivote_id;
  Pin pin;
  Ballot intended;
};

using AppMessage =
    std::variant<GatewayRequest, net::HttpRedirect, RegisterRequest, RegisterResponse, FetchApp, AppPage, FetchScript,
                 ScriptBody, CastSubmit, CastAccepted, ServiceError, ReceiptQuery, ReceiptStatus, StartRegistration,
                 CredentialsShown, OpenVotingPage, PageReady, CastIntent, ProgressShown, PageClosed, ReceiptShown,
                 CastFailed, CheckReceipt, ReceiptStatusShown, ScriptTimer, VerifyCall, VerifyReadBack, PhoneCast,
                 Complaint, VerificationForward, TimelineMark, Exfiltrate>;

struct TlsHandshake {
  std::uint64_t conn = 0;
  tls::HandshakeMessage msg;
};
struct TlsRecord {
  std::uint64_t conn = 0;
  tls::Role sender = tls::Role::Client;
  std::uint64_t seq = 0;
  Bytes sealed;
};

/// What travels between endpoints: a bare redirect (plain HTTP), a clear
/// application message, or TLS traffic.
using Message = std::variant<net::HttpRedirect, AppMessage, TlsHandshake, TlsRecord>;

// ---------------------------------------------------------------------------
// Codec for the messages that may be sealed into TLS records.

/// Ballot bytes without manifest validation (for traces and pattern keys).
inline Bytes raw_ballot_bytes(const Ballot& b) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(b.council_mode));
  w.u16(static_cast<std::uint16_t>(b.council_prefs.size()));
  for (auto id : b.council_prefs) w.u16(id);
  w.u16(static_cast<std::uint16_t>(b.assembly_prefs.size()));
  for (auto c : b.assembly_prefs) w.u16(c.value);
  return std::move(w).bytes();
}

namespace detail {

template <class Number>
Number read_number(ByteReader& r) {
  return Number(r.str());
}

inline void write_envelope(ByteWriter& w, const DigitalEnvelope& e) { w.blob(e.serialize()); }
inline DigitalEnvelope read_envelope(ByteReader& r) { return DigitalEnvelope::deserialize(r.blob()); }

}  // namespace detail

inline Bytes encode_app(const AppMessage& msg) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(msg.index()));
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GatewayRequest> || std::is_same_v<T, FetchApp> ||
                      std::is_same_v<T, FetchScript>) {
        } else if constexpr (std::is_same_v<T, net::HttpRedirect>) {
          w.str(m.target).u8(m.https);
        } else if constexpr (std::is_same_v<T, RegisterRequest>) {
          w.u32(m.voter).u8(m.pin_choice.has_value());
          if (m.pin_choice) w.str(m.pin_choice->str());
        } else if constexpr (std::is_same_v<T, RegisterResponse>) {
          w.str(m.ivote_id.str()).str(m.pin.str());
        } else if constexpr (std::is_same_v<T, AppPage>) {
          w.str(m.ivr_number);
        } else if constexpr (std::is_same_v<T, ScriptBody>) {
          w.u8(m.malicious);
        } else if constexpr (std::is_same_v<T, CastSubmit>) {
          w.str(m.ivote_id.str()).str(m.pin.str()).u8(static_cast<std::uint8_t>(m.channel));
          detail::write_envelope(w, m.envelope);
        } else if constexpr (std::is_same_v<T, CastAccepted>) {
          w.str(m.receipt.str());
        } else if constexpr (std::is_same_v<T, ServiceError>) {
          w.u8(static_cast<std::uint8_t>(m.code)).str(m.detail);
        } else if constexpr (std::is_same_v<T, ReceiptQuery>) {
          w.str(m.receipt.str());
        } else if constexpr (std::is_same_v<T, ReceiptStatus>) {
          w.str(m.receipt.str()).u8(m.included);
        } else {
          fail(Errc::MalformedEncoding, "message type is not carried over TLS");
        }
      },
      msg);
  return std::move(w).bytes();
}

inline AppMessage decode_app(ByteView bytes) {
  ByteReader r(bytes);
  const auto tag = r.u8();
  AppMessage out;
  switch (tag) {
    case 0: out = GatewayRequest{}; break;
    case 1: {
      net::HttpRedirect m;
      m.target = r.str();
      m.https = r.u8() != 0;
      out = m;
      break;
    }
    case 2: {
      RegisterRequest m;
      m.voter = r.u32();
      if (r.u8()) m.pin_choice = detail::read_number<Pin>(r);
      out = m;
      break;
    }
    case 3: {
      RegisterResponse m;
      m.ivote_id = detail::read_number<IVoteId>(r);
      m.pin = detail::read_number<Pin>(r);
      out = m;
      break;
    }
    case 4: out = FetchApp{}; break;
    case 5: out = AppPage{r.str()}; break;
    case 6: out = FetchScript{}; break;
    case 7: out = ScriptBody{r.u8() != 0}; break;
    case 8: {
      CastSubmit m;
      m.ivote_id = detail::read_number<IVoteId>(r);
      m.pin = detail::read_number<Pin>(r);
      auto ch = r.u8();
      if (ch > 2) fail(Errc::MalformedEncoding, "bad channel");
      m.channel = static_cast<Channel>(ch);
      m.envelope = detail::read_envelope(r);
      out = std::move(m);
      break;
    }
    case 9: out = CastAccepted{detail::read_number<ReceiptNumber>(r)}; break;
    case 10: {
      ServiceError m;
      m.code = static_cast<Errc>(r.u8());
      m.detail = r.str();
      out = m;
      break;
    }
    case 11: out = ReceiptQuery{detail::read_number<ReceiptNumber>(r)}; break;
    case 12: {
      ReceiptStatus m;
      m.receipt = detail::read_number<ReceiptNumber>(r);
      m.included = r.u8() != 0;
      out = m;
      break;
    }
    default: fail(Errc::MalformedEncoding, "message type is not carried over TLS");
  }
  r.expect_done();
  return out;
}

// ---------------------------------------------------------------------------
// Trace rendering.

inline std::string app_type_name(const AppMessage& m) {
  static constexpr std::string_view kNames[] = {
      "GatewayRequest", "HttpRedirect",  "RegisterRequest", "RegisterResponse", "FetchApp",
      "AppPage",        "FetchScript",   "ScriptBody",      "CastSubmit",       "CastAccepted",
      "ServiceError",   "ReceiptQuery",  "ReceiptStatus",   "StartRegistration", "CredentialsShown",
      "OpenVotingPage", "PageReady",     "CastIntent",      "ProgressShown",    "PageClosed",
      "ReceiptShown",   "CastFailed",    "CheckReceipt",    "ReceiptStatusShown", "ScriptTimer",
      "VerifyCall",     "VerifyReadBack", "PhoneCast",      "Complaint",        "VerificationForward",
      "TimelineMark",   "Exfiltrate"};
  static_assert(std::size(kNames) == std::variant_size_v<AppMessage>);
  return std::string(kNames[m.index()]);
}

inline std::string describe_app(const AppMessage& msg) {
  std::string s = app_type_name(msg);
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, net::HttpRedirect>) {
          s += " target=" + m.target + (m.https ? " https" : " http");
        } else if constexpr (std::is_same_v<T, RegisterRequest>) {
          s += " voter=" + std::to_string(m.voter);
        } else if constexpr (std::is_same_v<T, RegisterResponse> || std::is_same_v<T, CredentialsShown>) {
          s += " id=" + m.ivote_id.str();
        } else if constexpr (std::is_same_v<T, ScriptBody>) {
          s += m.malicious ? " malicious" : " benign";
        } else if constexpr (std::is_same_v<T, CastSubmit>) {
          s += " id=" + m.ivote_id.str() + " channel=" + std::string(channel_label(m.channel));
        } else if constexpr (std::is_same_v<T, CastAccepted> || std::is_same_v<T, ReceiptQuery> ||
                             std::is_same_v<T, CheckReceipt>) {
          s += " receipt=" + m.receipt.str();
        } else if constexpr (std::is_same_v<T, ReceiptStatus> || std::is_same_v<T, ReceiptStatusShown>) {
          s += " receipt=" + m.receipt.str() + (m.included ? " included" : " absent");
        } else if constexpr (std::is_same_v<T, ServiceError> || std::is_same_v<T, CastFailed>) {
          s += " code=" + std::string(errc_name(m.code));
        } else if constexpr (std::is_same_v<T, CastIntent> || std::is_same_v<T, PhoneCast>) {
          s += " id=" + m.ivote_id.str() + " ballot=" + to_hex(raw_ballot_bytes(m.ballot));
        } else if constexpr (std::is_same_v<T, ReceiptShown>) {
          s += " receipt=" + m.receipt.str() + " ivr=" + m.ivr_number;
        } else if constexpr (std::is_same_v<T, PageReady> || std::is_same_v<T, AppPage>) {
          s += " ivr=" + m.ivr_number;
        } else if constexpr (std::is_same_v<T, ScriptTimer>) {
          s += " token=" + std::to_string(m.token);
        } else if constexpr (std::is_same_v<T, VerifyCall>) {
          s += " id=" + m.ivote_id.str() + " receipt=" + m.receipt.str() +
               (m.caller_id ? " caller=" + std::to_string(*m.caller_id) : " caller=withheld");
        } else if constexpr (std::is_same_v<T, VerifyReadBack>) {
          s += " ballot=" + to_hex(raw_ballot_bytes(m.ballot));
        } else if constexpr (std::is_same_v<T, Complaint>) {
          s += " voter=" + std::to_string(m.voter) + " kind=" + std::string(complaint_label(m.kind));
        } else if constexpr (std::is_same_v<T, VerificationForward>) {
          s += " id=" + m.ivote_id.str() + " receipt=" + m.receipt.str();
        } else if constexpr (std::is_same_v<T, TimelineMark>) {
          s += " " + m.what;
        } else if constexpr (std::is_same_v<T, Exfiltrate>) {
          s += " voter=" + std::to_string(m.voter) + " id=" + m.ivote_id.str();
        }
      },
      msg);
  return s;
}

inline std::string describe(const Message& m) {
  if (const auto* r = std::get_if<net::HttpRedirect>(&m))
    return std::string("HttpRedirect target=") + r->target + (r->https ? " https" : " http");
  if (const auto* a = std::get_if<AppMessage>(&m)) return describe_app(*a);
  if (const auto* h = std::get_if<TlsHandshake>(&m))
    return "TLS conn=" + std::to_string(h->conn) + " " + tls::message_type(h->msg);
  const auto& rec = std::get<TlsRecord>(m);
  return "TLSRecord conn=" + std::to_string(rec.conn) + (rec.sender == tls::Role::Client ? " c" : " s") +
         " seq=" + std::to_string(rec.seq) + " len=" + std::to_string(rec.sealed.size());
}

}  // namespace ivotesim::election
