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

#include <stdexcept>
#include <string>
#include <string_view>

namespace ivotesim {

enum class Errc {
  // ballots
  InvalidBallot,
  MalformedEncoding,
  // envelope
  UnsupportedSize,
  MessageOutOfRange,
  AuthFailure,
  RegistryExhausted,
  // minitls
  NoCommonSuite,
  BadSignature,
  FinishedMismatch,
  UnexpectedMessage,
  ConnectionClosed,
  NotFactorable,
  NoSolution,
  ClientPatched,
  PrecomputeMissing,
  DlogBudgetExceeded,
  // netsim
  SchedulingAfterFinalize,
  UnknownHandle,
  // election
  PollsClosed,
  BadCredentials,
  ServiceClosed,
  NoSuchRecord,
  UnknownComponent,
  // attacks
  NoSessionKey,
  GatewayNotStripped,
  // cli
  ConfigInvalid,
};

constexpr std::string_view errc_name(Errc e) {
  switch (e) {
    case Errc::InvalidBallot: return "InvalidBallot";
    case Errc::MalformedEncoding: return "MalformedEncoding";
    case Errc::UnsupportedSize: return "UnsupportedSize";
    case Errc::MessageOutOfRange: return "MessageOutOfRange";
    case Errc::AuthFailure: return "AuthFailure";
    case Errc::RegistryExhausted: return "RegistryExhausted";
    case Errc::NoCommonSuite: return "NoCommonSuite";
    case Errc::BadSignature: return "BadSignature";
    case Errc::FinishedMismatch: return "FinishedMismatch";
    case Errc::UnexpectedMessage: return "UnexpectedMessage";
    case Errc::ConnectionClosed: return "ConnectionClosed";
    case Errc::NotFactorable: return "NotFactorable";
    case Errc::NoSolution: return "NoSolution";
    case Errc::ClientPatched: return "ClientPatched";
    case Errc::PrecomputeMissing: return "PrecomputeMissing";
    case Errc::DlogBudgetExceeded: return "DlogBudgetExceeded";
    case Errc::SchedulingAfterFinalize: return "SchedulingAfterFinalize";
    case Errc::UnknownHandle: return "UnknownHandle";
    case Errc::PollsClosed: return "PollsClosed";
    case Errc::BadCredentials: return "BadCredentials";
    case Errc::ServiceClosed: return "ServiceClosed";
    case Errc::NoSuchRecord: return "NoSuchRecord";
    case Errc::UnknownComponent: return "UnknownComponent";
    case Errc::NoSessionKey: return "NoSessionKey";
    case Errc::GatewayNotStripped: return "GatewayNotStripped";
    case Errc::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

/// Every failure surfaced by the library carries one of the Errc codes so
/// callers (and tests) can branch on the kind rather than the message text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  explicit Error(Errc code) : Error(code, std::string(errc_name(code))) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace ivotesim
