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

#include <fstream>
#include <map>
#include <string>
#include <string_view>

#include "ivotesim/bigint.hpp"
#include "ivotesim/error.hpp"

namespace ivotesim::fixtures {

/// The fixed 512-bit export-grade DHE prime observed on the analytics
/// server. It is a safe prime and 2 generates its order-(p-1)/2 subgroup.
inline constexpr std::string_view kHistoricalExportDhPrime =
    "a705d4b834119d78e434e47be531ae602209c4810fa3baca2b781d49f847bc27"
    "7681d93375522e41aae5de77d86d124852951be54145c9417f603ea96e5024b7";

inline constexpr unsigned kHistoricalExportBits = 512;

/// Reads `name = hex` lines; blank lines and lines starting with '#' are
/// skipped. Throws ConfigInvalid with the offending line number.
inline std::map<std::string, BigInt> load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::ConfigInvalid, path + ": cannot open fixtures file");
  std::map<std::string, BigInt> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(Errc::ConfigInvalid, path + ":" + std::to_string(lineno) + ": expected 'name = hex'");
    try {
      out[trim(line.substr(0, eq))] = bigint_from_hex(trim(line.substr(eq + 1)));
    } catch (const Error&) {
      fail(Errc::ConfigInvalid, path + ":" + std::to_string(lineno) + ": value is not hex");
    }
  }
  return out;
}

}  // namespace ivotesim::fixtures
