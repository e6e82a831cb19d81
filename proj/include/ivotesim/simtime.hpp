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

#include <chrono>
#include <cstdint>
#include <string>

namespace ivotesim {

/// Virtual clock of the event loop. One tick is one simulated millisecond.
struct SimClock {
  using rep = std::int64_t;
  using period = std::milli;
  using duration = std::chrono::duration<rep, period>;
  using time_point = std::chrono::time_point<SimClock>;
  static constexpr bool is_steady = true;
};

using SimDuration = SimClock::duration;
using SimTime = SimClock::time_point;

constexpr SimTime at(SimDuration since_origin) { return SimTime(since_origin); }
constexpr std::int64_t ticks(SimTime t) { return t.time_since_epoch().count(); }
constexpr std::int64_t ticks(SimDuration d) { return d.count(); }

inline constexpr SimDuration kTick{1};

inline std::string format_time(SimTime t) { return std::to_string(ticks(t)); }

}  // namespace ivotesim
