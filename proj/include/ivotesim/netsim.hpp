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
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "ivotesim/error.hpp"
#include "ivotesim/hash.hpp"
#include "ivotesim/simtime.hpp"

namespace ivotesim::net {

enum class ChannelKind { PlainHttp, Https, PhoneIvr };

constexpr std::string_view channel_name(ChannelKind k) {
  switch (k) {
    case ChannelKind::PlainHttp: return "plain-http";
    case ChannelKind::Https: return "https";
    case ChannelKind::PhoneIvr: return "phone-ivr";
  }
  return "?";
}

/// An HTTP redirect in the clear. Payload types that can carry one expose it
/// through a std::variant alternative, which is what sslstrip rewrites.
struct HttpRedirect {
  std::string target;
  bool https = true;
};

template <class Payload>
struct Event {
  SimTime time{};
  std::uint64_t seq = 0;
  std::string src;
  std::string dst;
  Payload payload;
  std::uint64_t injected_by = 0;  // tap id, 0 for endpoint traffic
};

template <class Payload>
struct Injection {
  std::string src;
  std::string dst;
  Payload payload;
  SimDuration delay{};
};

template <class Payload>
struct Decision {
  enum class Kind { Forward, Modify, Drop };
  Kind kind = Kind::Forward;
  std::optional<Payload> replacement;
  std::vector<Injection<Payload>> inject;

  static Decision forward() { return {}; }
  static Decision modify(Payload p) { return {Kind::Modify, std::move(p), {}}; }
  static Decision drop() { return {Kind::Drop, std::nullopt, {}}; }
  Decision& and_inject(Injection<Payload> i) {
    inject.push_back(std::move(i));
    return *this;
  }
};

struct TapHandle {
  std::uint64_t id = 0;
  friend bool operator==(TapHandle, TapHandle) = default;
};

template <class Payload>
class Simulator;

template <class Payload>
struct MitmTap {
  std::string name;
  std::function<bool(std::string_view src, std::string_view dst)> matcher;
  std::function<Decision<Payload>(const Event<Payload>&, const Simulator<Payload>&)> handler;
  /// Taps normally skip events they injected; timers opt in.
  bool observe_own_injections = false;
};

inline bool has_prefix(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

/// Matches (src, dst) by prefix; an empty prefix matches anything.
inline auto path_prefix(std::string src_prefix, std::string dst_prefix) {
  return [s = std::move(src_prefix), d = std::move(dst_prefix)](std::string_view src, std::string_view dst) {
    return has_prefix(src, s) && has_prefix(dst, d);
  };
}

/// Matches traffic in either direction between two name prefixes.
inline auto between(std::string a, std::string b) {
  return [a = std::move(a), b = std::move(b)](std::string_view src, std::string_view dst) {
    return (has_prefix(src, a) && has_prefix(dst, b)) || (has_prefix(src, b) && has_prefix(dst, a));
  };
}

struct Counters {
  std::uint64_t scheduled = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t modified = 0;
  std::uint64_t injected = 0;
  std::uint64_t pending = 0;
  bool reconciles() const { return scheduled == delivered + dropped + pending; }
};

/// Deterministic discrete-event loop. Events are delivered in (time, seq)
/// order; each passes through the matching taps in installation order
/// before reaching the destination's handler.
///
/// `describe(const Payload&) -> std::string` must be findable by ADL; it
/// renders payloads into the trace.
template <class Payload>
class Simulator {
 public:
  using EventT = Event<Payload>;
  using Handler = std::function<void(const EventT&)>;

  void add_endpoint(const std::string& name, Handler handler = {},
                    ChannelKind serving = ChannelKind::PlainHttp) {
    if (endpoints_.contains(name)) fail(Errc::ConfigInvalid, "duplicate endpoint '" + name + "'");
    endpoints_.emplace(name, Endpoint{std::move(handler), serving});
  }
  void set_handler(const std::string& name, Handler handler) { endpoint(name).handler = std::move(handler); }
  bool has_endpoint(std::string_view name) const { return endpoints_.contains(std::string(name)); }

  /// Policy for a specific pair, overriding the serving endpoint's label.
  void set_policy(const std::string& a, const std::string& b, ChannelKind k) { pair_policy_[key(a, b)] = k; }
  void set_serving_policy(const std::string& name, ChannelKind k) { endpoint(name).serving = k; }

  /// Explicit pair policy, else the label of whichever side serves
  /// something other than plain HTTP, else plain HTTP.
  ChannelKind policy(std::string_view src, std::string_view dst) const {
    auto it = pair_policy_.find(key(src, dst));
    if (it != pair_policy_.end()) return it->second;
    auto d = endpoints_.find(std::string(dst));
    if (d != endpoints_.end() && d->second.serving != ChannelKind::PlainHttp) return d->second.serving;
    auto s = endpoints_.find(std::string(src));
    if (s != endpoints_.end()) return s->second.serving;
    return ChannelKind::PlainHttp;
  }

  void set_default_delay(SimDuration d) { default_delay_ = d; }
  void set_path_delay(const std::string& a, const std::string& b, SimDuration d) { delays_[key(a, b)] = d; }
  SimDuration delay(std::string_view a, std::string_view b) const {
    auto it = delays_.find(key(a, b));
    return it == delays_.end() ? default_delay_ : it->second;
  }

  void schedule(SimTime t, std::string src, std::string dst, Payload payload, std::uint64_t injected_by = 0) {
    if (finalized_) fail(Errc::SchedulingAfterFinalize, "simulator already finalized");
    if (!endpoints_.contains(dst)) fail(Errc::ConfigInvalid, "unknown endpoint '" + dst + "'");
    if (t < now_) t = now_;
    queue_.push(EventT{t, next_seq_++, std::move(src), std::move(dst), std::move(payload), injected_by});
    ++counters_.scheduled;
  }

  /// Schedules after the path delay plus `extra`.
  void send(const std::string& src, const std::string& dst, Payload payload, SimDuration extra = {}) {
    schedule(now_ + delay(src, dst) + extra, src, dst, std::move(payload));
  }

  TapHandle install_tap(MitmTap<Payload> tap) {
    TapHandle h{next_tap_++};
    taps_.push_back({h, std::move(tap)});
    return h;
  }

  void remove_tap(TapHandle h) {
    auto it = std::find_if(taps_.begin(), taps_.end(), [&](const auto& t) { return t.first == h; });
    if (it == taps_.end()) fail(Errc::UnknownHandle, "no tap with id " + std::to_string(h.id));
    taps_.erase(it);
  }

  /// Delivers every event with time <= t. Returns the delivered events when
  /// `collect` is set.
  std::vector<EventT> run_until(SimTime t, bool collect = true) {
    if (finalized_) fail(Errc::SchedulingAfterFinalize, "simulator already finalized");
    std::vector<EventT> delivered;
    while (!queue_.empty() && queue_.top().time <= t) {
      EventT ev = queue_.top();
      queue_.pop();
      now_ = ev.time;
      if (process(ev) && collect) delivered.push_back(std::move(ev));
    }
    if (now_ < t) now_ = t;
    return delivered;
  }

  void run_all() {
    while (!queue_.empty()) run_until(queue_.top().time, false);
  }

  /// Stops accepting events; whatever is still queued counts as pending.
  void finalize() {
    finalized_ = true;
    counters_.pending = queue_.size();
  }

  SimTime now() const { return now_; }
  bool finalized() const { return finalized_; }
  Counters counters() const {
    Counters c = counters_;
    c.pending = queue_.size();
    return c;
  }

  void set_trace_enabled(bool on) { keep_trace_ = on; }
  const std::vector<std::string>& trace() const { return trace_; }

  /// Appends a line that is not an event (service snapshots, notes).
  void note(std::string_view who, std::string_view text) { emit(std::string(format_time(now_)) + " - " + std::string(who) + " NOTE " + std::string(text)); }

  std::string trace_digest() const {
    Digest d = digest_state_;
    return to_hex(ByteView(d.data(), d.size()));
  }

 private:
  struct Endpoint {
    Handler handler;
    ChannelKind serving = ChannelKind::PlainHttp;
  };
  struct Later {
    bool operator()(const EventT& a, const EventT& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  static std::string key(std::string_view a, std::string_view b) {
    return a < b ? std::string(a) + '\n' + std::string(b) : std::string(b) + '\n' + std::string(a);
  }

  Endpoint& endpoint(const std::string& name) {
    auto it = endpoints_.find(name);
    if (it == endpoints_.end()) fail(Errc::ConfigInvalid, "unknown endpoint '" + name + "'");
    return it->second;
  }

  // Trace lines are folded into a running SHA-256 chain so the digest does
  // not depend on keeping the full log in memory.
  void emit(std::string line) {
    digest_state_ = FieldHasher("trace").add(ByteView(digest_state_.data(), digest_state_.size())).add(line).digest();
    if (keep_trace_) trace_.push_back(std::move(line));
  }

  std::string line_prefix(const EventT& ev) const {
    std::string s = format_time(ev.time);
    s += " #" + std::to_string(ev.seq) + ' ' + ev.src + " -> " + ev.dst + " [" +
         std::string(channel_name(policy(ev.src, ev.dst))) + "]";
    return s;
  }

  bool process(EventT& ev) {
    for (std::size_t i = 0; i < taps_.size(); ++i) {
      auto& [handle, tap] = taps_[i];
      if (ev.injected_by == handle.id && !tap.observe_own_injections) continue;
      if (!tap.matcher(ev.src, ev.dst)) continue;
      auto decision = tap.handler(ev, *this);
      const std::uint64_t tap_id = handle.id;
      const std::string tap_name = tap.name;
      for (auto& inj : decision.inject) {
        schedule(now_ + inj.delay, std::move(inj.src), std::move(inj.dst), std::move(inj.payload), tap_id);
        ++counters_.injected;
      }
      if (decision.kind == Decision<Payload>::Kind::Drop) {
        ++counters_.dropped;
        emit(line_prefix(ev) + " DROP by " + tap_name + ' ' + describe(ev.payload));
        return false;
      }
      if (decision.kind == Decision<Payload>::Kind::Modify) {
        ++counters_.modified;
        emit(line_prefix(ev) + " MODIFY by " + tap_name + ' ' + describe(ev.payload));
        ev.payload = std::move(*decision.replacement);
      }
    }
    ++counters_.delivered;
    emit(line_prefix(ev) + (ev.injected_by ? " INJECTED " : " DELIVER ") + describe(ev.payload));
    auto it = endpoints_.find(ev.dst);
    if (it != endpoints_.end() && it->second.handler) it->second.handler(ev);
    return true;
  }

  std::unordered_map<std::string, Endpoint> endpoints_;
  std::unordered_map<std::string, ChannelKind> pair_policy_;
  std::unordered_map<std::string, SimDuration> delays_;
  SimDuration default_delay_ = std::chrono::milliseconds(20);
  std::priority_queue<EventT, std::vector<EventT>, Later> queue_;
  std::vector<std::pair<TapHandle, MitmTap<Payload>>> taps_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_tap_ = 1;
  SimTime now_{};
  bool finalized_ = false;
  Counters counters_;
  bool keep_trace_ = true;
  std::vector<std::string> trace_;
  Digest digest_state_{};
};

/// The SSL-stripping rewrite: on a plain-HTTP path, a redirect to the
/// genuine (HTTPS) site is replaced with one to `attacker_target`. Anywhere
/// else the event is forwarded untouched.
template <class Payload>
Decision<Payload> sslstrip(const Event<Payload>& ev, const Simulator<Payload>& sim, const std::string& attacker_target) {
  if (sim.policy(ev.src, ev.dst) != ChannelKind::PlainHttp) return Decision<Payload>::forward();
  const auto* redirect = std::get_if<HttpRedirect>(&ev.payload);
  if (!redirect || redirect->target == attacker_target) return Decision<Payload>::forward();
  return Decision<Payload>::modify(Payload{HttpRedirect{attacker_target, false}});
}

}  // namespace ivotesim::net
