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

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <regex>
#include <sstream>

#include "ivotesim/attacks.hpp"

namespace ivotesim::scenario {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

struct ScenarioConfig {
  std::string name;
  std::string description;
  election::ElectionConfig election;
  attacks::AttackConfig attack;
  bool downgrade_matrix = false;
  std::vector<std::set<election::Component>> linkage;
  std::size_t manifest_groups = 4, manifest_candidates = 16, manifest_assembly = 6;
};

namespace detail {

// Error text without the leading code name.
inline std::string bare(const Error& e) {
  const std::string what = e.what(), prefix = std::string(errc_name(e.code())) + ": ";
  return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
}

[[noreturn]] inline void bad(const std::string& origin, const YAML::Node& at, const std::string& msg) {
  const auto mark = at.Mark();
  std::string where = origin;
  if (mark.line >= 0) where += ":" + std::to_string(mark.line + 1);
  fail(Errc::ConfigInvalid, where + ": " + msg);
}

/// Reads one YAML mapping, rejecting keys nobody asked for.
class Section {
 public:
  Section(const std::string& origin, YAML::Node node, std::string path)
      : origin_(&origin), node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsMap()) bad(*origin_, node_, path_ + " must be a mapping");
  }

  ~Section() noexcept(false) {
    if (!node_ || std::uncaught_exceptions() > 0) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.contains(key)) bad(*origin_, kv.first, "unknown key '" + qualified(key) + "'");
    }
  }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    if (!node_) return missing();
    const YAML::Node& n = node_;
    return n[key];
  }
  bool has(const std::string& key) { return static_cast<bool>(raw(key)); }
  Section sub(const std::string& key) { return Section(*origin_, raw(key), qualified(key)); }

  template <class T>
  void get(const std::string& key, T& out) {
    auto n = raw(key);
    if (!n) return;
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      bad(*origin_, n, "bad value for '" + qualified(key) + "'");
    }
  }

  void probability(const std::string& key, double& out) {
    get(key, out);
    if (has(key) && !(out >= 0.0 && out <= 1.0)) bad(*origin_, raw(key), qualified(key) + " must be in [0,1]");
  }

  void duration(const std::string& key, SimDuration& out) {
    if (auto n = raw(key)) out = parse_duration(n);
  }
  void time(const std::string& key, SimTime& out) {
    if (auto n = raw(key)) out = at(parse_duration(n));
  }
  void optional_time(const std::string& key, std::optional<SimTime>& out) {
    if (auto n = raw(key)) out = at(parse_duration(n));
  }
  void range(const std::string& key, SimDuration& lo, SimDuration& hi) {
    auto n = raw(key);
    if (!n) return;
    if (!n.IsSequence() || n.size() != 2) bad(*origin_, n, qualified(key) + " must be [min, max]");
    lo = parse_duration(n[0]);
    hi = parse_duration(n[1]);
  }

  SimDuration parse_duration(const YAML::Node& n) const {
    static const std::regex re(R"(^\s*(\d+)\s*(ms|s|min|h|d)?\s*$)");
    std::smatch m;
    const auto text = n.IsScalar() ? n.Scalar() : std::string();
    if (!std::regex_match(text, m, re)) bad(*origin_, n, "bad duration '" + text + "' (use e.g. 90s, 10min, 7h, 2d)");
    const auto v = std::stoll(m[1].str());
    const std::string unit = m[2].str();
    if (unit.empty() && v != 0) bad(*origin_, n, "duration '" + text + "' needs a unit");
    if (unit == "ms" || unit.empty()) return std::chrono::milliseconds(v);
    if (unit == "s") return std::chrono::seconds(v);
    if (unit == "min") return std::chrono::minutes(v);
    if (unit == "h") return std::chrono::hours(v);
    return std::chrono::hours(24 * v);
  }

  const std::string& origin() const { return *origin_; }

 private:
  static YAML::Node missing() {
    static const YAML::Node empty(YAML::NodeType::Map);
    return empty["-"];
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const std::string* origin_;
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

inline GroupId group_by_name(const ElectionManifest& m, const std::string& origin, const YAML::Node& n) {
  const auto name = n.as<std::string>();
  for (const auto& g : m.groups())
    if (g.name == name) return g.id;
  bad(origin, n, "unknown group '" + name + "'");
}

inline std::set<tls::CipherSuite> suites(const std::string& origin, const YAML::Node& n) {
  if (!n.IsSequence()) bad(origin, n, "cipher suites must be a list");
  std::set<tls::CipherSuite> out;
  for (const auto& s : n) {
    try {
      out.insert(tls::suite_from_name(s.as<std::string>()));
    } catch (const Error& e) {
      bad(origin, s, bare(e));
    }
  }
  return out;
}

template <class E>
E enum_value(const std::string& origin, const YAML::Node& n, std::initializer_list<std::pair<const char*, E>> options) {
  const auto text = n.as<std::string>();
  for (const auto& [name, v] : options)
    if (text == name) return v;
  std::string allowed;
  for (const auto& [name, v] : options) allowed += std::string(allowed.empty() ? "" : ", ") + name;
  bad(origin, n, "unknown value '" + text + "' (expected one of " + allowed + ")");
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const std::string& text, const std::string& origin = "<scenario>") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    fail(Errc::ConfigInvalid, origin + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root.IsMap()) fail(Errc::ConfigInvalid, origin + ": scenario must be a mapping");

  ScenarioConfig sc;
  auto& ec = sc.election;
  detail::Section top(origin, root, "");

  int version = 0;
  if (!top.has("schema_version")) fail(Errc::ConfigInvalid, origin + ": missing schema_version");
  top.get("schema_version", version);
  if (version != kSchemaVersion)
    detail::bad(origin, top.raw("schema_version"), "unsupported schema_version " + std::to_string(version));
  if (!top.has("seed")) fail(Errc::ConfigInvalid, origin + ": missing seed");
  top.get("seed", ec.seed);
  top.get("name", sc.name);
  top.get("description", sc.description);
  top.get("voters", ec.voter_count);
  top.get("piwik", ec.piwik_enabled);
  top.duration("network_delay", ec.network_delay);

  {
    auto m = top.sub("manifest");
    m.get("groups", sc.manifest_groups);
    m.get("candidates", sc.manifest_candidates);
    m.get("assembly", sc.manifest_assembly);
    if (sc.manifest_groups < 2) detail::bad(origin, m.raw("groups"), "manifest needs at least two groups");
    ec.manifest = ElectionManifest::synthetic(sc.manifest_groups, sc.manifest_candidates, sc.manifest_assembly);
    ec.manifest.add_default_cards();
  }
  {
    auto t = top.sub("timeline");
    t.time("polls_open", ec.timeline.polls_open);
    t.time("polls_close", ec.timeline.polls_close);
    t.time("receipt_service_end", ec.timeline.receipt_service_end);
    t.get("gateway_plain_http", ec.timeline.gateway_plain_http);
    t.optional_time("gateway_fixed_at", ec.timeline.gateway_fixed_at);
    t.optional_time("piwik_disabled_at", ec.timeline.piwik_disabled_at);
  }
  {
    auto b = top.sub("behavior");
    auto& p = ec.behavior;
    b.probability("card_rate", p.card_rate);
    b.probability("p_verify_ivr", p.p_verify_ivr);
    b.probability("p_check_receipt_only", p.p_check_receipt_only);
    b.probability("p_false_complaint", p.p_false_complaint);
    b.probability("p_leave_without_receipt", p.p_leave_without_receipt);
    b.probability("p_dial_genuine_anyway", p.p_dial_genuine_anyway);
    b.probability("p_caller_id", p.p_caller_id);
    b.probability("p_choose_pin", p.p_choose_pin);
    b.probability("p_revote", p.p_revote);
    b.probability("p_phone", p.p_phone);
    b.probability("p_polling_place", p.p_polling_place);
    b.probability("patch_rate", p.patch_rate);
    b.probability("suspicion", p.suspicion);
    b.range("registration_lead", p.registration_lead_min, p.registration_lead_max);
    b.range("compose", p.compose_min, p.compose_max);
    b.duration("cast_cutoff", p.cast_cutoff);
    b.range("verify_delay", p.verify_delay_min, p.verify_delay_max);
    b.range("leave_delay", p.leave_delay_min, p.leave_delay_max);
    b.range("revote_gap", p.revote_gap_min, p.revote_gap_max);
  }
  {
    auto l = top.sub("leaning");
    for (auto [key, dst] : {std::pair<const char*, int>{"quota", 0}, {"weights", 1}}) {
      auto n = l.raw(key);
      if (!n) continue;
      if (!n.IsMap()) detail::bad(origin, n, std::string("leaning.") + key + " must be a mapping");
      for (const auto& kv : n) {
        const GroupId g = detail::group_by_name(ec.manifest, origin, kv.first);
        try {
          if (dst == 0)
            ec.leaning.quota[g] = kv.second.as<std::size_t>();
          else
            ec.leaning.weights[g] = kv.second.as<double>();
        } catch (const YAML::Exception&) {
          detail::bad(origin, kv.second, std::string("bad leaning ") + key + " value");
        }
      }
    }
  }
  {
    auto t = top.sub("tls");
    if (auto n = t.raw("service_suites")) ec.tls.service_suites = detail::suites(origin, n);
    if (auto n = t.raw("piwik_suites")) ec.tls.piwik_suites = detail::suites(origin, n);
    t.duration("temp_rsa_rotation", ec.tls.temp_rsa_rotation);
    t.duration("connection_lifetime", ec.tls.connection_lifetime);
    t.get("export_rsa_bits", ec.tls.export_rsa_bits);
    t.get("cert_rsa_bits", ec.tls.cert_rsa_bits);
  }
  {
    auto c = top.sub("crypto");
    c.get("group_seed", ec.crypto.group_seed);
    c.get("envelope_bits", ec.crypto.envelope_bits);
    c.get("dhe_bits", ec.crypto.dhe_bits);
    c.get("export_dh_p_bits", ec.crypto.export_dh_p_bits);
    c.get("export_dh_q_bits", ec.crypto.export_dh_q_bits);
  }
  {
    auto a = top.sub("attack");
    auto& ac = sc.attack;
    if (auto n = a.raw("vector"))
      ac.vector = detail::enum_value<attacks::CompromiseVector>(origin, n,
                                                                {{"none", attacks::CompromiseVector::None},
                                                                 {"freak", attacks::CompromiseVector::Freak},
                                                                 {"logjam", attacks::CompromiseVector::Logjam},
                                                                 {"granted", attacks::CompromiseVector::Granted}});
    a.probability("interception_rate", ac.interception_rate);
    a.probability("granted_rate", ac.granted_rate);
    a.time("start", ac.attack_start);
    if (auto n = a.raw("target")) ac.target = detail::group_by_name(ec.manifest, origin, n);
    if (auto n = a.raw("strategy"))
      ac.strategy = detail::enum_value<attacks::ScriptStrategy>(origin, n,
                                                                {{"none", attacks::ScriptStrategy::None},
                                                                 {"rewrite", attacks::ScriptStrategy::Rewrite},
                                                                 {"last-minute", attacks::ScriptStrategy::LastMinute},
                                                                 {"receipt-delay", attacks::ScriptStrategy::ReceiptDelay}});
    a.duration("safety_window", ac.safety_window);
    a.duration("gambit_delay", ac.gambit_delay);
    a.get("fake_ivr", ac.fake_ivr);
    {
      auto c = a.sub("clash");
      c.get("enabled", ac.clash.enabled);
      if (auto n = c.raw("prediction"))
        ac.clash.prediction = detail::enum_value<attacks::ClashPrediction>(
            origin, n, {{"card", attacks::ClashPrediction::Card}, {"perfect", attacks::ClashPrediction::Perfect}});
      c.get("max_reuse", ac.clash.max_reuse);
    }
    {
      auto s = a.sub("server_cvs");
      s.get("enabled", ac.server_cvs);
      s.probability("rate", ac.server_cvs_rate);
    }
    a.duration("factoring_delay", ac.factoring_delay);
    a.duration("oracle_restagger", ac.oracle_restagger);
    a.get("factoring_max_iterations", ac.factoring_budget.max_iterations);
    a.duration("dlog_delay", ac.dlog_delay);
    if (a.has("dlog_baby_steps")) {
      std::uint64_t m = 0;
      a.get("dlog_baby_steps", m);
      ac.dlog_baby_steps = m;
    }
  }
  {
    auto r = top.sub("report");
    r.get("downgrade_matrix", sc.downgrade_matrix);
    if (auto n = r.raw("linkage")) {
      if (!n.IsSequence()) detail::bad(origin, n, "report.linkage must be a list of component lists");
      for (const auto& set : n) {
        if (!set.IsSequence()) detail::bad(origin, set, "each linkage entry must be a list of components");
        std::set<election::Component> comps;
        for (const auto& c : set) {
          try {
            comps.insert(election::component_from_name(c.as<std::string>()));
          } catch (const Error& e) {
            detail::bad(origin, c, detail::bare(e));
          }
        }
        sc.linkage.push_back(std::move(comps));
      }
    }
  }

  try {
    ec.validate();
    sc.attack.validate();
  } catch (const Error& e) {
    if (e.code() != Errc::ConfigInvalid) throw;
    fail(Errc::ConfigInvalid, origin + ": " + detail::bare(e));
  }
  return sc;
}

inline ScenarioConfig load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::ConfigInvalid, path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  auto sc = parse_scenario(ss.str(), path.string());
  if (sc.name.empty()) sc.name = path.stem().string();
  return sc;
}

inline fs::path scenario_dir() { return IVOTESIM_SCENARIO_DIR; }

/// Bundled scenarios, sorted by name.
inline std::vector<fs::path> bundled_scenarios(const fs::path& dir = scenario_dir()) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".yaml") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Accepts a path or the name of a bundled scenario.
inline fs::path resolve_scenario(const std::string& arg) {
  if (fs::exists(arg)) return arg;
  auto bundled = scenario_dir() / (arg + ".yaml");
  if (fs::exists(bundled)) return bundled;
  fail(Errc::ConfigInvalid, arg + ": no such scenario file or bundled scenario");
}

// ---------------------------------------------------------------------------

struct ScenarioRun {
  json report;
  std::vector<std::string> trace;
  std::string metrics_csv;
};

namespace detail {

inline std::string group_name(const ElectionManifest& m, GroupId g) {
  for (const auto& x : m.groups())
    if (x.id == g) return x.name;
  return std::to_string(g.value);
}

inline json tally_json(const Tally& t, const ElectionManifest& m) {
  json j;
  j["counts"] = json::object();
  for (const auto& g : m.groups()) {
    auto it = t.counts.find(g.id);
    j["counts"][g.name] = it == t.counts.end() ? 0 : it->second;
  }
  j["total"] = t.total;
  if (auto l = t.leader()) j["leader"] = group_name(m, *l);
  if (auto mg = t.margin()) j["margin"] = *mg;
  return j;
}

inline json metrics_json(const attacks::DetectionMetrics& d) {
  json j{{"manipulated", d.manipulated},         {"complaints_true", d.complaints_true},
         {"complaints_false", d.complaints_false}, {"complaints_other", d.complaints_other},
         {"verify_attempts", d.verify_attempts},  {"masked", d.masked}};
  j["detection_ratio"] = d.detection_ratio ? json(*d.detection_ratio) : json(nullptr);
  return j;
}

inline std::string format_ratio(const std::optional<double>& r) {
  if (!r) return "";
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << *r;
  return os.str();
}

}  // namespace detail

inline ScenarioRun run_scenario(const ScenarioConfig& sc, bool keep_trace = false) {
  auto ec = sc.election;
  ec.keep_trace = keep_trace;
  election::World world(ec);
  std::optional<attacks::Attacker> attacker;
  attacker.emplace(world, sc.attack);
  world.run();

  const auto& m = world.manifest();
  const auto dedup = world.dedup_and_count();
  const Tally intent = world.intent_tally();
  json r;
  r["schema_version"] = kSchemaVersion;
  r["scenario"] = sc.name;
  r["seed"] = ec.seed;
  r["voters"] = ec.voter_count;
  r["tally"] = detail::tally_json(dedup.tally, m);
  r["intent_tally"] = detail::tally_json(intent, m);
  r["counting"] = {{"records", dedup.records.size()},
                   {"counted", dedup.counted.size()},
                   {"superseded", dedup.superseded},
                   {"undecryptable", dedup.undecryptable}};

  // Winner flip: the attacker's net swing between the honest leader and the
  // runner-up, measured from the ledger.
  {
    json f;
    const auto ranking = intent.ranking();
    const auto reported = dedup.tally.leader();
    f["honest_leader"] = ranking.empty() ? json(nullptr) : json(detail::group_name(m, ranking[0].first));
    f["reported_leader"] = reported ? json(detail::group_name(m, *reported)) : json(nullptr);
    f["flipped"] = !ranking.empty() && reported && *reported != ranking[0].first;
    if (ranking.size() >= 2) {
      // Strongest challenger: the group whose ledger swing against the
      // honest leader exceeds its deficit by the most.
      const GroupId lead = ranking[0].first;
      std::optional<std::int64_t> best_excess;
      for (std::size_t i = 1; i < ranking.size(); ++i) {
        const GroupId challenger = ranking[i].first;
        const auto deficit = static_cast<std::int64_t>(ranking[0].second - ranking[i].second);
        std::int64_t swing = 0;
        for (const auto& e : attacker->state().ledger) {
          auto score = [&](const Ballot& b) {
            auto fp = first_council_group(b, m);
            return static_cast<std::int64_t>(fp == challenger) - static_cast<std::int64_t>(fp == lead);
          };
          swing += score(e.submitted) - score(e.intended);
        }
        if (!best_excess || swing - deficit > *best_excess) {
          best_excess = swing - deficit;
          f["challenger"] = detail::group_name(m, challenger);
          f["challenger_deficit"] = deficit;
          f["attacker_swing"] = swing;
        }
      }
      f["honest_margin"] = static_cast<std::int64_t>(ranking[0].second - ranking[1].second);
      f["feasible"] = *best_excess > 0;
    }
    r["winner_flip"] = f;
  }

  const auto metrics = attacker->metrics();
  std::ostringstream csv;
  csv << "strategy,manipulated,complaints_true,complaints_false,complaints_other,verify_attempts,masked,detection_ratio\n";
  r["metrics"] = json::object();
  for (const auto& [name, d] : metrics) {
    r["metrics"][name] = detail::metrics_json(d);
    csv << name << ',' << d.manipulated << ',' << d.complaints_true << ',' << d.complaints_false << ','
        << d.complaints_other << ',' << d.verify_attempts << ',' << d.masked << ','
        << detail::format_ratio(d.detection_ratio) << '\n';
  }

  {
    const auto& st = attacker->state();
    std::map<std::string, std::size_t> by_strategy;
    for (const auto& e : st.ledger) ++by_strategy[e.strategy];
    r["attack"] = {{"enabled", sc.attack.any()},
                   {"intercepted", st.intercepted.size()},
                   {"compromised", st.compromised.size()},
                   {"malicious_scripts_loaded", world.malicious_scripts_loaded()},
                   {"hijack_attempts", st.hijack_attempts},
                   {"hijacked_sessions", st.hijacked_sessions},
                   {"hijack_errors", st.hijack_errors},
                   {"oracle_connections", st.oracle_connections},
                   {"oracle_failures", st.oracle_failures},
                   {"c2_entries", st.c2_log.size()},
                   {"stolen_registrations", st.stolen_registrations.size()},
                   {"clash_victims", st.clash_victims},
                   {"attacker_casts", st.attacker_casts},
                   {"strip_blocked", st.strip_blocked},
                   {"fake_ivr_calls", st.fake_ivr_log.size()},
                   {"ledger", by_strategy}};
  }

  {
    std::map<std::string, std::size_t> kinds;
    for (const auto& c : world.complaints().entries()) ++kinds[std::string(election::complaint_label(c.kind))];
    r["complaints"] = kinds;
    std::size_t ok = 0, closed = 0, missing = 0;
    for (const auto& v : world.verify_log()) {
      if (!v.error)
        ++ok;
      else if (*v.error == Errc::ServiceClosed)
        ++closed;
      else
        ++missing;
    }
    r["verification"] = {{"calls", world.verify_log().size()}, {"read_back", ok}, {"closed", closed}, {"no_record", missing}};
  }

  {
    json a;
    for (auto [label, mode] : {std::pair{"honest", election::AuditMode::Honest}, {"blind_eye", election::AuditMode::BlindEye}}) {
      const auto rep = world.audit_reconcile(mode);
      std::vector<std::string> ids;
      for (const auto& f : rep.inconsistencies) ids.push_back(f.ivote_id.str() + ":" + f.kind);
      std::sort(ids.begin(), ids.end());
      a[label] = {{"examined", rep.examined}, {"findings", ids}};
    }
    std::vector<std::string> server_ids;
    for (const auto& e : attacker->state().ledger)
      if (e.strategy == attacks::strategy::kServerCvs && e.ivote_id) server_ids.push_back(e.ivote_id->str());
    std::sort(server_ids.begin(), server_ids.end());
    a["server_manipulated"] = server_ids;
    r["audit"] = a;
  }

  r["linkage"] = json::array();
  for (const auto& set : sc.linkage) {
    std::vector<std::string> names;
    for (auto c : set) names.emplace_back(election::component_name(c));
    r["linkage"].push_back({{"components", names}, {"linked_voters", world.linkage_report(set).size()}});
  }

  if (sc.downgrade_matrix) {
    const auto& g = election::crypto_groups(ec.crypto);
    mitm::DowngradeSetup setup{g.dhe, g.dhe_export, &attacks::cached_dlog_table(g.dhe_export, sc.attack.dlog_baby_steps),
                               ec.seed, sc.attack.factoring_budget};
    json cells = json::array();
    for (const auto& c : mitm::downgrade_matrix(setup))
      cells.push_back({{"client_patched", c.client_patched},
                       {"server_export_rsa", c.server_export_rsa},
                       {"server_export_dhe", c.server_export_dhe},
                       {"freak", c.freak_outcome},
                       {"logjam", c.logjam_outcome}});
    r["downgrade_matrix"] = cells;
  }

  r["real_world_costs"] = json::array();
  for (const auto& c : crypto::real_world_costs())
    r["real_world_costs"].push_back({{"attack", c.attack},
                                     {"phase", c.phase},
                                     {"wall_clock_hours", c.wall_clock_hours},
                                     {"dollars", c.dollars ? json(*c.dollars) : json(nullptr)},
                                     {"hardware", c.hardware}});

  const auto counters = world.sim().counters();
  r["trace"] = {{"digest", world.sim().trace_digest()},
                {"scheduled", counters.scheduled},
                {"delivered", counters.delivered},
                {"dropped", counters.dropped},
                {"modified", counters.modified},
                {"injected", counters.injected},
                {"pending", counters.pending},
                {"reconciles", counters.reconciles()}};

  ScenarioRun out;
  out.report = std::move(r);
  out.trace = world.sim().trace();
  out.metrics_csv = csv.str();
  return out;
}

inline std::string report_text(const json& report) { return report.dump(2) + "\n"; }

/// JSON Patch from a to b; empty iff the reports are identical.
inline json diff_reports(const json& a, const json& b) { return json::diff(a, b); }

inline json load_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::ConfigInvalid, path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(Errc::MalformedEncoding, path.string() + ": " + e.what());
  }
}

}  // namespace ivotesim::scenario
