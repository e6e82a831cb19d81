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

#include <gtest/gtest.h>

#include "ivotesim/scenario.hpp"

namespace {

using namespace ivotesim;
using scenario::json;

std::string config_error(const std::string& text) {
  try {
    scenario::parse_scenario(text, "t.yaml");
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ConfigInvalid);
    return e.what();
  }
  ADD_FAILURE() << "accepted:\n" << text;
  return {};
}

const char* kSmall = R"(schema_version: 1
name: small
seed: 5
voters: 80
timeline:
  polls_close: 48h
  receipt_service_end: 96h
behavior:
  registration_lead: [10min, 6h]
  verify_delay: [5min, 1h]
  cast_cutoff: 2h
  p_verify_ivr: 0.6
attack:
  vector: granted
  granted_rate: 0.5
  target: g2
  strategy: rewrite
)";

TEST(Config, ParsesFields) {
  const auto sc = scenario::parse_scenario(kSmall);
  EXPECT_EQ(sc.name, "small");
  EXPECT_EQ(sc.election.seed, 5u);
  EXPECT_EQ(sc.election.voter_count, 80u);
  EXPECT_EQ(sc.election.timeline.polls_close, at(std::chrono::hours(48)));
  EXPECT_EQ(sc.election.behavior.registration_lead_max, std::chrono::hours(6));
  EXPECT_DOUBLE_EQ(sc.election.behavior.p_verify_ivr, 0.6);
  EXPECT_DOUBLE_EQ(sc.election.behavior.card_rate, 0.4);
  EXPECT_EQ(sc.attack.vector, attacks::CompromiseVector::Granted);
  EXPECT_EQ(sc.attack.strategy, attacks::ScriptStrategy::Rewrite);
  EXPECT_EQ(*sc.attack.target, GroupId{2});
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_NE(config_error("schema_version: 1\nseed: 1\nvoterz: 3\n").find("t.yaml:3: unknown key 'voterz'"), std::string::npos);
  EXPECT_NE(config_error("schema_version: 1\nseed: 1\nbehavior:\n  p_verify_ivr: 1.5\n").find("t.yaml:4:"),
            std::string::npos);
  EXPECT_NE(config_error("schema_version: 1\nseed: 1\nattack:\n  target: g9\n").find("t.yaml:4: unknown group 'g9'"),
            std::string::npos);
  EXPECT_NE(config_error("schema_version: 1\nseed: 1\ntimeline:\n  polls_close: soon\n").find("t.yaml:4: bad duration"),
            std::string::npos);
  EXPECT_NE(config_error("schema_version: 1\nseed: 1\ntls:\n  piwik_suites: [RSA, RC4]\n").find("t.yaml:4:"),
            std::string::npos);
  EXPECT_NE(config_error("schema_version: 1\nseed: 1\nbehavior:\n  nested:\n    x: 1\n").find("behavior.nested"),
            std::string::npos);
}

TEST(Config, RequiresSeedAndSchema) {
  EXPECT_NE(config_error("schema_version: 1\nvoters: 3\n").find("missing seed"), std::string::npos);
  EXPECT_NE(config_error("seed: 1\n").find("missing schema_version"), std::string::npos);
  EXPECT_NE(config_error("schema_version: 2\nseed: 1\n").find("unsupported schema_version"), std::string::npos);
  EXPECT_NE(config_error("schema_version: 1\nseed: [1\n").find("t.yaml:"), std::string::npos);
}

TEST(Config, CrossFieldValidation) {
  EXPECT_FALSE(config_error("schema_version: 1\nseed: 1\nattack:\n  strategy: rewrite\n").empty());
  EXPECT_FALSE(
      config_error("schema_version: 1\nseed: 1\nbehavior:\n  p_verify_ivr: 0.8\n  p_check_receipt_only: 0.5\n").empty());
  EXPECT_FALSE(config_error("schema_version: 1\nseed: 1\nvoters: 10\nleaning:\n  quota: {g1: 20}\n").empty());
}

TEST(Config, BundledScenariosLoad) {
  const auto all = scenario::bundled_scenarios();
  std::set<std::string> names;
  for (const auto& p : all) names.insert(scenario::load_scenario(p).name);
  EXPECT_EQ(names, (std::set<std::string>{"honest-baseline", "freak-window", "logjam-anyclient", "last-minute",
                                          "receipt-delay", "fake-ivr", "clash", "blind-auditor", "linkage-matrix"}));
}

TEST(Report, DeterministicAndSelfDiffEmpty) {
  const auto sc = scenario::parse_scenario(kSmall);
  const auto a = scenario::run_scenario(sc, true), b = scenario::run_scenario(sc, true);
  EXPECT_EQ(scenario::report_text(a.report), scenario::report_text(b.report));
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.metrics_csv, b.metrics_csv);
  EXPECT_TRUE(scenario::diff_reports(a.report, a.report).empty());
  EXPECT_TRUE(a.report["trace"]["reconciles"].get<bool>());
}

TEST(Report, DifferentSeedsDiffer) {
  auto sc = scenario::parse_scenario(kSmall);
  const auto a = scenario::run_scenario(sc);
  sc.election.seed = 6;
  EXPECT_FALSE(scenario::diff_reports(a.report, scenario::run_scenario(sc).report).empty());
}

TEST(Report, FakeIvrPairTouchesOnlyDetection) {
  auto sc = scenario::parse_scenario(kSmall);
  const auto off = scenario::run_scenario(sc);
  sc.attack.fake_ivr = true;
  const auto on = scenario::run_scenario(sc);
  const auto delta = scenario::diff_reports(off.report, on.report);
  ASSERT_FALSE(delta.empty());
  for (const auto& op : delta) {
    const auto path = op["path"].get<std::string>();
    const bool detection = path.rfind("/metrics/", 0) == 0 || path.rfind("/complaints", 0) == 0 ||
                           path.rfind("/verification/", 0) == 0 || path.rfind("/trace/", 0) == 0 ||
                           path == "/attack/fake_ivr_calls";
    EXPECT_TRUE(detection) << path;
  }
  EXPECT_EQ(off.report["tally"], on.report["tally"]);
  EXPECT_LE(on.report["metrics"]["all"]["detection_ratio"].get<double>(),
            off.report["metrics"]["all"]["detection_ratio"].get<double>());
}

TEST(Report, HonestBaselineMatchesIntent) {
  const auto run = scenario::run_scenario(scenario::load_scenario(scenario::resolve_scenario("honest-baseline")));
  EXPECT_EQ(run.report["tally"], run.report["intent_tally"]);
  EXPECT_EQ(run.report["metrics"]["all"]["manipulated"], 0);
  EXPECT_TRUE(run.report["metrics"]["all"]["detection_ratio"].is_null());
  EXPECT_FALSE(run.report["winner_flip"]["flipped"].get<bool>());
}

TEST(Report, MetricsCsvHasOneRowPerStrategy) {
  const auto run = scenario::run_scenario(scenario::parse_scenario(kSmall));
  std::istringstream in(run.metrics_csv);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0].substr(0, 9), "strategy,");
  EXPECT_EQ(rows[1].substr(0, 4), "all,");
}

}  // namespace
