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

#include <CLI11.hpp>
#include <iostream>

#include "ivotesim/scenario.hpp"

namespace {

using namespace ivotesim;
namespace fs = std::filesystem;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::ConfigInvalid, path.string() + ": cannot write");
  out << text;
}

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out_dir, bool trace) {
  auto sc = scenario::load_scenario(scenario::resolve_scenario(config));
  if (seed) sc.election.seed = *seed;
  const auto run = scenario::run_scenario(sc, trace);
  const auto text = scenario::report_text(run.report);
  if (out_dir.empty()) {
    std::cout << text;
    return 0;
  }
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "report.json", text);
  write_file(fs::path(out_dir) / "metrics.csv", run.metrics_csv);
  if (trace) {
    std::string lines;
    for (const auto& l : run.trace) lines += l + '\n';
    write_file(fs::path(out_dir) / "trace.log", lines);
  }
  const auto& f = run.report["winner_flip"];
  std::cerr << sc.name << ": seed " << sc.election.seed << ", leader " << f["reported_leader"].dump()
            << " (honest " << f["honest_leader"].dump() << "), manipulated "
            << run.report["metrics"]["all"]["manipulated"] << ", report in " << out_dir << '\n';
  return 0;
}

int cmd_diff(const std::string& a, const std::string& b) {
  const auto delta = scenario::diff_reports(scenario::load_report(a), scenario::load_report(b));
  std::cout << delta.dump(2) << '\n';
  return delta.empty() ? 0 : 1;
}

int cmd_list() {
  for (const auto& path : scenario::bundled_scenarios()) {
    const auto sc = scenario::load_scenario(path);
    std::cout << sc.name << '\t' << sc.description << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ivotesim: deterministic Internet-voting attack simulator"};
  app.require_subcommand(1);

  std::string config, out_dir;
  std::optional<std::uint64_t> seed;
  bool trace = false;
  auto* run = app.add_subcommand("run", "run a scenario file or bundled scenario name");
  run->add_option("config", config, "scenario YAML path or bundled name")->required();
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--out", out_dir, "write report.json, metrics.csv (and trace.log) here");
  run->add_flag("--trace", trace, "also write the event trace");

  std::string report_a, report_b;
  auto* diff = app.add_subcommand("diff", "structured delta between two reports (exit 1 if they differ)");
  diff->add_option("a", report_a)->required();
  diff->add_option("b", report_b)->required();

  auto* list = app.add_subcommand("list-scenarios", "list bundled scenarios");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, seed, out_dir, trace);
    if (*diff) return cmd_diff(report_a, report_b);
    if (*list) return cmd_list();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
