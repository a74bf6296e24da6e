// tag: command-line driver.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure,
// 3 property-suite violation (verify).

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tag/affinity.hpp"
#include "tag/artifact.hpp"
#include "tag/bench.hpp"
#include "tag/config.hpp"
#include "tag/errors.hpp"
#include "tag/selector.hpp"
#include "tag/theory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Level { quiet = 0, info = 1, debug = 2 };

Level log_level() {
  const char* v = std::getenv("TAG_LOG");
  if (!v) return Level::info;
  const std::string s(v);
  if (s == "quiet" || s == "0" || s == "error") return Level::quiet;
  if (s == "debug" || s == "2") return Level::debug;
  return Level::info;
}

void log(Level level, const std::string& msg) {
  if (static_cast<int>(level) <= static_cast<int>(log_level())) std::cerr << "[tag] " << msg << '\n';
}

std::string run_id_for(const tag::RunConfig& c) { return c.hash().substr(0, 12); }

json grouping_json(const tag::GroupingSolution& s, std::size_t n, std::size_t budget, tag::DiagonalMode mode,
                   json provenance) {
  auto groups = json::array();
  for (auto g : s.groups) groups.push_back(g.members());
  json serving = json::object();
  for (std::size_t t = 0; t < s.serving.size(); ++t) serving[std::to_string(t)] = s.serving[t];
  return {{"tasks", n},
          {"budget", budget},
          {"mode", tag::to_string(mode)},
          {"groups", groups},
          {"serving", serving},
          {"per_task_scores", s.per_task_score},
          {"total_score", s.total_score},
          {"solver", {{"nodes_expanded", s.stats.nodes_expanded}, {"pruned", s.stats.pruned}}},
          {"provenance", std::move(provenance)}};
}

fs::path output_root(const std::string& flag, const tag::RunConfig& c) { return flag.empty() ? fs::path(c.output_dir) : fs::path(flag); }

int cmd_run(const std::string& config_path, const std::string& out) {
  const auto cfg = tag::parse_config(config_path);
  const auto dir = output_root(out, cfg) / run_id_for(cfg);
  log(Level::info, "run " + run_id_for(cfg) + " -> " + dir.string());
  const auto report = tag::bench::run_benchmark(cfg.bench);
  const auto report_json = tag::bench::to_json(report);
  const auto files = tag::bench::render_report(report_json);
  const auto affinity_csv = tag::affinity_to_csv(report.tag_affinity);
  const auto& tag_eval = report.evaluations.front();
  json prov{{"seed", {{"data", cfg.bench.data.seed}, {"train", cfg.bench.train.seed}, {"rg", cfg.bench.rg_seed}}},
            {"config_hash", cfg.hash()},
            {"affinity_csv_hash", tag::sha256_hex(affinity_csv)}};
  const auto grouping = grouping_json(tag_eval.grouping, cfg.bench.data.n_tasks, cfg.bench.budget, cfg.bench.mode, prov);
  tag::persist_artifact({{"config.json", cfg.to_json().dump(2) + "\n"},
                         {"affinity.csv", affinity_csv},
                         {"cs_affinity.csv", tag::affinity_to_csv(report.cs_affinity)},
                         {"grouping.json", grouping.dump(2) + "\n"},
                         {"report.json", files.report_json},
                         {"per_task_losses.csv", files.per_task_csv},
                         {"plotdata.csv", files.plotdata_csv}},
                        dir, cfg.hash());
  for (const auto& e : report.evaluations) {
    std::ostringstream os;
    os << std::left << std::setw(20) << e.method << " total_test_loss=" << std::setprecision(6) << e.total_test_loss
       << " grouping_runs=" << e.grouping_runs << " groups=";
    for (auto g : e.grouping.groups) os << g.to_string();
    std::cout << os.str() << '\n';
  }
  std::cout << "RG (expected)        total_test_loss=" << std::setprecision(6) << report.rg_loss.mean << '\n';
  std::cout << "planted recovered by TAG: " << (report.tag_recovers_planted ? "yes" : "no") << '\n';
  std::cout << dir.string() << '\n';
  return 0;
}

int cmd_affinity(const std::string& config_path, const std::string& out) {
  const auto cfg = tag::parse_config(config_path);
  const auto dir = output_root(out, cfg) / run_id_for(cfg);
  const auto planted = tag::build_planted_taskset(cfg.bench.data);
  const auto probe = tag::bench::run_probe(planted.data, cfg.bench, false);
  log(Level::info, "probed " + std::to_string(probe.result.probed_steps.size()) + " steps");
  tag::persist_artifact({{"config.json", cfg.to_json().dump(2) + "\n"},
                         {"affinity.csv", tag::affinity_to_csv(probe.affinity)},
                         {"samples.csv", tag::samples_to_csv(probe.result.samples)}},
                        dir, cfg.hash());
  std::cout << dir.string() << '\n';
  return 0;
}

int cmd_select(const std::string& affinity_path, std::size_t budget, const std::string& mode_name, const std::string& out) {
  const auto mode = tag::diagonal_mode_from_string(mode_name);
  if (!fs::exists(affinity_path)) throw tag::ValidationError("affinity file not found: " + affinity_path);
  const auto text = tag::read_file(affinity_path);
  const auto z = tag::affinity_from_csv(text, mode);
  const auto problem = tag::SelectionProblem::from_affinity(z, budget);
  const auto solution = tag::solve_branch_and_bound(problem);
  json prov{{"seed", nullptr}, {"config_hash", nullptr}, {"affinity_csv_hash", tag::sha256_hex(text)}};
  const auto grouping = grouping_json(solution, z.n, budget, mode, prov);
  tag::persist_artifact({{"grouping.json", grouping.dump(2) + "\n"}}, out, "");
  std::cout << "total_score " << std::setprecision(17) << solution.total_score << '\n';
  return 0;
}

int cmd_exhaustive(const std::string& config_path, std::size_t budget, const std::string& out) {
  const auto cfg = tag::parse_config(config_path);
  if (budget < 1) throw tag::ValidationError("--budget must be >= 1");
  const auto dir = output_root(out, cfg) / run_id_for(cfg);
  const auto planted = tag::build_planted_taskset(cfg.bench.data);
  tag::bench::NetworkCache cache(planted.data, cfg.bench.train);
  const auto result = tag::bench::exhaustive_grouping_search(planted.data, budget, cache);
  auto ranking = json::array();
  for (const auto& c : result.ranking) {
    auto groups = json::array();
    for (auto g : c.groups) groups.push_back(g.members());
    ranking.push_back({{"groups", groups}, {"serving", c.serving}, {"per_task_test_loss", c.per_task_loss}, {"total_test_loss", c.total}});
  }
  const json doc{{"budget", budget},
                 {"networks_trained", result.networks},
                 {"provenance", tag::bench::provenance_hash(planted.data, cfg.bench.train)},
                 {"planted", cfg.bench.data.clusters},
                 {"top_is_planted",
                  tag::bench::matches_partition(
                      tag::bench::served_partition(result.ranking.front().groups, result.ranking.front().serving),
                      cfg.bench.data.clusters)},
                 {"ranking", ranking}};
  tag::persist_artifact({{"config.json", cfg.to_json().dump(2) + "\n"}, {"exhaustive.json", doc.dump(2) + "\n"}}, dir,
                        cfg.hash());
  std::cout << "networks trained " << result.networks << ", covers ranked " << result.ranking.size() << '\n';
  std::cout << "best total_test_loss " << std::setprecision(6) << result.ranking.front().total << " groups ";
  for (auto g : result.ranking.front().groups) std::cout << g.to_string();
  std::cout << '\n' << dir.string() << '\n';
  return 0;
}

int cmd_verify(std::size_t trials, std::uint64_t seed, const std::string& form_name) {
  if (trials < 1) throw tag::ValidationError("--trials must be >= 1");
  const auto form = tag::theory::threshold_form_from_string(form_name);
  const auto lemma = tag::theory::lemma_harness(trials, seed);
  const auto prop = tag::theory::proposition_harness(trials, seed, form);
  auto harness = [](const tag::theory::HarnessResult& r) {
    return json{{"trials", r.trials},
                {"checked", r.checked},
                {"violations", r.violations},
                {"min_slack", r.min_slack},
                {"seed", r.seed},
                {"violating_trial_seeds", r.violating_seeds}};
  };
  const json report{{"lemma", harness(lemma)}, {"proposition", harness(prop)}, {"threshold_form", tag::theory::to_string(form)}};
  std::cout << report.dump(2) << '\n';
  if (lemma.violations > 0 || prop.violations > 0) {
    log(Level::info, "property violations: lemma " + std::to_string(lemma.violations) + ", proposition " +
                         std::to_string(prop.violations));
    return 3;
  }
  return 0;
}

int cmd_counterexample() {
  const auto table = tag::theory::run_counterexample();
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& r : table.rows)
    std::cout << std::left << std::setw(16) << r.label << std::right << std::setw(10) << r.value << "   (reference "
              << std::setprecision(2) << r.reference << std::setprecision(4) << ")\n";
  std::cout << "single-step order  L(b) < L(c):            " << (table.single_step_order ? "yes" : "no") << '\n';
  std::cout << "combined inverted  L(a+c) < L(a+b):        " << (table.combined_order_inverted ? "yes" : "no") << '\n';
  std::cout << "alternate c: single L(b) < L(c):           " << (table.alternate_single_order ? "yes" : "no") << '\n';
  std::cout << "alternate c: combined L(a+b) < L(a+c):     " << (table.alternate_combined_order ? "yes" : "no") << '\n';
  std::cout << "max deviation from reference:                " << table.max_abs_deviation << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  json merged{{"reports", json::array()}};
  for (const auto& in : inputs) {
    const auto problems = tag::verify_artifact(in);
    if (!problems.empty()) {
      for (const auto& p : problems) log(Level::quiet, p);
      throw tag::RuntimeFailure("artifact verification failed for " + in);
    }
    merged["reports"].push_back(json::parse(tag::read_file(fs::path(in) / "report.json")));
  }
  const auto files = tag::bench::render_report(merged);
  tag::persist_artifact({{"report.json", files.report_json},
                         {"per_task_losses.csv", files.per_task_csv},
                         {"plotdata.csv", files.plotdata_csv}},
                        out, tag::sha256_hex(merged.dump()));
  std::cout << files.plotdata_csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task grouping by lookahead inter-task affinity"};
  app.require_subcommand(1);

  std::string config, out, affinity, mode = "train", form = "proof";
  std::size_t budget = 0, trials = 10'000;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;

  auto* run = app.add_subcommand("run", "probe, select, retrain and compare against baselines");
  run->add_option("--config", config, "config JSON")->required();
  run->add_option("--out", out, "output root (default: output_dir from the config)");

  auto* aff = app.add_subcommand("affinity", "probed training and averaged affinity only");
  aff->add_option("--config", config, "config JSON")->required();
  aff->add_option("--out", out, "output root");

  auto* sel = app.add_subcommand("select", "solve network selection on an affinity CSV");
  sel->add_option("--affinity", affinity, "affinity CSV")->required();
  sel->add_option("--budget", budget, "maximum number of networks")->required();
  sel->add_option("--mode", mode, "diagonal mode")->check(CLI::IsMember({"train", "val"}));
  sel->add_option("--out", out, "output directory")->required();

  auto* exh = app.add_subcommand("exhaustive", "train every group and rank all covers");
  exh->add_option("--config", config, "config JSON")->required();
  exh->add_option("--budget", budget, "maximum number of networks")->required();
  exh->add_option("--out", out, "output root");

  auto* ver = app.add_subcommand("verify", "randomized checks of the convex-case guarantees");
  ver->add_option("--trials", trials, "trials per harness");
  ver->add_option("--seed", seed, "harness seed");
  ver->add_option("--threshold-form", form, "cosine threshold reading")
      ->check(CLI::IsMember({"proof", "statement", "no_offset"}));

  auto* ce = app.add_subcommand("counterexample", "print the two-dimensional counterexample losses");

  auto* rep = app.add_subcommand("report", "merge run directories into one report");
  rep->add_option("--in", inputs, "run directories")->required()->expected(1, -1);
  rep->add_option("--out", out, "output directory")->default_val("report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(config, out);
    if (*aff) return cmd_affinity(config, out);
    if (*sel) return cmd_select(affinity, budget, mode, out);
    if (*exh) return cmd_exhaustive(config, budget, out);
    if (*ver) return cmd_verify(trials, seed, form);
    if (*ce) return cmd_counterexample();
    if (*rep) return cmd_report(inputs, out);
  } catch (const tag::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
