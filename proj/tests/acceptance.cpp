// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance            run all criteria
//   acceptance --only N   run criterion N; exit status reflects it alone

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tag/affinity.hpp"
#include "tag/bench.hpp"
#include "tag/probe.hpp"
#include "tag/selector.hpp"
#include "tag/theory.hpp"

using namespace tag;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

Outcome counterexample() {
  const auto t0 = Clock::now();
  const auto t = theory::run_counterexample();
  const double secs = seconds_since(t0);
  bool within = t.row("initial").value == oracle::kInitialLoss;
  std::string values;
  for (const auto& r : t.rows) {
    within = within && std::abs(r.value - r.reference) <= oracle::kReferenceTolerance;
    values += r.label + "=" + num(r.value, 5) + " ";
  }
  const bool orders = t.single_step_order && t.combined_order_inverted && t.alternate_single_order &&
                      t.alternate_combined_order;
  return {within && orders && secs < 1.0,
          values + "max_dev=" + num(t.max_abs_deviation, 3) + " orderings=" + (orders ? "ok" : "broken") +
              " time=" + num(secs, 3) + "s"};
}

Outcome threshold() {
  const auto t0 = Clock::now();
  const double thr = theory::cos_threshold(1.0, 10.0, 0.09);
  const auto orig = theory::check_proposition(theory::counterexample_scenario(false));
  const auto alt = theory::check_proposition(theory::counterexample_scenario(true));
  const double secs = seconds_since(t0);
  const bool ok = std::abs(thr - oracle::kThresholdCounterexample) < 1e-12 && alt.cos_ac <= thr && orig.cos_ac > thr;
  return {ok && secs < 1.0, "threshold=" + num(thr, 17) + " cos_alt=" + num(alt.cos_ac) + " cos_orig=" +
                                num(orig.cos_ac) + " time=" + num(secs, 3) + "s"};
}

Outcome harness(bool lemma) {
  const auto t0 = Clock::now();
  const auto r = lemma ? theory::lemma_harness(10'000, 7) : theory::proposition_harness(10'000, 7);
  const double secs = seconds_since(t0);
  const bool ok = r.checked == 10'000 && r.violations == 0 && secs < 10.0;
  std::string d = std::to_string(r.checked - r.violations) + "/" + std::to_string(r.checked) +
                  " hold, min_slack=" + num(r.min_slack) + " time=" + num(secs, 3) + "s";
  if (!r.violating_seeds.empty()) d += " first_violating_trial_seed=" + std::to_string(r.violating_seeds.front());
  return {ok, d};
}

Outcome solver() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  int score_match = 0, identical = 0, valid = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 3 + static_cast<std::size_t>(i % 3);
    const std::size_t b = 1 + static_cast<std::size_t>((i / 3) % 3);
    const auto mode = i % 2 ? DiagonalMode::validation_included : DiagonalMode::train_excluded;
    const auto p = SelectionProblem::from_affinity(fixture::random_affinity(n, mode, rng), b);
    const auto ex = solve_exhaustive_small(p);
    const auto bb = solve_branch_and_bound(p);
    score_match += bb.total_score == ex.total_score;
    identical += bb == ex;
    valid += fixture::validate_solution(p, bb).empty();
  }
  const double secs = seconds_since(t0);
  return {score_match == 200 && identical == 200 && valid == 200 && secs < 30.0,
          "score " + std::to_string(score_match) + "/200, identical " + std::to_string(identical) +
              "/200, valid " + std::to_string(valid) + "/200, time=" + num(secs, 3) + "s"};
}

// Records a full probed run, then recomputes every step affinity along the
// same trajectory with one task's loss weight scaled.
Outcome scale_invariance() {
  const auto planted = build_planted_taskset(fixture::small_planted(3));
  auto cfg = fixture::small_trainer(3, 300);
  cfg.schedule = ProbeSchedule::every(1);
  cfg.record_trajectory = true;
  const auto run = train_group(planted.data, TaskGroup::all(6), cfg);
  std::map<std::tuple<std::uint64_t, TaskId, TaskId>, double> base;
  for (const auto& s : run.samples) base[{s.step, s.source, s.target}] = s.value;

  double worst = 0.0;
  std::size_t compared = 0;
  for (TaskId j = 0; j < 6; ++j) {
    for (double c : {0.01, 1.0, 100.0}) {
      auto data = planted.data;
      for (auto& t : data.taskset.tasks)
        if (t.id == j) t.loss_weight *= c;
      for (const auto& s : replay_affinity(data, run.trajectory, cfg)) {
        if (s.target != j || s.source == j) continue;
        const double ref = base.at({s.step, s.source, s.target});
        worst = std::max(worst, std::abs(s.value - ref) / std::max(std::abs(ref), 1e-300));
        ++compared;
      }
    }
  }
  return {worst <= 1e-12 && compared > 0,
          "max relative change " + num(worst, 3) + " over " + std::to_string(compared) + " entries"};
}

Outcome non_interference() {
  const auto planted = build_planted_taskset(fixture::small_planted(5));
  auto cfg = fixture::small_trainer(5, 300);
  cfg.record_trajectory = true;
  const auto off = train_group(planted.data, TaskGroup::all(6), cfg);
  bool same = true;
  for (auto src : {BatchSource::train, BatchSource::validation}) {
    auto on_cfg = cfg;
    on_cfg.schedule = ProbeSchedule::every(1, src);
    on_cfg.record_cosine = true;
    const auto on = train_group(planted.data, TaskGroup::all(6), on_cfg);
    same = same && on.trajectory == off.trajectory && on.model == off.model && !on.samples.empty();
  }
  return {same, same ? "300-step trajectories bit-identical (train and validation probe batches)" : "trajectories differ"};
}

Outcome gradients() {
  double worst = 0.0;
  int count = 0;
  for (auto kind : {LossKind::quadratic, LossKind::linear_regression, LossKind::mlp_regression}) {
    for (std::uint64_t s = 0; s < 100; ++s) {
      worst = std::max(worst, fixture::fd_error(fixture::gradient_case(kind, derive_seed(101, {s}))));
      ++count;
    }
  }
  return {worst <= 1e-6 && count == 300, std::to_string(count) + " instances, max relative error " + num(worst, 3)};
}

bench::BenchConfig planted_config(std::uint64_t seed) {
  bench::BenchConfig c;
  c.data = fixture::small_planted(seed);
  c.train = fixture::small_trainer(seed, 300);
  c.budget = 2;
  c.mode = DiagonalMode::train_excluded;
  c.rg_seed = seed;
  return c;
}

Outcome planted_recovery() {
  const auto t0 = Clock::now();
  int recovered = 0, beats_rg = 0, oracle_planted = 0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto r = bench::run_benchmark(planted_config(s));
    recovered += r.tag_recovers_planted;
    beats_rg += r.evaluations.front().total_test_loss <= r.rg_loss.mean;
    oracle_planted += r.exhaustive_optimal_is_planted;
  }
  const double secs = seconds_since(t0);
  return {recovered >= 16 && beats_rg >= 18 && oracle_planted >= 18 && secs < 600.0,
          "TAG recovers " + std::to_string(recovered) + "/20, TAG <= RG " + std::to_string(beats_rg) +
              "/20, oracle planted " + std::to_string(oracle_planted) + "/20, time=" + num(secs, 3) + "s"};
}

Outcome ablations() {
  const auto planted = build_planted_taskset(fixture::small_planted(3));
  auto cfg = fixture::small_trainer(3, 300);
  cfg.schedule = ProbeSchedule::every(1);
  const auto run = train_group(planted.data, TaskGroup::all(6), cfg);
  const auto every1 = average_affinity(run.samples, {}, 6, DiagonalMode::train_excluded);
  const auto every10 =
      average_affinity(run.samples, {ProbeSchedule::every(10), cfg.steps}, 6, DiagonalMode::train_excluded);
  const double r_stride = matrix_correlation(every1, every10);

  auto val_cfg = cfg;
  val_cfg.schedule = ProbeSchedule::every(1, BatchSource::validation);
  const auto val_run = train_group(planted.data, TaskGroup::all(6), val_cfg);
  const auto val = average_affinity(val_run.samples, {}, 6, DiagonalMode::validation_included);
  const double r_mode = matrix_correlation(every1, val, true);
  return {r_stride >= 0.95 && r_mode >= 0.9,
          "pearson(stride1, stride10)=" + num(r_stride, 5) + " pearson(train, validation) off-diagonal=" + num(r_mode, 5)};
}

Outcome cost_structure() {
  const auto r = bench::run_benchmark(planted_config(3));
  std::size_t tag_runs = 0, hoa_runs = 0;
  for (const auto& e : r.evaluations) {
    if (e.method == "TAG") tag_runs = e.grouping_runs;
    if (e.method == "HOA") hoa_runs = e.grouping_runs;
  }
  return {tag_runs == 1 && hoa_runs == 15,
          "TAG grouping runs=" + std::to_string(tag_runs) + ", HOA grouping runs=" + std::to_string(hoa_runs)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "run a single criterion (1-11)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"counterexample reproduction", counterexample},
      {"threshold consistency", threshold},
      {"lemma harness", [] { return harness(true); }},
      {"proposition harness", [] { return harness(false); }},
      {"solver correctness", solver},
      {"affinity scale invariance", scale_invariance},
      {"probe non-interference", non_interference},
      {"gradient checks", gradients},
      {"planted-structure recovery", planted_recovery},
      {"ablation analogs", ablations},
      {"cost structure", cost_structure},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<std::size_t>(only) != i + 1) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %2zu %-28s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
