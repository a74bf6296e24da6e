#pragma once

// End-to-end pipelines on planted-cluster task sets: the affinity-driven
// grouping pipeline, the exhaustive trained-network oracle, and the
// higher-order-approximation, cosine-similarity, random and all-in-one
// baselines.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tag/affinity.hpp"
#include "tag/data.hpp"
#include "tag/probe.hpp"
#include "tag/selector.hpp"

namespace tag::bench {

struct BenchConfig {
  PlantedSpec data;
  TrainConfig train;  // per-network hyperparameters; `schedule` drives probed runs
  std::size_t budget = 2;
  DiagonalMode mode = DiagonalMode::train_excluded;
  std::optional<std::size_t> parameter_cap;
  std::size_t rg_trials = 10'000;
  std::uint64_t rg_seed = 0;

  void validate() const;
  CandidateFilter candidate_filter() const;
  /// Probe schedule actually used (every step on train batches when unset).
  ProbeSchedule schedule() const;
};

struct TrainedNetwork {
  TaskGroup group;
  std::map<TaskId, double> test_loss;
  std::uint64_t steps = 0;
};

/// Trains each group network at most once. The initialisation and batch
/// streams of a group depend only on (train seed, group), so every method
/// sees the same network for the same group.
class NetworkCache {
 public:
  NetworkCache(const TaskData& data, TrainConfig config);

  const TrainedNetwork& get(TaskGroup group);
  /// Trains missing groups in parallel; results are independent of thread count.
  void prefetch(const std::vector<TaskGroup>& groups);
  std::size_t trained() const;
  bool contains(TaskGroup group) const;
  const TaskData& data() const noexcept { return *data_; }
  const TrainConfig& config() const noexcept { return config_; }

 private:
  TrainedNetwork train(TaskGroup group) const;

  const TaskData* data_;
  TrainConfig config_;
  mutable std::mutex mutex_;
  std::map<std::uint32_t, TrainedNetwork> networks_;
};

struct GroupingEvaluation {
  std::string method;
  std::size_t budget = 0;
  GroupingSolution grouping;
  std::vector<double> per_task_test_loss;
  double total_test_loss = 0.0;
  std::size_t grouping_runs = 0;       // training runs spent deciding the grouping
  std::uint64_t grouping_steps = 0;    // SGD steps spent deciding the grouping
  std::uint64_t training_cost = 0;     // grouping_steps + steps of the served networks
  std::string provenance;              // hash of data splits + architecture + trainer
};

/// Looks up the served networks and sums their per-task test losses.
GroupingEvaluation evaluate_solution(std::string method, std::size_t budget, GroupingSolution solution,
                                     NetworkCache& cache, const std::string& provenance);

struct ProbeRun {
  TrainResult result;
  AffinityMatrix affinity;         // lookahead affinity
  std::optional<AffinityMatrix> cosine;
};

/// One jointly trained, probed run over all tasks.
ProbeRun run_probe(const TaskData& data, const BenchConfig& config, bool record_cosine);

struct TagOutcome {
  ProbeRun probe;
  SelectionProblem problem;
  GroupingEvaluation evaluation;
};

TagOutcome tag_pipeline(const TaskData& data, const BenchConfig& config, NetworkCache& cache,
                        const ProbeRun* reuse = nullptr);

GroupingEvaluation cs_baseline_grouping(const TaskData& data, const BenchConfig& config, NetworkCache& cache,
                                        const ProbeRun* reuse = nullptr);

struct HoaOutcome {
  GroupingEvaluation evaluation;
  std::size_t models_trained = 0;
  std::map<std::uint32_t, std::vector<std::optional<double>>> estimates;  // group -> per-task estimated loss
};

HoaOutcome hoa_baseline_grouping(const TaskData& data, const BenchConfig& config, NetworkCache& cache);

struct RankedCover {
  std::vector<TaskGroup> groups;
  std::vector<std::size_t> serving;
  std::vector<double> per_task_loss;
  double total = 0.0;
};

struct ExhaustiveResult {
  std::vector<RankedCover> ranking;  // ascending total test loss
  std::size_t networks = 0;          // 2^n - 1
};

/// Trains every nonempty group, then ranks every cover of at most `budget`
/// groups by total test loss, serving each task from its best chosen network.
ExhaustiveResult exhaustive_grouping_search(const TaskData& data, std::size_t budget, NetworkCache& cache);

inline constexpr std::size_t kExhaustiveMaxTasks = 6;
inline constexpr std::size_t kHoaMaxTasks = 8;

/// Expected total test loss over uniformly drawn feasible (groups, serving)
/// solutions, using trained networks for every candidate group.
Expectation random_grouping_loss(const TaskData& data, const BenchConfig& config, NetworkCache& cache);

struct BenchmarkReport {
  nlohmann::json config;
  std::string provenance;
  std::vector<GroupingEvaluation> evaluations;  // TAG, CS, HOA, MTL-all, exhaustive-optimal
  Expectation rg_score;                          // on TAG's affinity problem
  Expectation rg_loss;                           // trained test loss
  AffinityMatrix tag_affinity;
  AffinityMatrix cs_affinity;
  double tag_asymmetry = 0.0;
  double cs_asymmetry = 0.0;
  std::vector<std::vector<TaskId>> planted;
  bool tag_recovers_planted = false;
  bool exhaustive_optimal_is_planted = false;
};

std::string provenance_hash(const TaskData& data, const TrainConfig& train);

BenchmarkReport run_benchmark(const BenchConfig& config, NetworkCache* shared_cache = nullptr);

/// True when `groups` is exactly the partition `clusters`.
bool matches_partition(const std::vector<TaskGroup>& groups, const std::vector<std::vector<TaskId>>& clusters);

/// Tasks grouped by the network serving them; empty groups dropped.
std::vector<TaskGroup> served_partition(const std::vector<TaskGroup>& groups, const std::vector<std::size_t>& serving);

nlohmann::json to_json(const GroupingEvaluation& e);
GroupingEvaluation evaluation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchmarkReport& r);

struct ReportFiles {
  std::string report_json;
  std::string per_task_csv;
  std::string plotdata_csv;
};

/// Renders report files. Throws if the evaluations disagree on provenance.
ReportFiles render_report(const nlohmann::json& report);

}  // namespace tag::bench
