#pragma once

// Joint SGD training with the lookahead affinity probe. At a probed step every
// source task takes a hypothetical shared-parameter step with its own gradient
// and the relative change of every target task's loss is recorded:
//
//   Z(i -> j) = 1 - L_j(batch, shared - eta * grad_i, head_j) / L_j(batch, shared, head_j)
//
// Heads and the batch are held fixed across the lookahead. The probe never
// touches the real trajectory.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tag/core.hpp"
#include "tag/data.hpp"
#include "tag/group.hpp"

namespace tag {

// Child-seed tags of a run seed. Public so a run can be replayed step by step.
inline constexpr std::uint64_t kTrainStream = 0x7241494EULL;
inline constexpr std::uint64_t kValidationStream = 0x56414C00ULL;
inline constexpr std::uint64_t kInitStream = 0x494E4954ULL;

struct AffinitySample {
  std::uint64_t step = 0;
  TaskId source = 0;
  TaskId target = 0;
  double value = 0.0;

  bool diagonal() const noexcept { return source == target; }
  friend bool operator==(const AffinitySample&, const AffinitySample&) = default;
};

enum class BatchSource { train, validation };

struct ProbeSchedule {
  enum class Mode { every_k_steps, window };
  Mode mode = Mode::every_k_steps;
  std::uint64_t k = 1;
  double fraction_start = 0.0;
  double fraction_end = 1.0;
  BatchSource batch_source = BatchSource::train;

  static ProbeSchedule every(std::uint64_t k, BatchSource src = BatchSource::train);
  static ProbeSchedule window(double start, double end, BatchSource src = BatchSource::train);

  void validate() const;
  /// Whether step t of a run with `total_steps` steps is probed.
  bool selects(std::uint64_t step, std::uint64_t total_steps) const;
  std::string describe() const;
};

struct TrainConfig {
  double eta = 0.05;
  std::uint64_t steps = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::optional<ProbeSchedule> schedule;  // nullopt: no probing
  bool record_cosine = false;             // also record gradient cosine matrices at probed steps
  bool record_trajectory = false;
  double loss_ceiling = 1e6;

  void validate() const;
};

/// Raised when a loss is non-finite or exceeds the configured ceiling.
class DivergenceError : public RuntimeFailure {
 public:
  DivergenceError(std::uint64_t step, TaskId task, double loss);
  std::uint64_t step;
  TaskId task;
  double loss;
};

ParamVector lookahead_shared_update(const ParamVector& shared, const ParamVector& source_grad, double eta);

/// n x n matrix over the task set's order. Entries whose target has zero
/// pre-step loss are left missing.
MaskedMatrix step_affinity_matrix(const TaskSet& tasks, const MultiTaskModel& model, const Batch& batch, double eta);

struct CosineMatrix {
  MaskedMatrix matrix;
  std::vector<std::size_t> zero_gradient;  // positions flagged as degenerate
};
CosineMatrix cosine_step_matrix(std::span<const ParamVector> gradients);

struct TrajectoryPoint {
  ParamVector shared;
  std::map<TaskId, ParamVector> heads;
  friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

struct TrainResult {
  MultiTaskModel model;
  std::vector<AffinitySample> samples;         // canonical (step, source, target) order
  std::vector<AffinitySample> cosine_samples;  // same layout, cosine values
  std::map<TaskId, std::vector<double>> loss_curves;
  std::vector<TrajectoryPoint> trajectory;  // parameters before each step, plus final
  std::vector<std::uint64_t> probed_steps;
  std::uint64_t steps_run = 0;
};

/// Trains every task in `data.taskset` jointly from `init`. Train batches come
/// from a stream seeded by (seed, "train"); validation probe batches from a
/// separate stream, so switching batch source never changes the trajectory.
TrainResult train_with_probe(const TaskData& data, MultiTaskModel init, const TrainConfig& config);

/// Convenience: restricts to `group`, initialises from the config seed and trains.
TrainResult train_group(const TaskData& data, TaskGroup group, const TrainConfig& config);

/// Recomputes the step affinities of a recorded trajectory (from a run with
/// record_trajectory) against `data`, which may differ from the original run
/// in loss weights. Uses the same batch streams as train_with_probe.
std::vector<AffinitySample> replay_affinity(const TaskData& data, std::span<const TrajectoryPoint> trajectory,
                                            const TrainConfig& config);

/// Raw sample dump: header `step,source,target,value`.
std::string samples_to_csv(std::span<const AffinitySample> samples);

}  // namespace tag
