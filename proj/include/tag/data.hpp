#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tag/core.hpp"

namespace tag {

/// Sample pool: rows are samples, target column k belongs to task id k.
struct DataSplit {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(inputs.rows()); }
  Batch gather(std::span<const std::size_t> rows, std::span<const TaskId> ids) const;
  Batch full(std::span<const TaskId> ids) const;
};

/// Random-access batch stream: draw(step) is a pure function of (seed, step).
/// Rows are sampled uniformly with replacement.
class BatchStream {
 public:
  BatchStream(const DataSplit& split, std::size_t batch_size, std::uint64_t seed)
      : split_(&split), batch_size_(batch_size), seed_(seed) {}

  Batch draw(std::uint64_t step, std::span<const TaskId> ids) const;

 private:
  const DataSplit* split_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

struct TaskData {
  TaskSet taskset;
  DataSplit train;
  DataSplit validation;
  DataSplit test;
};

struct PlantedSpec {
  std::size_t n_tasks = 6;
  std::vector<std::vector<TaskId>> clusters;
  std::size_t feature_dim = 8;
  std::size_t train_samples = 256;
  std::size_t validation_samples = 128;
  std::size_t test_samples = 256;
  double noise = 0.1;
  std::uint64_t seed = 0;
  TrunkKind trunk = TrunkKind::linear;
  std::size_t width = 1;
};

struct PlantedTaskset {
  TaskData data;
  std::vector<Eigen::VectorXd> factors;  // one unit vector per cluster
  std::vector<std::size_t> cluster_of;   // task id -> cluster index
  std::vector<double> task_scale;        // task id -> factor multiplier
};

/// Planted-cluster regression tasks. Task t in cluster c has target
/// scale_t * <u_c, x> + noise, with the u_c mutually orthogonal and x ~ N(0, I).
/// A width-1 trunk can represent one cluster exactly but not two, so
/// the planted partition is the best two-network grouping.
PlantedTaskset build_planted_taskset(const PlantedSpec& spec);

/// Throws ValidationError unless `clusters` partitions {0..n-1}.
void validate_partition(std::size_t n, const std::vector<std::vector<TaskId>>& clusters);

}  // namespace tag
