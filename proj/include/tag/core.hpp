#pragma once

// Multi-task model zoo: quadratic tasks on a shared point, linear heads on a
// linear trunk, and linear heads on a one-hidden-layer tanh trunk. All losses
// and gradients are closed form.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tag/errors.hpp"

namespace tag {

using TaskId = int;

/// Flat parameter storage for one parameter block (trunk or a single head).
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}
  ParamVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  Eigen::Map<const Eigen::VectorXd> eigen() const {
    return {values_.data(), static_cast<Eigen::Index>(values_.size())};
  }
  static ParamVector from_eigen(const Eigen::VectorXd& v) {
    return ParamVector(std::vector<double>(v.data(), v.data() + v.size()));
  }

  bool all_finite() const noexcept;
  double norm() const noexcept;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

double dot(const ParamVector& a, const ParamVector& b);

enum class LossKind { quadratic, linear_regression, mlp_regression };

const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

/// L(theta) = 1/2 (theta - opt)^T H (theta - opt) with H = R diag(lambda) R^T.
struct QuadraticTask {
  std::vector<double> eigenvalues;  // ascending; front = alpha, back = beta
  Eigen::MatrixXd rotation;         // orthonormal columns
  Eigen::MatrixXd hessian;
  ParamVector optimum;

  std::size_t dim() const noexcept { return optimum.size(); }
  double alpha() const { return eigenvalues.front(); }
  double beta() const { return eigenvalues.back(); }
  double loss(const ParamVector& theta) const;
  ParamVector gradient(const ParamVector& theta) const;
};

/// Builds a quadratic with spectrum spanning [alpha, beta]. With no rotation
/// seed the Hessian is diagonal; interior eigenvalues are evenly spaced.
/// With a seed, interior eigenvalues are drawn uniformly and a Haar-random
/// rotation is applied.
QuadraticTask build_quadratic_task(double alpha, double beta, std::size_t dim, ParamVector optimum,
                                   std::optional<std::uint64_t> rotation_seed = std::nullopt);

struct TaskSpec {
  TaskId id = 0;
  LossKind kind = LossKind::linear_regression;
  double loss_weight = 1.0;
  std::optional<QuadraticTask> quadratic;  // required iff kind == quadratic
};

enum class TrunkKind { point, linear, tanh_mlp };

/// Shared-trunk descriptor. For TrunkKind::point the shared parameters are the
/// quadratic's evaluation point and heads are empty.
struct Architecture {
  TrunkKind trunk = TrunkKind::linear;
  std::size_t input_dim = 1;
  std::size_t width = 1;

  std::size_t shared_size() const noexcept;
  std::size_t head_size() const noexcept;
  /// Parameter count of a network carrying `heads` task heads.
  std::size_t parameter_count(std::size_t heads) const noexcept { return shared_size() + heads * head_size(); }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Named slice inside a flat parameter block.
struct ParamSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};
std::vector<ParamSlice> shared_layout(const Architecture& arch);
std::vector<ParamSlice> head_layout(const Architecture& arch);

LossKind loss_kind_for(TrunkKind trunk);

struct TaskSet {
  Architecture arch;
  std::vector<TaskSpec> tasks;

  std::size_t size() const noexcept { return tasks.size(); }
  std::vector<TaskId> ids() const;
  const TaskSpec& task(TaskId id) const;
  /// Keeps only the listed tasks (in current order). Ids are preserved.
  TaskSet restricted(std::span<const TaskId> keep) const;
  void validate() const;
};

/// Inputs are [batch_size x input_dim]; one target vector per task id.
struct Batch {
  Eigen::MatrixXd inputs;
  std::map<TaskId, Eigen::VectorXd> targets;

  std::size_t size() const noexcept { return static_cast<std::size_t>(inputs.rows()); }
};

struct MultiTaskModel {
  Architecture arch;
  ParamVector shared;
  std::map<TaskId, ParamVector> heads;

  const ParamVector& head(TaskId id) const;
  /// Gaussian init scaled by 1/sqrt(fan_in); point trunks start at zero.
  static MultiTaskModel init(const Architecture& arch, std::span<const TaskId> ids, std::uint64_t seed);

  friend bool operator==(const MultiTaskModel&, const MultiTaskModel&) = default;
};

struct LossEval {
  double loss = 0.0;
  ParamVector shared_grad;
  ParamVector head_grad;
};

/// Weighted loss (and optionally gradients) of one task at explicit parameters.
LossEval evaluate_task(const Architecture& arch, const ParamVector& shared, const ParamVector& head,
                       const Batch& batch, const TaskSpec& task, bool with_gradients);

double task_loss(const MultiTaskModel& model, const Batch& batch, const TaskSpec& task);
ParamVector shared_gradient(const MultiTaskModel& model, const Batch& batch, const TaskSpec& task);
ParamVector head_gradient(const MultiTaskModel& model, const Batch& batch, const TaskSpec& task);

/// params - eta * gradient.
ParamVector sgd_step(const ParamVector& params, const ParamVector& gradient, double eta);

}  // namespace tag
