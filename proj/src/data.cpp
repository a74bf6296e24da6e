#include "tag/data.hpp"

#include <cmath>
#include <vector>

#include "tag/rng.hpp"

namespace tag {

Batch DataSplit::gather(std::span<const std::size_t> rows, std::span<const TaskId> ids) const {
  Batch b;
  const auto n = static_cast<Eigen::Index>(rows.size());
  b.inputs.resize(n, inputs.cols());
  for (Eigen::Index r = 0; r < n; ++r) b.inputs.row(r) = inputs.row(static_cast<Eigen::Index>(rows[r]));
  for (TaskId id : ids) {
    if (id < 0 || id >= targets.cols()) throw ValidationError("data split has no target column for task " + std::to_string(id));
    Eigen::VectorXd y(n);
    for (Eigen::Index r = 0; r < n; ++r) y(r) = targets(static_cast<Eigen::Index>(rows[r]), id);
    b.targets.emplace(id, std::move(y));
  }
  return b;
}

Batch DataSplit::full(std::span<const TaskId> ids) const {
  std::vector<std::size_t> all(rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return gather(all, ids);
}

Batch BatchStream::draw(std::uint64_t step, std::span<const TaskId> ids) const {
  if (split_->rows() == 0) {
    Batch empty;
    empty.inputs.resize(0, split_->inputs.cols());
    return empty;
  }
  Rng rng(derive_seed(seed_, {step}));
  std::vector<std::size_t> rows(batch_size_);
  for (auto& r : rows) r = static_cast<std::size_t>(rng.below(split_->rows()));
  return split_->gather(rows, ids);
}

void validate_partition(std::size_t n, const std::vector<std::vector<TaskId>>& clusters) {
  std::vector<int> seen(n, 0);
  for (const auto& c : clusters) {
    if (c.empty()) throw ValidationError("clusters: empty cluster");
    for (TaskId t : c) {
      if (t < 0 || static_cast<std::size_t>(t) >= n) throw ValidationError("clusters: task id out of range");
      if (seen[static_cast<std::size_t>(t)]++) throw ValidationError("clusters: task listed twice");
    }
  }
  for (std::size_t t = 0; t < n; ++t)
    if (!seen[t]) throw ValidationError("clusters: task " + std::to_string(t) + " not assigned");
}

namespace {

DataSplit make_split(std::size_t rows, const PlantedSpec& spec, const PlantedTaskset& p, Rng& rng) {
  DataSplit s;
  const auto f = static_cast<Eigen::Index>(spec.feature_dim);
  const auto n = static_cast<Eigen::Index>(spec.n_tasks);
  s.inputs.resize(static_cast<Eigen::Index>(rows), f);
  s.targets.resize(static_cast<Eigen::Index>(rows), n);
  for (Eigen::Index r = 0; r < s.inputs.rows(); ++r) {
    for (Eigen::Index c = 0; c < f; ++c) s.inputs(r, c) = rng.normal();
    for (Eigen::Index t = 0; t < n; ++t) {
      const auto& u = p.factors[p.cluster_of[static_cast<std::size_t>(t)]];
      const double clean = p.task_scale[static_cast<std::size_t>(t)] * s.inputs.row(r).dot(u);
      s.targets(r, t) = clean + (spec.noise > 0.0 ? spec.noise * rng.normal() : 0.0);
    }
  }
  return s;
}

}  // namespace

PlantedTaskset build_planted_taskset(const PlantedSpec& spec) {
  if (spec.n_tasks < 1) throw ValidationError("planted: n_tasks must be >= 1");
  validate_partition(spec.n_tasks, spec.clusters);
  if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise)) throw ValidationError("planted: noise must be >= 0");
  if (spec.feature_dim < spec.clusters.size())
    throw ValidationError("planted: feature_dim must be >= number of clusters");
  if (spec.width < 1) throw ValidationError("planted: width must be >= 1");
  if (spec.train_samples < 1 || spec.test_samples < 1) throw ValidationError("planted: need train and test samples");
  if (spec.trunk == TrunkKind::point) throw ValidationError("planted: point trunk has no data");

  PlantedTaskset p;
  const auto f = static_cast<Eigen::Index>(spec.feature_dim);
  const auto k = static_cast<Eigen::Index>(spec.clusters.size());

  Rng factor_rng(derive_seed(spec.seed, {0xFAC7ULL}));
  Eigen::MatrixXd g(f, k);
  for (Eigen::Index r = 0; r < f; ++r)
    for (Eigen::Index c = 0; c < k; ++c) g(r, c) = factor_rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(f, k);
  for (Eigen::Index c = 0; c < k; ++c) p.factors.emplace_back(q.col(c));

  p.cluster_of.assign(spec.n_tasks, 0);
  for (std::size_t c = 0; c < spec.clusters.size(); ++c)
    for (TaskId t : spec.clusters[c]) p.cluster_of[static_cast<std::size_t>(t)] = c;

  Rng scale_rng(derive_seed(spec.seed, {0x5CA1EULL}));
  p.task_scale.resize(spec.n_tasks);
  for (auto& s : p.task_scale) s = scale_rng.uniform(0.5, 1.5);

  Rng train_rng(derive_seed(spec.seed, {0x7A1ULL}));
  Rng val_rng(derive_seed(spec.seed, {0x7A2ULL}));
  Rng test_rng(derive_seed(spec.seed, {0x7A3ULL}));
  p.data.train = make_split(spec.train_samples, spec, p, train_rng);
  p.data.validation = make_split(spec.validation_samples, spec, p, val_rng);
  p.data.test = make_split(spec.test_samples, spec, p, test_rng);

  p.data.taskset.arch = Architecture{spec.trunk, spec.feature_dim, spec.width};
  for (std::size_t t = 0; t < spec.n_tasks; ++t)
    p.data.taskset.tasks.push_back(TaskSpec{static_cast<TaskId>(t), loss_kind_for(spec.trunk), 1.0, std::nullopt});
  return p;
}

}  // namespace tag
