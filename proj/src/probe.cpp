#include "tag/probe.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tag/rng.hpp"

namespace tag {

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ProbeSchedule ProbeSchedule::every(std::uint64_t k, BatchSource src) {
  ProbeSchedule s;
  s.mode = Mode::every_k_steps;
  s.k = k;
  s.batch_source = src;
  return s;
}

ProbeSchedule ProbeSchedule::window(double start, double end, BatchSource src) {
  ProbeSchedule s;
  s.mode = Mode::window;
  s.fraction_start = start;
  s.fraction_end = end;
  s.batch_source = src;
  return s;
}

void ProbeSchedule::validate() const {
  if (mode == Mode::every_k_steps && k < 1) throw ValidationError("schedule.k must be >= 1");
  if (mode == Mode::window && !(fraction_start >= 0.0 && fraction_start < fraction_end && fraction_end <= 1.0))
    throw ValidationError("schedule window must satisfy 0 <= start < end <= 1");
}

bool ProbeSchedule::selects(std::uint64_t step, std::uint64_t total_steps) const {
  if (mode == Mode::every_k_steps) return step % k == 0;
  const double lo = fraction_start * static_cast<double>(total_steps);
  const double hi = fraction_end * static_cast<double>(total_steps);
  const auto t = static_cast<double>(step);
  return t >= lo && t < hi;
}

std::string ProbeSchedule::describe() const {
  std::string src = batch_source == BatchSource::train ? "train" : "validation";
  if (mode == Mode::every_k_steps) return "every_k_steps(" + std::to_string(k) + ")/" + src;
  return "window(" + fmt_double(fraction_start) + "," + fmt_double(fraction_end) + ")/" + src;
}

void TrainConfig::validate() const {
  if (!(std::isfinite(eta) && eta > 0.0)) throw ValidationError("trainer.eta must be > 0");
  if (steps < 1) throw ValidationError("trainer.steps must be >= 1");
  if (batch_size < 1) throw ValidationError("trainer.batch_size must be >= 1");
  if (!(loss_ceiling > 0.0)) throw ValidationError("trainer.loss_ceiling must be > 0");
  if (schedule) schedule->validate();
}

DivergenceError::DivergenceError(std::uint64_t s, TaskId t, double l)
    : RuntimeFailure("training diverged at step " + std::to_string(s) + " on task " + std::to_string(t) +
                     " (loss " + fmt_double(l) + ")"),
      step(s),
      task(t),
      loss(l) {}

ParamVector lookahead_shared_update(const ParamVector& shared, const ParamVector& source_grad, double eta) {
  return sgd_step(shared, source_grad, eta);
}

MaskedMatrix step_affinity_matrix(const TaskSet& tasks, const MultiTaskModel& model, const Batch& batch, double eta) {
  if (!(std::isfinite(eta) && eta > 0.0)) throw ValidationError("step_affinity_matrix: eta must be > 0");
  const std::size_t n = tasks.size();
  MaskedMatrix z(n);

  // The target's loss weight cancels in the ratio, so target losses are taken
  // at unit weight; Z then does not move with the weight even in the last bit.
  // Source gradients keep their weights since they set the lookahead step.
  std::vector<TaskSpec> unit(tasks.tasks);
  for (auto& t : unit) t.loss_weight = 1.0;

  std::vector<double> before(n);
  std::vector<ParamVector> grads(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& task = tasks.tasks[j];
    grads[j] = evaluate_task(model.arch, model.shared, model.head(task.id), batch, task, true).shared_grad;
    before[j] = evaluate_task(model.arch, model.shared, model.head(task.id), batch, unit[j], false).loss;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const ParamVector lookahead = lookahead_shared_update(model.shared, grads[i], eta);
    for (std::size_t j = 0; j < n; ++j) {
      if (!(before[j] > 0.0) || !std::isfinite(before[j])) continue;
      const double after = evaluate_task(model.arch, lookahead, model.head(unit[j].id), batch, unit[j], false).loss;
      z.set(i, j, 1.0 - after / before[j]);
    }
  }
  return z;
}

CosineMatrix cosine_step_matrix(std::span<const ParamVector> gradients) {
  if (gradients.size() < 2) throw ValidationError("cosine_step_matrix: need at least two tasks");
  const std::size_t n = gradients.size();
  CosineMatrix out{MaskedMatrix(n), {}};
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = gradients[i].norm();
    if (!(norms[i] > 0.0)) out.zero_gradient.push_back(i);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(norms[i] > 0.0)) continue;
    out.matrix.set(i, i, 1.0);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!(norms[j] > 0.0)) continue;
      double c = dot(gradients[i], gradients[j]) / (norms[i] * norms[j]);
      c = std::clamp(c, -1.0, 1.0);
      out.matrix.set(i, j, c);
      out.matrix.set(j, i, c);
    }
  }
  return out;
}

TrainResult train_with_probe(const TaskData& data, MultiTaskModel init, const TrainConfig& config) {
  config.validate();
  data.taskset.validate();
  const TaskSet& tasks = data.taskset;
  const std::vector<TaskId> ids = tasks.ids();
  const std::size_t n = ids.size();
  for (TaskId id : ids) (void)init.head(id);
  if (init.arch != tasks.arch) throw ValidationError("model architecture does not match task set");

  const BatchStream train_stream(data.train, config.batch_size, derive_seed(config.seed, {kTrainStream}));
  const BatchStream val_stream(data.validation, config.batch_size, derive_seed(config.seed, {kValidationStream}));
  if (config.schedule && config.schedule->batch_source == BatchSource::validation && data.validation.rows() == 0 &&
      tasks.arch.trunk != TrunkKind::point)
    throw ValidationError("validation probing requested but the validation split is empty");

  TrainResult result;
  result.model = std::move(init);
  MultiTaskModel& model = result.model;
  for (TaskId id : ids) result.loss_curves[id].reserve(config.steps);

  for (std::uint64_t step = 0; step < config.steps; ++step) {
    const Batch batch = train_stream.draw(step, ids);
    if (config.record_trajectory) result.trajectory.push_back({model.shared, model.heads});

    if (config.schedule && config.schedule->selects(step, config.steps)) {
      const bool use_val = config.schedule->batch_source == BatchSource::validation;
      const Batch probe_batch = use_val ? val_stream.draw(step, ids) : batch;
      const MaskedMatrix z = step_affinity_matrix(tasks, model, probe_batch, config.eta);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (z.has(i, j)) result.samples.push_back({step, ids[i], ids[j], z.at(i, j)});
      if (config.record_cosine) {
        std::vector<ParamVector> grads;
        grads.reserve(n);
        for (const auto& t : tasks.tasks) grads.push_back(shared_gradient(model, probe_batch, t));
        const CosineMatrix cm = cosine_step_matrix(grads);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            if (cm.matrix.has(i, j)) result.cosine_samples.push_back({step, ids[i], ids[j], cm.matrix.at(i, j)});
      }
      result.probed_steps.push_back(step);
    }

    ParamVector total(model.shared.size(), 0.0);
    std::vector<ParamVector> head_grads;
    head_grads.reserve(n);
    for (const auto& task : tasks.tasks) {
      auto e = evaluate_task(model.arch, model.shared, model.head(task.id), batch, task, true);
      if (!std::isfinite(e.loss) || e.loss > config.loss_ceiling) throw DivergenceError(step, task.id, e.loss);
      result.loss_curves[task.id].push_back(e.loss);
      for (std::size_t k = 0; k < total.size(); ++k) total[k] += e.shared_grad[k];
      head_grads.push_back(std::move(e.head_grad));
    }
    model.shared = sgd_step(model.shared, total, config.eta);
    for (std::size_t t = 0; t < n; ++t) {
      auto& head = model.heads.at(ids[t]);
      head = sgd_step(head, head_grads[t], config.eta);
    }
    ++result.steps_run;
  }
  if (config.record_trajectory) result.trajectory.push_back({model.shared, model.heads});
  return result;
}

std::vector<AffinitySample> replay_affinity(const TaskData& data, std::span<const TrajectoryPoint> trajectory,
                                            const TrainConfig& config) {
  config.validate();
  if (!config.schedule) throw ValidationError("replay needs a probe schedule");
  if (trajectory.size() < config.steps) throw ValidationError("trajectory shorter than the configured steps");
  const TaskSet& tasks = data.taskset;
  const std::vector<TaskId> ids = tasks.ids();
  const BatchStream train_stream(data.train, config.batch_size, derive_seed(config.seed, {kTrainStream}));
  const BatchStream val_stream(data.validation, config.batch_size, derive_seed(config.seed, {kValidationStream}));
  const bool use_val = config.schedule->batch_source == BatchSource::validation;
  std::vector<AffinitySample> out;
  for (std::uint64_t step = 0; step < config.steps; ++step) {
    if (!config.schedule->selects(step, config.steps)) continue;
    const MultiTaskModel model{tasks.arch, trajectory[step].shared, trajectory[step].heads};
    const Batch batch = use_val ? val_stream.draw(step, ids) : train_stream.draw(step, ids);
    const MaskedMatrix z = step_affinity_matrix(tasks, model, batch, config.eta);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < ids.size(); ++j)
        if (z.has(i, j)) out.push_back({step, ids[i], ids[j], z.at(i, j)});
  }
  return out;
}

TrainResult train_group(const TaskData& data, TaskGroup group, const TrainConfig& config) {
  const auto members = group.members();
  TaskData sub{data.taskset.restricted(members), data.train, data.validation, data.test};
  auto init = MultiTaskModel::init(sub.taskset.arch, members, derive_seed(config.seed, {kInitStream}));
  return train_with_probe(sub, std::move(init), config);
}

std::string samples_to_csv(std::span<const AffinitySample> samples) {
  std::ostringstream os;
  os << "step,source,target,value\n";
  os.precision(17);
  for (const auto& s : samples) os << s.step << ',' << s.source << ',' << s.target << ',' << s.value << '\n';
  return os.str();
}

}  // namespace tag
