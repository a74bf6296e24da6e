#include "tag/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tag/rng.hpp"

namespace tag {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double ParamVector::norm() const noexcept {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

double dot(const ParamVector& a, const ParamVector& b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::quadratic: return "quadratic";
    case LossKind::linear_regression: return "linear-regression";
    case LossKind::mlp_regression: return "mlp-regression";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "quadratic") return LossKind::quadratic;
  if (s == "linear-regression" || s == "linear") return LossKind::linear_regression;
  if (s == "mlp-regression" || s == "mlp") return LossKind::mlp_regression;
  throw ValidationError("unknown loss kind '" + s + "'");
}

LossKind loss_kind_for(TrunkKind trunk) {
  switch (trunk) {
    case TrunkKind::point: return LossKind::quadratic;
    case TrunkKind::linear: return LossKind::linear_regression;
    case TrunkKind::tanh_mlp: return LossKind::mlp_regression;
  }
  return LossKind::linear_regression;
}

// ---------------------------------------------------------------------------
// Quadratic tasks

double QuadraticTask::loss(const ParamVector& theta) const {
  require(theta.size() == dim(), "quadratic loss: dimension mismatch");
  const Eigen::VectorXd d = theta.eigen() - optimum.eigen();
  return 0.5 * d.dot(hessian * d);
}

ParamVector QuadraticTask::gradient(const ParamVector& theta) const {
  require(theta.size() == dim(), "quadratic gradient: dimension mismatch");
  const Eigen::VectorXd d = theta.eigen() - optimum.eigen();
  return ParamVector::from_eigen(hessian * d);
}

QuadraticTask build_quadratic_task(double alpha, double beta, std::size_t dim, ParamVector optimum,
                                   std::optional<std::uint64_t> rotation_seed) {
  require(std::isfinite(alpha) && std::isfinite(beta) && alpha > 0.0 && alpha <= beta,
          "build_quadratic_task: need 0 < alpha <= beta");
  require(dim >= 2, "build_quadratic_task: dim must be >= 2");
  require(optimum.size() == dim, "build_quadratic_task: optimum has wrong length");
  require(optimum.all_finite(), "build_quadratic_task: optimum must be finite");

  QuadraticTask q;
  q.optimum = std::move(optimum);
  q.eigenvalues.resize(dim);
  q.eigenvalues.front() = alpha;
  q.eigenvalues.back() = beta;
  const auto n = static_cast<Eigen::Index>(dim);

  if (!rotation_seed) {
    for (std::size_t i = 1; i + 1 < dim; ++i)
      q.eigenvalues[i] = alpha + (beta - alpha) * static_cast<double>(i) / static_cast<double>(dim - 1);
    q.rotation = Eigen::MatrixXd::Identity(n, n);
  } else {
    Rng rng(derive_seed(*rotation_seed, {0x51ADULL}));
    for (std::size_t i = 1; i + 1 < dim; ++i) q.eigenvalues[i] = rng.uniform(alpha, beta);
    std::sort(q.eigenvalues.begin(), q.eigenvalues.end());
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) g(r, c) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd rot = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Sign fix makes the distribution Haar.
    for (Eigen::Index c = 0; c < n; ++c)
      if (r(c, c) < 0) rot.col(c) *= -1.0;
    q.rotation = std::move(rot);
  }
  const Eigen::VectorXd lambda = Eigen::Map<const Eigen::VectorXd>(q.eigenvalues.data(), n);
  q.hessian = q.rotation * lambda.asDiagonal() * q.rotation.transpose();
  q.hessian = 0.5 * (q.hessian + q.hessian.transpose()).eval();
  return q;
}

// ---------------------------------------------------------------------------
// Architecture and layout

std::size_t Architecture::shared_size() const noexcept {
  switch (trunk) {
    case TrunkKind::point: return input_dim;
    case TrunkKind::linear: return width * input_dim;
    case TrunkKind::tanh_mlp: return width * input_dim + width;
  }
  return 0;
}

std::size_t Architecture::head_size() const noexcept {
  switch (trunk) {
    case TrunkKind::point: return 0;
    case TrunkKind::linear: return width;
    case TrunkKind::tanh_mlp: return width + 1;
  }
  return 0;
}

std::vector<ParamSlice> shared_layout(const Architecture& arch) {
  switch (arch.trunk) {
    case TrunkKind::point: return {{"theta", 0, arch.input_dim}};
    case TrunkKind::linear: return {{"trunk.weight", 0, arch.width * arch.input_dim}};
    case TrunkKind::tanh_mlp:
      return {{"trunk.weight", 0, arch.width * arch.input_dim},
              {"trunk.bias", arch.width * arch.input_dim, arch.width}};
  }
  return {};
}

std::vector<ParamSlice> head_layout(const Architecture& arch) {
  switch (arch.trunk) {
    case TrunkKind::point: return {};
    case TrunkKind::linear: return {{"head.weight", 0, arch.width}};
    case TrunkKind::tanh_mlp: return {{"head.weight", 0, arch.width}, {"head.bias", arch.width, 1}};
  }
  return {};
}

// ---------------------------------------------------------------------------
// TaskSet

std::vector<TaskId> TaskSet::ids() const {
  std::vector<TaskId> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) out.push_back(t.id);
  return out;
}

const TaskSpec& TaskSet::task(TaskId id) const {
  for (const auto& t : tasks)
    if (t.id == id) return t;
  throw ValidationError("unknown task id " + std::to_string(id));
}

TaskSet TaskSet::restricted(std::span<const TaskId> keep) const {
  TaskSet out;
  out.arch = arch;
  const std::set<TaskId> wanted(keep.begin(), keep.end());
  for (const auto& t : tasks)
    if (wanted.contains(t.id)) out.tasks.push_back(t);
  if (out.tasks.size() != wanted.size()) throw ValidationError("restricted: unknown task id requested");
  return out;
}

void TaskSet::validate() const {
  require(!tasks.empty(), "task set is empty");
  std::set<TaskId> seen;
  for (const auto& t : tasks) {
    require(seen.insert(t.id).second, "duplicate task id " + std::to_string(t.id));
    require(std::isfinite(t.loss_weight) && t.loss_weight > 0.0, "task " + std::to_string(t.id) + ": loss_weight must be > 0");
    require(t.kind == loss_kind_for(arch.trunk),
            "task " + std::to_string(t.id) + ": loss kind incompatible with trunk");
    if (t.kind == LossKind::quadratic) {
      require(t.quadratic.has_value(), "task " + std::to_string(t.id) + ": quadratic task missing");
      require(t.quadratic->dim() == arch.input_dim, "task " + std::to_string(t.id) + ": quadratic dim mismatch");
    }
  }
}

// ---------------------------------------------------------------------------
// Model

const ParamVector& MultiTaskModel::head(TaskId id) const {
  auto it = heads.find(id);
  if (it == heads.end()) throw ValidationError("model has no head for task " + std::to_string(id));
  return it->second;
}

MultiTaskModel MultiTaskModel::init(const Architecture& arch, std::span<const TaskId> ids, std::uint64_t seed) {
  MultiTaskModel m;
  m.arch = arch;
  m.shared = ParamVector(arch.shared_size());
  Rng rng(derive_seed(seed, {0x1A17ULL}));
  if (arch.trunk != TrunkKind::point) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(arch.input_dim));
    for (std::size_t i = 0; i < arch.width * arch.input_dim; ++i) m.shared[i] = scale * rng.normal();
  }
  for (TaskId id : ids) {
    ParamVector h(arch.head_size());
    Rng head_rng(derive_seed(seed, {0x4EADULL, static_cast<std::uint64_t>(id)}));
    const double scale = 1.0 / std::sqrt(static_cast<double>(arch.width));
    for (std::size_t i = 0; i < arch.width && i < h.size(); ++i) h[i] = scale * head_rng.normal();
    m.heads.emplace(id, std::move(h));
  }
  return m;
}

LossEval evaluate_task(const Architecture& arch, const ParamVector& shared, const ParamVector& head,
                       const Batch& batch, const TaskSpec& task, bool with_gradients) {
  require(shared.size() == arch.shared_size(), "shared parameter length does not match architecture");
  require(head.size() == arch.head_size(), "head parameter length does not match architecture");
  const double weight = task.loss_weight;
  LossEval out;

  if (arch.trunk == TrunkKind::point) {
    require(task.kind == LossKind::quadratic && task.quadratic, "point trunk requires a quadratic task");
    const auto& q = *task.quadratic;
    out.loss = weight * q.loss(shared);
    if (with_gradients) {
      out.shared_grad = q.gradient(shared);
      for (auto& v : out.shared_grad.span()) v *= weight;
      out.head_grad = ParamVector();
    }
    return out;
  }

  require(batch.size() >= 1, "batch is empty");
  require(static_cast<std::size_t>(batch.inputs.cols()) == arch.input_dim, "batch feature width does not match model");
  const auto target_it = batch.targets.find(task.id);
  require(target_it != batch.targets.end(), "batch has no targets for task " + std::to_string(task.id));
  const Eigen::VectorXd& y = target_it->second;
  require(static_cast<std::size_t>(y.size()) == batch.size(), "target length does not match batch");

  const auto width = static_cast<Eigen::Index>(arch.width);
  const auto in = static_cast<Eigen::Index>(arch.input_dim);
  const Eigen::Map<const RowMatrix> w1(shared.span().data(), width, in);
  const Eigen::Map<const Eigen::VectorXd> w_head(head.span().data(), width);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double k = weight * 2.0 * inv_b;

  if (arch.trunk == TrunkKind::linear) {
    const Eigen::MatrixXd hidden = batch.inputs * w1.transpose();
    const Eigen::VectorXd residual = hidden * w_head - y;
    out.loss = weight * residual.squaredNorm() * inv_b;
    if (with_gradients) {
      out.head_grad = ParamVector::from_eigen(k * (hidden.transpose() * residual));
      const Eigen::RowVectorXd rx = residual.transpose() * batch.inputs;
      RowMatrix gw = k * (w_head * rx);
      out.shared_grad = ParamVector(std::vector<double>(gw.data(), gw.data() + gw.size()));
    }
    return out;
  }

  // tanh MLP trunk
  const Eigen::Map<const Eigen::VectorXd> b1(shared.span().data() + arch.width * arch.input_dim, width);
  const double c = head[arch.width];
  Eigen::MatrixXd z = batch.inputs * w1.transpose();
  z.rowwise() += b1.transpose();
  const Eigen::MatrixXd hidden = z.array().tanh().matrix();
  const Eigen::VectorXd residual = (hidden * w_head).array() + c - y.array();
  out.loss = weight * residual.squaredNorm() * inv_b;
  if (with_gradients) {
    ParamVector hg(arch.head_size());
    const Eigen::VectorXd gw = k * (hidden.transpose() * residual);
    for (Eigen::Index i = 0; i < width; ++i) hg[static_cast<std::size_t>(i)] = gw(i);
    hg[arch.width] = k * residual.sum();
    out.head_grad = std::move(hg);

    const Eigen::MatrixXd dz =
        ((residual * w_head.transpose()).array() * (1.0 - hidden.array().square())).matrix();
    RowMatrix gw1 = k * (dz.transpose() * batch.inputs);
    const Eigen::VectorXd gb1 = k * dz.colwise().sum().transpose();
    ParamVector sg(arch.shared_size());
    std::copy(gw1.data(), gw1.data() + gw1.size(), sg.span().begin());
    std::copy(gb1.data(), gb1.data() + gb1.size(), sg.span().begin() + gw1.size());
    out.shared_grad = std::move(sg);
  }
  return out;
}

double task_loss(const MultiTaskModel& model, const Batch& batch, const TaskSpec& task) {
  return evaluate_task(model.arch, model.shared, model.head(task.id), batch, task, false).loss;
}

ParamVector shared_gradient(const MultiTaskModel& model, const Batch& batch, const TaskSpec& task) {
  return evaluate_task(model.arch, model.shared, model.head(task.id), batch, task, true).shared_grad;
}

ParamVector head_gradient(const MultiTaskModel& model, const Batch& batch, const TaskSpec& task) {
  return evaluate_task(model.arch, model.shared, model.head(task.id), batch, task, true).head_grad;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& gradient, double eta) {
  require(params.size() == gradient.size(), "sgd_step: length mismatch");
  require(std::isfinite(eta) && eta > 0.0, "sgd_step: eta must be > 0");
  ParamVector out = params;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= eta * gradient[i];
  return out;
}

}  // namespace tag
