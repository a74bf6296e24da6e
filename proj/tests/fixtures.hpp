#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "tag/affinity.hpp"
#include "tag/core.hpp"
#include "tag/data.hpp"
#include "tag/rng.hpp"
#include "tag/selector.hpp"

namespace fixture {

struct GradientCase {
  tag::Architecture arch;
  tag::TaskSpec task;
  tag::ParamVector shared;
  tag::ParamVector head;
  tag::Batch batch;
};

inline GradientCase gradient_case(tag::LossKind kind, std::uint64_t seed) {
  tag::Rng rng(seed);
  GradientCase c;
  c.task.id = 0;
  c.task.kind = kind;
  c.task.loss_weight = rng.uniform(0.5, 2.0);
  const std::size_t dim = 2 + rng.below(4);
  if (kind == tag::LossKind::quadratic) {
    c.arch = {tag::TrunkKind::point, dim, 1};
    tag::ParamVector opt(dim);
    for (auto& v : opt.span()) v = rng.normal();
    c.task.quadratic = tag::build_quadratic_task(rng.uniform(0.1, 1.0), rng.uniform(1.5, 20.0), dim, opt, seed);
  } else {
    c.arch = {kind == tag::LossKind::linear_regression ? tag::TrunkKind::linear : tag::TrunkKind::tanh_mlp, dim,
              1 + rng.below(3)};
    const auto rows = static_cast<Eigen::Index>(4 + rng.below(8));
    c.batch.inputs = Eigen::MatrixXd(rows, static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < c.batch.inputs.size(); ++i) c.batch.inputs.data()[i] = rng.normal();
    Eigen::VectorXd y(rows);
    for (Eigen::Index i = 0; i < rows; ++i) y[i] = rng.normal();
    c.batch.targets[0] = y;
  }
  c.shared = tag::ParamVector(c.arch.shared_size());
  for (auto& v : c.shared.span()) v = rng.normal();
  c.head = tag::ParamVector(c.arch.head_size());
  for (auto& v : c.head.span()) v = rng.normal();
  return c;
}

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
inline double fd_error(const GradientCase& c, double h = 1e-5) {
  const auto e = tag::evaluate_task(c.arch, c.shared, c.head, c.batch, c.task, true);
  double worst = 0.0;
  auto probe = [&](bool shared_block, std::size_t i, double analytic) {
    auto s = c.shared;
    auto hd = c.head;
    auto& p = shared_block ? s : hd;
    const double x = p[i];
    p[i] = x + h;
    const double up = tag::evaluate_task(c.arch, s, hd, c.batch, c.task, false).loss;
    p[i] = x - h;
    const double dn = tag::evaluate_task(c.arch, s, hd, c.batch, c.task, false).loss;
    const double fd = (up - dn) / (2 * h);
    worst = std::max(worst, std::abs(analytic - fd) / std::max(1.0, std::abs(analytic)));
  };
  for (std::size_t i = 0; i < c.shared.size(); ++i) probe(true, i, e.shared_grad[i]);
  for (std::size_t i = 0; i < c.head.size(); ++i) probe(false, i, e.head_grad[i]);
  return worst;
}

/// Dense random affinity with entries uniform in [-1, 1].
inline tag::AffinityMatrix random_affinity(std::size_t n, tag::DiagonalMode mode, tag::Rng& rng) {
  std::vector<double> dense(n * n);
  for (auto& v : dense) v = rng.uniform(-1.0, 1.0);
  return tag::AffinityMatrix::from_dense(n, dense, mode);
}

/// Independent check of a selection: cover, budget, serving is argmax with
/// the lowest-index tie-break, totals add up. Returns an empty string when valid.
inline std::string validate_solution(const tag::SelectionProblem& p, const tag::GroupingSolution& s) {
  if (s.groups.empty() || s.groups.size() > p.budget) return "group count outside [1, budget]";
  if (!std::is_sorted(s.groups.begin(), s.groups.end())) return "groups not in mask order";
  if (s.serving.size() != p.n || s.per_task_score.size() != p.n) return "wrong arity";
  double total = 0.0;
  for (std::size_t t = 0; t < p.n; ++t) {
    const auto tid = static_cast<tag::TaskId>(t);
    double best = -INFINITY;
    std::size_t arg = s.groups.size();
    for (std::size_t g = 0; g < s.groups.size(); ++g) {
      const auto it = std::find_if(p.candidates.begin(), p.candidates.end(),
                                   [&](const tag::CandidateGroup& c) { return c.group == s.groups[g]; });
      if (it == p.candidates.end()) return "chosen group is not a candidate";
      if (!it->score[t]) continue;
      if (*it->score[t] > best) {
        best = *it->score[t];
        arg = g;
      }
    }
    if (arg == s.groups.size()) return "task " + std::to_string(t) + " uncovered";
    if (s.serving[t] != arg) return "task " + std::to_string(t) + " not served by its best group";
    if (!s.groups[arg].contains(tid)) return "serving group does not contain task";
    if (s.per_task_score[t] != best) return "per-task score mismatch";
    total += best;
  }
  if (std::abs(total - s.total_score) > 1e-12) return "total mismatch";
  return {};
}

inline tag::PlantedSpec small_planted(std::uint64_t seed) {
  tag::PlantedSpec s;
  s.n_tasks = 6;
  s.clusters = {{0, 1, 2}, {3, 4, 5}};
  s.seed = seed;
  return s;
}

inline tag::TrainConfig small_trainer(std::uint64_t seed, std::uint64_t steps = 300) {
  tag::TrainConfig t;
  t.eta = 0.05;
  t.steps = steps;
  t.batch_size = 32;
  t.seed = seed;
  return t;
}

}  // namespace fixture
