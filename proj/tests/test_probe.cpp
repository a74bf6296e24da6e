#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tag/group.hpp"
#include "tag/probe.hpp"

using namespace tag;

namespace {

TaskSet scalar_taskset() {
  QuadraticTask q;
  q.eigenvalues = {1.0};
  q.rotation = Eigen::MatrixXd::Identity(1, 1);
  q.hessian = Eigen::MatrixXd::Identity(1, 1);
  q.optimum = ParamVector{0.0};
  TaskSpec t;
  t.id = 0;
  t.kind = LossKind::quadratic;
  t.quadratic = q;
  return {{TrunkKind::point, 1, 1}, {t}};
}

}  // namespace

TEST_CASE("scalar lookahead oracle") {
  const auto tasks = scalar_taskset();
  MultiTaskModel m{tasks.arch, ParamVector{1.0}, {{0, ParamVector()}}};
  const auto z = step_affinity_matrix(tasks, m, Batch{}, 0.5);
  REQUIRE(z.has(0, 0));
  CHECK(z.at(0, 0) == doctest::Approx(oracle::kScalarLookahead).epsilon(1e-15));
}

TEST_CASE("zero pre-step loss leaves the entry missing") {
  const auto tasks = scalar_taskset();
  MultiTaskModel m{tasks.arch, ParamVector{0.0}, {{0, ParamVector()}}};
  CHECK_FALSE(step_affinity_matrix(tasks, m, Batch{}, 0.5).has(0, 0));
}

TEST_CASE("probing never changes the trajectory") {
  const auto p = build_planted_taskset(fixture::small_planted(4));
  auto cfg = fixture::small_trainer(4, 60);
  cfg.record_trajectory = true;
  const auto off = train_group(p.data, TaskGroup::all(6), cfg);
  for (auto src : {BatchSource::train, BatchSource::validation}) {
    auto on_cfg = cfg;
    on_cfg.schedule = ProbeSchedule::every(1, src);
    on_cfg.record_cosine = true;
    const auto on = train_group(p.data, TaskGroup::all(6), on_cfg);
    CHECK(on.trajectory == off.trajectory);
    CHECK(on.model == off.model);
    CHECK(on.loss_curves == off.loss_curves);
    CHECK(on.probed_steps.size() == 60);
    CHECK(off.samples.empty());
  }
}

TEST_CASE("probed runs are deterministic") {
  const auto p = build_planted_taskset(fixture::small_planted(2));
  auto cfg = fixture::small_trainer(9, 40);
  cfg.schedule = ProbeSchedule::every(3);
  const auto a = train_group(p.data, TaskGroup::all(6), cfg);
  const auto b = train_group(p.data, TaskGroup::all(6), cfg);
  CHECK(a.samples == b.samples);
  CHECK(samples_to_csv(a.samples) == samples_to_csv(b.samples));
  CHECK(a.probed_steps.size() == 14);
}

TEST_CASE("replay reproduces recorded samples") {
  const auto p = build_planted_taskset(fixture::small_planted(2));
  auto cfg = fixture::small_trainer(5, 30);
  cfg.schedule = ProbeSchedule::every(2);
  cfg.record_trajectory = true;
  const auto r = train_group(p.data, TaskGroup::all(6), cfg);
  CHECK(replay_affinity(p.data, r.trajectory, cfg) == r.samples);
}

TEST_CASE("schedules") {
  const auto k10 = ProbeSchedule::every(10);
  CHECK(k10.selects(0, 100));
  CHECK_FALSE(k10.selects(5, 100));
  CHECK(k10.selects(90, 100));
  const auto w = ProbeSchedule::window(0.5, 1.0);
  CHECK_FALSE(w.selects(49, 100));
  CHECK(w.selects(50, 100));
  CHECK(w.selects(99, 100));
  CHECK_THROWS_AS(ProbeSchedule::window(0.6, 0.5).validate(), ValidationError);
  CHECK_THROWS_AS(ProbeSchedule::every(0).validate(), ValidationError);
}

TEST_CASE("divergence is reported with step and task") {
  const auto p = build_planted_taskset(fixture::small_planted(1));
  auto cfg = fixture::small_trainer(1, 200);
  cfg.eta = 5.0;
  cfg.loss_ceiling = 1e3;
  CHECK_THROWS_AS(train_group(p.data, TaskGroup::all(6), cfg), DivergenceError);
  try {
    train_group(p.data, TaskGroup::all(6), cfg);
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("cosine matrix") {
  const std::vector<ParamVector> g{{1.0, 0.0}, {2.0, 0.0}, {0.0, 0.0}, {-1.0, 1.0}};
  const auto c = cosine_step_matrix(g);
  CHECK(c.matrix.at(0, 1) == 1.0);
  CHECK(c.matrix.at(1, 0) == 1.0);
  CHECK_FALSE(c.matrix.has(0, 2));
  CHECK(c.zero_gradient == std::vector<std::size_t>{2});
  CHECK(c.matrix.at(0, 3) == doctest::Approx(-std::sqrt(0.5)));
}

TEST_CASE("trainer validation names fields") {
  TrainConfig c;
  c.eta = 0.0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("trainer.eta"), ValidationError);
}
