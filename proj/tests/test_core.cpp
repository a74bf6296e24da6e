#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "fixtures.hpp"
#include "tag/core.hpp"
#include "tag/data.hpp"
#include "tag/rng.hpp"

using namespace tag;

TEST_CASE("analytic gradients match central differences") {
  for (auto kind : {LossKind::quadratic, LossKind::linear_regression, LossKind::mlp_regression}) {
    CAPTURE(to_string(kind));
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto c = fixture::gradient_case(kind, derive_seed(11, {s}));
      CHECK(fixture::fd_error(c) <= 1e-6);
    }
  }
}

TEST_CASE("quadratic spectrum spans [alpha, beta]") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    const double alpha = rng.uniform(0.1, 1.0), beta = alpha * rng.uniform(1.5, 100.0);
    const std::size_t dim = 2 + s % 3;
    const auto q = build_quadratic_task(alpha, beta, dim, ParamVector(dim), s);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.hessian);
    CHECK(es.eigenvalues()(0) == doctest::Approx(alpha).epsilon(1e-10));
    CHECK(es.eigenvalues()(static_cast<Eigen::Index>(dim) - 1) == doctest::Approx(beta).epsilon(1e-10));
    CHECK((q.rotation.transpose() * q.rotation - Eigen::MatrixXd::Identity(dim, dim)).norm() < 1e-12);
  }
}

TEST_CASE("quadratic loss at the optimum is zero") {
  const auto q = build_quadratic_task(1.0, 10.0, 2, ParamVector{1.0, -2.0});
  CHECK(q.loss(ParamVector{1.0, -2.0}) == 0.0);
  CHECK(q.loss(ParamVector{0.0, 0.0}) == doctest::Approx(0.5 * (1.0 + 10.0 * 4.0)));
}

TEST_CASE("sgd_step rejects bad input") {
  CHECK_THROWS_AS(sgd_step(ParamVector{1.0}, ParamVector{1.0, 2.0}, 0.1), ValidationError);
  CHECK_THROWS_AS(sgd_step(ParamVector{1.0}, ParamVector{1.0}, 0.0), ValidationError);
  CHECK(sgd_step(ParamVector{1.0}, ParamVector{2.0}, 0.25) == ParamVector{0.5});
}

TEST_CASE("model init is seeded") {
  const Architecture arch{TrunkKind::tanh_mlp, 4, 3};
  const std::vector<TaskId> ids{0, 1};
  CHECK(MultiTaskModel::init(arch, ids, 5) == MultiTaskModel::init(arch, ids, 5));
  CHECK_FALSE(MultiTaskModel::init(arch, ids, 5) == MultiTaskModel::init(arch, ids, 6));
}

TEST_CASE("seed derivation separates streams") {
  CHECK(derive_seed(1, {2}) != derive_seed(1, {3}));
  CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("planted taskset") {
  const auto p = build_planted_taskset(fixture::small_planted(3));
  CHECK(p.data.taskset.size() == 6);
  CHECK(p.data.train.rows() == 256);
  CHECK(p.cluster_of == std::vector<std::size_t>{0, 0, 0, 1, 1, 1});
  CHECK(std::abs(p.factors[0].dot(p.factors[1])) < 1e-12);
  const auto q = build_planted_taskset(fixture::small_planted(3));
  CHECK(p.data.train.inputs == q.data.train.inputs);
  CHECK(p.data.test.targets == q.data.test.targets);

  auto bad = fixture::small_planted(3);
  bad.clusters = {{0, 1, 2}, {3, 4}};
  CHECK_THROWS_AS(build_planted_taskset(bad), ValidationError);
}

TEST_CASE("batch stream is random access") {
  const auto p = build_planted_taskset(fixture::small_planted(1));
  const BatchStream s(p.data.train, 16, 99);
  const std::vector<TaskId> ids{0, 3};
  const auto b7 = s.draw(7, ids);
  s.draw(3, ids);
  CHECK(s.draw(7, ids).inputs == b7.inputs);
  CHECK(s.draw(7, ids).targets.at(3) == b7.targets.at(3));
  CHECK(b7.size() == 16);
}
