#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tag/selector.hpp"

using namespace tag;

namespace {

AffinityMatrix hand_instance() {
  return AffinityMatrix::from_dense(3, oracle::kHandDense, DiagonalMode::train_excluded);
}

}  // namespace

TEST_CASE("candidate enumeration counts") {
  Rng rng(1);
  CHECK(enumerate_candidate_groups(fixture::random_affinity(3, DiagonalMode::train_excluded, rng)).size() == 4);
  CHECK(enumerate_candidate_groups(fixture::random_affinity(3, DiagonalMode::validation_included, rng)).size() == 7);
  CHECK(enumerate_candidate_groups(fixture::random_affinity(9, DiagonalMode::validation_included, rng)).size() == 511);
  CHECK(enumerate_candidate_groups(fixture::random_affinity(4, DiagonalMode::train_excluded, rng), max_size_filter(2))
            .size() == 6);
}

TEST_CASE("parameter cap filter") {
  const Architecture arch{TrunkKind::linear, 8, 1};  // 8 + 1 per head
  const auto f = parameter_cap_filter(arch, 11);
  CHECK(f(TaskGroup::of({0, 1})));
  CHECK_FALSE(f(TaskGroup::of({0, 1, 2})));
}

TEST_CASE("hand instance") {
  const auto p = SelectionProblem::from_affinity(hand_instance(), 2);
  for (const auto& s : {solve_exhaustive_small(p), solve_branch_and_bound(p)}) {
    CHECK(s.total_score == doctest::Approx(oracle::kHandTotal).epsilon(1e-15));
    REQUIRE(s.groups.size() == 2);
    CHECK(s.groups[0] == TaskGroup::of({0, 1}));
    CHECK(s.groups[1] == TaskGroup::of({1, 2}));
    CHECK(s.serving == std::vector<std::size_t>{0, 0, 1});
  }
  CHECK(solve_exhaustive_small(p) == solve_branch_and_bound(p));
  const auto e = random_grouping_expectation(p, 1000, 0);
  CHECK(e.exact);
  CHECK(e.mean <= oracle::kHandTotal);
}

TEST_CASE("budget 1 uses the full set") {
  const auto p = SelectionProblem::from_affinity(hand_instance(), 1);
  const auto s = solve_branch_and_bound(p);
  REQUIRE(s.groups.size() == 1);
  CHECK(s.groups[0] == TaskGroup::all(3));
  CHECK(s.total_score == doctest::Approx(0.2 + 0.2 - 0.4));
}

TEST_CASE("large budget gives every task its best candidate") {
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const auto z = fixture::random_affinity(5, DiagonalMode::validation_included, rng);
    const auto p = SelectionProblem::from_affinity(z, 5);
    double bound = 0.0;
    for (std::size_t t = 0; t < 5; ++t) {
      double best = -INFINITY;
      for (const auto& c : p.candidates)
        if (c.score[t]) best = std::max(best, *c.score[t]);
      bound += best;
    }
    CHECK(solve_branch_and_bound(p).total_score == doctest::Approx(bound).epsilon(1e-12));
  }
}

TEST_CASE("serving tie-break and coverage") {
  const auto z = AffinityMatrix::from_dense(3, std::vector<double>(9, 0.5), DiagonalMode::train_excluded);
  const std::vector<TaskGroup> g{TaskGroup::of({0, 1}), TaskGroup::of({0, 2})};
  CHECK(assign_serving(g, z) == std::vector<std::size_t>{0, 0, 1});
  const std::vector<TaskGroup> partial{TaskGroup::of({0, 1})};
  CHECK_THROWS(assign_serving(partial, z));
}

TEST_CASE("constant objective returns the canonical cover") {
  const auto z = AffinityMatrix::from_dense(4, std::vector<double>(16, 0.3), DiagonalMode::train_excluded);
  const auto p = SelectionProblem::from_affinity(z, 2);
  CHECK(solve_branch_and_bound(p) == solve_exhaustive_small(p));
}

TEST_CASE("branch and bound matches the exhaustive oracle on random instances") {
  Rng rng(2024);
  int identical = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 3 + static_cast<std::size_t>(i % 3);
    const std::size_t b = 1 + static_cast<std::size_t>((i / 3) % 3);
    const auto mode = i % 2 ? DiagonalMode::validation_included : DiagonalMode::train_excluded;
    const auto p = SelectionProblem::from_affinity(fixture::random_affinity(n, mode, rng), b);
    const auto ex = solve_exhaustive_small(p);
    const auto bb = solve_branch_and_bound(p);
    CHECK(fixture::validate_solution(p, ex) == "");
    CHECK(fixture::validate_solution(p, bb) == "");
    CHECK(bb.total_score == ex.total_score);
    identical += bb == ex;
  }
  CHECK(identical == 200);
}

TEST_CASE("optimum is nondecreasing in budget and shifts with columns") {
  Rng rng(77);
  for (int rep = 0; rep < 30; ++rep) {
    const auto z = fixture::random_affinity(5, DiagonalMode::train_excluded, rng);
    double prev = -INFINITY;
    for (std::size_t b = 1; b <= 4; ++b) {
      const double s = solve_branch_and_bound(SelectionProblem::from_affinity(z, b)).total_score;
      CHECK(s >= prev - 1e-12);
      prev = s;
    }
    // Adding a constant to every entry of one target column moves every
    // candidate's score for that target by the same amount.
    auto shifted = z;
    for (std::size_t i = 0; i < 5; ++i)
      if (shifted.has(i, 2)) shifted.values[i * 5 + 2] += 0.25;
    const auto a = solve_branch_and_bound(SelectionProblem::from_affinity(z, 2));
    const auto s = solve_branch_and_bound(SelectionProblem::from_affinity(shifted, 2));
    CHECK(s.total_score == doctest::Approx(a.total_score + 0.25).epsilon(1e-12));
  }
}

TEST_CASE("exhaustive oracle guards") {
  Rng rng(5);
  const auto p = SelectionProblem::from_affinity(fixture::random_affinity(6, DiagonalMode::validation_included, rng), 2);
  CHECK_THROWS(solve_exhaustive_small(p));
  CHECK_NOTHROW(solve_branch_and_bound(p));
}

TEST_CASE("random grouping expectation") {
  Rng rng(6);
  const auto z = fixture::random_affinity(3, DiagonalMode::train_excluded, rng);
  const auto single = SelectionProblem::from_affinity(z, 1);
  const auto e1 = random_grouping_expectation(single, 100, 1);
  CHECK(e1.feasible_solutions == 1);
  CHECK(e1.std_error == 0.0);
  CHECK(e1.mean == solve_branch_and_bound(single).total_score);

  const auto p = SelectionProblem::from_affinity(fixture::random_affinity(5, DiagonalMode::train_excluded, rng), 2);
  const auto exact = random_grouping_expectation(p, 20000, 3);
  const auto sampled = random_grouping_expectation(p, 20000, 3, true);
  CHECK(exact.exact);
  CHECK_FALSE(sampled.exact);
  CHECK(std::abs(exact.mean - sampled.mean) < 5 * sampled.std_error + 1e-12);
  CHECK(random_grouping_expectation(p, 20000, 3, true).mean == sampled.mean);
}
