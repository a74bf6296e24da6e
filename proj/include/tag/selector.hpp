#pragma once

// Budgeted network selection: pick at most `budget` candidate groups so that
// every task can be served by one of them, maximizing the summed score of
// each task's serving group. Covering with a bounded number of sets makes
// this NP-hard in general; at desk scale it is solved exactly.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "tag/affinity.hpp"
#include "tag/group.hpp"

namespace tag {

inline constexpr std::size_t kMaxSelectionTasks = 20;
inline constexpr std::size_t kExhaustiveMaxCandidates = 32;
inline constexpr std::size_t kExhaustiveMaxBudget = 4;
inline constexpr std::uint64_t kExactExpectationLimit = 10'000;

/// Candidate group with the score it would give each member task when serving
/// it. `score[t]` is nullopt for non-members and for members it cannot serve.
struct CandidateGroup {
  TaskGroup group;
  std::vector<std::optional<double>> score;
};

using CandidateFilter = std::function<bool(TaskGroup)>;

CandidateFilter max_size_filter(std::size_t max_size);
/// Rejects groups whose network would reach `cap` parameters (trunk + heads).
CandidateFilter parameter_cap_filter(const Architecture& arch, std::size_t cap);
CandidateFilter all_of(std::vector<CandidateFilter> filters);

/// All nonempty subsets of {0..n-1} in increasing mask order, singletons
/// dropped in train mode, scored with group_onto_task_score.
std::vector<CandidateGroup> enumerate_candidate_groups(const AffinityMatrix& z, const CandidateFilter& filter = {});

struct SelectionProblem {
  std::size_t n = 0;
  std::size_t budget = 1;
  std::vector<CandidateGroup> candidates;  // increasing mask order, distinct

  static SelectionProblem from_affinity(const AffinityMatrix& z, std::size_t budget, const CandidateFilter& filter = {});
  void validate() const;
};

struct SolverStats {
  std::uint64_t nodes_expanded = 0;
  std::uint64_t pruned = 0;
};

struct GroupingSolution {
  std::vector<TaskGroup> groups;      // increasing mask order
  std::vector<std::size_t> serving;   // task -> index into groups
  std::vector<double> per_task_score;
  double total_score = 0.0;
  SolverStats stats;

  friend bool operator==(const GroupingSolution& a, const GroupingSolution& b) {
    return a.groups == b.groups && a.serving == b.serving && a.per_task_score == b.per_task_score &&
           a.total_score == b.total_score;
  }
};

/// Serving map for a fixed set of chosen groups: each task goes to the
/// highest-scoring chosen group that contains it, ties to the lower index.
/// Throws if some task cannot be served.
std::vector<std::size_t> assign_serving(const SelectionProblem& problem, std::span<const TaskGroup> groups);
std::vector<std::size_t> assign_serving(std::span<const TaskGroup> groups, const AffinityMatrix& z);

/// Scores an explicit grouping (serving assigned by assign_serving).
GroupingSolution evaluate_grouping(const SelectionProblem& problem, std::vector<TaskGroup> groups);

/// Brute force over all sets of at most `budget` candidates. Guarded to
/// kExhaustiveMaxCandidates candidates and kExhaustiveMaxBudget.
GroupingSolution solve_exhaustive_small(const SelectionProblem& problem);

/// Depth-first branch and bound. Candidates are visited by best per-task score
/// (descending); a branch is cut when sum_t max(current serve score, best
/// remaining candidate score for t) falls strictly below the incumbent.
/// Ties resolve like the exhaustive oracle: smallest sorted mask sequence.
GroupingSolution solve_branch_and_bound(const SelectionProblem& problem);

struct Expectation {
  double mean = 0.0;
  double std_error = 0.0;
  bool exact = false;
  std::uint64_t feasible_solutions = 0;
  std::size_t trials = 0;
};

/// Mean total score over feasible (groups, serving) pairs drawn uniformly.
/// Enumerates exactly when there are at most kExactExpectationLimit of them.
Expectation random_grouping_expectation(const SelectionProblem& problem, std::size_t trials, std::uint64_t seed,
                                        bool force_sampling = false);

/// Calls `visit` with every set of at most `budget` candidate indices
/// (ascending) whose members can serve every task.
void for_each_cover(const SelectionProblem& problem, const std::function<void(std::span<const std::size_t>)>& visit);

}  // namespace tag
