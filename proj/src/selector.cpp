#include "tag/selector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tag/rng.hpp"

namespace tag {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Serving and total for a set of candidates given by ascending candidate
/// indices. Returns false if some task cannot be served.
bool serve(const SelectionProblem& p, std::span<const std::size_t> chosen, std::vector<std::size_t>& serving,
           std::vector<double>& per_task, double& total) {
  serving.assign(p.n, 0);
  per_task.assign(p.n, 0.0);
  total = 0.0;
  for (std::size_t t = 0; t < p.n; ++t) {
    bool found = false;
    double best = kNegInf;
    for (std::size_t g = 0; g < chosen.size(); ++g) {
      const auto& s = p.candidates[chosen[g]].score[t];
      if (!s) continue;
      if (!found || *s > best) {
        best = *s;
        serving[t] = g;
        found = true;
      }
    }
    if (!found) return false;
    per_task[t] = best;
    total += best;
  }
  return true;
}

std::vector<TaskGroup> masks_of(const SelectionProblem& p, std::span<const std::size_t> chosen) {
  std::vector<TaskGroup> out;
  out.reserve(chosen.size());
  for (std::size_t c : chosen) out.push_back(p.candidates[c].group);
  return out;
}

/// Strict "better" under (total desc, sorted mask sequence asc).
bool better(double total, const std::vector<TaskGroup>& groups, double best_total,
            const std::vector<TaskGroup>& best_groups, bool have_best) {
  if (!have_best) return true;
  if (total != best_total) return total > best_total;
  return groups < best_groups;
}

void combos(std::size_t count, std::size_t max_size, std::vector<std::size_t>& cur, std::size_t start,
            const std::function<void(std::span<const std::size_t>)>& visit) {
  if (!cur.empty()) visit(cur);
  if (cur.size() == max_size) return;
  for (std::size_t i = start; i < count; ++i) {
    cur.push_back(i);
    combos(count, max_size, cur, i + 1, visit);
    cur.pop_back();
  }
}

}  // namespace

CandidateFilter max_size_filter(std::size_t max_size) {
  return [max_size](TaskGroup g) { return g.size() <= max_size; };
}

CandidateFilter parameter_cap_filter(const Architecture& arch, std::size_t cap) {
  return [arch, cap](TaskGroup g) { return arch.parameter_count(g.size()) < cap; };
}

CandidateFilter all_of(std::vector<CandidateFilter> filters) {
  return [filters = std::move(filters)](TaskGroup g) {
    return std::all_of(filters.begin(), filters.end(), [g](const CandidateFilter& f) { return !f || f(g); });
  };
}

std::vector<CandidateGroup> enumerate_candidate_groups(const AffinityMatrix& z, const CandidateFilter& filter) {
  if (z.n < 1) throw ValidationError("enumerate_candidate_groups: need at least one task");
  if (z.n > kMaxSelectionTasks)
    throw ValidationError("enumerate_candidate_groups: n = " + std::to_string(z.n) + " exceeds the limit of " +
                          std::to_string(kMaxSelectionTasks));
  std::vector<CandidateGroup> out;
  const std::uint32_t end = 1u << z.n;
  for (std::uint32_t m = 1; m < end; ++m) {
    const TaskGroup g(m);
    if (z.mode == DiagonalMode::train_excluded && g.size() == 1) continue;
    if (filter && !filter(g)) continue;
    CandidateGroup c{g, std::vector<std::optional<double>>(z.n)};
    for (TaskId t : g.members()) c.score[static_cast<std::size_t>(t)] = group_onto_task_score(g, t, z);
    out.push_back(std::move(c));
  }
  return out;
}

SelectionProblem SelectionProblem::from_affinity(const AffinityMatrix& z, std::size_t budget,
                                                 const CandidateFilter& filter) {
  SelectionProblem p{z.n, budget, enumerate_candidate_groups(z, filter)};
  p.validate();
  return p;
}

void SelectionProblem::validate() const {
  if (n < 1) throw ValidationError("selection: need at least one task");
  if (n > kMaxSelectionTasks) throw ValidationError("selection: too many tasks");
  if (budget < 1) throw ValidationError("selection.budget must be >= 1");
  std::uint32_t prev = 0;
  for (const auto& c : candidates) {
    if (c.group.empty() || c.group.mask() >= (1u << n)) throw ValidationError("selection: candidate out of range");
    if (c.group.mask() <= prev) throw ValidationError("selection: candidates must be distinct and in mask order");
    prev = c.group.mask();
    if (c.score.size() != n) throw ValidationError("selection: candidate score vector has wrong length");
    for (std::size_t t = 0; t < n; ++t) {
      if (c.score[t] && !c.group.contains(static_cast<TaskId>(t)))
        throw ValidationError("selection: score for a non-member task");
      if (c.score[t] && !std::isfinite(*c.score[t])) throw ValidationError("selection: non-finite score");
    }
  }
}

std::vector<std::size_t> assign_serving(const SelectionProblem& problem, std::span<const TaskGroup> groups) {
  std::vector<std::size_t> chosen;
  for (TaskGroup g : groups) {
    auto it = std::lower_bound(problem.candidates.begin(), problem.candidates.end(), g,
                               [](const CandidateGroup& c, TaskGroup x) { return c.group < x; });
    if (it == problem.candidates.end() || it->group != g)
      throw ValidationError("assign_serving: group " + g.to_string() + " is not a candidate");
    chosen.push_back(static_cast<std::size_t>(it - problem.candidates.begin()));
  }
  std::vector<std::size_t> serving;
  std::vector<double> per;
  double total = 0.0;
  if (!serve(problem, chosen, serving, per, total)) throw ValidationError("assign_serving: some task is not covered");
  return serving;
}

std::vector<std::size_t> assign_serving(std::span<const TaskGroup> groups, const AffinityMatrix& z) {
  std::vector<std::size_t> serving(z.n, 0);
  for (std::size_t t = 0; t < z.n; ++t) {
    bool found = false;
    double best = kNegInf;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (!groups[g].contains(static_cast<TaskId>(t))) continue;
      const auto s = group_onto_task_score(groups[g], static_cast<TaskId>(t), z);
      if (!s) continue;
      if (!found || *s > best) {
        best = *s;
        serving[t] = g;
        found = true;
      }
    }
    if (!found) throw ValidationError("assign_serving: task " + std::to_string(t) + " is not covered");
  }
  return serving;
}

GroupingSolution evaluate_grouping(const SelectionProblem& problem, std::vector<TaskGroup> groups) {
  std::sort(groups.begin(), groups.end());
  GroupingSolution s;
  s.serving = assign_serving(problem, groups);
  s.groups = std::move(groups);
  s.per_task_score.assign(problem.n, 0.0);
  for (std::size_t t = 0; t < problem.n; ++t) {
    const TaskGroup g = s.groups[s.serving[t]];
    auto it = std::lower_bound(problem.candidates.begin(), problem.candidates.end(), g,
                               [](const CandidateGroup& c, TaskGroup x) { return c.group < x; });
    s.per_task_score[t] = *it->score[t];
    s.total_score += s.per_task_score[t];
  }
  return s;
}

void for_each_cover(const SelectionProblem& problem, const std::function<void(std::span<const std::size_t>)>& visit) {
  std::vector<std::size_t> cur;
  std::vector<std::size_t> serving;
  std::vector<double> per;
  double total = 0.0;
  combos(problem.candidates.size(), problem.budget, cur, 0, [&](std::span<const std::size_t> chosen) {
    if (serve(problem, chosen, serving, per, total)) visit(chosen);
  });
}

GroupingSolution solve_exhaustive_small(const SelectionProblem& problem) {
  problem.validate();
  if (problem.candidates.size() > kExhaustiveMaxCandidates)
    throw ValidationError("solve_exhaustive_small: " + std::to_string(problem.candidates.size()) +
                          " candidates exceed the limit of " + std::to_string(kExhaustiveMaxCandidates));
  if (problem.budget > kExhaustiveMaxBudget)
    throw ValidationError("solve_exhaustive_small: budget exceeds the limit of " + std::to_string(kExhaustiveMaxBudget));

  GroupingSolution best;
  bool have = false;
  std::vector<std::size_t> serving;
  std::vector<double> per;
  double total = 0.0;
  std::vector<std::size_t> cur;
  combos(problem.candidates.size(), problem.budget, cur, 0, [&](std::span<const std::size_t> chosen) {
    ++best.stats.nodes_expanded;
    if (!serve(problem, chosen, serving, per, total)) return;
    auto groups = masks_of(problem, chosen);
    if (better(total, groups, best.total_score, best.groups, have)) {
      best.groups = std::move(groups);
      best.serving = serving;
      best.per_task_score = per;
      best.total_score = total;
      have = true;
    }
  });
  if (!have) throw RuntimeFailure("selection is infeasible: no set of at most " + std::to_string(problem.budget) +
                                  " candidate groups serves every task");
  return best;
}

namespace {

struct BranchAndBound {
  const SelectionProblem& p;
  std::vector<std::size_t> order;                 // candidate indices by best score, descending
  std::vector<std::vector<double>> suffix_best;   // [k][t]: best score for t among order[k..]
  std::vector<std::size_t> path;                  // positions into `order`
  GroupingSolution best;
  bool have = false;
  std::vector<std::size_t> serving;
  std::vector<double> per;

  explicit BranchAndBound(const SelectionProblem& problem) : p(problem) {
    const std::size_t m = p.candidates.size();
    std::vector<double> top(m, kNegInf);
    for (std::size_t c = 0; c < m; ++c)
      for (const auto& s : p.candidates[c].score)
        if (s) top[c] = std::max(top[c], *s);
    order.resize(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return top[a] > top[b]; });
    suffix_best.assign(m + 1, std::vector<double>(p.n, kNegInf));
    for (std::size_t k = m; k-- > 0;) {
      suffix_best[k] = suffix_best[k + 1];
      const auto& sc = p.candidates[order[k]].score;
      for (std::size_t t = 0; t < p.n; ++t)
        if (sc[t]) suffix_best[k][t] = std::max(suffix_best[k][t], *sc[t]);
    }
  }

  std::vector<std::size_t> chosen_sorted() const {
    std::vector<std::size_t> c;
    c.reserve(path.size());
    for (std::size_t k : path) c.push_back(order[k]);
    std::sort(c.begin(), c.end());
    return c;
  }

  /// Current best serve score per task (-inf if unserved).
  std::vector<double> current_scores() const {
    std::vector<double> cur(p.n, kNegInf);
    for (std::size_t k : path) {
      const auto& sc = p.candidates[order[k]].score;
      for (std::size_t t = 0; t < p.n; ++t)
        if (sc[t]) cur[t] = std::max(cur[t], *sc[t]);
    }
    return cur;
  }

  void visit_node() {
    ++best.stats.nodes_expanded;
    const auto chosen = chosen_sorted();
    double total = 0.0;
    if (!serve(p, chosen, serving, per, total)) return;
    auto groups = masks_of(p, chosen);
    if (better(total, groups, best.total_score, best.groups, have)) {
      best.groups = std::move(groups);
      best.serving = serving;
      best.per_task_score = per;
      best.total_score = total;
      have = true;
    }
  }

  void search(std::size_t start) {
    if (!path.empty()) visit_node();
    if (path.size() == p.budget) return;
    const auto cur = current_scores();
    for (std::size_t k = start; k < order.size(); ++k) {
      // The bound only decreases with k, so the first failing k ends the loop.
      double bound = 0.0;
      bool feasible = true;
      for (std::size_t t = 0; t < p.n; ++t) {
        const double b = std::max(cur[t], suffix_best[k][t]);
        if (b == kNegInf) {
          feasible = false;
          break;
        }
        bound += b;
      }
      if (!feasible || (have && bound < best.total_score)) {
        best.stats.pruned += order.size() - k;
        break;
      }
      path.push_back(k);
      search(k + 1);
      path.pop_back();
    }
  }
};

}  // namespace

GroupingSolution solve_branch_and_bound(const SelectionProblem& problem) {
  problem.validate();
  BranchAndBound bb(problem);
  bb.search(0);
  if (!bb.have) throw RuntimeFailure("selection is infeasible: no set of at most " + std::to_string(problem.budget) +
                                     " candidate groups serves every task");
  return std::move(bb.best);
}

Expectation random_grouping_expectation(const SelectionProblem& problem, std::size_t trials, std::uint64_t seed,
                                        bool force_sampling) {
  problem.validate();
  if (trials < 1) throw ValidationError("random_grouping_expectation: trials must be >= 1");

  struct Cover {
    std::vector<std::size_t> chosen;
    std::vector<std::vector<std::size_t>> servers;  // per task: positions in chosen able to serve it
    std::uint64_t weight = 1;
  };
  std::vector<Cover> covers;
  std::uint64_t total_solutions = 0;
  constexpr std::uint64_t kCap = std::uint64_t{1} << 62;
  for_each_cover(problem, [&](std::span<const std::size_t> chosen) {
    Cover c;
    c.chosen.assign(chosen.begin(), chosen.end());
    c.servers.resize(problem.n);
    for (std::size_t t = 0; t < problem.n; ++t) {
      for (std::size_t g = 0; g < chosen.size(); ++g)
        if (problem.candidates[chosen[g]].score[t]) c.servers[t].push_back(g);
      c.weight *= c.servers[t].size();
      if (c.weight > kCap) throw ValidationError("random_grouping_expectation: solution space too large");
    }
    total_solutions += c.weight;
    if (total_solutions > kCap) throw ValidationError("random_grouping_expectation: solution space too large");
    covers.push_back(std::move(c));
  });
  if (covers.empty()) throw RuntimeFailure("random_grouping_expectation: problem is infeasible");

  auto score_of = [&](const Cover& c, const std::vector<std::size_t>& pick) {
    double total = 0.0;
    for (std::size_t t = 0; t < problem.n; ++t) total += *problem.candidates[c.chosen[pick[t]]].score[t];
    return total;
  };

  Expectation e;
  e.feasible_solutions = total_solutions;
  if (!force_sampling && total_solutions <= kExactExpectationLimit) {
    double sum = 0.0;
    for (const auto& c : covers) {
      std::vector<std::size_t> digit(problem.n, 0), pick(problem.n);
      while (true) {
        for (std::size_t t = 0; t < problem.n; ++t) pick[t] = c.servers[t][digit[t]];
        sum += score_of(c, pick);
        std::size_t t = 0;
        while (t < problem.n && ++digit[t] == c.servers[t].size()) digit[t++] = 0;
        if (t == problem.n) break;
      }
    }
    e.mean = sum / static_cast<double>(total_solutions);
    e.std_error = 0.0;
    e.exact = true;
    e.trials = 0;
    return e;
  }

  std::vector<std::uint64_t> cumulative(covers.size());
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < covers.size(); ++i) cumulative[i] = (acc += covers[i].weight);
  Rng rng(derive_seed(seed, {0x9A2DULL}));
  double mean = 0.0, m2 = 0.0;
  std::vector<std::size_t> pick(problem.n);
  for (std::size_t k = 0; k < trials; ++k) {
    const std::uint64_t r = rng.below(acc);
    const auto idx = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
    const Cover& c = covers[idx];
    for (std::size_t t = 0; t < problem.n; ++t) pick[t] = c.servers[t][rng.below(c.servers[t].size())];
    const double x = score_of(c, pick);
    const double delta = x - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (x - mean);
  }
  e.mean = mean;
  e.trials = trials;
  e.exact = false;
  e.std_error = trials > 1 ? std::sqrt(m2 / static_cast<double>(trials - 1) / static_cast<double>(trials)) : 0.0;
  return e;
}

}  // namespace tag
