#include "tag/bench.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <iomanip>
#include <sstream>
#include <thread>

#include "tag/artifact.hpp"
#include "tag/errors.hpp"
#include "tag/rng.hpp"

namespace tag::bench {

namespace {

Architecture architecture_of(const PlantedSpec& spec) { return {spec.trunk, spec.feature_dim, spec.width}; }

std::vector<std::size_t> serve_by_min_loss(std::span<const TaskGroup> groups, std::size_t n,
                                           const std::function<double(std::size_t, TaskId)>& loss) {
  std::vector<std::size_t> serving(n, groups.size());
  for (std::size_t t = 0; t < n; ++t) {
    double best = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (!groups[g].contains(static_cast<TaskId>(t))) continue;
      const double l = loss(g, static_cast<TaskId>(t));
      if (serving[t] == groups.size() || l < best) {
        serving[t] = g;
        best = l;
      }
    }
    if (serving[t] == groups.size()) throw RuntimeFailure("task " + std::to_string(t) + " is not covered");
  }
  return serving;
}

void finish_costs(GroupingEvaluation& e, std::size_t runs, std::uint64_t steps) {
  e.grouping_runs = runs;
  e.grouping_steps = steps;
  e.training_cost += steps;
}

GroupingEvaluation from_problem(const std::string& method, const SelectionProblem& problem, const BenchConfig& config,
                                NetworkCache& cache, const std::string& provenance, std::uint64_t probe_steps) {
  auto solution = solve_branch_and_bound(problem);
  auto e = evaluate_solution(method, config.budget, std::move(solution), cache, provenance);
  finish_costs(e, 1, probe_steps);
  return e;
}

nlohmann::json affinity_json(const AffinityMatrix& z) {
  auto rows = nlohmann::json::array();
  for (std::size_t i = 0; i < z.n; ++i) {
    auto row = nlohmann::json::array();
    for (std::size_t j = 0; j < z.n; ++j) row.push_back(z.has(i, j) ? nlohmann::json(z.at(i, j)) : nlohmann::json());
    rows.push_back(row);
  }
  return {{"mode", to_string(z.mode)}, {"values", rows}};
}

nlohmann::json expectation_json(const Expectation& e) {
  return {{"mean", e.mean}, {"std_error", e.std_error}, {"exact", e.exact},
          {"feasible_solutions", e.feasible_solutions}, {"trials", e.trials}};
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void BenchConfig::validate() const {
  validate_partition(data.n_tasks, data.clusters);
  train.validate();
  schedule().validate();
  if (budget < 1) throw ValidationError("selection.budget must be >= 1");
  if (budget > data.n_tasks) throw ValidationError("selection.budget must not exceed the number of tasks");
  if (rg_trials < 1) throw ValidationError("rg_trials must be >= 1");
  if (parameter_cap && *parameter_cap == 0) throw ValidationError("selection.latency_param_cap must be positive");
}

CandidateFilter BenchConfig::candidate_filter() const {
  if (!parameter_cap) return {};
  return parameter_cap_filter(architecture_of(data), *parameter_cap);
}

ProbeSchedule BenchConfig::schedule() const { return train.schedule.value_or(ProbeSchedule::every(1)); }

NetworkCache::NetworkCache(const TaskData& data, TrainConfig config) : data_(&data), config_(std::move(config)) {
  config_.schedule.reset();
  config_.record_cosine = false;
  config_.record_trajectory = false;
  config_.validate();
}

TrainedNetwork NetworkCache::train(TaskGroup group) const {
  if (group.empty()) throw ValidationError("cannot train an empty group");
  TrainConfig cfg = config_;
  cfg.seed = derive_seed(config_.seed, {group.mask()});
  const auto result = train_group(*data_, group, cfg);
  const auto members = group.members();
  const Batch test = data_->test.full(members);
  TrainedNetwork net;
  net.group = group;
  net.steps = result.steps_run;
  for (TaskId t : members) net.test_loss[t] = task_loss(result.model, test, data_->taskset.task(t));
  return net;
}

const TrainedNetwork& NetworkCache::get(TaskGroup group) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = networks_.find(group.mask()); it != networks_.end()) return it->second;
  }
  auto net = train(group);
  std::lock_guard lock(mutex_);
  return networks_.try_emplace(group.mask(), std::move(net)).first->second;
}

void NetworkCache::prefetch(const std::vector<TaskGroup>& groups) {
  std::vector<TaskGroup> missing;
  {
    std::lock_guard lock(mutex_);
    for (auto g : groups)
      if (!networks_.contains(g.mask()) && std::find(missing.begin(), missing.end(), g) == missing.end())
        missing.push_back(g);
  }
  if (missing.empty()) return;
  std::vector<std::optional<TrainedNetwork>> out(missing.size());
  std::vector<std::exception_ptr> errors(missing.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < missing.size();) {
      try {
        out[i] = train(missing[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads =
      std::min<std::size_t>(missing.size(), std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < missing.size(); ++i) networks_.try_emplace(missing[i].mask(), std::move(*out[i]));
}

std::size_t NetworkCache::trained() const {
  std::lock_guard lock(mutex_);
  return networks_.size();
}

bool NetworkCache::contains(TaskGroup group) const {
  std::lock_guard lock(mutex_);
  return networks_.contains(group.mask());
}

GroupingEvaluation evaluate_solution(std::string method, std::size_t budget, GroupingSolution solution,
                                     NetworkCache& cache, const std::string& provenance) {
  GroupingEvaluation e;
  e.method = std::move(method);
  e.budget = budget;
  cache.prefetch(solution.groups);
  e.per_task_test_loss.assign(solution.serving.size(), 0.0);
  for (std::size_t t = 0; t < solution.serving.size(); ++t) {
    const auto& net = cache.get(solution.groups.at(solution.serving[t]));
    e.per_task_test_loss[t] = net.test_loss.at(static_cast<TaskId>(t));
    e.total_test_loss += e.per_task_test_loss[t];
  }
  for (auto g : solution.groups) e.training_cost += cache.get(g).steps;
  e.grouping = std::move(solution);
  e.provenance = provenance;
  return e;
}

ProbeRun run_probe(const TaskData& data, const BenchConfig& config, bool record_cosine) {
  TrainConfig cfg = config.train;
  cfg.schedule = config.schedule();
  cfg.record_cosine = record_cosine;
  ProbeRun run;
  run.result = train_group(data, TaskGroup::all(data.taskset.size()), cfg);
  const std::size_t n = data.taskset.size();
  run.affinity = average_affinity(run.result.samples, {}, n, config.mode);
  if (record_cosine) run.cosine = average_affinity(run.result.cosine_samples, {}, n, config.mode);
  return run;
}

TagOutcome tag_pipeline(const TaskData& data, const BenchConfig& config, NetworkCache& cache, const ProbeRun* reuse) {
  TagOutcome out;
  out.probe = reuse ? *reuse : run_probe(data, config, false);
  out.problem = SelectionProblem::from_affinity(out.probe.affinity, config.budget, config.candidate_filter());
  out.evaluation = from_problem("TAG", out.problem, config, cache, provenance_hash(data, config.train),
                                out.probe.result.steps_run);
  return out;
}

GroupingEvaluation cs_baseline_grouping(const TaskData& data, const BenchConfig& config, NetworkCache& cache,
                                        const ProbeRun* reuse) {
  ProbeRun own;
  if (!reuse || !reuse->cosine) {
    own = run_probe(data, config, true);
    reuse = &own;
  }
  const auto problem = SelectionProblem::from_affinity(*reuse->cosine, config.budget, config.candidate_filter());
  return from_problem("CS", problem, config, cache, provenance_hash(data, config.train), reuse->result.steps_run);
}

HoaOutcome hoa_baseline_grouping(const TaskData& data, const BenchConfig& config, NetworkCache& cache) {
  const std::size_t n = data.taskset.size();
  if (n > kHoaMaxTasks) throw ValidationError("HOA baseline is limited to " + std::to_string(kHoaMaxTasks) + " tasks");
  const bool singles = config.mode == DiagonalMode::validation_included;
  std::vector<TaskGroup> trained;
  for (TaskId i = 0; i < static_cast<TaskId>(n); ++i) {
    if (singles) trained.push_back(TaskGroup::of({i}));
    for (TaskId j = i + 1; j < static_cast<TaskId>(n); ++j) trained.push_back(TaskGroup::of({i, j}));
  }
  cache.prefetch(trained);

  HoaOutcome out;
  out.models_trained = trained.size();
  std::uint64_t steps = 0;
  for (auto g : trained) steps += cache.get(g).steps;

  SelectionProblem problem;
  problem.n = n;
  problem.budget = config.budget;
  const auto filter = config.candidate_filter();
  for (std::uint32_t m = 1; m < (1u << n); ++m) {
    const TaskGroup g(m);
    if (g.size() == 1 && !singles) continue;
    if (filter && !filter(g)) continue;
    CandidateGroup c{g, std::vector<std::optional<double>>(n)};
    std::vector<std::optional<double>> estimate(n);
    for (TaskId t : g.members()) {
      double sum = 0.0;
      std::size_t count = 0;
      if (g.size() == 1) {
        sum = cache.get(g).test_loss.at(t);
        count = 1;
      } else {
        for (TaskId j : g.members()) {
          if (j == t) continue;
          sum += cache.get(TaskGroup::of({std::min(t, j), std::max(t, j)})).test_loss.at(t);
          ++count;
        }
      }
      estimate[t] = sum / static_cast<double>(count);
      c.score[t] = -*estimate[t];
    }
    out.estimates[m] = std::move(estimate);
    problem.candidates.push_back(std::move(c));
  }
  problem.validate();
  auto solution = solve_branch_and_bound(problem);
  out.evaluation = evaluate_solution("HOA", config.budget, std::move(solution), cache, provenance_hash(data, config.train));
  finish_costs(out.evaluation, trained.size(), steps);
  return out;
}

ExhaustiveResult exhaustive_grouping_search(const TaskData& data, std::size_t budget, NetworkCache& cache) {
  const std::size_t n = data.taskset.size();
  if (n > kExhaustiveMaxTasks)
    throw ValidationError("exhaustive search is limited to " + std::to_string(kExhaustiveMaxTasks) + " tasks");
  if (budget < 1) throw ValidationError("budget must be >= 1");
  const std::uint32_t full = (1u << n) - 1u;
  std::vector<TaskGroup> groups;
  for (std::uint32_t m = 1; m <= full; ++m) groups.emplace_back(m);
  cache.prefetch(groups);

  ExhaustiveResult out;
  out.networks = groups.size();
  std::vector<TaskGroup> chosen;
  std::function<void(std::size_t, std::uint32_t)> recurse = [&](std::size_t start, std::uint32_t covered) {
    if (covered == full) {
      RankedCover c;
      c.groups = chosen;
      c.serving = serve_by_min_loss(c.groups, n, [&](std::size_t g, TaskId t) { return cache.get(c.groups[g]).test_loss.at(t); });
      for (std::size_t t = 0; t < n; ++t) {
        c.per_task_loss.push_back(cache.get(c.groups[c.serving[t]]).test_loss.at(static_cast<TaskId>(t)));
        c.total += c.per_task_loss.back();
      }
      out.ranking.push_back(std::move(c));
    }
    if (chosen.size() == budget) return;
    for (std::size_t i = start; i < groups.size(); ++i) {
      chosen.push_back(groups[i]);
      recurse(i + 1, covered | groups[i].mask());
      chosen.pop_back();
    }
  };
  recurse(0, 0);
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [](const RankedCover& a, const RankedCover& b) { return a.total < b.total; });
  return out;
}

Expectation random_grouping_loss(const TaskData& data, const BenchConfig& config, NetworkCache& cache) {
  const std::size_t n = data.taskset.size();
  const bool singles = config.mode == DiagonalMode::validation_included;
  const auto filter = config.candidate_filter();
  std::vector<TaskGroup> groups;
  for (std::uint32_t m = 1; m < (1u << n); ++m) {
    const TaskGroup g(m);
    if (g.size() == 1 && !singles) continue;
    if (filter && !filter(g)) continue;
    groups.push_back(g);
  }
  cache.prefetch(groups);
  SelectionProblem problem;
  problem.n = n;
  problem.budget = config.budget;
  for (auto g : groups) {
    CandidateGroup c{g, std::vector<std::optional<double>>(n)};
    for (TaskId t : g.members()) c.score[t] = cache.get(g).test_loss.at(t);
    problem.candidates.push_back(std::move(c));
  }
  problem.validate();
  return random_grouping_expectation(problem, config.rg_trials, derive_seed(config.rg_seed, {1}));
}

std::string provenance_hash(const TaskData& data, const TrainConfig& train) {
  std::string bytes;
  auto put = [&](const void* p, std::size_t len) { bytes.append(static_cast<const char*>(p), len); };
  auto put_matrix = [&](const Eigen::MatrixXd& m) {
    const std::int64_t r = m.rows(), c = m.cols();
    put(&r, sizeof r);
    put(&c, sizeof c);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double v = m(i, j);
        put(&v, sizeof v);
      }
  };
  for (const auto* split : {&data.train, &data.validation, &data.test}) {
    put_matrix(split->inputs);
    put_matrix(split->targets);
  }
  std::ostringstream os;
  os << std::setprecision(17) << static_cast<int>(data.taskset.arch.trunk) << ' ' << data.taskset.arch.input_dim << ' '
     << data.taskset.arch.width << ' ' << train.eta << ' ' << train.steps << ' ' << train.batch_size << ' '
     << train.seed << ' ' << train.loss_ceiling;
  for (const auto& t : data.taskset.tasks) os << ' ' << t.id << ':' << t.loss_weight;
  bytes += os.str();
  return sha256_hex(bytes);
}

bool matches_partition(const std::vector<TaskGroup>& groups, const std::vector<std::vector<TaskId>>& clusters) {
  std::vector<std::uint32_t> a, b;
  for (auto g : groups) a.push_back(g.mask());
  for (const auto& c : clusters) b.push_back(TaskGroup::of(c).mask());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

std::vector<TaskGroup> served_partition(const std::vector<TaskGroup>& groups, const std::vector<std::size_t>& serving) {
  std::vector<std::uint32_t> masks(groups.size(), 0);
  for (std::size_t t = 0; t < serving.size(); ++t) masks.at(serving[t]) |= 1u << t;
  std::vector<TaskGroup> out;
  for (auto m : masks)
    if (m) out.emplace_back(m);
  std::sort(out.begin(), out.end());
  return out;
}

BenchmarkReport run_benchmark(const BenchConfig& config, NetworkCache* shared_cache) {
  config.validate();
  const auto planted = build_planted_taskset(config.data);
  const TaskData& data = planted.data;
  const std::string provenance = provenance_hash(data, config.train);

  std::optional<NetworkCache> own;
  NetworkCache* cache = shared_cache;
  if (cache) {
    if (provenance_hash(cache->data(), cache->config()) != provenance)
      throw ValidationError("shared network cache was built for different data or trainer settings");
  } else {
    own.emplace(data, config.train);
    cache = &*own;
  }
  const TaskData& cdata = cache->data();

  BenchmarkReport r;
  r.provenance = provenance;
  r.planted = config.data.clusters;

  const auto probe = run_probe(cdata, config, true);
  auto tag = tag_pipeline(cdata, config, *cache, &probe);
  r.tag_affinity = probe.affinity;
  r.cs_affinity = *probe.cosine;
  r.tag_asymmetry = asymmetry(r.tag_affinity);
  r.cs_asymmetry = asymmetry(r.cs_affinity);
  r.rg_score = random_grouping_expectation(tag.problem, config.rg_trials, config.rg_seed);
  r.tag_recovers_planted =
      matches_partition(served_partition(tag.evaluation.grouping.groups, tag.evaluation.grouping.serving), r.planted);
  r.evaluations.push_back(tag.evaluation);
  r.evaluations.push_back(cs_baseline_grouping(cdata, config, *cache, &probe));
  if (cdata.taskset.size() <= kHoaMaxTasks) r.evaluations.push_back(hoa_baseline_grouping(cdata, config, *cache).evaluation);

  {
    GroupingSolution all;
    const std::size_t n = cdata.taskset.size();
    all.groups = {TaskGroup::all(n)};
    all.serving.assign(n, 0);
    auto e = evaluate_solution("MTL-all", config.budget, std::move(all), *cache, provenance);
    e.grouping.per_task_score = e.per_task_test_loss;
    e.grouping.total_score = e.total_test_loss;
    r.evaluations.push_back(std::move(e));
  }

  if (cdata.taskset.size() <= kExhaustiveMaxTasks) {
    const auto ex = exhaustive_grouping_search(cdata, config.budget, *cache);
    const auto& best = ex.ranking.front();
    GroupingSolution s;
    s.groups = best.groups;
    s.serving = best.serving;
    s.per_task_score = best.per_task_loss;
    s.total_score = best.total;
    auto e = evaluate_solution("exhaustive-optimal", config.budget, std::move(s), *cache, provenance);
    std::uint64_t steps = 0;
    for (std::uint32_t m = 1; m < (1u << cdata.taskset.size()); ++m) steps += cache->get(TaskGroup(m)).steps;
    finish_costs(e, ex.networks, steps);
    r.exhaustive_optimal_is_planted = matches_partition(served_partition(best.groups, best.serving), r.planted);
    r.evaluations.push_back(std::move(e));
  }

  r.rg_loss = random_grouping_loss(cdata, config, *cache);

  r.config = {{"n_tasks", config.data.n_tasks},
              {"clusters", config.data.clusters},
              {"feature_dim", config.data.feature_dim},
              {"train_samples", config.data.train_samples},
              {"validation_samples", config.data.validation_samples},
              {"test_samples", config.data.test_samples},
              {"noise", config.data.noise},
              {"data_seed", config.data.seed},
              {"width", config.data.width},
              {"eta", config.train.eta},
              {"steps", config.train.steps},
              {"batch_size", config.train.batch_size},
              {"train_seed", config.train.seed},
              {"schedule", config.schedule().describe()},
              {"budget", config.budget},
              {"mode", to_string(config.mode)},
              {"rg_trials", config.rg_trials},
              {"rg_seed", config.rg_seed}};
  if (config.parameter_cap) r.config["latency_param_cap"] = *config.parameter_cap;
  return r;
}

nlohmann::json to_json(const GroupingEvaluation& e) {
  auto groups = nlohmann::json::array();
  for (auto g : e.grouping.groups) groups.push_back(g.members());
  return {{"method", e.method},
          {"budget", e.budget},
          {"groups", groups},
          {"serving", e.grouping.serving},
          {"per_task_score", e.grouping.per_task_score},
          {"total_score", e.grouping.total_score},
          {"solver", {{"nodes_expanded", e.grouping.stats.nodes_expanded}, {"pruned", e.grouping.stats.pruned}}},
          {"per_task_test_loss", e.per_task_test_loss},
          {"total_test_loss", e.total_test_loss},
          {"grouping_runs", e.grouping_runs},
          {"grouping_steps", e.grouping_steps},
          {"training_cost", e.training_cost},
          {"provenance", e.provenance}};
}

GroupingEvaluation evaluation_from_json(const nlohmann::json& j) {
  GroupingEvaluation e;
  e.method = j.at("method").get<std::string>();
  e.budget = j.at("budget").get<std::size_t>();
  for (const auto& g : j.at("groups")) e.grouping.groups.push_back(TaskGroup::of(g.get<std::vector<TaskId>>()));
  e.grouping.serving = j.at("serving").get<std::vector<std::size_t>>();
  e.grouping.per_task_score = j.at("per_task_score").get<std::vector<double>>();
  e.grouping.total_score = j.at("total_score").get<double>();
  e.grouping.stats.nodes_expanded = j.at("solver").at("nodes_expanded").get<std::uint64_t>();
  e.grouping.stats.pruned = j.at("solver").at("pruned").get<std::uint64_t>();
  e.per_task_test_loss = j.at("per_task_test_loss").get<std::vector<double>>();
  e.total_test_loss = j.at("total_test_loss").get<double>();
  e.grouping_runs = j.at("grouping_runs").get<std::size_t>();
  e.grouping_steps = j.at("grouping_steps").get<std::uint64_t>();
  e.training_cost = j.at("training_cost").get<std::uint64_t>();
  e.provenance = j.at("provenance").get<std::string>();
  return e;
}

nlohmann::json to_json(const BenchmarkReport& r) {
  auto evals = nlohmann::json::array();
  for (const auto& e : r.evaluations) evals.push_back(to_json(e));
  return {{"config", r.config},
          {"provenance", r.provenance},
          {"evaluations", evals},
          {"rg_score", expectation_json(r.rg_score)},
          {"rg_loss", expectation_json(r.rg_loss)},
          {"tag_affinity", affinity_json(r.tag_affinity)},
          {"cs_affinity", affinity_json(r.cs_affinity)},
          {"tag_asymmetry", r.tag_asymmetry},
          {"cs_asymmetry", r.cs_asymmetry},
          {"planted", r.planted},
          {"tag_recovers_planted", r.tag_recovers_planted},
          {"exhaustive_optimal_is_planted", r.exhaustive_optimal_is_planted}};
}

ReportFiles render_report(const nlohmann::json& report) {
  std::vector<nlohmann::json> reports;
  if (report.contains("reports"))
    for (const auto& r : report.at("reports")) reports.push_back(r);
  else
    reports.push_back(report);
  if (reports.empty()) throw ValidationError("no reports to render");

  std::optional<std::string> provenance;
  auto check = [&](const std::string& p) {
    if (!provenance) provenance = p;
    else if (*provenance != p)
      throw ValidationError("reports disagree on provenance (" + *provenance + " vs " + p + ")");
  };

  std::ostringstream per_task, plot;
  per_task << "method,budget,task,test_loss\n";
  plot << "method,budget,total_test_loss,grouping_runs,grouping_steps,training_cost\n";
  for (const auto& r : reports) {
    check(r.at("provenance").get<std::string>());
    for (const auto& j : r.at("evaluations")) {
      const auto e = evaluation_from_json(j);
      check(e.provenance);
      for (std::size_t t = 0; t < e.per_task_test_loss.size(); ++t)
        per_task << e.method << ',' << e.budget << ',' << t << ',' << fmt(e.per_task_test_loss[t]) << '\n';
      plot << e.method << ',' << e.budget << ',' << fmt(e.total_test_loss) << ',' << e.grouping_runs << ','
           << e.grouping_steps << ',' << e.training_cost << '\n';
    }
    if (r.contains("rg_loss"))
      plot << "RG," << r.at("config").at("budget").get<std::size_t>() << ','
           << fmt(r.at("rg_loss").at("mean").get<double>()) << ",0,0,0\n";
  }
  ReportFiles out;
  out.report_json = report.dump(2) + "\n";
  out.per_task_csv = per_task.str();
  out.plotdata_csv = plot.str();
  return out;
}

}  // namespace tag::bench
