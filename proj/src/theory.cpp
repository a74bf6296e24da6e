#include "tag/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "tag/rng.hpp"

namespace tag::theory {

namespace {

ParamVector axpy(const ParamVector& x, double a, const ParamVector& y) {
  ParamVector out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * y[i];
  return out;
}

ParamVector add(const ParamVector& x, const ParamVector& y) { return axpy(x, 1.0, y); }

ParamVector scaled(const ParamVector& x, double a) {
  ParamVector out = x;
  for (auto& v : out.span()) v *= a;
  return out;
}

ParamVector unit(const ParamVector& x) { return scaled(x, 1.0 / x.norm()); }

double affinity(const QuadraticTask& q, const ParamVector& theta, const ParamVector& g, double eta) {
  return 1.0 - q.loss(axpy(theta, -eta, g)) / q.loss(theta);
}

ParamVector random_direction(Rng& rng, std::size_t dim) {
  ParamVector v(dim);
  do {
    for (auto& x : v.span()) x = rng.normal();
  } while (!(v.norm() > 1e-12));
  return unit(v);
}

}  // namespace

const char* to_string(ThresholdForm form) {
  switch (form) {
    case ThresholdForm::proof: return "proof";
    case ThresholdForm::statement: return "statement";
    case ThresholdForm::no_offset: return "no_offset";
  }
  return "?";
}

ThresholdForm threshold_form_from_string(const std::string& s) {
  if (s == "proof") return ThresholdForm::proof;
  if (s == "statement") return ThresholdForm::statement;
  if (s == "no_offset" || s == "no-offset") return ThresholdForm::no_offset;
  throw ValidationError("unknown threshold form '" + s + "' (expected proof|statement)");
}

LemmaCheck check_lemma(const TheoryScenario& s) {
  LemmaCheck c;
  c.z_b = affinity(s.loss, s.theta, s.g_b, s.eta);
  c.z_c = affinity(s.loss, s.theta, s.g_c, s.eta);
  c.premise_holds = c.z_b >= c.z_c;
  const double gc2 = dot(s.g_c, s.g_c);
  const double gb2 = dot(s.g_b, s.g_b);
  c.lhs = dot(s.g_a, s.g_c) - 0.5 * s.beta * s.eta * gc2 + 0.5 * s.alpha * s.eta * gb2;
  c.rhs = dot(s.g_a, s.g_b);
  c.slack = c.rhs - c.lhs;
  c.inequality_holds = c.lhs <= c.rhs;
  return c;
}

double cos_threshold(double alpha, double beta, double eta, ThresholdForm form) {
  if (!(alpha > 0.0) || !(beta > alpha))
    throw ValidationError("cos_threshold: need 0 < alpha < beta (threshold is singular at alpha = beta)");
  if (!(eta > 0.0)) throw ValidationError("cos_threshold: eta must be > 0");
  const double kappa = beta / alpha;
  switch (form) {
    case ThresholdForm::proof: return eta / 4.0 * kappa / (kappa - 1.0) - 1.0;
    case ThresholdForm::statement: return eta / 4.0 * alpha * beta / (beta - alpha) - 1.0;
    case ThresholdForm::no_offset: return eta / 4.0 * kappa / (kappa - 1.0);
  }
  return 0.0;
}

PropositionCheck check_proposition(const TheoryScenario& s, ThresholdForm form) {
  PropositionCheck c;
  c.step_size_ok = s.eta <= 1.0 / s.beta;
  const double na = s.g_a.norm(), nb = s.g_b.norm(), nc = s.g_c.norm();
  const double scale = std::max({na, nb, nc});
  c.equal_norms = std::abs(na - nb) <= 1e-9 * scale && std::abs(na - nc) <= 1e-9 * scale;
  c.premise = affinity(s.loss, s.theta, s.g_b, s.eta) >= affinity(s.loss, s.theta, s.g_c, s.eta);
  c.cos_ac = dot(s.g_a, s.g_c) / (na * nc);
  c.threshold = cos_threshold(s.alpha, s.beta, s.eta, form);
  c.cosine_ok = c.cos_ac <= c.threshold;
  c.hypotheses_hold = c.step_size_ok && c.equal_norms && c.premise && c.cosine_ok;
  c.loss_ab = s.loss.loss(axpy(s.theta, -s.eta, add(s.g_a, s.g_b)));
  c.loss_ac = s.loss.loss(axpy(s.theta, -s.eta, add(s.g_a, s.g_c)));
  c.conclusion_holds = c.loss_ab <= c.loss_ac;
  return c;
}

TheoryScenario counterexample_scenario(bool alternate_gc, GradientConvention convention) {
  TheoryScenario s;
  s.alpha = 1.0;
  s.beta = 10.0;
  s.eta = 0.09;
  s.theta = ParamVector{-2.0, -1.0};
  s.loss = build_quadratic_task(1.0, 10.0, 2, ParamVector{0.0, 0.0});
  const ParamVector grad = s.loss.gradient(s.theta);
  const double norm = convention == GradientConvention::unit ? 1.0 : grad.norm();
  s.g_a = scaled(unit(grad), norm);
  s.g_b = scaled(unit(ParamVector{8.0, -2.0}), norm);
  s.g_c = scaled(unit(alternate_gc ? ParamVector{-0.2, 15.0} : ParamVector{-12.0, 2.0}), norm);
  return s;
}

const CounterexampleRow& CounterexampleTable::row(const std::string& label) const {
  for (const auto& r : rows)
    if (r.label == label) return r;
  throw ValidationError("counterexample table has no row '" + label + "'");
}

CounterexampleTable run_counterexample(GradientConvention convention) {
  const TheoryScenario s = counterexample_scenario(false, convention);
  const TheoryScenario alt = counterexample_scenario(true, convention);
  const auto& q = s.loss;
  const double initial = q.loss(s.theta);
  const double single_b = q.loss(axpy(s.theta, -s.eta, s.g_b));
  const double single_c = q.loss(axpy(s.theta, -s.eta, s.g_c));
  const double combined_ab = q.loss(axpy(s.theta, -s.eta, add(s.g_a, s.g_b)));
  const double combined_ac = q.loss(axpy(s.theta, -s.eta, add(s.g_a, s.g_c)));
  const double alt_single_c = q.loss(axpy(alt.theta, -alt.eta, alt.g_c));
  const double alt_combined_ac = q.loss(axpy(alt.theta, -alt.eta, add(alt.g_a, alt.g_c)));

  CounterexampleTable t;
  t.rows = {
      {"initial", initial, 7.00},
      {"single_b", single_b, 6.96},
      {"single_c", single_c, 6.98},
      {"combined_ab", combined_ab, 6.09},
      {"combined_ac", combined_ac, 6.07},
      {"alt_single_c", alt_single_c, 7.96},
      {"alt_combined_ac", alt_combined_ac, 6.98},
  };
  t.single_step_order = single_b < single_c;
  t.combined_order_inverted = combined_ac < combined_ab;
  t.alternate_single_order = single_b < alt_single_c;
  t.alternate_combined_order = combined_ab < alt_combined_ac;
  for (std::size_t i = 1; i < t.rows.size(); ++i)
    t.max_abs_deviation = std::max(t.max_abs_deviation, std::abs(t.rows[i].value - t.rows[i].reference));
  return t;
}

TheoryScenario random_scenario(double alpha, double beta, EtaPolicy eta_policy, std::uint64_t seed,
                               const ScenarioOptions& options) {
  if (!(alpha > 0.0) || !(beta > alpha)) throw ValidationError("random_scenario: need 0 < alpha < beta");
  if (options.dim < 2) throw ValidationError("random_scenario: dim must be >= 2");
  Rng rng(derive_seed(seed, {0x5CE9ULL}));

  TheoryScenario s;
  s.alpha = alpha;
  s.beta = beta;
  if (eta_policy.kind == EtaPolicy::Kind::fixed) {
    s.eta = eta_policy.value;
  } else {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    s.eta = (1.0 - u) * eta_policy.value * (1.0 / beta);  // (0, value/beta]
    if (!(s.eta > 0.0)) s.eta = eta_policy.value / beta;
  }
  if (!(s.eta > 0.0)) throw ValidationError("random_scenario: eta must be > 0");

  const std::size_t d = options.dim;
  ParamVector opt(d);
  for (auto& v : opt.span()) v = rng.normal();
  s.loss = build_quadratic_task(alpha, beta, d, opt, rng.next());
  s.theta = opt;
  for (auto& v : s.theta.span()) v += rng.normal();
  s.g_a = s.loss.gradient(s.theta);
  const double norm = s.g_a.norm();
  if (!(norm > 0.0)) throw RuntimeFailure("random_scenario: degenerate point at the optimum");

  if (!options.enforce_proposition) {
    s.g_b = scaled(random_direction(rng, d), norm);
    s.g_c = scaled(random_direction(rng, d), norm);
    return s;
  }

  // g_c = |g_a| (c * a_hat + sqrt(1 - c^2) * p) with p a unit vector orthogonal to a_hat.
  const double threshold = std::min(cos_threshold(alpha, beta, s.eta, options.form), 1.0);
  const ParamVector a_hat = unit(s.g_a);
  bool built = false;
  for (std::size_t attempt = 0; attempt < options.max_attempts && !built; ++attempt) {
    const double cosine = -1.0 + (threshold + 1.0) * rng.uniform();
    ParamVector p;
    do {
      p = random_direction(rng, d);
      p = axpy(p, -dot(p, a_hat), a_hat);
    } while (!(p.norm() > 1e-9));
    p = unit(p);
    const ParamVector dir = add(scaled(a_hat, cosine), scaled(p, std::sqrt(std::max(0.0, 1.0 - cosine * cosine))));
    s.g_c = scaled(unit(dir), norm);
    // Rounding can push the realised cosine just past the threshold; redraw then.
    built = dot(s.g_a, s.g_c) / (norm * s.g_c.norm()) <= threshold;
  }
  if (!built) throw RuntimeFailure("random_scenario: could not build g_c below the cosine threshold");

  const double z_c = affinity(s.loss, s.theta, s.g_c, s.eta);
  for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
    ParamVector g_b = scaled(random_direction(rng, d), norm);
    if (affinity(s.loss, s.theta, g_b, s.eta) >= z_c) {
      s.g_b = std::move(g_b);
      return s;
    }
  }
  throw RuntimeFailure("random_scenario: no g_b satisfying the premise within " +
                       std::to_string(options.max_attempts) + " attempts");
}

std::uint64_t trial_seed(std::uint64_t harness_seed, std::size_t trial) {
  return derive_seed(harness_seed, {0x7121A1ULL, static_cast<std::uint64_t>(trial)});
}

namespace {

struct TrialParams {
  double alpha;
  double beta;
  std::size_t dim;
};

TrialParams draw_params(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x9A2A11ULL}));
  const double alpha = rng.uniform(0.1, 1.0);
  const double ratio = std::exp(rng.uniform(std::log(1.5), std::log(100.0)));
  const std::size_t dim = 2 + static_cast<std::size_t>(rng.below(3));
  return {alpha, alpha * ratio, dim};
}

}  // namespace

HarnessResult lemma_harness(std::size_t trials, std::uint64_t seed) {
  HarnessResult r;
  r.trials = trials;
  r.seed = seed;
  r.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < trials; ++k) {
    const std::uint64_t ts = trial_seed(seed, k);
    const auto p = draw_params(ts);
    ScenarioOptions opt;
    opt.dim = p.dim;
    TheoryScenario s = random_scenario(p.alpha, p.beta, EtaPolicy::up_to_inverse_beta(), ts, opt);
    auto c = check_lemma(s);
    if (!c.premise_holds) {
      std::swap(s.g_b, s.g_c);
      c = check_lemma(s);
    }
    if (!c.premise_holds) continue;
    ++r.checked;
    r.min_slack = std::min(r.min_slack, c.slack);
    if (!c.inequality_holds) {
      ++r.violations;
      if (r.violating_seeds.size() < 16) r.violating_seeds.push_back(ts);
    }
  }
  return r;
}

HarnessResult proposition_harness(std::size_t trials, std::uint64_t seed, ThresholdForm form) {
  HarnessResult r;
  r.trials = trials;
  r.seed = seed;
  r.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < trials; ++k) {
    const std::uint64_t ts = trial_seed(seed, k);
    const auto p = draw_params(ts);
    ScenarioOptions opt;
    opt.dim = p.dim;
    opt.enforce_proposition = true;
    opt.form = form;
    // A draw whose g_c is already near-optimal leaves no room for a better
    // g_b; redraw the directions a few times before giving the trial up.
    std::optional<TheoryScenario> s;
    for (std::uint64_t attempt = 0; attempt < 8 && !s; ++attempt) {
      try {
        s = random_scenario(p.alpha, p.beta, EtaPolicy::up_to_inverse_beta(), attempt ? derive_seed(ts, {attempt}) : ts, opt);
      } catch (const RuntimeFailure&) {
      }
    }
    if (!s) continue;
    const auto c = check_proposition(*s, form);
    if (!c.hypotheses_hold) continue;
    ++r.checked;
    r.min_slack = std::min(r.min_slack, c.loss_ac - c.loss_ab);
    if (!c.conclusion_holds) {
      ++r.violations;
      if (r.violating_seeds.size() < 16) r.violating_seeds.push_back(ts);
    }
  }
  return r;
}

}  // namespace tag::theory
