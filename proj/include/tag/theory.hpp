#pragma once

// Exact checks of the convex-setting guarantees on quadratic losses.
//
// Lemma: if L_a is alpha-strongly convex and beta-smooth and the step with g_b
// lowers L_a at least as much as the step with g_c, then
//     g_a.g_c - (beta eta / 2)|g_c|^2 + (alpha eta / 2)|g_b|^2 <= g_a.g_b.
//
// Proposition: with eta <= 1/beta, equal gradient norms, the same premise and
// cos(g_a, g_c) <= threshold(alpha, beta, eta), the combined step g_a + g_b
// lowers L_a at least as much as g_a + g_c.

#include <cstdint>
#include <string>
#include <vector>

#include "tag/core.hpp"

namespace tag::theory {

/// How the counterexample's auxiliary directions are scaled.
enum class GradientConvention {
  unit,           // g_a, g_b, g_c all unit length
  match_ga_norm,  // g_a is the true gradient; g_b, g_c rescaled to its norm
};

/// Readings of the cosine threshold.
enum class ThresholdForm {
  proof,      // (eta/4) * (beta/alpha) / (beta/alpha - 1) - 1
  statement,  // (eta/4) * alpha*beta / (beta - alpha) - 1
  no_offset,  // (eta/4) * (beta/alpha) / (beta/alpha - 1) (no -1 offset)
};

const char* to_string(ThresholdForm form);
ThresholdForm threshold_form_from_string(const std::string& s);

struct TheoryScenario {
  double alpha = 1.0;
  double beta = 1.0;
  double eta = 0.1;
  ParamVector theta;
  ParamVector g_a;
  ParamVector g_b;
  ParamVector g_c;
  QuadraticTask loss;
};

struct LemmaCheck {
  bool premise_holds = false;     // Z(b->a) >= Z(c->a)
  bool inequality_holds = false;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;             // rhs - lhs
  double z_b = 0.0;
  double z_c = 0.0;
};

LemmaCheck check_lemma(const TheoryScenario& s);

/// Throws ValidationError when alpha >= beta (the threshold is singular at alpha = beta).
double cos_threshold(double alpha, double beta, double eta, ThresholdForm form = ThresholdForm::proof);

struct PropositionCheck {
  bool step_size_ok = false;
  bool equal_norms = false;
  bool premise = false;
  bool cosine_ok = false;
  bool hypotheses_hold = false;
  bool conclusion_holds = false;
  double cos_ac = 0.0;
  double threshold = 0.0;
  double loss_ab = 0.0;  // L_a(theta - eta (g_a + g_b))
  double loss_ac = 0.0;  // L_a(theta - eta (g_a + g_c))
};

PropositionCheck check_proposition(const TheoryScenario& s, ThresholdForm form = ThresholdForm::proof);

/// The two-dimensional counterexample: L(x) = (x1^2 + 10 x2^2)/2 at (-2, -1),
/// eta = 0.09, g_b along (8, -2), g_c along (-12, 2) or the alternate (-0.2, 15).
TheoryScenario counterexample_scenario(bool alternate_gc, GradientConvention convention = GradientConvention::unit);

struct CounterexampleRow {
  std::string label;
  double value = 0.0;
  double reference = 0.0;  // two-decimal reference value
};

struct CounterexampleTable {
  std::vector<CounterexampleRow> rows;  // initial, then the six step losses
  bool single_step_order = false;       // L(theta - eta g_b) < L(theta - eta g_c)
  bool combined_order_inverted = false; // L(theta - eta (g_a+g_c)) < L(theta - eta (g_a+g_b))
  bool alternate_single_order = false;  // g_b still beats the alternate g_c
  bool alternate_combined_order = false;  // and now also in combination
  double max_abs_deviation = 0.0;       // over the six step losses

  const CounterexampleRow& row(const std::string& label) const;
};

CounterexampleTable run_counterexample(GradientConvention convention = GradientConvention::unit);

struct EtaPolicy {
  enum class Kind { fixed, uniform_fraction_of_inverse_beta };
  Kind kind = Kind::uniform_fraction_of_inverse_beta;
  double value = 1.0;  // fixed eta, or upper fraction of 1/beta

  static EtaPolicy fixed(double eta) { return {Kind::fixed, eta}; }
  static EtaPolicy up_to_inverse_beta(double fraction = 1.0) { return {Kind::uniform_fraction_of_inverse_beta, fraction}; }
};

struct ScenarioOptions {
  std::size_t dim = 2;
  bool enforce_proposition = false;
  ThresholdForm form = ThresholdForm::proof;
  std::size_t max_attempts = 10'000;
};

/// Random rotated quadratic with spectrum [alpha, beta]; g_a is the true
/// gradient at a random point; g_b and g_c have the same norm as g_a. With
/// enforce_proposition, g_c is built with cos(g_a, g_c) drawn uniformly below the
/// threshold and g_b is rejection-sampled until the premise holds.
TheoryScenario random_scenario(double alpha, double beta, EtaPolicy eta_policy, std::uint64_t seed,
                               const ScenarioOptions& options = {});

struct HarnessResult {
  std::size_t trials = 0;
  std::size_t checked = 0;  // trials whose hypotheses/premise held
  std::size_t violations = 0;
  double min_slack = 0.0;   // lemma: rhs - lhs; proposition: loss_ac - loss_ab
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> violating_seeds;  // first few per-trial seeds
};

/// Per-trial parameters: alpha ~ U[0.1, 1], beta/alpha log-uniform in
/// [1.5, 100], eta ~ U(0, 1/beta], dim in {2, 3, 4}. The lemma harness
/// relabels b and c when needed so every trial satisfies the premise.
HarnessResult lemma_harness(std::size_t trials, std::uint64_t seed);
HarnessResult proposition_harness(std::size_t trials, std::uint64_t seed, ThresholdForm form = ThresholdForm::proof);

/// Per-trial seed used by the harnesses (exposed for reproducing a trial).
std::uint64_t trial_seed(std::uint64_t harness_seed, std::size_t trial);

}  // namespace tag::theory
