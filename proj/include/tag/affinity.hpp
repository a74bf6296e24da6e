#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tag/group.hpp"
#include "tag/probe.hpp"

namespace tag {

enum class DiagonalMode { train_excluded, validation_included };

const char* to_string(DiagonalMode mode);
DiagonalMode diagonal_mode_from_string(const std::string& s);

/// Training-level affinity: per-entry mean of step affinities. Entries with
/// zero coverage are missing. Row = source, column = target.
struct AffinityMatrix {
  std::size_t n = 0;
  std::vector<double> values;
  std::vector<std::size_t> coverage;
  DiagonalMode mode = DiagonalMode::train_excluded;

  AffinityMatrix() = default;
  AffinityMatrix(std::size_t size, DiagonalMode m) : n(size), values(size * size, 0.0), coverage(size * size, 0), mode(m) {}

  bool has(std::size_t src, std::size_t dst) const { return coverage[src * n + dst] > 0; }
  double at(std::size_t src, std::size_t dst) const { return values[src * n + dst]; }
  void set(std::size_t src, std::size_t dst, double v, std::size_t cov = 1) {
    values[src * n + dst] = v;
    coverage[src * n + dst] = cov;
  }

  /// Builds from a dense row-major matrix; in train mode the diagonal is dropped.
  static AffinityMatrix from_dense(std::size_t n, std::span<const double> row_major, DiagonalMode mode);

  friend bool operator==(const AffinityMatrix&, const AffinityMatrix&) = default;
};

/// Which recorded steps survive averaging. An absent schedule keeps everything.
struct SampleFilter {
  std::optional<ProbeSchedule> schedule;
  std::uint64_t total_steps = 0;

  bool keeps(std::uint64_t step) const { return !schedule || schedule->selects(step, total_steps); }
};

/// Arithmetic mean per (source, target) over surviving samples. The result
/// does not depend on sample order. Throws if nothing survives the filter.
AffinityMatrix average_affinity(std::span<const AffinitySample> samples, const SampleFilter& filter, std::size_t n,
                                DiagonalMode mode);

/// Mean of Z(j -> target) over present entries j in group \ {target}. A
/// singleton uses the diagonal, which is missing in train mode.
std::optional<double> group_onto_task_score(TaskGroup group, TaskId target, const AffinityMatrix& z);

struct NormalizedAffinity {
  MaskedMatrix values;
  std::vector<double> spread;             // per target: max - min before scaling
  std::vector<std::uint8_t> degenerate;   // constant column
  std::vector<std::uint8_t> weak_signal;  // spread at least 4x below every other target's
};

/// Per-target-column min-max scaling to [0, 1].
NormalizedAffinity normalize_onto_target(const AffinityMatrix& z);

/// Pearson r over entries present in both matrices.
double matrix_correlation(const AffinityMatrix& a, const AffinityMatrix& b, bool off_diagonal_only = false);

/// Sum over i < j of |Z(i->j) - Z(j->i)| for pairs present both ways.
double asymmetry(const AffinityMatrix& z);

/// Header `source\target,0,...,n-1`; one row per source; missing entries empty.
std::string affinity_to_csv(const AffinityMatrix& z);
AffinityMatrix affinity_from_csv(const std::string& text, DiagonalMode mode);

}  // namespace tag
