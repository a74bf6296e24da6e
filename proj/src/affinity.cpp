#include "tag/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

namespace tag {

const char* to_string(DiagonalMode mode) {
  return mode == DiagonalMode::train_excluded ? "train" : "val";
}

DiagonalMode diagonal_mode_from_string(const std::string& s) {
  if (s == "train" || s == "train_excluded") return DiagonalMode::train_excluded;
  if (s == "val" || s == "validation" || s == "validation_included") return DiagonalMode::validation_included;
  throw ValidationError("unknown diagonal mode '" + s + "' (expected train|val)");
}

AffinityMatrix AffinityMatrix::from_dense(std::size_t n, std::span<const double> row_major, DiagonalMode mode) {
  if (row_major.size() != n * n) throw ValidationError("from_dense: expected n*n values");
  AffinityMatrix z(n, mode);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j && mode == DiagonalMode::train_excluded) continue;
      z.set(i, j, row_major[i * n + j]);
    }
  return z;
}

AffinityMatrix average_affinity(std::span<const AffinitySample> samples, const SampleFilter& filter, std::size_t n,
                                DiagonalMode mode) {
  std::vector<AffinitySample> kept;
  kept.reserve(samples.size());
  for (const auto& s : samples) {
    if (!filter.keeps(s.step)) continue;
    if (s.source < 0 || s.target < 0 || static_cast<std::size_t>(s.source) >= n ||
        static_cast<std::size_t>(s.target) >= n)
      throw ValidationError("average_affinity: sample task id out of range");
    if (mode == DiagonalMode::train_excluded && s.diagonal()) continue;
    kept.push_back(s);
  }
  if (kept.empty()) throw ValidationError("average_affinity: no samples survive the filter");

  // Canonical order makes the floating-point sums independent of input order.
  std::sort(kept.begin(), kept.end(), [](const AffinitySample& a, const AffinitySample& b) {
    return std::tie(a.source, a.target, a.step, a.value) < std::tie(b.source, b.target, b.step, b.value);
  });

  AffinityMatrix z(n, mode);
  std::vector<double> sums(n * n, 0.0);
  for (const auto& s : kept) {
    const std::size_t k = static_cast<std::size_t>(s.source) * n + static_cast<std::size_t>(s.target);
    sums[k] += s.value;
    ++z.coverage[k];
  }
  for (std::size_t k = 0; k < n * n; ++k)
    if (z.coverage[k] > 0) z.values[k] = sums[k] / static_cast<double>(z.coverage[k]);
  return z;
}

std::optional<double> group_onto_task_score(TaskGroup group, TaskId target, const AffinityMatrix& z) {
  if (!group.contains(target)) throw ValidationError("group_onto_task_score: target not in group");
  const auto t = static_cast<std::size_t>(target);
  if (group.size() == 1) {
    if (z.mode == DiagonalMode::train_excluded || !z.has(t, t)) return std::nullopt;
    return z.at(t, t);
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (TaskId j : group.members()) {
    if (j == target) continue;
    const auto src = static_cast<std::size_t>(j);
    if (!z.has(src, t)) continue;
    sum += z.at(src, t);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

NormalizedAffinity normalize_onto_target(const AffinityMatrix& z) {
  const std::size_t n = z.n;
  NormalizedAffinity out{MaskedMatrix(n), std::vector<double>(n, 0.0), std::vector<std::uint8_t>(n, 0),
                         std::vector<std::uint8_t>(n, 0)};
  for (std::size_t col = 0; col < n; ++col) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    std::size_t count = 0;
    for (std::size_t row = 0; row < n; ++row) {
      if (!z.has(row, col)) continue;
      lo = std::min(lo, z.at(row, col));
      hi = std::max(hi, z.at(row, col));
      ++count;
    }
    if (count < 2)
      throw ValidationError("normalize_onto_target: target " + std::to_string(col) + " has fewer than two entries");
    out.spread[col] = hi - lo;
    if (!(hi > lo)) {
      out.degenerate[col] = 1;
      for (std::size_t row = 0; row < n; ++row)
        if (z.has(row, col)) out.values.set(row, col, 0.0);
      continue;
    }
    for (std::size_t row = 0; row < n; ++row)
      if (z.has(row, col)) out.values.set(row, col, (z.at(row, col) - lo) / (hi - lo));
  }
  if (n >= 2) {
    for (std::size_t col = 0; col < n; ++col) {
      if (out.degenerate[col]) continue;
      bool weak = true;
      for (std::size_t other = 0; other < n && weak; ++other) {
        if (other == col || out.degenerate[other]) continue;
        weak = out.spread[col] * 4.0 <= out.spread[other];
      }
      out.weak_signal[col] = weak ? 1 : 0;
    }
  }
  return out;
}

double matrix_correlation(const AffinityMatrix& a, const AffinityMatrix& b, bool off_diagonal_only) {
  if (a.n != b.n) throw ValidationError("matrix_correlation: size mismatch");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t j = 0; j < a.n; ++j) {
      if (off_diagonal_only && i == j) continue;
      if (a.has(i, j) && b.has(i, j)) {
        xs.push_back(a.at(i, j));
        ys.push_back(b.at(i, j));
      }
    }
  if (xs.size() < 3) throw ValidationError("matrix_correlation: fewer than three shared entries");
  const auto m = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double dx = xs[k] - mx, dy = ys[k] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw ValidationError("matrix_correlation: degenerate variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double asymmetry(const AffinityMatrix& z) {
  double total = 0.0;
  for (std::size_t i = 0; i < z.n; ++i)
    for (std::size_t j = i + 1; j < z.n; ++j)
      if (z.has(i, j) && z.has(j, i)) total += std::abs(z.at(i, j) - z.at(j, i));
  return total;
}

std::string affinity_to_csv(const AffinityMatrix& z) {
  std::ostringstream os;
  os.precision(17);
  os << "source\\target";
  for (std::size_t j = 0; j < z.n; ++j) os << ',' << j;
  os << '\n';
  for (std::size_t i = 0; i < z.n; ++i) {
    os << i;
    for (std::size_t j = 0; j < z.n; ++j) {
      os << ',';
      if (z.has(i, j)) os << z.at(i, j);
    }
    os << '\n';
  }
  return os.str();
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("affinity csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

}  // namespace

AffinityMatrix affinity_from_csv(const std::string& text, DiagonalMode mode) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("affinity csv: empty input");
  const auto header = split_fields(line);
  if (header.empty() || header[0] != "source\\target") throw ValidationError("affinity csv: bad header");
  const std::size_t n = header.size() - 1;
  for (std::size_t j = 0; j < n; ++j)
    if (header[j + 1] != std::to_string(j)) throw ValidationError("affinity csv: header ids must be 0..n-1");
  AffinityMatrix z(n, mode);
  std::size_t row = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (f.size() != n + 1) throw ValidationError("affinity csv line " + std::to_string(line_no) + ": wrong field count");
    if (f[0] != std::to_string(row)) throw ValidationError("affinity csv line " + std::to_string(line_no) + ": rows out of order");
    for (std::size_t j = 0; j < n; ++j) {
      if (f[j + 1].empty()) continue;
      if (row == j && mode == DiagonalMode::train_excluded) continue;
      const double v = parse_number(f[j + 1], line_no);
      if (!std::isfinite(v) || v > 1.0)
        throw ValidationError("affinity csv line " + std::to_string(line_no) + ": affinity must be finite and <= 1");
      z.set(row, j, v);
    }
    ++row;
  }
  if (row != n) throw ValidationError("affinity csv: expected " + std::to_string(n) + " rows");
  return z;
}

}  // namespace tag
