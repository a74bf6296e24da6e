#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "tag/core.hpp"

namespace tag {

/// A set of task ids in [0, 32) stored as a bitmask. Ordering is by mask value,
/// which is the canonical candidate order used throughout selection.
class TaskGroup {
 public:
  constexpr TaskGroup() = default;
  constexpr explicit TaskGroup(std::uint32_t mask) : mask_(mask) {}
  static TaskGroup of(std::initializer_list<TaskId> ids) {
    std::uint32_t m = 0;
    for (TaskId t : ids) m |= 1u << t;
    return TaskGroup(m);
  }
  static TaskGroup of(const std::vector<TaskId>& ids) {
    std::uint32_t m = 0;
    for (TaskId t : ids) m |= 1u << t;
    return TaskGroup(m);
  }
  static constexpr TaskGroup all(std::size_t n) { return TaskGroup(n >= 32 ? ~0u : ((1u << n) - 1u)); }

  constexpr std::uint32_t mask() const noexcept { return mask_; }
  constexpr bool contains(TaskId t) const noexcept { return (mask_ >> t) & 1u; }
  constexpr std::size_t size() const noexcept { return static_cast<std::size_t>(std::popcount(mask_)); }
  constexpr bool empty() const noexcept { return mask_ == 0; }

  std::vector<TaskId> members() const {
    std::vector<TaskId> out;
    for (std::uint32_t m = mask_; m; m &= m - 1) out.push_back(std::countr_zero(m));
    return out;
  }
  std::string to_string() const {
    std::string s = "{";
    bool first = true;
    for (TaskId t : members()) {
      if (!first) s += ",";
      s += std::to_string(t);
      first = false;
    }
    return s + "}";
  }

  friend constexpr auto operator<=>(TaskGroup, TaskGroup) = default;
  friend constexpr TaskGroup operator|(TaskGroup a, TaskGroup b) { return TaskGroup(a.mask_ | b.mask_); }

 private:
  std::uint32_t mask_ = 0;
};

/// Dense n x n matrix with a presence flag per entry. Row = source, column = target.
struct MaskedMatrix {
  std::size_t n = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> present;

  MaskedMatrix() = default;
  explicit MaskedMatrix(std::size_t size) : n(size), values(size * size, 0.0), present(size * size, 0) {}

  bool has(std::size_t src, std::size_t dst) const { return present[src * n + dst] != 0; }
  double at(std::size_t src, std::size_t dst) const { return values[src * n + dst]; }
  void set(std::size_t src, std::size_t dst, double v) {
    values[src * n + dst] = v;
    present[src * n + dst] = 1;
  }
  void clear(std::size_t src, std::size_t dst) {
    values[src * n + dst] = 0.0;
    present[src * n + dst] = 0;
  }
};

}  // namespace tag
