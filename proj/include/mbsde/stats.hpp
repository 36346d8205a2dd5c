#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace mbsde {

/// Mergeable mean / second-moment / extremum accumulator (Welford, Chan merge).
struct RunningStats {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  double max_abs = 0.0;

  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
    max_abs = std::max(max_abs, std::abs(x));
  }

  void merge(const RunningStats& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double n1 = static_cast<double>(count);
    const double n2 = static_cast<double>(o.count);
    const double delta = o.mean - mean;
    const double n = n1 + n2;
    mean += delta * n2 / n;
    m2 += o.m2 + delta * delta * n1 * n2 / n;
    count += o.count;
    max_abs = std::max(max_abs, o.max_abs);
  }

  [[nodiscard]] double variance() const {
    return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0;
  }
  [[nodiscard]] double std_error() const {
    return count > 1 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0;
  }
  [[nodiscard]] double rms() const { return std::sqrt(mean * mean + (count > 0 ? m2 / count : 0.0)); }
};

inline RunningStats summarize(std::span<const double> xs) {
  RunningStats s;
  for (double x : xs) s.add(x);
  return s;
}

/// Kish effective sample size of nonnegative weights given in log domain.
inline double effective_sample_size(std::span<const double> log_w) {
  if (log_w.empty()) return 0.0;
  double top = -std::numeric_limits<double>::infinity();
  for (double l : log_w) top = std::max(top, l);
  double s1 = 0.0, s2 = 0.0;
  for (double l : log_w) {
    const double w = std::exp(l - top);
    s1 += w;
    s2 += w * w;
  }
  return s2 > 0.0 ? s1 * s1 / s2 : 0.0;
}

}  // namespace mbsde
