#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mbsde/rng.hpp"

namespace mbsde {

/// Ordered time nodes 0 = t_0 < t_1 < ... < t_N = horizon, N >= 1.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> nodes);

  [[nodiscard]] double horizon() const { return nodes_.back(); }
  [[nodiscard]] std::size_t n_steps() const { return nodes_.size() - 1; }
  [[nodiscard]] std::size_t n_nodes() const { return nodes_.size(); }
  [[nodiscard]] double operator[](std::size_t k) const { return nodes_[k]; }
  [[nodiscard]] double dt(std::size_t k) const { return nodes_[k + 1] - nodes_[k]; }
  [[nodiscard]] std::span<const double> nodes() const { return nodes_; }
  /// Index of the first node >= t (n_nodes() if t > horizon).
  [[nodiscard]] std::size_t first_node_at_or_after(double t) const;

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  std::vector<double> nodes_;
};

TimeGrid build_grid(double horizon, std::size_t n_steps);

/// Node 0 followed by n_geometric geometrically spaced nodes from t_min to
/// horizon. Resolves integrands that blow up at the origin.
TimeGrid build_geometric_grid(double horizon, double t_min, std::size_t n_geometric);

/// Seeded Brownian paths on a grid, row-major per path.
class BrownianEnsemble {
 public:
  BrownianEnsemble(TimeGrid grid, std::size_t n_paths, std::uint64_t seed,
                   std::vector<double> increments);

  [[nodiscard]] const TimeGrid& grid() const { return grid_; }
  [[nodiscard]] std::size_t n_paths() const { return n_paths_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::span<const double> increments(std::size_t path) const {
    return {increments_.data() + path * grid_.n_steps(), grid_.n_steps()};
  }
  [[nodiscard]] std::span<const double> values(std::size_t path) const {
    return {values_.data() + path * grid_.n_nodes(), grid_.n_nodes()};
  }
  [[nodiscard]] double value(std::size_t path, std::size_t k) const {
    return values_[path * grid_.n_nodes() + k];
  }

 private:
  TimeGrid grid_;
  std::size_t n_paths_;
  std::uint64_t seed_;
  std::vector<double> increments_;
  std::vector<double> values_;
};

/// Path p draws increment k as sqrt(dt_k) * N_k from its own Philox substream.
BrownianEnsemble simulate_ensemble(const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                   std::size_t workers = 0);

/// The line W = slope * t + intercept; a path hits it from above.
struct AffineBarrier {
  double slope = 1.0;
  double intercept = -1.0;

  [[nodiscard]] double level(double t) const { return slope * t + intercept; }
  /// tau_b = inf{t : W_t <= b t - 1}
  static AffineBarrier tau_b(double b) { return {b, -1.0}; }
  /// rho_c = inf{t : W_t <= t - c}
  static AffineBarrier rho_c(double c) { return {1.0, -c}; }
};

struct HittingRecord {
  AffineBarrier barrier;
  double tau = std::numeric_limits<double>::quiet_NaN();  // NaN when truncated
  std::optional<std::size_t> crossing_index;              // interval [t_k, t_{k+1}] holding tau
  bool bridge_corrected = false;                          // fired by the bridge test

  [[nodiscard]] bool truncated() const { return std::isnan(tau); }
};

struct IntervalCrossing {
  bool hit = false;
  double tau = 0.0;
  bool by_bridge = false;
};

/// Crossing of `barrier` by the segment (t0, w0) -> (t1, w1). A grid crossing
/// is placed by linear interpolation. Otherwise, with bridge correction, the
/// Brownian bridge crosses with probability exp(-2 d0 d1 / dt); a firing
/// crossing is placed at the interval midpoint. `uniform()` is only called
/// when that probability is not negligible.
template <class Uniform>
IntervalCrossing cross_interval(const AffineBarrier& barrier, double t0, double w0, double t1,
                                double w1, bool bridge, Uniform&& uniform) {
  const double d0 = w0 - barrier.level(t0);
  if (d0 <= 0.0) return {true, t0, false};
  const double d1 = w1 - barrier.level(t1);
  const double dt = t1 - t0;
  if (d1 <= 0.0) {
    const double tau = t0 + dt * (d0 / (d0 - d1));
    return {true, tau < t1 ? tau : t1, false};
  }
  if (bridge && dt > 0.0) {
    const double expo = -2.0 * d0 * d1 / dt;
    if (expo > -745.0 && uniform() < std::exp(expo)) return {true, t0 + 0.5 * dt, true};
  }
  return {false, 0.0, false};
}

/// One piece of a grid interval lying inside a single barrier segment.
struct SubStep {
  double t0, w0, t1, w1;
  double base_increment;  // increment of the sampling-measure Brownian motion
  std::size_t segment;
};

/// Walks a path through a sequence of barriers: segment i is active until
/// barrier i is hit, then segment i+1 restarts from the hitting point on the
/// remainder of the same interval. Each segment may carry a proposal drift,
/// so the same walker serves base-measure and tilted simulation.
class SegmentWalker {
 public:
  SegmentWalker(std::vector<AffineBarrier> barriers, std::vector<double> drifts, bool bridge);

  /// Advances over grid interval k ending at t1 with base increment d_base.
  template <class Uniform, class Emit>
  void step(std::size_t k, double t1, double d_base, Uniform&& uniform, Emit&& emit) {
    double t0 = t_;
    double w0 = w_;
    double rest = d_base;
    while (!done()) {
      const std::size_t seg = segment_;
      const double h = drifts_[seg];
      const double w1 = w0 + rest + h * (t1 - t0);
      const auto c = cross_interval(barriers_[seg], t0, w0, t1, w1, bridge_,
                                    [&] { return uniform(k, static_cast<std::uint32_t>(seg)); });
      if (!c.hit) {
        emit(SubStep{t0, w0, t1, w1, rest, seg});
        t_ = t1;
        w_ = w1;
        return;
      }
      const double w_tau = barriers_[seg].level(c.tau);
      const double d1 = (w_tau - w0) - h * (c.tau - t0);
      if (c.tau > t0) emit(SubStep{t0, w0, c.tau, w_tau, d1, seg});
      hits_[seg] = HittingRecord{barriers_[seg], c.tau, k, c.by_bridge};
      rest -= d1;
      t0 = c.tau;
      w0 = w_tau;
      t_ = t0;
      w_ = w0;
      ++segment_;
    }
  }

  [[nodiscard]] bool done() const { return segment_ >= barriers_.size(); }
  [[nodiscard]] std::size_t segment() const { return segment_; }
  [[nodiscard]] double t() const { return t_; }
  [[nodiscard]] double w() const { return w_; }
  [[nodiscard]] const std::vector<HittingRecord>& hits() const { return hits_; }
  [[nodiscard]] const std::vector<AffineBarrier>& barriers() const { return barriers_; }

 private:
  std::vector<AffineBarrier> barriers_;
  std::vector<double> drifts_;
  bool bridge_;
  std::size_t segment_ = 0;
  double t_ = 0.0;
  double w_ = 0.0;
  std::vector<HittingRecord> hits_;
};

/// First hit of `barrier` by a stored path. `stream` supplies bridge uniforms.
HittingRecord detect_hitting(const TimeGrid& grid, std::span<const double> path,
                             const AffineBarrier& barrier, bool bridge_correction,
                             const PathStream& stream);

HittingRecord detect_hitting(const BrownianEnsemble& ensemble, std::size_t path,
                             const AffineBarrier& barrier, bool bridge_correction);

/// Hitting times of n_paths streamed paths; each path is simulated only until
/// it hits, so long horizons cost no memory. Draws coincide with
/// simulate_ensemble(grid, n_paths, seed).
std::vector<HittingRecord> simulate_hitting_times(const AffineBarrier& barrier, const TimeGrid& grid,
                                                  std::size_t n_paths, std::uint64_t seed,
                                                  bool bridge_correction, std::size_t workers = 0);

/// Default truncation horizon for tau_b simulations.
inline double default_hitting_horizon(double b) { return 30.0 / b; }

// Deterministic time change [0, inf] -> [0, 1].
inline double rho(double t) { return std::isinf(t) ? 1.0 : t / (1.0 + t); }
double rho_inverse(double s);  // throws for s outside [0, 1)
inline double time_change_rate(double s) { return 1.0 / (1.0 - s); }

/// Grid u_k = rho^{-1}(s_k), k < N, for the uniform grid s on [0,1] with N
/// steps. The last node s_N = 1 maps to infinity and is dropped.
TimeGrid inverse_time_change_grid(std::size_t n_steps);

/// Brownian motion on inverse_time_change_grid(N) built from a Brownian motion
/// W~ on the uniform [0,1] grid: dW_{u_k} = h(s_k) dW~_{s_k}.
BrownianEnsemble time_changed_ensemble(const BrownianEnsemble& tilde);

/// CSV rows "path_id,t,W". A ".gz" suffix writes gzip.
void write_paths_csv(const BrownianEnsemble& ensemble, const std::string& file,
                     std::size_t max_paths = std::numeric_limits<std::size_t>::max());

}  // namespace mbsde
