#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mbsde/paths.hpp"

namespace mbsde {

/// One path of a candidate solution. Point i carries (t_i, W_{t_i}, Y_{t_i})
/// and the integrand Z acting on [t_i, t_{i+1}]. Grid paths have t_i equal to
/// the grid nodes; stopped paths end at their hitting time.
struct Trajectory {
  std::vector<double> t;
  std::vector<double> w;
  std::vector<double> y;
  std::vector<double> z;
  double xi = std::numeric_limits<double>::quiet_NaN();  // terminal value the path must reach
  bool truncated = false;  // random horizon beyond the simulated window
  double tau = std::numeric_limits<double>::quiet_NaN();  // stopping time, if any

  [[nodiscard]] std::size_t size() const { return t.size(); }
  void push(double ti, double wi, double yi, double zi) {
    t.push_back(ti);
    w.push_back(wi);
    y.push_back(yi);
    z.push_back(zi);
  }
};

enum class SolutionKind { First, Second, Mixed, ExplicitLog, SquareEndpoint, Iterated, TimeChanged, Custom };

const char* to_string(SolutionKind kind);

struct SolutionPath {
  explicit SolutionPath(TimeGrid g, std::vector<Trajectory> p = {}) : grid(std::move(g)), paths(std::move(p)) {}

  TimeGrid grid;
  std::vector<Trajectory> paths;
  SolutionKind kind = SolutionKind::Custom;
  std::string label;
  /// Set when Y = (1/(2 alpha)) ln M for a positive martingale M.
  std::optional<double> log_m_alpha;
  /// Y at t = 0 has no meaning (the k = infinity square-endpoint family).
  bool undefined_at_origin = false;

  [[nodiscard]] std::size_t n_paths() const { return paths.size(); }
  /// Mean of Y at the first point over non-truncated paths.
  [[nodiscard]] double y0() const;
};

/// CSV rows "path_id,t,Y,Z". A ".gz" suffix writes gzip.
void write_solution_csv(const SolutionPath& solution, const std::string& file,
                        std::size_t max_paths = std::numeric_limits<std::size_t>::max());

}  // namespace mbsde
