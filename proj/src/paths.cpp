#include "mbsde/paths.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <stdexcept>

#include "mbsde/io.hpp"
#include "mbsde/parallel.hpp"

namespace mbsde {

TimeGrid::TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) throw std::invalid_argument("time grid needs at least one step");
  if (nodes_.front() != 0.0) throw std::invalid_argument("time grid must start at 0");
  for (std::size_t k = 1; k < nodes_.size(); ++k) {
    if (!(nodes_[k] > nodes_[k - 1])) throw std::invalid_argument("time grid must be strictly increasing");
  }
  if (!std::isfinite(nodes_.back())) throw std::invalid_argument("time grid horizon must be finite");
}

std::size_t TimeGrid::first_node_at_or_after(double t) const {
  const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - 1e-12 * std::max(1.0, std::abs(t)));
  return static_cast<std::size_t>(it - nodes_.begin());
}

TimeGrid build_grid(double horizon, std::size_t n_steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("horizon must be positive");
  if (n_steps == 0) throw std::invalid_argument("n_steps must be at least 1");
  std::vector<double> nodes(n_steps + 1);
  const double h = horizon / static_cast<double>(n_steps);
  for (std::size_t k = 0; k < n_steps; ++k) nodes[k] = h * static_cast<double>(k);
  nodes[n_steps] = horizon;
  return TimeGrid(std::move(nodes));
}

TimeGrid build_geometric_grid(double horizon, double t_min, std::size_t n_geometric) {
  if (!(t_min > 0.0) || !(t_min < horizon)) throw std::invalid_argument("need 0 < t_min < horizon");
  if (n_geometric < 2) throw std::invalid_argument("need at least two geometric nodes");
  std::vector<double> nodes{0.0};
  const double log_ratio = std::log(horizon / t_min) / static_cast<double>(n_geometric - 1);
  for (std::size_t i = 0; i + 1 < n_geometric; ++i) nodes.push_back(t_min * std::exp(log_ratio * i));
  nodes.push_back(horizon);
  return TimeGrid(std::move(nodes));
}

BrownianEnsemble::BrownianEnsemble(TimeGrid grid, std::size_t n_paths, std::uint64_t seed,
                                   std::vector<double> increments)
    : grid_(std::move(grid)), n_paths_(n_paths), seed_(seed), increments_(std::move(increments)) {
  const std::size_t n = grid_.n_steps();
  if (increments_.size() != n_paths_ * n) throw std::invalid_argument("increment array has wrong size");
  values_.resize(n_paths_ * (n + 1));
  for (std::size_t p = 0; p < n_paths_; ++p) {
    double w = 0.0;
    double* row = values_.data() + p * (n + 1);
    const double* inc = increments_.data() + p * n;
    row[0] = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      w += inc[k];
      row[k + 1] = w;
    }
  }
}

BrownianEnsemble simulate_ensemble(const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                   std::size_t workers) {
  if (n_paths == 0) throw std::invalid_argument("n_paths must be positive");
  const std::size_t n = grid.n_steps();
  std::vector<double> sqrt_dt(n);
  for (std::size_t k = 0; k < n; ++k) sqrt_dt[k] = std::sqrt(grid.dt(k));
  std::vector<double> inc(n_paths * n);
  const Philox4x32 gen(seed);
  parallel_for(n_paths, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      PathStream stream(gen, p);
      double* row = inc.data() + p * n;
      for (std::size_t k = 0; k < n; ++k) row[k] = sqrt_dt[k] * stream.normal(k);
    }
  });
  return BrownianEnsemble(grid, n_paths, seed, std::move(inc));
}

SegmentWalker::SegmentWalker(std::vector<AffineBarrier> barriers, std::vector<double> drifts, bool bridge)
    : barriers_(std::move(barriers)), drifts_(std::move(drifts)), bridge_(bridge), hits_(barriers_.size()) {
  if (barriers_.empty()) throw std::invalid_argument("segment walker needs at least one barrier");
  if (barriers_.size() > 16) throw std::invalid_argument("at most 16 barrier segments");
  if (drifts_.empty()) drifts_.assign(barriers_.size(), 0.0);
  if (drifts_.size() != barriers_.size()) throw std::invalid_argument("one drift per barrier segment");
  for (std::size_t i = 0; i < barriers_.size(); ++i) hits_[i].barrier = barriers_[i];
}

HittingRecord detect_hitting(const TimeGrid& grid, std::span<const double> path,
                             const AffineBarrier& barrier, bool bridge_correction,
                             const PathStream& stream) {
  if (path.size() != grid.n_nodes()) throw std::invalid_argument("path does not match grid");
  SegmentWalker walker({barrier}, {0.0}, bridge_correction);
  const auto uniform = [&](std::size_t k, std::uint32_t sub) { return stream.bridge_uniform(k, sub); };
  const auto ignore = [](const SubStep&) {};
  for (std::size_t k = 0; k < grid.n_steps() && !walker.done(); ++k)
    walker.step(k, grid[k + 1], path[k + 1] - path[k], uniform, ignore);
  return walker.hits().front();
}

HittingRecord detect_hitting(const BrownianEnsemble& ensemble, std::size_t path,
                             const AffineBarrier& barrier, bool bridge_correction) {
  const Philox4x32 gen(ensemble.seed());
  const PathStream stream(gen, path);
  const auto& grid = ensemble.grid();
  const auto inc = ensemble.increments(path);
  SegmentWalker walker({barrier}, {0.0}, bridge_correction);
  const auto uniform = [&](std::size_t k, std::uint32_t sub) { return stream.bridge_uniform(k, sub); };
  const auto ignore = [](const SubStep&) {};
  for (std::size_t k = 0; k < grid.n_steps() && !walker.done(); ++k)
    walker.step(k, grid[k + 1], inc[k], uniform, ignore);
  return walker.hits().front();
}

std::vector<HittingRecord> simulate_hitting_times(const AffineBarrier& barrier, const TimeGrid& grid,
                                                  std::size_t n_paths, std::uint64_t seed,
                                                  bool bridge_correction, std::size_t workers) {
  std::vector<HittingRecord> out(n_paths);
  const Philox4x32 gen(seed);
  const std::size_t n = grid.n_steps();
  parallel_for(n_paths, workers, [&](std::size_t begin, std::size_t end) {
    const auto ignore = [](const SubStep&) {};
    for (std::size_t p = begin; p < end; ++p) {
      PathStream stream(gen, p);
      const auto uniform = [&](std::size_t k, std::uint32_t sub) { return stream.bridge_uniform(k, sub); };
      SegmentWalker walker({barrier}, {0.0}, bridge_correction);
      for (std::size_t k = 0; k < n && !walker.done(); ++k)
        walker.step(k, grid[k + 1], std::sqrt(grid.dt(k)) * stream.normal(k), uniform, ignore);
      out[p] = walker.hits().front();
    }
  });
  return out;
}

double rho_inverse(double s) {
  if (!(s >= 0.0) || !(s < 1.0))
    throw std::invalid_argument("rho^{-1} is defined on [0, 1); s = 1 corresponds to an infinite horizon");
  return s / (1.0 - s);
}

TimeGrid inverse_time_change_grid(std::size_t n_steps) {
  if (n_steps < 2) throw std::invalid_argument("time-changed grid needs at least two steps");
  const TimeGrid s = build_grid(1.0, n_steps);
  std::vector<double> nodes(n_steps);
  for (std::size_t k = 0; k < n_steps; ++k) nodes[k] = rho_inverse(s[k]);
  return TimeGrid(std::move(nodes));
}

BrownianEnsemble time_changed_ensemble(const BrownianEnsemble& tilde) {
  const auto& s = tilde.grid();
  const std::size_t n = s.n_steps();
  for (std::size_t k = 0; k < n; ++k) {
    if (std::abs(s.dt(k) - s.dt(0)) > 1e-12) throw std::invalid_argument("time change needs a uniform [0,1] grid");
  }
  if (std::abs(s.horizon() - 1.0) > 1e-12) throw std::invalid_argument("time change needs horizon 1");
  TimeGrid u = inverse_time_change_grid(n);
  const std::size_t m = u.n_steps();  // n - 1
  std::vector<double> inc(tilde.n_paths() * m);
  for (std::size_t p = 0; p < tilde.n_paths(); ++p) {
    const auto src = tilde.increments(p);
    for (std::size_t k = 0; k < m; ++k) inc[p * m + k] = time_change_rate(s[k]) * src[k];
  }
  return BrownianEnsemble(std::move(u), tilde.n_paths(), tilde.seed(), std::move(inc));
}

void write_paths_csv(const BrownianEnsemble& ensemble, const std::string& file, std::size_t max_paths) {
  TextSink sink(file);
  sink.write("path_id,t,W\n");
  const auto& grid = ensemble.grid();
  fmt::memory_buffer buf;
  for (std::size_t p = 0; p < std::min(max_paths, ensemble.n_paths()); ++p) {
    const auto w = ensemble.values(p);
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) fmt::format_to(std::back_inserter(buf), "{},{},{}\n", p, grid[k], w[k]);
    sink.write({buf.data(), buf.size()});
    buf.clear();
  }
}

}  // namespace mbsde
