#include "mbsde/iterate.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mbsde/errors.hpp"
#include "mbsde/io.hpp"
#include "mbsde/parallel.hpp"
#include "mbsde/stats.hpp"

namespace mbsde {

namespace {

// Self-normalized weights from log weights.
std::vector<double> normalized(const std::vector<double>& log_w) {
  const double top = *std::max_element(log_w.begin(), log_w.end());
  std::vector<double> w(log_w.size());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += (w[i] = std::exp(log_w[i] - top));
  for (double& x : w) x /= s;
  return w;
}

struct Problem {
  const BrownianEnsemble& ens;
  std::vector<std::size_t> kept;  // ensemble path ids
  std::vector<double> xi;         // normalized terminal per kept path
  std::vector<std::size_t> stop;  // first node index at or after tau (n_nodes-1 for grid terminals)
  std::vector<double> drift0;     // int_0^{t_k} f(s, 0) ds per node
  std::size_t dropped = 0;

  [[nodiscard]] std::size_t n() const { return kept.size(); }
  [[nodiscard]] double w(std::size_t i, std::size_t k) const { return ens.value(kept[i], k); }
  [[nodiscard]] double dw(std::size_t i, std::size_t k) const { return ens.increments(kept[i])[k]; }
  [[nodiscard]] bool alive(std::size_t i, std::size_t k) const { return k < stop[i]; }
};

Problem setup(const TerminalSpec& terminal, const GeneratorSpec& spec, const BrownianEnsemble& ens, bool bridge) {
  const TimeGrid& grid = ens.grid();
  const std::size_t last = grid.n_steps();
  Problem pb{ens, {}, {}, {}, std::vector<double>(grid.n_nodes(), 0.0), 0};
  for (std::size_t k = 0; k < last; ++k) pb.drift0[k + 1] = pb.drift0[k] + spec.f(grid[k], 0.0) * grid.dt(k);

  for (std::size_t p = 0; p < ens.n_paths(); ++p) {
    double xi = 0.0;
    std::size_t stop = last;
    if (const auto* h = std::get_if<HittingAffine>(&terminal)) {
      const auto rec = detect_hitting(ens, p, AffineBarrier::tau_b(h->b), bridge);
      if (rec.truncated()) {
        ++pb.dropped;
        continue;
      }
      xi = hitting_terminal(*h, rec.tau);
      stop = std::min(last, *rec.crossing_index + 1);
      if (rec.tau <= grid[*rec.crossing_index]) stop = *rec.crossing_index;
      // generator drift is accrued up to the stopping node
      xi += pb.drift0[stop];
    } else {
      xi = terminal_value(terminal, grid, ens.values(p)) + pb.drift0[last];
    }
    if (!std::isfinite(xi)) throw NumericalError(fmt::format("non-finite terminal value on path {}", p));
    pb.kept.push_back(p);
    pb.xi.push_back(xi);
    pb.stop.push_back(stop);
  }
  if (pb.kept.empty()) throw NumericalError("no path reached its stopping time inside the grid");
  return pb;
}

}  // namespace

IterateResult iterate_measure_solution(const TerminalSpec& terminal, const GeneratorSpec& spec,
                                       const BrownianEnsemble& ensemble, const IterateConfig& cfg,
                                       const std::function<void(const TraceRow&)>& on_row) {
  if (!(cfg.diagnostics.beta > 0.0) || !(cfg.diagnostics.p > 1.0))
    throw std::invalid_argument("diagnostics need beta > 0 and p > 1");
  if (cfg.max_iter == 0 || !(cfg.tol > 0.0)) throw std::invalid_argument("need max_iter >= 1 and tol > 0");
  const TimeGrid& grid = ensemble.grid();
  const std::size_t nodes = grid.n_nodes();
  const std::size_t last = grid.n_steps();
  const Problem pb = setup(terminal, spec, ensemble, cfg.bridge);
  const std::size_t n = pb.n();

  // g of the normalized generator f(s, z) - f(s, 0).
  auto g_norm = [&](double t, double z) { return z == 0.0 ? 0.0 : (spec.f(t, z) - spec.f(t, 0.0)) / z; };

  const auto phi = phi_integral(spec, grid);
  std::vector<double> e_phi(nodes);
  for (std::size_t k = 0; k < nodes; ++k) e_phi[k] = std::exp(cfg.diagnostics.beta * phi.values[k]);

  // Y and Z per path (row-major), Z^0 = 0 and R^0 = 1.
  std::vector<double> y(n * nodes, 0.0), z(n * nodes, 0.0), z_prev(n * nodes, 0.0);
  std::vector<double> log_w(n, 0.0);
  std::vector<PolyFit> z_field(last);

  IterateResult out{IterationState{}, {}, SolutionPath(grid), MeasureReport{}, false, "", pb.dropped};
  std::size_t stall = 0;
  TraceRow last_row;
  double prev_dist = std::numeric_limits<double>::infinity();

  // Fits every node in parallel with `sample(i, k, y)` giving the regressand of
  // path i at node k; nodes whose fit fails reuse the previous node's fit.
  auto fit_nodes = [&](std::size_t from, std::size_t to, const auto& sample) {
    std::vector<std::optional<PolyFit>> fits(to);
    parallel_for(to - from, cfg.workers, [&](std::size_t b, std::size_t e) {
      std::vector<double> xs, ys, lw;
      for (std::size_t k = from + b; k < from + e; ++k) {
        xs.clear();
        ys.clear();
        lw.clear();
        for (std::size_t i = 0; i < n; ++i) {
          if (!pb.alive(i, k)) continue;
          xs.push_back(pb.w(i, k));
          ys.push_back(sample(i, k));
          lw.push_back(log_w[i]);
        }
        if (!xs.empty()) fits[k] = fit_polynomial(xs, ys, lw, cfg.regression);
      }
    });
    for (std::size_t k = from + 1; k < to; ++k)
      if (!fits[k]) fits[k] = fits[k - 1];
    return fits;
  };
  auto constant_fit = [](double c) {
    PolyFit f;
    f.beta = Eigen::VectorXd::Constant(1, c);
    return f;
  };

  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    // Projection under R^{it-1}: Y_k = E^R[xi | W_k] on alive paths. W_0 = 0,
    // so node 0 is the weighted mean.
    const std::vector<double> wn = normalized(log_w);
    double y0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) y0 += wn[i] * pb.xi[i];
    // Fit xi - y0 so that the ridge does not bias the level.
    auto y_fits = fit_nodes(1, last, [&](std::size_t i, std::size_t) { return pb.xi[i] - y0; });
    y_fits[0] = constant_fit(0.0);
    for (std::size_t k = 1; k < last; ++k)
      if (!y_fits[k]) y_fits[k] = constant_fit(0.0);
    parallel_for(n, cfg.workers, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i)
        for (std::size_t k = 0; k < nodes; ++k)
          y[i * nodes + k] = pb.alive(i, k) ? y0 + (*y_fits[k])(pb.w(i, k)) : pb.xi[i];
    });

    // Z^{it} from (Y_{k+1} - Y_k) dW^{it-1} / dt.
    z_prev = z;
    auto z_sample = [&](std::size_t i, std::size_t k) {
      const double dt = grid.dt(k);
      const double dy = y[i * nodes + k + 1] - y[i * nodes + k];
      return dy * (pb.dw(i, k) - g_norm(grid[k], z_prev[i * nodes + k]) * dt) / dt;
    };
    auto z_fits = fit_nodes(1, last, z_sample);
    {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += wn[i] * z_sample(i, 0);
      z_fits[0] = constant_fit(m);
    }
    double defect = 0.0;
    for (std::size_t k = 0; k < last; ++k) {
      z_field[k] = z_fits[k] ? *z_fits[k] : constant_fit(0.0);
      double dy_mean = 0.0, wsum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!pb.alive(i, k)) continue;
        dy_mean += wn[i] * (y[i * nodes + k + 1] - y[i * nodes + k]);
        wsum += wn[i];
      }
      if (wsum > 0.0) defect = std::max(defect, std::abs(dy_mean / wsum));
    }

    // Re-tilt.
    std::vector<double> log_w_new(n, 0.0);
    parallel_for(n, cfg.workers, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < last; ++k) {
          const double zi = pb.alive(i, k) ? z_field[k](pb.w(i, k)) : 0.0;
          z[i * nodes + k] = zi;
          const double g = g_norm(grid[k], zi);
          acc += g * pb.dw(i, k) - 0.5 * g * g * grid.dt(k);
        }
        log_w_new[i] = acc;
      }
    });
    if (std::any_of(log_w_new.begin(), log_w_new.end(), [](double v) { return !std::isfinite(v); }))
      throw NumericalError(fmt::format("non-finite density at iteration {}", it));

    const bool same_weights = log_w_new == log_w;
    log_w = std::move(log_w_new);
    const std::vector<double> wr = normalized(log_w);

    TraceRow row;
    row.n = it;
    row.y0 = y0 - pb.drift0[0];
    row.ess = effective_sample_size(log_w);
    row.martingale_defect = defect;
    {
      RunningStats rs;
      for (double l : log_w) rs.add(std::exp(l));
      row.weight_mean = rs.mean;
      row.weight_se = rs.std_error();
    }
    double d2 = 0.0, d2_base = 0.0, sup_y = 0.0, zl2 = 0.0;
    const double p = cfg.diagnostics.p;
    for (std::size_t i = 0; i < n; ++i) {
      double a = 0.0, b = 0.0, s = 0.0, q = 0.0;
      for (std::size_t k = 0; k < last; ++k) {
        const double dz = z[i * nodes + k] - z_prev[i * nodes + k];
        const double dt = grid.dt(k);
        a += e_phi[k] * dz * dz * dt;
        b += dz * dz * dt;
        q += e_phi[k] * z[i * nodes + k] * z[i * nodes + k] * dt;
      }
      for (std::size_t k = 0; k < nodes; ++k)
        s = std::max(s, e_phi[k] * std::pow(std::abs(y[i * nodes + k] - pb.drift0[k]), p));
      d2 += wr[i] * a;
      d2_base += b / static_cast<double>(n);
      sup_y += wr[i] * s;
      zl2 += wr[i] * std::pow(q, 0.5 * p);
    }
    row.dist_l2 = std::sqrt(d2);
    row.dist_l2_base = std::sqrt(d2_base);
    row.sup_weighted_y = sup_y;
    row.weighted_z_l2 = zl2;
    last_row = row;
    if (it % std::max<std::size_t>(cfg.diagnostics.track_every, 1) == 0 || it == 1) {
      out.trace.push_back(row);
      if (on_row) on_row(row);
    }

    out.state.n = it;
    out.state.y0 = row.y0;
    out.state.dist_l2 = row.dist_l2;
    out.state.ess = row.ess;

    if (row.ess < cfg.min_ess_fraction * static_cast<double>(n))
      throw DegeneracyError(fmt::format("effective sample size {:.1f} of {} paths at iteration {}", row.ess, n, it));
    if (row.dist_l2 < cfg.tol) {
      out.converged = true;
      out.stop_reason = "tolerance";
      break;
    }
    if (same_weights) {
      out.converged = true;
      out.stop_reason = "fixed weights";
      break;
    }
    stall = row.dist_l2 >= prev_dist ? stall + 1 : 0;
    prev_dist = row.dist_l2;
    if (stall >= cfg.stall_window)
      throw NonConvergenceError(
          fmt::format("dist_L2 did not decrease for {} iterations (last {:.3e})", stall, row.dist_l2));
    if (it == cfg.max_iter) out.stop_reason = "max_iter";
  }
  if (last_row.n != 0 && (out.trace.empty() || out.trace.back().n != last_row.n)) {
    out.trace.push_back(last_row);
    if (on_row) on_row(last_row);
  }

  out.state.log_weights = log_w;
  out.state.z_field = z_field;

  // Solution in the original (unnormalized) coordinates.
  SolutionPath& sol = out.solution;
  sol.kind = SolutionKind::Iterated;
  sol.label = fmt::format("iterated{{n={}}}", out.state.n);
  sol.paths.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory tr;
    for (std::size_t k = 0; k < nodes; ++k)
      tr.push(grid[k], pb.w(i, k), y[i * nodes + k] - pb.drift0[k], k < last ? z[i * nodes + k] : 0.0);
    tr.xi = pb.xi[i] - pb.drift0[last];
    if (pb.stop[i] < last) tr.tau = grid[pb.stop[i]];
    sol.paths.push_back(std::move(tr));
  }
  GirsanovWeight gw = girsanov_weight(sol, RatioFn(g_norm));
  out.report = martingale_expectation(gw, MeasureOptions{});
  return out;
}

ConvergenceTrace convergence_trace(const std::vector<TraceRow>& rows) {
  ConvergenceTrace ct{rows, std::nullopt};
  double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
  for (const auto& r : rows) {
    if (!(r.dist_l2 > 0.0)) continue;
    const double x = static_cast<double>(r.n), yv = std::log(r.dist_l2);
    sx += x;
    sy += yv;
    sxx += x * x;
    sxy += x * yv;
    m += 1;
  }
  if (m >= 2) {
    const double den = m * sxx - sx * sx;
    if (den > 0) ct.ratio = std::exp((m * sxy - sx * sy) / den);
  }
  return ct;
}

BoundednessReport boundedness_monitor(const std::vector<TraceRow>& rows) {
  BoundednessReport br;
  if (rows.empty()) return br;
  br.sup_weighted_y = rows.back().sup_weighted_y;
  br.weighted_z_l2 = rows.back().weighted_z_l2;
  auto median = [&](auto field) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.*field);
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  br.bounded = br.sup_weighted_y <= 2.0 * median(&TraceRow::sup_weighted_y) &&
               br.weighted_z_l2 <= 2.0 * median(&TraceRow::weighted_z_l2) && std::isfinite(br.sup_weighted_y) &&
               std::isfinite(br.weighted_z_l2);
  return br;
}

double tightness_statistic(const BrownianEnsemble& ensemble, const std::vector<double>& log_weights,
                           std::size_t stride) {
  if (log_weights.size() != ensemble.n_paths())
    throw std::invalid_argument("tightness_statistic: one log weight per path required");
  const TimeGrid& grid = ensemble.grid();
  const std::vector<double> w = normalized(log_weights);
  stride = std::max<std::size_t>(stride, 1);
  double worst = 0.0;
  for (std::size_t s = 0; s < grid.n_nodes(); s += stride) {
    for (std::size_t t = s + stride; t < grid.n_nodes(); t += stride) {
      double m = 0.0;
      for (std::size_t p = 0; p < ensemble.n_paths(); ++p) {
        const double d = ensemble.value(p, t) - ensemble.value(p, s);
        m += w[p] * d * d * d * d;
      }
      const double h = grid[t] - grid[s];
      worst = std::max(worst, m / (h * h));
    }
  }
  return worst;
}

void write_trace_csv(const std::vector<TraceRow>& rows, const std::string& file) {
  TextSink sink(file);
  sink.write("n,dist_L2,ess,Y0,sup_weighted_Y,weighted_Z_L2\n");
  for (const auto& r : rows)
    sink.write(fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", r.n, r.dist_l2, r.ess, r.y0,
                           r.sup_weighted_y, r.weighted_z_l2));
}

}  // namespace mbsde
