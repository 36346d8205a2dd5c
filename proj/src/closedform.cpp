#include "mbsde/closedform.hpp"

#include <fmt/format.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mbsde/errors.hpp"
#include "mbsde/parallel.hpp"
#include "mbsde/stats.hpp"

namespace mbsde {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_positive(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("need a > 0 and b > 0");
}

void check_on_barrier(const AffineBarrier& barrier, double t, double w) {
  const double level = barrier.level(t);
  if (std::abs(w - level) > 1e-9 * (1.0 + std::abs(level)))
    throw std::invalid_argument("path must end on the barrier");
}

void check_path(const std::vector<double>& t, const std::vector<double>& w) {
  if (t.empty() || t.size() != w.size()) throw std::invalid_argument("path times and values differ in length");
  if (t.front() != 0.0 || w.front() != 0.0) throw std::invalid_argument("path must start at (0, 0)");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] >= t[i - 1])) throw std::invalid_argument("path times must be nondecreasing");
}

// Points of one path walked through a barrier sequence.
struct Walked {
  std::vector<double> t{0.0};
  std::vector<double> w{0.0};
  std::vector<HittingRecord> hits;
  bool done = false;
};

Walked walk(const BrownianEnsemble& ens, std::size_t p, const std::vector<AffineBarrier>& barriers, bool bridge,
            const Philox4x32& gen) {
  const PathStream stream(gen, p);
  const auto& grid = ens.grid();
  const auto inc = ens.increments(p);
  SegmentWalker walker(barriers, {}, bridge);
  Walked out;
  const auto uniform = [&](std::size_t k, std::uint32_t sub) { return stream.bridge_uniform(k, sub); };
  const auto emit = [&](const SubStep& s) {
    out.t.push_back(s.t1);
    out.w.push_back(s.w1);
  };
  for (std::size_t k = 0; k < grid.n_steps() && !walker.done(); ++k) walker.step(k, grid[k + 1], inc[k], uniform, emit);
  out.hits = walker.hits();
  out.done = walker.done();
  return out;
}

double y_first(double a, double t, double w) { return 2.0 * a * w - 2.0 * a * a * t; }

double y_second(double a, double b, double t, double w) {
  if (2.0 * a <= b) return y_first(a, t, w);
  const double k = b - a;
  return 2.0 * b - 4.0 * a + 2.0 * k * w - 2.0 * k * k * t;
}

double z_second(double a, double b) { return 2.0 * a <= b ? 2.0 * a : 2.0 * (b - a); }

// Stopped single-barrier path with Y = y(t, w) and constant Z before tau.
template <class YFn>
Trajectory single_barrier_trajectory(std::vector<double> t, std::vector<double> w, bool stopped, double z,
                                     double xi_of_tau_a, double xi_of_tau_b, YFn&& y) {
  Trajectory tr;
  const std::size_t n = t.size();
  tr.y.resize(n);
  tr.z.assign(n, z);
  for (std::size_t i = 0; i < n; ++i) tr.y[i] = y(t[i], w[i]);
  if (stopped) {
    tr.tau = t.back();
    tr.xi = xi_of_tau_a * tr.tau + xi_of_tau_b;
    tr.z.back() = 0.0;
  } else {
    tr.truncated = true;
  }
  tr.t = std::move(t);
  tr.w = std::move(w);
  return tr;
}

Trajectory mixed_trajectory(double a, double c, double d, std::vector<double> t, std::vector<double> w,
                            std::size_t i_c, bool stopped) {
  const double l = mixed_initial_value(a, c, d);
  const double z1 = 2.0 * a;
  const double z2 = 2.0 * (1.0 - a);
  Trajectory tr;
  const std::size_t n = t.size();
  tr.y.resize(n);
  tr.z.resize(n);
  const bool has_c = i_c < n;
  const double tc = has_c ? t[i_c] : kNaN;
  const double wc = has_c ? w[i_c] : kNaN;
  for (std::size_t i = 0; i < n; ++i) {
    if (!has_c || i <= i_c) {
      tr.y[i] = l + z1 * w[i] - 0.5 * z1 * z1 * t[i];
      tr.z[i] = (has_c && i == i_c) ? z2 : z1;
    } else {
      tr.y[i] = l + z1 * wc - 0.5 * z1 * z1 * tc + z2 * (w[i] - wc) - 0.5 * z2 * z2 * (t[i] - tc);
      tr.z[i] = z2;
    }
  }
  if (stopped) {
    tr.tau = t.back();
    tr.xi = 2.0 * a * (1.0 - a) * tr.tau + d;
    tr.z.back() = 0.0;
  } else {
    tr.truncated = true;
  }
  tr.t = std::move(t);
  tr.w = std::move(w);
  return tr;
}

std::string num(double x) { return fmt::format("{:g}", x); }

// Largest node index k with u_k <= t.
std::size_t left_node(const TimeGrid& u, double t) {
  const std::size_t k = u.first_node_at_or_after(t);
  if (k < u.n_nodes() && std::abs(u[k] - t) <= 1e-12 * std::max(1.0, t)) return k;
  return k == 0 ? 0 : k - 1;
}

}  // namespace

double hitting_terminal(const HittingAffine& h, double tau) {
  return 2.0 * h.a * (h.b - h.a) * tau - 2.0 * h.a + h.shift_d;
}

double terminal_value(const TerminalSpec& terminal, const TimeGrid& grid, std::span<const double> w) {
  if (w.size() != grid.n_nodes()) throw std::invalid_argument("path does not match grid");
  return std::visit(Overloaded{
                        [](const HittingAffine&) -> double {
                          throw std::invalid_argument("hitting terminals need a hitting time");
                        },
                        [&](const SquareEndpoint& s) {
                          return w.back() * w.back() / (2.0 * square_endpoint_f(s.k, 1.0));
                        },
                        [&](const EndpointFunctional& e) { return e.phi(w.back()); },
                        [&](const CustomFunctional& c) { return c.f(grid, w); },
                    },
                    terminal);
}

bool is_hitting(const TerminalSpec& terminal) { return std::holds_alternative<HittingAffine>(terminal); }

double laplace_tau(double b, double lambda) {
  if (!(b > 0.0)) throw std::invalid_argument("b must be positive");
  const double arg = 1.0 + 2.0 * lambda / (b * b);
  if (arg < -1e-15) throw std::domain_error("laplace_tau needs lambda >= -b^2/2");
  return std::exp(-b * (std::sqrt(std::max(arg, 0.0)) - 1.0));
}

double first_solution_measure_value(double a, double b) {
  require_positive(a, b);
  return std::exp(-b * (std::abs(1.0 - a / b) - 1.0) - a);
}

double second_solution_measure_value(double a, double b) {
  require_positive(a, b);
  return 1.0;
}

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::A: return "A";
    case Scenario::B: return "B";
    case Scenario::C: return "C";
  }
  return "?";
}

Scenario classify_scenario(double a, double b) {
  require_positive(a, b);
  if (b >= 2.0 * a) return Scenario::A;
  if (b >= a) return Scenario::B;
  return Scenario::C;
}

ScenarioInfo scenario_info(double a, double b) {
  const Scenario s = classify_scenario(a, b);
  switch (s) {
    case Scenario::A: return {a, b, s, 1, {true}};
    case Scenario::B: return {a, b, s, 2, {true, true}};
    case Scenario::C: return {a, b, s, 2, {false, true}};
  }
  return {a, b, s, 0, {}};
}

double mixed_initial_value(double a, double c, double d) {
  return d + 2.0 * a * c + 2.0 * (1.0 - a) * (1.0 - c);
}

HittingAffine mixed_terminal(double a, double d) { return {a, 1.0, d + 2.0 * a}; }

Trajectory first_solution_path(double a, double b, std::vector<double> t, std::vector<double> w) {
  check_path(t, w);
  check_on_barrier(AffineBarrier::tau_b(b), t.back(), w.back());
  return single_barrier_trajectory(std::move(t), std::move(w), true, 2.0 * a, 2.0 * a * (b - a), -2.0 * a,
                                   [a](double s, double x) { return y_first(a, s, x); });
}

Trajectory second_solution_path(double a, double b, std::vector<double> t, std::vector<double> w) {
  check_path(t, w);
  check_on_barrier(AffineBarrier::tau_b(b), t.back(), w.back());
  return single_barrier_trajectory(std::move(t), std::move(w), true, z_second(a, b), 2.0 * a * (b - a), -2.0 * a,
                                   [a, b](double s, double x) { return y_second(a, b, s, x); });
}

Trajectory mixed_solution_path(double a, double c, double d, std::vector<double> t, std::vector<double> w) {
  if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("c must lie in (0, 1)");
  check_path(t, w);
  check_on_barrier(AffineBarrier::rho_c(1.0), t.back(), w.back());
  std::size_t i_c = t.size();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (w[i] - (t[i] - c) <= 1e-12 * (1.0 + std::abs(t[i]))) {
      i_c = i;
      break;
    }
  }
  if (i_c == t.size()) throw std::logic_error("rho_c not found before rho_1");
  return mixed_trajectory(a, c, d, std::move(t), std::move(w), i_c, true);
}

namespace {

template <class Build>
SolutionPath build_hitting(const BrownianEnsemble& ens, std::vector<AffineBarrier> barriers, bool bridge,
                           std::size_t workers, Build&& build) {
  SolutionPath out{ens.grid(), std::vector<Trajectory>(ens.n_paths())};
  const Philox4x32 gen(ens.seed());
  parallel_for(ens.n_paths(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) out.paths[p] = build(walk(ens, p, barriers, bridge, gen));
  });
  out.log_m_alpha = 0.5;
  return out;
}

}  // namespace

SolutionPath first_solution(double a, double b, const BrownianEnsemble& ensemble, bool bridge, std::size_t workers) {
  if (!(b > 0.0)) throw std::invalid_argument("b must be positive");
  auto out = build_hitting(ensemble, {AffineBarrier::tau_b(b)}, bridge, workers, [&](Walked wk) {
    return single_barrier_trajectory(std::move(wk.t), std::move(wk.w), wk.done, 2.0 * a, 2.0 * a * (b - a),
                                     -2.0 * a, [a](double s, double x) { return y_first(a, s, x); });
  });
  out.kind = SolutionKind::First;
  out.label = fmt::format("first{{a={},b={}}}", num(a), num(b));
  return out;
}

SolutionPath second_solution(double a, double b, const BrownianEnsemble& ensemble, bool bridge,
                             std::size_t workers) {
  if (!(b > 0.0)) throw std::invalid_argument("b must be positive");
  auto out = build_hitting(ensemble, {AffineBarrier::tau_b(b)}, bridge, workers, [&](Walked wk) {
    return single_barrier_trajectory(std::move(wk.t), std::move(wk.w), wk.done, z_second(a, b), 2.0 * a * (b - a),
                                     -2.0 * a, [a, b](double s, double x) { return y_second(a, b, s, x); });
  });
  out.kind = SolutionKind::Second;
  out.label = fmt::format("second{{a={},b={}}}", num(a), num(b));
  return out;
}

SolutionPath mixed_solution(double a, double c, double d, const BrownianEnsemble& ensemble, bool bridge,
                            std::size_t workers) {
  if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("c must lie in (0, 1)");
  auto out = build_hitting(
      ensemble, {AffineBarrier::rho_c(c), AffineBarrier::rho_c(1.0)}, bridge, workers, [&](Walked wk) {
        const auto& hc = wk.hits[0];
        const auto& h1 = wk.hits[1];
        std::size_t i_c = wk.t.size();
        if (!hc.truncated()) {
          if (!h1.truncated() && hc.tau > h1.tau) throw std::logic_error("rho_c after rho_1 on a path");
          // The hitting point is the last emitted point at time rho_c.
          for (std::size_t i = wk.t.size(); i-- > 0;) {
            if (wk.t[i] == hc.tau) {
              i_c = i;
              break;
            }
          }
          if (i_c == wk.t.size()) throw std::logic_error("rho_c point missing from walked path");
        }
        return mixed_trajectory(a, c, d, std::move(wk.t), std::move(wk.w), i_c, wk.done);
      });
  out.kind = SolutionKind::Mixed;
  out.label = fmt::format("mixed{{a={},c={},d={},l={}}}", num(a), num(c), num(d), num(mixed_initial_value(a, c, d)));
  return out;
}

SolutionPath square_endpoint_solution(std::optional<unsigned> k, const BrownianEnsemble& ensemble) {
  const auto& grid = ensemble.grid();
  if (std::abs(grid.horizon() - 1.0) > 1e-12) throw std::invalid_argument("square-endpoint family needs horizon 1");
  if (k && *k == 0) throw std::invalid_argument("k must be positive");
  SolutionPath out{grid, std::vector<Trajectory>(ensemble.n_paths())};
  const double f1 = square_endpoint_f(k, 1.0);
  for (std::size_t p = 0; p < ensemble.n_paths(); ++p) {
    auto& tr = out.paths[p];
    const auto w = ensemble.values(p);
    for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
      const double f = square_endpoint_f(k, grid[i]);
      if (f == 0.0) {
        tr.push(grid[i], w[i], kNaN, 0.0);
      } else {
        tr.push(grid[i], w[i], 0.5 * w[i] * w[i] / f + 0.5 * std::log(f1 / f), w[i] / f);
      }
    }
    tr.xi = 0.5 * w.back() * w.back() / f1;
  }
  out.kind = SolutionKind::SquareEndpoint;
  out.label = k ? fmt::format("square_endpoint{{k={}}}", *k) : std::string("square_endpoint{k=inf}");
  out.undefined_at_origin = !k.has_value();
  if (k) out.log_m_alpha = 0.5;
  return out;
}

GaussHermiteRule gauss_hermite_normal(std::size_t n) {
  if (n == 0) throw std::invalid_argument("need at least one quadrature node");
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 1; i < n; ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    jac(j, j - 1) = jac(j - 1, j) = std::sqrt(static_cast<double>(i));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  GaussHermiteRule rule;
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    rule.x.push_back(es.eigenvalues()[j]);
    rule.w.push_back(es.eigenvectors()(0, j) * es.eigenvectors()(0, j));
  }
  return rule;
}

namespace {

// Largest-sqrt(n) Hill estimate of the tail index of exp(l) from log values.
double hill_tail_index(std::vector<double> l) {
  const std::size_t n = l.size();
  const auto k = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  if (k < 2) return std::numeric_limits<double>::infinity();
  std::partial_sort(l.begin(), l.begin() + static_cast<std::ptrdiff_t>(k + 1), l.end(), std::greater<>());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += l[i] - l[k];
  return s > 0.0 ? static_cast<double>(k) / s : std::numeric_limits<double>::infinity();
}

void check_exponential_moment(const std::vector<double>& log_e) {
  std::vector<double> finite;
  for (double l : log_e)
    if (std::isfinite(l)) finite.push_back(l);
  if (finite.size() < 16) return;
  const double top = *std::max_element(finite.begin(), finite.end());
  const std::size_t n = finite.size();
  std::array<double, 3> means{};
  const std::array<std::size_t, 3> sizes{n / 4, n / 2, n};
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < sizes[j]; ++i) s += std::exp(finite[i] - top);
    means[j] = s / static_cast<double>(sizes[j]);
  }
  const double growth = std::max(std::abs(means[1] / means[0] - 1.0), std::abs(means[2] / means[1] - 1.0));
  const double index = hill_tail_index(finite);
  if (growth > 0.1 || index < 1.0)
    throw DivergingMomentError(fmt::format(
        "E exp(2 alpha xi) does not stabilize: relative change {:.3g} under doubling, tail index {:.3g}", growth,
        index));
}

struct Scaled {
  std::vector<double> log_e;  // 2 alpha xi
  double shift = 0.0;         // max of log_e
};

SolutionPath explicit_log_gauss_hermite(double alpha, const std::function<double(double)>& phi,
                                        const BrownianEnsemble& ens, const ExplicitLogConfig& cfg) {
  const auto& grid = ens.grid();
  const double horizon = grid.horizon();
  const auto rule = gauss_hermite_normal(cfg.quadrature_nodes);
  std::vector<double> log_w(rule.w.size());
  for (std::size_t i = 0; i < rule.w.size(); ++i) log_w[i] = std::log(rule.w[i]);
  SolutionPath out{grid, std::vector<Trajectory>(ens.n_paths())};
  std::vector<double> l(rule.x.size());
  for (std::size_t p = 0; p < ens.n_paths(); ++p) {
    auto& tr = out.paths[p];
    const auto w = ens.values(p);
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
      const double sigma = std::sqrt(std::max(horizon - grid[k], 0.0));
      double y = 0.0, z = 0.0;
      if (k + 1 == grid.n_nodes() || sigma == 0.0) {
        const double h = 1e-6 * std::max(1.0, std::abs(w[k]));
        y = phi(w[k]);
        z = (phi(w[k] + h) - phi(w[k] - h)) / (2.0 * h);
      } else {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < l.size(); ++i) {
          l[i] = log_w[i] + 2.0 * alpha * phi(w[k] + sigma * rule.x[i]);
          top = std::max(top, l[i]);
        }
        double s0 = 0.0, s1 = 0.0;
        for (std::size_t i = 0; i < l.size(); ++i) {
          const double e = std::exp(l[i] - top);
          s0 += e;
          s1 += e * rule.x[i];
        }
        const double log_m = top + std::log(s0);
        y = log_m / (2.0 * alpha);
        z = (s1 / s0) / sigma / (2.0 * alpha);  // H / (2 alpha M)
      }
      tr.push(grid[k], w[k], y, z);
    }
    tr.xi = phi(w.back());
  }
  return out;
}

// Regression engine on grid paths (non-hitting terminals).
SolutionPath explicit_log_regression_grid(double alpha, const TerminalSpec& terminal, const BrownianEnsemble& ens,
                                          const ExplicitLogConfig& cfg, const Scaled& sc) {
  const auto& grid = ens.grid();
  const std::size_t n = ens.n_paths();
  const std::size_t nodes = grid.n_nodes();
  std::vector<double> e(n);
  for (std::size_t p = 0; p < n; ++p) e[p] = std::exp(sc.log_e[p] - sc.shift);

  // m[k][p]: regressed M (scaled) at node k.
  std::vector<std::vector<double>> m(nodes, std::vector<double>(n));
  m[nodes - 1] = e;
  std::vector<double> x(n), target(n);
  std::optional<PolyFit> prev;
  for (std::size_t k = nodes - 1; k-- > 0;) {
    for (std::size_t p = 0; p < n; ++p) x[p] = ens.value(p, k);
    auto fit = fit_polynomial(x, e, {}, cfg.regression);
    if (!fit) fit = prev;
    if (!fit) throw NumericalError("explicit_log regression: not enough samples");
    prev = fit;
    const double floor = 1e-12 * std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(n);
    for (std::size_t p = 0; p < n; ++p) m[k][p] = std::max((*fit)(x[p]), floor);
  }
  SolutionPath out{grid, std::vector<Trajectory>(n)};
  for (auto& tr : out.paths) {
    tr.t.reserve(nodes);
    tr.w.reserve(nodes);
  }
  for (std::size_t p = 0; p < n; ++p) {
    out.paths[p].xi = terminal_value(terminal, grid, ens.values(p));
  }
  std::vector<double> zk(n);
  prev.reset();
  for (std::size_t k = 0; k < nodes; ++k) {
    if (k + 1 < nodes) {
      const double dt = grid.dt(k);
      for (std::size_t p = 0; p < n; ++p) {
        x[p] = ens.value(p, k);
        target[p] = (m[k + 1][p] - m[k][p]) * ens.increments(p)[k] / dt;
      }
      auto fit = fit_polynomial(x, target, {}, cfg.regression);
      if (!fit) fit = prev;
      if (!fit) throw NumericalError("explicit_log regression: not enough samples");
      prev = fit;
      for (std::size_t p = 0; p < n; ++p) zk[p] = (*fit)(x[p]) / (2.0 * alpha * m[k][p]);
    }
    for (std::size_t p = 0; p < n; ++p) {
      const double y = k + 1 == nodes ? out.paths[p].xi : (std::log(m[k][p]) + sc.shift) / (2.0 * alpha);
      out.paths[p].push(grid[k], ens.value(p, k), y, k + 1 < nodes ? zk[p] : 0.0);
    }
  }
  return out;
}

// Regression engine for hitting terminals: regression over paths alive at
// each node; after tau the path is stopped with Y = xi.
SolutionPath explicit_log_regression_hitting(double alpha, const HittingAffine& h, const BrownianEnsemble& ens,
                                             const ExplicitLogConfig& cfg) {
  const auto& grid = ens.grid();
  const std::size_t n = ens.n_paths();
  SolutionPath out{grid, std::vector<Trajectory>(n)};
  const Philox4x32 gen(ens.seed());
  std::vector<double> log_e(n, kNaN);
  for (std::size_t p = 0; p < n; ++p) {
    Walked wk = walk(ens, p, {AffineBarrier::tau_b(h.b)}, cfg.bridge, gen);
    auto& tr = out.paths[p];
    tr.t = std::move(wk.t);
    tr.w = std::move(wk.w);
    tr.y.assign(tr.t.size(), kNaN);
    tr.z.assign(tr.t.size(), 0.0);
    if (wk.done) {
      tr.tau = tr.t.back();
      tr.xi = hitting_terminal(h, tr.tau);
      tr.y.back() = tr.xi;
      log_e[p] = 2.0 * alpha * tr.xi;
    } else {
      tr.truncated = true;
    }
  }
  if (cfg.check_moment) check_exponential_moment(log_e);
  double shift = -std::numeric_limits<double>::infinity();
  for (double l : log_e)
    if (std::isfinite(l)) shift = std::max(shift, l);
  if (!std::isfinite(shift)) throw NumericalError("explicit_log: no path reached the barrier");

  // Alive at node k: the point with index k is a grid node strictly before tau.
  const auto alive = [&](const Trajectory& tr, std::size_t k) {
    return k + 1 < tr.size() || (tr.truncated && k < tr.size());
  };
  std::vector<std::vector<double>> m(n);
  for (std::size_t p = 0; p < n; ++p) {
    m[p].assign(out.paths[p].size(), kNaN);
    if (!out.paths[p].truncated) m[p].back() = std::exp(log_e[p] - shift);
  }
  std::vector<double> x, y, target;
  std::vector<std::size_t> ids;
  std::optional<PolyFit> prev;
  for (std::size_t k = grid.n_nodes(); k-- > 0;) {
    x.clear();
    y.clear();
    ids.clear();
    for (std::size_t p = 0; p < n; ++p) {
      const auto& tr = out.paths[p];
      if (!alive(tr, k)) continue;
      ids.push_back(p);
      x.push_back(tr.w[k]);
      y.push_back(tr.truncated ? kNaN : std::exp(log_e[p] - shift));
    }
    if (ids.empty()) continue;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (std::isfinite(y[i])) {
        xs.push_back(x[i]);
        ys.push_back(y[i]);
      }
    auto fit = fit_polynomial(xs, ys, {}, cfg.regression);
    if (!fit) fit = prev;
    if (!fit && !ys.empty()) {
      // Too few paths for a polynomial: fall back to the plain mean.
      PolyFit flat;
      flat.beta = Eigen::VectorXd::Constant(1, std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size());
      fit = flat;
    }
    if (!fit) continue;
    prev = fit;
    for (std::size_t i = 0; i < ids.size(); ++i) m[ids[i]][k] = std::max((*fit)(x[i]), 1e-300);
  }
  prev.reset();
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    x.clear();
    target.clear();
    ids.clear();
    for (std::size_t p = 0; p < n; ++p) {
      const auto& tr = out.paths[p];
      if (!alive(tr, k) || k + 1 >= tr.size() || !std::isfinite(m[p][k]) || !std::isfinite(m[p][k + 1])) continue;
      ids.push_back(p);
      x.push_back(tr.w[k]);
      target.push_back((m[p][k + 1] - m[p][k]) * (tr.w[k + 1] - tr.w[k]) / (tr.t[k + 1] - tr.t[k]));
    }
    if (ids.empty()) continue;
    auto fit = fit_polynomial(x, target, {}, cfg.regression);
    if (!fit) fit = prev;
    if (!fit) continue;
    prev = fit;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto& tr = out.paths[ids[i]];
      tr.z[k] = (*fit)(x[i]) / (2.0 * alpha * m[ids[i]][k]);
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    auto& tr = out.paths[p];
    for (std::size_t i = 0; i < tr.size(); ++i)
      if (std::isnan(tr.y[i]) && std::isfinite(m[p][i])) tr.y[i] = (std::log(m[p][i]) + shift) / (2.0 * alpha);
  }
  return out;
}

}  // namespace

SolutionPath explicit_log_solution(double alpha, const TerminalSpec& terminal, const BrownianEnsemble& ensemble,
                                   const ExplicitLogConfig& cfg) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  auto build = [&]() -> SolutionPath {
  if (const auto* h = std::get_if<HittingAffine>(&terminal)) {
    if (cfg.engine != ConditionalEngine::Regression)
      throw std::invalid_argument("hitting terminals need the regression engine");
    return explicit_log_regression_hitting(alpha, *h, ensemble, cfg);
  } else {
    const auto& grid = ensemble.grid();
    Scaled sc;
    sc.log_e.resize(ensemble.n_paths());
    for (std::size_t p = 0; p < ensemble.n_paths(); ++p)
      sc.log_e[p] = 2.0 * alpha * terminal_value(terminal, grid, ensemble.values(p));
    if (cfg.check_moment) check_exponential_moment(sc.log_e);
    sc.shift = *std::max_element(sc.log_e.begin(), sc.log_e.end());
    if (cfg.engine == ConditionalEngine::GaussHermite) {
      std::function<double(double)> phi;
      if (const auto* e = std::get_if<EndpointFunctional>(&terminal)) {
        phi = e->phi;
      } else if (const auto* s = std::get_if<SquareEndpoint>(&terminal)) {
        const double f1 = square_endpoint_f(s->k, 1.0);
        if (std::abs(grid.horizon() - 1.0) > 1e-12)
          throw std::invalid_argument("square-endpoint terminal needs horizon 1");
        phi = [f1](double x) { return 0.5 * x * x / f1; };
      } else {
        throw std::invalid_argument("the Gauss-Hermite engine needs a terminal of the form phi(W_T)");
      }
      return explicit_log_gauss_hermite(alpha, phi, ensemble, cfg);
    } else {
      return explicit_log_regression_grid(alpha, terminal, ensemble, cfg, sc);
    }
  }
  };
  SolutionPath out = build();
  out.kind = SolutionKind::ExplicitLog;
  out.label = fmt::format("explicit_log{{alpha={},engine={}}}", num(alpha),
                          cfg.engine == ConditionalEngine::Regression ? "regression" : "gauss_hermite");
  out.log_m_alpha = alpha;
  return out;
}

SolutionPath time_change_solution(const SolutionPath& solution, const BrownianEnsemble& tilde) {
  const TimeGrid u = inverse_time_change_grid(tilde.grid().n_steps());
  if (!(solution.grid == u)) throw std::invalid_argument("solution does not live on the time-changed grid of tilde");
  if (solution.n_paths() != tilde.n_paths()) throw std::invalid_argument("path counts differ");
  const auto& s_grid = tilde.grid();
  SolutionPath out{s_grid, std::vector<Trajectory>(solution.n_paths())};
  for (std::size_t p = 0; p < solution.n_paths(); ++p) {
    const auto& src = solution.paths[p];
    auto& dst = out.paths[p];
    const auto wt = tilde.values(p);
    double w_tilde = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double s = rho(src.t[i]);
      if (i > 0) {
        const std::size_t kk = u.first_node_at_or_after(src.t[i]);
        if (kk < u.n_nodes() && std::abs(u[kk] - src.t[i]) <= 1e-12 * std::max(1.0, src.t[i])) {
          w_tilde = wt[kk];  // grid node: exact value of tilde
        } else {
          w_tilde += (src.w[i] - src.w[i - 1]) / time_change_rate(s_grid[left_node(u, src.t[i - 1])]);
        }
      }
      dst.push(s, w_tilde, src.y[i], time_change_rate(s) * src.z[i]);
    }
    dst.xi = src.xi;
    dst.truncated = src.truncated;
    dst.tau = std::isnan(src.tau) ? src.tau : rho(src.tau);
  }
  out.kind = SolutionKind::TimeChanged;
  out.label = "time_changed{" + solution.label + "}";
  out.log_m_alpha = solution.log_m_alpha;
  return out;
}

}  // namespace mbsde
