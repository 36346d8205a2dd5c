#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mbsde/paths.hpp"
#include "mbsde/stats.hpp"

using namespace mbsde;

TEST_CASE("uniform grids") {
  const auto g = build_grid(1.0, 4);
  const std::vector<double> want{0, 0.25, 0.5, 0.75, 1.0};
  REQUIRE(g.n_nodes() == want.size());
  for (std::size_t k = 0; k < want.size(); ++k) CHECK(g[k] == doctest::Approx(want[k]).epsilon(1e-15));

  const auto one = build_grid(1.0, 1);
  CHECK(one.n_nodes() == 2);
  CHECK(one[1] == 1.0);

  const auto two = build_grid(2.0, 8);
  CHECK(two.n_nodes() == 9);
  for (std::size_t k = 0; k < two.n_steps(); ++k) CHECK(two.dt(k) == doctest::Approx(0.25));

  CHECK_THROWS_AS(build_grid(1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(-1.0, 4), std::invalid_argument);
}

TEST_CASE("geometric grid resolves the origin") {
  const auto g = build_geometric_grid(1.0, 1e-4, 40);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == doctest::Approx(1e-4));
  CHECK(g.horizon() == doctest::Approx(1.0));
  CHECK(g.dt(2) / g.dt(1) == doctest::Approx(g.dt(30) / g.dt(29)).epsilon(1e-9));
}

TEST_CASE("ensembles are reproducible and independent of the worker count") {
  const auto grid = build_grid(1.0, 20);
  const auto a = simulate_ensemble(grid, 64, 42, 1);
  const auto b = simulate_ensemble(grid, 64, 42, 3);
  const auto c = simulate_ensemble(grid, 64, 43, 1);
  bool same = true, differs = false;
  for (std::size_t p = 0; p < 64; ++p)
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
      same = same && a.value(p, k) == b.value(p, k);
      differs = differs || a.value(p, k) != c.value(p, k);
    }
  CHECK(same);
  CHECK(differs);
  for (std::size_t p = 0; p < 64; ++p) CHECK(a.value(p, 0) == 0.0);
}

TEST_CASE("terminal moments of the ensemble") {
  const auto grid = build_grid(2.0, 10);
  const auto e = simulate_ensemble(grid, 40000, 5);
  RunningStats s;
  RunningStats q;
  for (std::size_t p = 0; p < e.n_paths(); ++p) {
    const double w = e.value(p, 10);
    s.add(w);
    q.add(w * w);
  }
  CHECK(std::abs(s.mean) < 4.0 * std::sqrt(2.0 / 40000.0));
  CHECK(q.mean == doctest::Approx(2.0).epsilon(4.0 * q.std_error() / 2.0));
}

TEST_CASE("deterministic crossings") {
  const auto grid = build_grid(2.0, 8);
  const std::vector<double> zero(grid.n_nodes(), 0.0);
  const Philox4x32 gen(1);
  const auto hit = detect_hitting(grid, zero, AffineBarrier::rho_c(1.0), false, PathStream(gen, 0));
  REQUIRE(!hit.truncated());
  CHECK(hit.tau == doctest::Approx(1.0).epsilon(1e-14));

  // line starting above the path: immediate hit
  const auto start = detect_hitting(grid, zero, AffineBarrier::rho_c(-1.0), false, PathStream(gen, 0));
  CHECK(start.tau == 0.0);

  // never reached inside the grid
  const auto never = detect_hitting(grid, zero, AffineBarrier::rho_c(3.0), false, PathStream(gen, 0));
  CHECK(never.truncated());
}

TEST_CASE("bridge crossing probability") {
  // From d0 = d1 = 0.1 over dt = 0.02 the bridge crosses with probability e^{-1}.
  const AffineBarrier flat{0.0, 0.0};
  Philox4x32 gen(9);
  int fired = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    PathStream s(gen, static_cast<std::uint64_t>(i));
    const auto c = cross_interval(flat, 0.0, 0.1, 0.02, 0.1, true, [&] { return s.bridge_uniform(0, 0); });
    fired += c.hit ? 1 : 0;
    if (c.hit) CHECK(c.by_bridge);
  }
  const double p = std::exp(-1.0);
  CHECK(std::abs(fired / double(n) - p) < 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("mean hitting time of the sloped barrier") {
  // Wald: E W_tau = 0 = b E tau - 1.
  const auto grid = build_grid(30.0, 3000);
  const auto hits = simulate_hitting_times(AffineBarrier::tau_b(1.0), grid, 20000, 3, true);
  RunningStats s;
  for (const auto& h : hits)
    if (!h.truncated()) s.add(h.tau);
  CHECK(s.mean == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("streamed hitting times match stored paths") {
  const auto grid = build_grid(5.0, 500);
  const auto hits = simulate_hitting_times(AffineBarrier::tau_b(1.0), grid, 50, 11, true);
  const auto ens = simulate_ensemble(grid, 50, 11);
  for (std::size_t p = 0; p < 50; ++p) {
    const auto h = detect_hitting(ens, p, AffineBarrier::tau_b(1.0), true);
    CHECK(h.truncated() == hits[p].truncated());
    if (!h.truncated()) CHECK(h.tau == hits[p].tau);
  }
}

TEST_CASE("time change") {
  CHECK(rho(rho_inverse(0.4)) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(rho(3.0) == 0.75);
  CHECK(rho(INFINITY) == 1.0);
  CHECK_THROWS_AS(rho_inverse(1.0), std::invalid_argument);

  const auto g = inverse_time_change_grid(10);
  CHECK(g.n_nodes() == 10);
  CHECK(g[5] == doctest::Approx(1.0));  // s = 0.5 -> u = 1

  // Increments are h(s_k) dW~ (left point), so Var W_{u_5} = sum_{k<5} h(s_k)^2 ds.
  const auto tilde = simulate_ensemble(build_grid(1.0, 10), 40000, 8);
  const auto changed = time_changed_ensemble(tilde);
  double var = 0.0;
  for (int k = 0; k < 5; ++k) var += 0.1 * std::pow(time_change_rate(0.1 * k), 2);
  RunningStats q;
  for (std::size_t p = 0; p < changed.n_paths(); ++p) q.add(std::pow(changed.value(p, 5), 2));
  CHECK(std::abs(q.mean - var) < 4.0 * q.std_error());
}

TEST_CASE("values are prefix sums of increments") {
  const auto e = simulate_ensemble(build_grid(1.0, 30), 10, 2);
  for (std::size_t p = 0; p < 10; ++p) {
    double acc = 0.0;
    const auto inc = e.increments(p);
    for (std::size_t k = 0; k < inc.size(); ++k) {
      acc += inc[k];
      CHECK(e.value(p, k + 1) == acc);
    }
  }
}

TEST_CASE("bridge correction only moves hits earlier") {
  const auto grid = build_grid(10.0, 200);
  const auto e = simulate_ensemble(grid, 500, 4);
  for (std::size_t p = 0; p < e.n_paths(); ++p) {
    const auto plain = detect_hitting(e, p, AffineBarrier::tau_b(1.0), false);
    const auto corrected = detect_hitting(e, p, AffineBarrier::tau_b(1.0), true);
    if (plain.truncated()) continue;
    REQUIRE(!corrected.truncated());
    CHECK(corrected.tau <= plain.tau);
  }
}

TEST_CASE("tau_b and rho_b / b^2 share their law") {
  // E exp(-tau_2) against E exp(-rho_2 / 4), both exp(-2 (sqrt(3/2) - 1)).
  const auto grid = build_grid(20.0, 20000);
  auto laplace = [&](const AffineBarrier& bar, double scale, std::uint64_t seed) {
    RunningStats s;
    for (const auto& h : simulate_hitting_times(bar, grid, 20000, seed, true))
      s.add(h.truncated() ? 0.0 : std::exp(-h.tau * scale));
    return s;
  };
  const auto tau = laplace(AffineBarrier::tau_b(2.0), 1.0, 21);
  const auto sigma = laplace(AffineBarrier::rho_c(2.0), 0.25, 22);
  const double se = std::hypot(tau.std_error(), sigma.std_error());
  CHECK(std::abs(tau.mean - sigma.mean) < 3.0 * se);
  CHECK(std::abs(tau.mean - std::exp(-2.0 * (std::sqrt(1.5) - 1.0))) < 3.0 * tau.std_error() + 2e-3);
}
