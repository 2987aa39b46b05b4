#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "steik/error.hpp"
#include "steik/pdeflow.hpp"
#include "support.hpp"

using namespace steik;
using Eigen::ArrayXd;
using Eigen::Vector2d;
using std::numbers::pi;

namespace {

template <class Fn>
Grid grid2(int n, double h, Boundary b, Fn fn) {
  Grid g = Grid::make_2d(n, n, h, b, Vector2d::Constant(-0.5 * n * h));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) g.at(i, j) = fn(g.x(i), g.y(j));
  return g;
}

template <class Fn>
Grid grid1(int n, double h, Boundary b, Fn fn) {
  Grid g = Grid::make_1d(n, h, b, -0.5 * n * h);
  for (int i = 0; i < n; ++i) g.at(i) = fn(g.x(i));
  return g;
}

// Largest |v| over cells at least `margin` cells from every edge.
double interior_max(const Grid& g, const ArrayXd& v, int margin) {
  double m = 0;
  for (int j = g.dims == 2 ? margin : 0; j < (g.dims == 2 ? g.ny - margin : 1); ++j)
    for (int i = margin; i < g.nx - margin; ++i) m = std::max(m, std::abs(v(g.index(i, j))));
  return m;
}

FlowConfig flow(double ae, double ad, double al, PNorm p = PNorm::L2) {
  FlowConfig c;
  c.alpha_e = ae;
  c.alpha_d = ad;
  c.alpha_l = al;
  c.p_eik = c.p_reg = p;
  c.gate = GatePolicy::Ignore;
  return c;
}

// Amplitude of sin(k x) on a periodic 1D grid (exact eigenvector of Delta_h).
double mode_amplitude(const Grid& g, double k) {
  double s = 0, n = 0;
  for (int i = 0; i < g.nx; ++i) {
    const double b = std::sin(k * g.x(i));
    s += g.at(i) * b;
    n += b * b;
  }
  return s / n;
}

double log_cosh(double x) { return std::abs(x) + std::log1p(std::exp(-2 * std::abs(x))) - std::log(2.0); }

}  // namespace

TEST_CASE("kappa_e and sgn_smooth") {
  CHECK(kappa_e(1.0, PNorm::L2) == 0.0);
  CHECK(kappa_e(2.0, PNorm::L2) == -0.5);
  CHECK(kappa_e(0.5, PNorm::L1) == 2.0);
  CHECK(kappa_e(2.0, PNorm::L1) == -0.5);
  CHECK(kappa_e(0.0, PNorm::L2) == doctest::Approx(1e12));
  CHECK(sgn_smooth(0.0, 100) == 0.0);
  CHECK(sgn_smooth(0.01, 100) == doctest::Approx(2.0 / (1.0 + std::exp(-1.0)) - 1.0).epsilon(1e-14));
  CHECK(sgn_smooth(1.0, 100) == doctest::Approx(1.0));
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(Grid::make_2d(4, 4, 0.1, Boundary::Periodic).validate(), ContractError);
  CHECK_THROWS_AS(Grid::make_2d(8, 8, 0.0, Boundary::Periodic).validate(), ContractError);
  Grid g = Grid::make_1d(8, 0.1, Boundary::Periodic);
  g.at(3) = std::nan("");
  CHECK_THROWS_AS(g.validate(), NumericalError);
  FlowConfig c;
  c.dt = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("eikonal flow examples") {
  const double h = 1.0 / 32;
  const Grid plane = grid2(32, h, Boundary::NeumannZero, [](double x, double) { return x - 0.3; });
  FlowConfig c = flow(1, 0, 0);
  c.dt = 0.2 * h * h;
  CHECK((eikonal_flow_step(plane, c).values - plane.values).abs().maxCoeff() < 1e-14);

  const Grid twice = grid2(32, h, Boundary::NeumannZero, [](double x, double) { return 2 * (x - 0.3); });
  CHECK(interior_max(twice, eikonal_rate(twice, c), 1) < 1e-10);

  const Grid sq = grid1(64, h, Boundary::NeumannZero, [](double x) { return x * x; });
  const ArrayXd rate = eikonal_rate(sq, c);
  for (int i = 2; i < 62; ++i)
    if (std::abs(sq.x(i)) > 2 * h) CHECK(rate(i) == doctest::Approx(-2.0).epsilon(1e-9));

  // Backward diffusion where |grad u| > 1 amplifies a small ripple; the
  // interior is measured so the boundary layer of the ramp does not count.
  auto ramp = [](double x, double) { return 2 * x; };
  Grid steep = grid2(64, h, Boundary::NeumannZero, [&](double x, double y) {
    return ramp(x, y) + 1e-6 * std::sin(24 * pi * x) * std::sin(24 * pi * y);
  });
  const Grid base = grid2(64, h, Boundary::NeumannZero, ramp);
  FlowConfig r = flow(1, 0, 0);
  r.dt = 0.5 * eikonal_gate(steep, r);
  const double before = interior_max(steep, steep.values - base.values, 16);
  for (int s = 0; s < 10; ++s) steep = eikonal_flow_step(steep, r);
  CHECK(interior_max(steep, steep.values - base.values, 16) > 10 * before);
}

TEST_CASE("p=1 eikonal flow has no normal component in 1D") {
  const double h = 1.0 / 128;
  const Grid g = grid1(256, h, Boundary::Periodic, [](double x) { return std::sin(pi * x) / (0.8 * pi); });
  const ArrayXd rate = eikonal_rate(g, flow(1, 0, 0, PNorm::L1));
  // Kinks: u' = 0 at x = +-0.5 and |u'| = 1 where |cos(pi x)| = 0.8.
  const double k1 = std::acos(0.8) / pi;
  for (int i = 0; i < g.nx; ++i) {
    const double x = g.x(i);
    double d = 1.0;
    for (double kink : {0.5, -0.5, k1, -k1, 1 - k1, k1 - 1}) d = std::min(d, std::abs(x - kink));
    if (d > 3 * h) CHECK(std::abs(rate(i)) <= h);
  }
}

TEST_CASE("divergence flow") {
  const double h = 1.0 / 32;
  const Grid harmonic = grid2(32, h, Boundary::NeumannZero, [](double x, double y) { return x * x - y * y; });
  CHECK(interior_max(harmonic, divergence_rate(harmonic, flow(0, 1, 0)), 3) < 1e-9);

  const int n = 64;
  const double k = 2 * pi * 5 / (n * h);
  const Grid wave = grid1(n, h, Boundary::Periodic, [&](double x) { return std::sin(k * x); });
  FlowConfig c = flow(0, 0.7, 0);
  c.dt = 0.5 * divergence_gate(wave, c);
  const Grid next = divergence_flow_step(wave, c);
  const double sigma = discrete_symbol(Eigen::VectorXd::Constant(1, k), h);
  const double factor = 1 - 0.7 * c.dt * sigma * sigma;
  CHECK(mode_amplitude(next, k) == doctest::Approx(factor).epsilon(1e-12));
  CHECK((next.values - factor * wave.values).abs().maxCoeff() < 1e-12);

  // A steep smoothed sign reproduces the hard sign where Delta_h u keeps its sign.
  const Grid s = grid2(32, h, Boundary::Periodic,
                       [](double x, double y) { return std::sin(2 * pi * x) * std::sin(2 * pi * y); });
  FlowConfig soft = flow(0, 1, 0, PNorm::L1);
  soft.sgn_slope = 1e6;
  const ArrayXd rate = divergence_rate(s, soft);
  const ArrayXd lap = laplacian(s);
  Grid sign = s;
  sign.values = lap.sign();
  const ArrayXd hard = -laplacian(sign);
  int compared = 0;
  for (int j = 0; j < 32; ++j)
    for (int i = 0; i < 32; ++i) {
      bool separated = true;
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di)
          separated = separated && std::abs(lap(((i + di + 32) % 32) + 32 * ((j + dj + 32) % 32))) > 1e-3;
      if (!separated) continue;
      ++compared;
      CHECK(rate(s.index(i, j)) == hard(s.index(i, j)));
    }
  CHECK(compared > 100);
}

TEST_CASE("directional flow") {
  const Grid plane = grid2(32, 0.1, Boundary::NeumannZero, [](double x, double y) { return 0.6 * x - 0.8 * y; });
  for (DirectionalMode m : {DirectionalMode::Dominant, DirectionalMode::Exact})
    for (PNorm p : {PNorm::L1, PNorm::L2}) {
      FlowConfig c = flow(0, 0, 1, p);
      c.directional_mode = m;
      CHECK(interior_max(plane, directional_rate(plane, c), 4) < 1e-8);
    }

  SUBCASE("exact mode vanishes on a circle SDF at second order") {
    // p=1 saturates the smoothed sign until the O(h^2) residual is small, so it starts finer.
    for (PNorm p : {PNorm::L1, PNorm::L2}) {
      FlowConfig c = flow(0, 0, 1, p);
      c.directional_mode = DirectionalMode::Exact;
      double prev = 0;
      for (int level = 0; level < 3; ++level) {
        const int n = (p == PNorm::L2 ? 32 : 128) << level;
        const double hh = 2.0 / n;
        const Grid g = grid2(n, hh, Boundary::NeumannZero, [](double x, double y) { return std::hypot(x, y) - 0.5; });
        const ArrayXd rate = directional_rate(g, c);
        double m = 0;
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i) {
            const double r = std::hypot(g.x(i), g.y(j));
            if (r > 0.3 && r < 0.7) m = std::max(m, std::abs(rate(g.index(i, j))));
          }
        if (level > 0) CHECK(m < prev / 3);
        prev = m;
      }
    }
  }

  SUBCASE("the flow lowers the discrete directional energy") {
    for (DirectionalMode mode : {DirectionalMode::Dominant, DirectionalMode::Exact})
      for (PNorm p : {PNorm::L1, PNorm::L2}) {
        Grid g = grid1(64, 1.0 / 64, Boundary::Periodic, [](double x) { return std::cos(2 * pi * x); });
        FlowConfig c = flow(0, 0, 1, p);
        c.directional_mode = mode;
        c.gate = GatePolicy::Abort;
        c.dt = 0.5 * directional_gate(g, c);
        auto energy = [&](const Grid& u) {
          double e = 0;
          for (double r : laplacian(u))
            e += p == PNorm::L2 ? 0.5 * r * r : 2.0 / c.sgn_slope * log_cosh(0.5 * c.sgn_slope * r);
          return e;
        };
        double e = energy(g);
        for (int s = 0; s < 20; ++s) {
          g = directional_flow_step(g, c);
          const double next = energy(g);
          CHECK(next < e);
          e = next;
        }
      }
  }
}

TEST_CASE("combined step") {
  const Grid g = init_grid_sdf(ShapeSpec::circle(0.4), 32, 1.0 / 16, Perturbation{0.01, 0, 3});
  FlowConfig none = flow(0, 0, 0);
  CHECK(combined_step(g, none).values.cwiseEqual(g.values).all());

  FlowConfig c = flow(1.0, 0.3, 0.2);
  c.dt = 1e-6;
  const ArrayXd sum = eikonal_flow_step(g, c).values + divergence_flow_step(g, c).values +
                      directional_flow_step(g, c).values - 2 * g.values;
  CHECK((combined_step(g, c).values - sum).abs().maxCoeff() < 1e-13);
}

TEST_CASE("gates") {
  const Grid g = grid2(16, 0.1, Boundary::Periodic, [](double x, double) { return 0.5 * x; });
  FlowConfig c = flow(1, 0, 0);
  CHECK(eikonal_gate(g, c) == doctest::Approx(0.01 / 4));  // kappa_e = 1 at |g| = 0.5
  c.alpha_d = 2;
  CHECK(divergence_gate(g, c) == doctest::Approx(1e-4 / 64));
  CHECK(combined_gate(g, c) == doctest::Approx(1 / (4 / 0.01 + 64 / 1e-4)));
  CHECK(combined_gate(g, c) <= std::min(eikonal_gate(g, c), divergence_gate(g, c)));
  CHECK(std::isinf(directional_gate(g, c)));
  const Grid g1 = grid1(16, 0.1, Boundary::Periodic, [](double x) { return x; });
  FlowConfig d = flow(0, 1, 0);
  CHECK(divergence_gate(g1, d) == doctest::Approx(1e-4 / 8));
  d.p_reg = PNorm::L1;
  CHECK(divergence_gate(g1, d) == doctest::Approx(1e-4 / (8 * 50)));

  FlowConfig strict = flow(1, 0, 0);
  strict.gate = GatePolicy::Abort;
  strict.dt = 1.0;
  CHECK_THROWS_AS(eikonal_flow_step(g, strict), ContractError);
  strict.gate = GatePolicy::Warn;
  CHECK_NOTHROW(eikonal_flow_step(g, strict));
}

TEST_CASE("amplifiers") {
  const Eigen::VectorXd one = Eigen::VectorXd::Constant(1, 1.0);
  CHECK(von_neumann_amplifier(1, -1, 0, 0, one) == 1.0);
  for (double w : {0.25, 0.5, 0.99, 1.01, 2.0, 5.0}) {
    const double a = von_neumann_amplifier(1, -1, 1, 1, Eigen::VectorXd::Constant(1, w));
    CHECK((a > 0) == (w < 1));
  }
  for (double w : {0.1, 1.0, 10.0})
    for (double ad : {0.0, 0.5, 3.0}) CHECK(von_neumann_amplifier(2, 1, ad, 1, Eigen::Vector2d(w, -w)) <= 0);
  const double h = 0.01;
  const Eigen::VectorXd w = Eigen::Vector2d(3, 4);
  CHECK(discrete_symbol(w, h) == doctest::Approx(25).epsilon(1e-3));
  CHECK(discrete_amplifier(1, -1, 0.1, 1, w, h) ==
        doctest::Approx(discrete_symbol(w, h) - 0.1 * std::pow(discrete_symbol(w, h), 2)).epsilon(1e-14));
}

TEST_CASE("linearized flow follows the discrete amplifier per mode") {
  const int n = 64;
  const double h = 1.0 / n;
  for (int m : {1, 7, 20, 31}) {
    const double k = 2 * pi * m;
    const Grid g = grid1(n, h, Boundary::Periodic, [&](double x) { return std::sin(k * x); });
    const double dt = 1e-7;
    const double a = discrete_amplifier(1, -1, 1e-4, 1, Eigen::VectorXd::Constant(1, k), h);
    const Grid next = linearized_flow_step(g, 1, -1, 1e-4, 1, dt);
    CHECK(mode_amplitude(next, k) == doctest::Approx(1 + dt * a).epsilon(1e-12));
  }
}

TEST_CASE("spectral energies") {
  Grid c = Grid::make_2d(16, 16, 0.1, Boundary::Periodic);
  c.values.setConstant(3.0);
  const BandEnergies e = spectral_energies(c);
  CHECK(e.high == 0.0);
  CHECK(e.low == doctest::Approx(9.0 * 256));

  Grid nyq = Grid::make_1d(32, 0.1, Boundary::Periodic);
  for (int i = 0; i < 32; ++i) nyq.at(i) = (i % 2 ? -1.0 : 1.0);
  const BandEnergies en = spectral_energies(nyq);
  CHECK(en.high == doctest::Approx(32.0));
  CHECK(en.low + en.mid < 1e-20);

  Grid noise = Grid::make_2d(24, 18, 0.1, Boundary::NeumannZero);
  Rng rng(1);
  for (double& v : noise.values) v = rng.normal();
  const BandEnergies b = spectral_energies(noise);
  CHECK(std::abs(b.total() - noise.values.square().sum()) < 1e-9 * noise.values.square().sum());
  CHECK(b.low > 0);
  CHECK(b.mid > 0);
  CHECK(b.high > 0);
  Grid odd = Grid::make_1d(33, 0.1, Boundary::Periodic);
  for (double& v : odd.values) v = rng.normal();
  CHECK(std::abs(spectral_energies(odd).total() - odd.values.square().sum()) < 1e-9 * odd.values.square().sum());
}

TEST_CASE("mean curvature") {
  double prev = 0;
  for (int level = 0; level < 3; ++level) {
    const int n = 64 << level;
    const double h = 2.0 / n;
    const Grid g = grid2(n, h, Boundary::NeumannZero, [](double x, double y) { return std::hypot(x, y) - 0.5; });
    const Grid H = mean_curvature_field(g);
    const ArrayXd lap = laplacian(g);
    double err = 0, vs_lap = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double r = std::hypot(g.x(i), g.y(j));
        if (r < 0.3 || r > 0.8) continue;
        err = std::max(err, std::abs(H.at(i, j) - 1 / r));
        vs_lap = std::max(vs_lap, std::abs(H.at(i, j) - lap(g.index(i, j))));
      }
    CHECK(err < 2 * h);
    CHECK(vs_lap < 2 * h);
    if (level > 0) CHECK(err < prev);
    prev = err;
  }
  const Grid plane = grid2(32, 0.1, Boundary::NeumannZero, [](double x, double y) { return 0.6 * x + 0.8 * y; });
  CHECK(interior_max(plane, mean_curvature_field(plane).values, 2) < 1e-12);
}

TEST_CASE("grid SDF initialization") {
  const Grid c = init_grid_sdf(ShapeSpec::circle(0.5), 9, 0.25);
  CHECK(c.x(8) == 1.0);
  CHECK(c.y(4) == 0.0);
  CHECK(c.at(8, 4) == 0.5);
  const Grid s = init_grid_sdf(ShapeSpec::square(0.3), 9, 0.25);
  CHECK(s.at(4, 4) == doctest::Approx(-0.3).epsilon(1e-15));

  const ShapeSpec flake = ShapeSpec::snowflake_shape();
  Rng rng(4);
  const auto& v = flake.polygon.vertices;
  for (int k = 0; k < 1000; ++k) {
    const Vector2d p(rng.uniform(-1, 1), rng.uniform(-1, 1));
    double d = 1e300;
    int winding = 0;
    for (std::size_t e = 0; e < v.size(); ++e) {
      const Vector2d a = v[e], b = v[(e + 1) % v.size()];
      const double t = std::clamp((p - a).dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
      d = std::min(d, (a + t * (b - a) - p).norm());
      const double cross = (b.x() - a.x()) * (p.y() - a.y()) - (p.x() - a.x()) * (b.y() - a.y());
      if (a.y() <= p.y() && b.y() > p.y() && cross > 0) ++winding;
      if (a.y() > p.y() && b.y() <= p.y() && cross < 0) --winding;
    }
    CHECK(shape_sdf(flake, p) == doctest::Approx(winding != 0 ? -d : d).epsilon(1e-12));
  }

  shapes::Polygon line;
  line.vertices = {Vector2d(0, 0), Vector2d(1, 0), Vector2d(2, 0)};
  CHECK_THROWS_AS(init_grid_sdf(ShapeSpec::from_polygon(line), 16, 0.1), ContractError);

  const Grid p1 = init_grid_sdf(ShapeSpec::circle(0.5), 16, 0.1, Perturbation{0.05, 0, 9});
  const Grid p2 = init_grid_sdf(ShapeSpec::circle(0.5), 16, 0.1, Perturbation{0.05, 0, 9});
  const Grid clean = init_grid_sdf(ShapeSpec::circle(0.5), 16, 0.1);
  CHECK(p1.values.cwiseEqual(p2.values).all());
  CHECK((p1.values - clean.values).abs().maxCoeff() <= 0.05);
  CHECK((p1.values - clean.values).abs().maxCoeff() > 0.0);
}

TEST_CASE("evolve") {
  const Grid g = init_grid_sdf(ShapeSpec::circle(0.5), 32, 1.0 / 16);
  FlowConfig c = flow(1, 0, 0);
  const EvolveResult zero = evolve(g, c, 0, 10);
  REQUIRE(zero.snapshots.size() == 1);
  CHECK(zero.snapshots[0].grid.values.cwiseEqual(g.values).all());

  // Biharmonic smoothing within its gate damps every nonzero mode at every step.
  const Grid rough = grid2(32, 1.0 / 32, Boundary::Periodic, [](double x, double y) {
    return 0.05 * std::sin(2 * pi * x) + 0.01 * std::sin(24 * pi * x) * std::cos(20 * pi * y);
  });
  FlowConfig d = flow(0, 1, 0);
  d.gate = GatePolicy::Abort;
  d.dt = 0.5 * divergence_gate(rough, d);
  const EvolveResult r = evolve(rough, d, 50, 5);
  CHECK(r.snapshots.size() == 11);
  CHECK_FALSE(r.diverged);
  for (std::size_t k = 1; k < r.snapshots.size(); ++k) {
    const double prev = r.snapshots[k - 1].diag.bands.high;
    CHECK((r.snapshots[k].diag.bands.high < prev || prev < 1e-28));
  }

  FlowConfig wild = flow(1, 0, 0);
  wild.dt = 1e3;
  const Grid steep = grid2(32, 1.0 / 32, Boundary::NeumannZero,
                           [](double x, double y) { return 3 * x + 0.1 * std::sin(30 * x) * std::cos(30 * y); });
  const EvolveResult bad = evolve(steep, wild, 500, 100);
  CHECK(bad.diverged);
  CHECK(bad.diverged_at > 0);
  CHECK(bad.snapshots.back().grid.values.allFinite());
  CHECK(bad.snapshots.back().step == bad.diverged_at - 1);
}

TEST_CASE("writers") {
  const auto dir = test::scratch_dir("pde_writers");
  const Grid g = init_grid_sdf(ShapeSpec::circle(0.5), 16, 0.1);
  write_pgm(g, (dir / "a.pgm").string());
  write_grid_csv(g, (dir / "a.csv").string());
  const EvolveResult r = evolve(g, flow(1, 0, 0), 2, 1);
  write_diagnostics_csv(r.snapshots, (dir / "d.csv").string());
  CHECK(std::filesystem::file_size(dir / "a.pgm") == std::string("P5\n16 16\n255\n").size() + 256);
  std::ifstream in(dir / "d.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,low,mid,high,max_abs,eik_residual");
  CHECK_THROWS_AS(write_pgm(g, "/nonexistent/dir/x.pgm"), IoError);
}
