#include "steik/pdeflow.hpp"

#include <fftw3.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <numbers>

#include "steik/error.hpp"
#include "steik/rng.hpp"

namespace steik {

namespace {

using Eigen::ArrayXd;
using Eigen::Index;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Reads a field with the grid's boundary rule applied to out-of-range indices:
// periodic wrap, or mirror about the boundary face (zero normal derivative).
class Stencil {
 public:
  Stencil(const Grid& g, const ArrayXd& v) : g_(g), v_(v) {}
  double operator()(int i, int j = 0) const { return v_(wrap(i, g_.nx) + static_cast<Index>(g_.nx) * wrap(j, g_.ny)); }

  double dx(int i, int j) const { return ((*this)(i + 1, j) - (*this)(i - 1, j)) / (2.0 * g_.h); }
  double dy(int i, int j) const { return ((*this)(i, j + 1) - (*this)(i, j - 1)) / (2.0 * g_.h); }
  double dxx(int i, int j) const { return ((*this)(i + 1, j) - 2.0 * (*this)(i, j) + (*this)(i - 1, j)) / (g_.h * g_.h); }
  double dyy(int i, int j) const { return ((*this)(i, j + 1) - 2.0 * (*this)(i, j) + (*this)(i, j - 1)) / (g_.h * g_.h); }
  double dxy(int i, int j) const {
    return ((*this)(i + 1, j + 1) - (*this)(i + 1, j - 1) - (*this)(i - 1, j + 1) + (*this)(i - 1, j - 1)) /
           (4.0 * g_.h * g_.h);
  }
  double lap(int i, int j) const { return g_.dims == 1 ? dxx(i, j) : dxx(i, j) + dyy(i, j); }

 private:
  int wrap(int i, int n) const {
    if (n == 1) return 0;
    if (g_.boundary == Boundary::Periodic) return ((i % n) + n) % n;
    if (i < 0) return -i - 1;
    if (i >= n) return 2 * n - 1 - i;
    return i;
  }
  const Grid& g_;
  const ArrayXd& v_;
};

template <class Fn>
ArrayXd per_cell(const Grid& g, Fn fn) {
  ArrayXd out(g.size());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) out(g.index(i, j)) = fn(i, j);
  return out;
}

ArrayXd laplacian_of(const Grid& g, const ArrayXd& v) {
  const Stencil s(g, v);
  return per_cell(g, [&](int i, int j) { return s.lap(i, j); });
}

struct LocalJet {
  double ux = 0, uy = 0, uxx = 0, uyy = 0, uxy = 0;
};

LocalJet local_jet(const Grid& g, const Stencil& s, int i, int j) {
  LocalJet d;
  d.ux = s.dx(i, j);
  d.uxx = s.dxx(i, j);
  if (g.dims == 2) {
    d.uy = s.dy(i, j);
    d.uyy = s.dyy(i, j);
    d.uxy = s.dxy(i, j);
  }
  return d;
}

// Second derivative along the unit gradient.
double normal_second(const LocalJet& d, double eps) {
  const double g2 = d.ux * d.ux + d.uy * d.uy;
  const double q = d.ux * d.ux * d.uxx + 2.0 * d.ux * d.uy * d.uxy + d.uy * d.uy * d.uyy;
  return q / std::max(g2, eps);
}

double directional_factor(double r, const FlowConfig& cfg) {
  if (cfg.p_reg == PNorm::L2) return 1.0;
  const double x = cfg.sgn_slope * r;
  if (std::abs(x) < 1e-8) return 0.5 * cfg.sgn_slope;
  return sgn_smooth(r, cfg.sgn_slope) / r;
}

double fourth_order_gate(const Grid& g, double coef) {
  if (!(coef > 0.0)) return kInf;
  const double h2 = g.h * g.h;
  return h2 * h2 / (8.0 * g.dims * g.dims * coef);
}

double second_order_gate(const Grid& g, double coef) {
  if (!(coef > 0.0)) return kInf;
  return g.h * g.h / (2.0 * g.dims * coef);
}

void check_gate(const FlowConfig& cfg, double gate, const char* what) {
  if (cfg.gate == GatePolicy::Ignore || cfg.dt <= gate) return;
  const std::string msg = std::string(what) + " step dt = " + std::to_string(cfg.dt) +
                          " exceeds the explicit stability gate " + std::to_string(gate);
  if (cfg.gate == GatePolicy::Abort) throw ContractError(msg);
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true)) std::cerr << "warning: " << msg << '\n';
}

Grid advanced(const Grid& g, const ArrayXd& increment) {
  Grid out = g;
  out.values += increment;
  return out;
}

// Flux kappa_e(|g|) g_x across the face between (i, j) and (i + 1, j); the
// tangential component is averaged from the two adjacent cells.
double face_flux(const Grid& g, const Stencil& s, int i, int j, bool along_x, const FlowConfig& cfg,
                 double* coef = nullptr) {
  double gn, gt = 0.0;
  if (along_x) {
    gn = (s(i + 1, j) - s(i, j)) / g.h;
    if (g.dims == 2) gt = (s(i, j + 1) - s(i, j - 1) + s(i + 1, j + 1) - s(i + 1, j - 1)) / (4.0 * g.h);
  } else {
    gn = (s(i, j + 1) - s(i, j)) / g.h;
    gt = (s(i + 1, j) - s(i - 1, j) + s(i + 1, j + 1) - s(i - 1, j + 1)) / (4.0 * g.h);
  }
  const double mag = std::sqrt(gn * gn + gt * gt);
  const double k = kappa_e(mag, cfg.p_eik, cfg.eps_g);
  if (coef) *coef = std::max(std::abs(k), cfg.p_eik == PNorm::L2 ? 1.0 : 0.0);
  return k * gn;
}

std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

double band_fraction(int k, int n) {
  const int f = std::min(k, n - k);
  return n > 1 ? static_cast<double>(f) / (0.5 * n) : 0.0;
}

}  // namespace

Grid Grid::make_1d(int n, double h, Boundary boundary, double origin_x) {
  Grid g;
  g.dims = 1;
  g.nx = n;
  g.ny = 1;
  g.h = h;
  g.origin = Eigen::Vector2d(origin_x, 0.0);
  g.boundary = boundary;
  g.values = ArrayXd::Zero(n);
  return g;
}

Grid Grid::make_2d(int nx, int ny, double h, Boundary boundary, Eigen::Vector2d origin) {
  Grid g;
  g.dims = 2;
  g.nx = nx;
  g.ny = ny;
  g.h = h;
  g.origin = origin;
  g.boundary = boundary;
  g.values = ArrayXd::Zero(static_cast<Index>(nx) * ny);
  return g;
}

void Grid::validate() const {
  if (dims != 1 && dims != 2) throw ContractError("grid must be 1D or 2D");
  if (nx < 8 || (dims == 2 && ny < 8) || (dims == 1 && ny != 1)) throw ContractError("grid needs n >= 8 per axis");
  if (!(h > 0.0)) throw ContractError("grid spacing must be > 0");
  if (values.size() != static_cast<Index>(nx) * ny) throw ContractError("grid value count does not match its shape");
  if (!values.allFinite()) throw NumericalError("grid contains non-finite values");
}

void FlowConfig::validate() const {
  for (double a : {alpha_e, alpha_d, alpha_l})
    if (!(a >= 0.0) || !std::isfinite(a)) throw ContractError("flow weights must be finite and nonnegative");
  if (!(dt > 0.0)) throw ContractError("dt must be > 0");
  if (!(sgn_slope > 0.0)) throw ContractError("sgn_slope must be > 0");
  if (!(eps_g > 0.0)) throw ContractError("eps_g must be > 0");
}

double sgn_smooth(double x, double slope) { return std::tanh(0.5 * slope * x); }

double kappa_e(double g, PNorm p, double eps) {
  const double gg = std::max(g, eps);
  if (p == PNorm::L2) return 1.0 / gg - 1.0;
  return static_cast<double>((1.0 - g > 0.0) - (1.0 - g < 0.0)) / gg;
}

ArrayXd laplacian(const Grid& grid) { return laplacian_of(grid, grid.values); }

ArrayXd gradient_magnitude(const Grid& grid) {
  const Stencil s(grid, grid.values);
  return per_cell(grid, [&](int i, int j) {
    const double gx = s.dx(i, j);
    const double gy = grid.dims == 2 ? s.dy(i, j) : 0.0;
    return std::sqrt(gx * gx + gy * gy);
  });
}

ArrayXd eikonal_rate(const Grid& g, const FlowConfig& cfg) {
  const Stencil s(g, g.values);
  return per_cell(g, [&](int i, int j) {
    double r = (face_flux(g, s, i, j, true, cfg) - face_flux(g, s, i - 1, j, true, cfg)) / g.h;
    if (g.dims == 2) r += (face_flux(g, s, i, j, false, cfg) - face_flux(g, s, i, j - 1, false, cfg)) / g.h;
    return r;
  });
}

ArrayXd divergence_rate(const Grid& g, const FlowConfig& cfg) {
  ArrayXd lap = laplacian(g);
  if (cfg.p_reg == PNorm::L1) lap = lap.unaryExpr([&](double x) { return sgn_smooth(x, cfg.sgn_slope); });
  return -laplacian_of(g, lap);
}

ArrayXd directional_rate(const Grid& g, const FlowConfig& cfg) {
  const Stencil s(g, g.values);
  if (cfg.directional_mode == DirectionalMode::Dominant) {
    const ArrayXd bilap = laplacian_of(g, laplacian(g));
    return per_cell(g, [&](int i, int j) {
      const double r = normal_second(local_jet(g, s, i, j), cfg.eps_g);
      return -directional_factor(r, cfg) * bilap(g.index(i, j));
    });
  }

  // Gradient flow of the energy sum phi(u_nn) with phi = |.| smoothed (p=1)
  // or half the square (p=2): u_t = div(dphi/dgrad u) - sum_ij d_i d_j (dphi/dH_ij).
  ArrayXd vx(g.size()), vy(g.size()), qxx(g.size()), qxy(g.size()), qyy(g.size());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const Index c = g.index(i, j);
      const LocalJet d = local_jet(g, s, i, j);
      const double gm = std::sqrt(d.ux * d.ux + d.uy * d.uy);
      const double r = normal_second(d, cfg.eps_g);
      const double psi = cfg.p_reg == PNorm::L2 ? r : sgn_smooth(r, cfg.sgn_slope);
      if (gm <= cfg.eps_g) {
        vx(c) = vy(c) = qxx(c) = qxy(c) = qyy(c) = 0.0;
        continue;
      }
      const double nx = d.ux / gm, ny = d.uy / gm;
      const double hnx = d.uxx * nx + d.uxy * ny, hny = d.uxy * nx + d.uyy * ny;
      vx(c) = psi * (2.0 / gm) * (hnx - r * nx);
      vy(c) = psi * (2.0 / gm) * (hny - r * ny);
      qxx(c) = psi * nx * nx;
      qxy(c) = psi * nx * ny;
      qyy(c) = psi * ny * ny;
    }
  const Stencil sx(g, vx), sy(g, vy), sxx(g, qxx), sxy(g, qxy), syy(g, qyy);
  return per_cell(g, [&](int i, int j) {
    if (g.dims == 1) return sx.dx(i, j) - sxx.dxx(i, j);
    return sx.dx(i, j) + sy.dy(i, j) - (sxx.dxx(i, j) + 2.0 * sxy.dxy(i, j) + syy.dyy(i, j));
  });
}

double eikonal_gate(const Grid& g, const FlowConfig& cfg) {
  if (cfg.alpha_e == 0.0) return kInf;
  const Stencil s(g, g.values);
  double coef = 0.0;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      // Faces onto a mirrored ghost carry no flux under NeumannZero.
      const bool neumann = g.boundary == Boundary::NeumannZero;
      double c = 0.0;
      if (!(neumann && i == g.nx - 1)) {
        face_flux(g, s, i, j, true, cfg, &c);
        coef = std::max(coef, c);
      }
      if (g.dims == 2 && !(neumann && j == g.ny - 1)) {
        face_flux(g, s, i, j, false, cfg, &c);
        coef = std::max(coef, c);
      }
    }
  return second_order_gate(g, cfg.alpha_e * coef);
}

double divergence_gate(const Grid& g, const FlowConfig& cfg) {
  const double kd = cfg.p_reg == PNorm::L2 ? 1.0 : 0.5 * cfg.sgn_slope;
  return fourth_order_gate(g, cfg.alpha_d * kd);
}

double directional_gate(const Grid& g, const FlowConfig& cfg) {
  const double kd = cfg.p_reg == PNorm::L2 ? 1.0 : 0.5 * cfg.sgn_slope;
  return fourth_order_gate(g, cfg.alpha_l * kd);
}

double combined_gate(const Grid& g, const FlowConfig& cfg) {
  double inv = 0.0;
  for (double gate : {eikonal_gate(g, cfg), divergence_gate(g, cfg), directional_gate(g, cfg)})
    if (std::isfinite(gate)) inv += 1.0 / gate;
  return inv > 0.0 ? 1.0 / inv : kInf;
}

Grid eikonal_flow_step(const Grid& g, const FlowConfig& cfg) {
  cfg.validate();
  check_gate(cfg, eikonal_gate(g, cfg), "eikonal");
  return advanced(g, (cfg.dt * cfg.alpha_e) * eikonal_rate(g, cfg));
}

Grid divergence_flow_step(const Grid& g, const FlowConfig& cfg) {
  cfg.validate();
  check_gate(cfg, divergence_gate(g, cfg), "divergence");
  return advanced(g, (cfg.dt * cfg.alpha_d) * divergence_rate(g, cfg));
}

Grid directional_flow_step(const Grid& g, const FlowConfig& cfg) {
  cfg.validate();
  check_gate(cfg, directional_gate(g, cfg), "directional");
  return advanced(g, (cfg.dt * cfg.alpha_l) * directional_rate(g, cfg));
}

Grid combined_step(const Grid& g, const FlowConfig& cfg) {
  cfg.validate();
  check_gate(cfg, combined_gate(g, cfg), "combined");
  ArrayXd rate = ArrayXd::Zero(g.size());
  if (cfg.alpha_e != 0.0) rate += cfg.alpha_e * eikonal_rate(g, cfg);
  if (cfg.alpha_d != 0.0) rate += cfg.alpha_d * divergence_rate(g, cfg);
  if (cfg.alpha_l != 0.0) rate += cfg.alpha_l * directional_rate(g, cfg);
  return advanced(g, cfg.dt * rate);
}

double von_neumann_amplifier(double alpha_e, double ke, double alpha_d, double kd, const Eigen::VectorXd& omega) {
  const double w2 = omega.squaredNorm();
  return -(alpha_e * ke * w2 + alpha_d * kd * w2 * w2);
}

double discrete_symbol(const Eigen::VectorXd& omega, double h) {
  double s = 0.0;
  for (Index a = 0; a < omega.size(); ++a) s += 2.0 * (1.0 - std::cos(omega(a) * h)) / (h * h);
  return s;
}

double discrete_amplifier(double alpha_e, double ke, double alpha_d, double kd, const Eigen::VectorXd& omega,
                          double h) {
  const double s = discrete_symbol(omega, h);
  return -(alpha_e * ke * s + alpha_d * kd * s * s);
}

Grid linearized_flow_step(const Grid& g, double alpha_e, double ke, double alpha_d, double kd, double dt) {
  const ArrayXd lap = laplacian(g);
  const ArrayXd bilap = laplacian_of(g, lap);
  return advanced(g, dt * (alpha_e * ke * lap - alpha_d * kd * bilap));
}

BandEnergies spectral_energies(const Grid& g) {
  const int nx = g.nx, ny = g.ny;
  const int hx = nx / 2 + 1;
  double* in = fftw_alloc_real(static_cast<std::size_t>(nx) * ny);
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(hx) * ny);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_mutex());
    plan = g.dims == 1 ? fftw_plan_dft_r2c_1d(nx, in, out, FFTW_ESTIMATE)
                       : fftw_plan_dft_r2c_2d(ny, nx, in, out, FFTW_ESTIMATE);
  }
  std::copy(g.values.data(), g.values.data() + g.size(), in);
  fftw_execute(plan);

  BandEnergies e;
  const double n = static_cast<double>(g.size());
  for (int ky = 0; ky < ny; ++ky)
    for (int kx = 0; kx < hx; ++kx) {
      const fftw_complex& c = out[static_cast<std::size_t>(ky) * hx + kx];
      const bool self_conjugate = kx == 0 || (nx % 2 == 0 && kx == nx / 2);
      const double w = (self_conjugate ? 1.0 : 2.0) * (c[0] * c[0] + c[1] * c[1]) / n;
      const double f = std::max(band_fraction(kx, nx), g.dims == 2 ? band_fraction(ky, ny) : 0.0);
      if (3.0 * f < 1.0)
        e.low += w;
      else if (3.0 * f < 2.0)
        e.mid += w;
      else
        e.high += w;
    }
  {
    std::lock_guard lock(fftw_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return e;
}

double spectral_energy(const Grid& grid, Band band) {
  const BandEnergies e = spectral_energies(grid);
  return band == Band::Low ? e.low : band == Band::Mid ? e.mid : e.high;
}

Grid mean_curvature_field(const Grid& g, double eps) {
  const Stencil s(g, g.values);
  ArrayXd nx(g.size()), ny(g.size());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double gx = s.dx(i, j), gy = g.dims == 2 ? s.dy(i, j) : 0.0;
      const double m = std::max(std::sqrt(gx * gx + gy * gy), eps);
      nx(g.index(i, j)) = gx / m;
      ny(g.index(i, j)) = gy / m;
    }
  const Stencil sx(g, nx), sy(g, ny);
  Grid out = g;
  out.values = per_cell(g, [&](int i, int j) { return sx.dx(i, j) + (g.dims == 2 ? sy.dy(i, j) : 0.0); });
  return out;
}

ShapeSpec ShapeSpec::circle(double r, Eigen::Vector2d c) {
  ShapeSpec s;
  s.kind = Kind::Circle;
  s.radius = r;
  s.center = c;
  return s;
}

ShapeSpec ShapeSpec::square(double a, Eigen::Vector2d c) {
  ShapeSpec s;
  s.kind = Kind::Square;
  s.half_width = a;
  s.center = c;
  return s;
}

ShapeSpec ShapeSpec::from_polygon(shapes::Polygon p) {
  p.validate_and_orient();
  ShapeSpec s;
  s.kind = Kind::Polygon;
  s.polygon = std::move(p);
  return s;
}

ShapeSpec ShapeSpec::snowflake_shape(const shapes::SnowflakeParams& p) {
  ShapeSpec s;
  s.kind = Kind::Snowflake;
  s.snowflake = p;
  s.polygon = shapes::snowflake(p);
  return s;
}

double shape_sdf(const ShapeSpec& shape, const Eigen::Vector2d& x) {
  switch (shape.kind) {
    case ShapeSpec::Kind::Circle: return (x - shape.center).norm() - shape.radius;
    case ShapeSpec::Kind::Square: return shapes::square_sdf(shape.center, shape.half_width, x);
    case ShapeSpec::Kind::Polygon:
    case ShapeSpec::Kind::Snowflake: return shapes::polygon_sdf(shape.polygon, x);
  }
  return 0.0;
}

Grid init_grid_sdf(const ShapeSpec& shape, int n, double h, const std::optional<Perturbation>& perturb,
                   Boundary boundary) {
  if (shape.kind == ShapeSpec::Kind::Circle && !(shape.radius > 0.0)) throw ContractError("circle radius must be > 0");
  if (shape.kind == ShapeSpec::Kind::Square && !(shape.half_width > 0.0))
    throw ContractError("square half-width must be > 0");
  if ((shape.kind == ShapeSpec::Kind::Polygon || shape.kind == ShapeSpec::Kind::Snowflake)) {
    shapes::Polygon check = shape.polygon;
    check.validate_and_orient();
  }
  Grid g = Grid::make_2d(n, n, h, boundary, Eigen::Vector2d::Constant(-0.5 * n * h));
  Rng rng(perturb ? perturb->seed : 0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      double v = shape_sdf(shape, Eigen::Vector2d(g.x(i), g.y(j)));
      if (perturb) {
        if (perturb->wavenumber > 0.0)
          v += perturb->amplitude * std::sin(perturb->wavenumber * g.x(i)) * std::sin(perturb->wavenumber * g.y(j));
        else
          v += rng.uniform(-perturb->amplitude, perturb->amplitude);
      }
      g.at(i, j) = v;
    }
  g.validate();
  return g;
}

Diagnostics diagnose(const Grid& grid, int step) {
  Diagnostics d;
  d.step = step;
  d.bands = spectral_energies(grid);
  d.max_abs = grid.values.abs().maxCoeff();
  d.eik_residual = (gradient_magnitude(grid) - 1.0).abs().mean();
  return d;
}

EvolveResult evolve(const Grid& grid, const FlowConfig& cfg, int steps, int snapshot_every) {
  grid.validate();
  cfg.validate();
  if (steps < 0) throw ContractError("steps must be >= 0");
  EvolveResult r;
  r.snapshots.push_back({0, grid, diagnose(grid, 0)});
  Grid cur = grid;
  for (int s = 1; s <= steps; ++s) {
    Grid next = combined_step(cur, cfg);
    if (!next.values.allFinite()) {
      r.diverged = true;
      r.diverged_at = s;
      if (r.snapshots.back().step != s - 1) r.snapshots.push_back({s - 1, cur, diagnose(cur, s - 1)});
      return r;
    }
    cur = std::move(next);
    if ((snapshot_every > 0 && s % snapshot_every == 0) || s == steps) r.snapshots.push_back({s, cur, diagnose(cur, s)});
  }
  return r;
}

void write_pgm(const Grid& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  const double lo = g.values.minCoeff(), hi = g.values.maxCoeff();
  out << "P5\n" << g.nx << ' ' << g.ny << "\n255\n";
  for (int j = g.ny - 1; j >= 0; --j)
    for (int i = 0; i < g.nx; ++i) {
      const double t = hi > lo ? (g.at(i, j) - lo) / (hi - lo) : 0.5;
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
    }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_grid_csv(const Grid& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << std::setprecision(17);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) out << (i ? "," : "") << g.at(i, j);
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_diagnostics_csv(const std::vector<Snapshot>& snapshots, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "step,low,mid,high,max_abs,eik_residual\n" << std::setprecision(12);
  for (const Snapshot& s : snapshots)
    out << s.step << ',' << s.diag.bands.low << ',' << s.diag.bands.mid << ',' << s.diag.bands.high << ','
        << s.diag.max_abs << ',' << s.diag.eik_residual << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace steik
