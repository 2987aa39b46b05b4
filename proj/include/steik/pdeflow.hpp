#pragma once

// Explicit finite-difference simulation of the gradient flows of the eikonal,
// divergence and directional-divergence losses on 1D/2D grids.
//
// The eikonal flow uses the coefficient kappa_e = 1/|grad u| - 1 (p=2) or
// sgn(1 - |grad u|)/|grad u| (p=1) in u_t = div(kappa_e grad u); where
// |grad u| > 1 the flow diffuses backwards, which is the instability the
// fourth-order terms are meant to control.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "steik/losses.hpp"
#include "steik/shapes.hpp"

namespace steik {

enum class Boundary { Periodic, NeumannZero };

/// Cell-centered scalar field: cell (i, j) sits at origin + ((i + 0.5) h, (j + 0.5) h).
/// values are stored with i fastest. 1D grids have ny = 1.
struct Grid {
  int dims = 2;
  int nx = 0;
  int ny = 1;
  double h = 1.0;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  Boundary boundary = Boundary::NeumannZero;
  Eigen::ArrayXd values;

  static Grid make_1d(int n, double h, Boundary boundary, double origin_x = 0.0);
  static Grid make_2d(int nx, int ny, double h, Boundary boundary, Eigen::Vector2d origin = Eigen::Vector2d::Zero());

  Eigen::Index size() const { return values.size(); }
  Eigen::Index index(int i, int j = 0) const { return i + static_cast<Eigen::Index>(nx) * j; }
  double& at(int i, int j = 0) { return values(index(i, j)); }
  double at(int i, int j = 0) const { return values(index(i, j)); }
  double x(int i) const { return origin.x() + (i + 0.5) * h; }
  double y(int j) const { return origin.y() + (j + 0.5) * h; }

  /// Throws ContractError unless n >= 8 per axis, h > 0 and values are finite.
  void validate() const;
};

enum class GatePolicy { Abort, Warn, Ignore };

/// Dominant: -f Delta_h(Delta_h u) with f = sgn_smooth(u_nn)/u_nn (p=1) or 1
/// (p=2). Exact: the full Euler-Lagrange gradient flow of the normalized
/// directional loss.
enum class DirectionalMode { Dominant, Exact };

struct FlowConfig {
  double alpha_e = 1.0;
  double alpha_d = 0.0;
  double alpha_l = 0.0;
  PNorm p_eik = PNorm::L2;
  PNorm p_reg = PNorm::L2;
  double dt = 1e-4;
  double sgn_slope = 100.0;
  double eps_g = kEpsGrad;
  DirectionalMode directional_mode = DirectionalMode::Dominant;
  GatePolicy gate = GatePolicy::Abort;

  void validate() const;
};

/// sgn_smooth(x) = 2 sigma(slope x) - 1.
double sgn_smooth(double x, double slope);

double kappa_e(double grad_mag, PNorm p, double eps_g = kEpsGrad);

/// Discrete Laplacian with the grid's boundary rule.
Eigen::ArrayXd laplacian(const Grid& grid);
/// Central-difference gradient magnitude per cell.
Eigen::ArrayXd gradient_magnitude(const Grid& grid);

/// Unweighted right-hand sides u_t of each flow.
Eigen::ArrayXd eikonal_rate(const Grid& grid, const FlowConfig& cfg);
Eigen::ArrayXd divergence_rate(const Grid& grid, const FlowConfig& cfg);
Eigen::ArrayXd directional_rate(const Grid& grid, const FlowConfig& cfg);

/// Largest stable explicit step for each weighted term (infinity when the term
/// is off). Second order: h^2 / (2 d |coef|); fourth order: h^4 / (8 d^2 |coef|).
double eikonal_gate(const Grid& grid, const FlowConfig& cfg);
double divergence_gate(const Grid& grid, const FlowConfig& cfg);
double directional_gate(const Grid& grid, const FlowConfig& cfg);
/// 1 / sum(1 / gate_i) over the active terms.
double combined_gate(const Grid& grid, const FlowConfig& cfg);

/// One explicit Euler step u + dt alpha rate of the respective term.
Grid eikonal_flow_step(const Grid& grid, const FlowConfig& cfg);
Grid divergence_flow_step(const Grid& grid, const FlowConfig& cfg);
Grid directional_flow_step(const Grid& grid, const FlowConfig& cfg);
/// All weighted terms summed in one step.
Grid combined_step(const Grid& grid, const FlowConfig& cfg);

/// A(omega) = -(alpha_e kappa_e |omega|^2 + alpha_d kappa_d |omega|^4).
double von_neumann_amplifier(double alpha_e, double kappa_e, double alpha_d, double kappa_d,
                             const Eigen::VectorXd& omega);
/// sum over axes of 2 (1 - cos(omega_a h)) / h^2, the discrete stand-in for |omega|^2.
double discrete_symbol(const Eigen::VectorXd& omega, double h);
/// A(omega) with |omega|^2 replaced by discrete_symbol.
double discrete_amplifier(double alpha_e, double kappa_e, double alpha_d, double kappa_d,
                          const Eigen::VectorXd& omega, double h);
/// u + dt (alpha_e kappa_e Delta_h u - alpha_d kappa_d Delta_h^2 u).
Grid linearized_flow_step(const Grid& grid, double alpha_e, double kappa_e, double alpha_d, double kappa_d,
                          double dt);

enum class Band { Low, Mid, High };

struct BandEnergies {
  double low = 0.0;
  double mid = 0.0;
  double high = 0.0;
  double total() const { return low + mid + high; }
};

/// Squared DFT magnitudes divided by the cell count (so the three bands sum to
/// sum(u^2)). A mode belongs to the band of its largest per-axis frequency as a
/// fraction of Nyquist: [0, 1/3), [1/3, 2/3), [2/3, 1].
BandEnergies spectral_energies(const Grid& grid);
double spectral_energy(const Grid& grid, Band band);

/// div(grad u / |grad u|) with central differences.
Grid mean_curvature_field(const Grid& grid, double eps_g = kEpsGrad);

struct ShapeSpec {
  enum class Kind { Circle, Square, Polygon, Snowflake };
  Kind kind = Kind::Circle;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.5;      // circle
  double half_width = 0.5;  // square
  shapes::Polygon polygon;
  shapes::SnowflakeParams snowflake;

  static ShapeSpec circle(double r, Eigen::Vector2d c = Eigen::Vector2d::Zero());
  static ShapeSpec square(double a, Eigen::Vector2d c = Eigen::Vector2d::Zero());
  static ShapeSpec from_polygon(shapes::Polygon p);
  static ShapeSpec snowflake_shape(const shapes::SnowflakeParams& p = {});
};

double shape_sdf(const ShapeSpec& shape, const Eigen::Vector2d& x);

struct Perturbation {
  double amplitude = 0.0;
  double wavenumber = 0.0;  // > 0: amplitude sin(k x) sin(k y); 0: uniform noise in [-amplitude, amplitude]
  std::uint64_t seed = 0;
};

/// n x n grid centered on the origin with exact signed distances at cell centers.
Grid init_grid_sdf(const ShapeSpec& shape, int n, double h, const std::optional<Perturbation>& perturb = std::nullopt,
                   Boundary boundary = Boundary::NeumannZero);

struct Diagnostics {
  int step = 0;
  BandEnergies bands;
  double max_abs = 0.0;
  double eik_residual = 0.0;  // mean | |grad u| - 1 |
};

Diagnostics diagnose(const Grid& grid, int step);

struct Snapshot {
  int step = 0;
  Grid grid;
  Diagnostics diag;
};

struct EvolveResult {
  std::vector<Snapshot> snapshots;
  bool diverged = false;
  int diverged_at = -1;  // step whose result was non-finite
};

/// Runs `steps` combined steps, recording a snapshot at step 0, every
/// `snapshot_every` steps and at the end. A non-finite grid stops the run with
/// the last good snapshot kept.
EvolveResult evolve(const Grid& grid, const FlowConfig& cfg, int steps, int snapshot_every);

void write_pgm(const Grid& grid, const std::string& path);
void write_grid_csv(const Grid& grid, const std::string& path);
void write_diagnostics_csv(const std::vector<Snapshot>& snapshots, const std::string& path);

}  // namespace steik
