#pragma once

// Analytic shapes used as fixtures: exact signed distances (negative inside),
// their jets where smooth, and surface samplers.

#include <vector>

#include <Eigen/Dense>

#include "steik/fieldnet.hpp"
#include "steik/rng.hpp"
#include "steik/sampler.hpp"

namespace steik::shapes {

/// u(x) = n . x - offset with unit n.
FieldJet plane_jet(const Vec& normal, double offset, const Vec& x);

/// Sphere (circle in 2D) of radius r: u = |x - c| - r. Requires x != c.
FieldJet sphere_jet(const Vec& center, double radius, const Vec& x);
double sphere_sdf(const Vec& center, double radius, const Vec& x);

/// Torus around the z axis: ring radius R, tube radius r.
double torus_sdf(double ring, double tube, const Eigen::Vector3d& x);
/// Area-uniform samples with outward normals.
PointCloud sample_torus(double ring, double tube, Eigen::Index count, Rng& rng);
PointCloud sample_sphere(const Eigen::Vector3d& center, double radius, Eigen::Index count, Rng& rng);

/// Axis-aligned square of half-width a centered at c.
double square_sdf(const Eigen::Vector2d& center, double half_width, const Eigen::Vector2d& x);

/// Simple closed polygon, stored counter-clockwise.
struct Polygon {
  std::vector<Eigen::Vector2d> vertices;

  /// Reorders to counter-clockwise; throws ContractError when fewer than three
  /// vertices, repeated consecutive vertices or zero area.
  void validate_and_orient();
  double perimeter() const;
};

/// Exact signed distance: minimum distance to the edges, negative inside
/// (crossing-number test).
double polygon_sdf(const Polygon& poly, const Eigen::Vector2d& x);

struct SnowflakeParams {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.6;  // circumradius of the seed triangle
  int depth = 2;        // Koch refinement steps
};

/// Koch snowflake polygon.
Polygon snowflake(const SnowflakeParams& params);

/// Samples uniform in arc length with outward normals.
PointCloud sample_polygon(const Polygon& poly, Eigen::Index count, Rng& rng);
/// count points evenly spaced in arc length (deterministic reference set).
Eigen::MatrixXd polygon_boundary(const Polygon& poly, Eigen::Index count);

}  // namespace steik::shapes
