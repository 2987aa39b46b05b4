#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "steik/fieldnet.hpp"
#include "steik/pdeflow.hpp"
#include "steik/sampler.hpp"

namespace steik {

/// Evaluates the field at the columns of a (dim x n) point matrix.
using FieldBatch = std::function<Eigen::VectorXd(const Eigen::MatrixXd& points)>;

/// Field of a trained network, in the network's (normalized) frame. Holds a
/// reference, so params must outlive the returned callable.
FieldBatch network_field(const NetworkParams& params);

struct Mesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  double area() const;
  /// Throws ContractError on out-of-range indices.
  void validate() const;
};

/// Polylines of the zero level set. Closed loops repeat their first point at the end.
struct Contour2D {
  std::vector<std::vector<Eigen::Vector2d>> polylines;

  bool empty() const { return polylines.empty(); }
  double length() const;
  /// All polyline points as a 2 x n matrix (closing duplicates dropped).
  Eigen::MatrixXd points() const;
};

/// Triangulates {u = 0} sampled on resolution^3 nodes spanning the domain box
/// (resolution >= 2). Vertices shared between cells are merged; triangles with
/// area <= 1e-12 are dropped. The field is evaluated one z-slab at a time.
Mesh marching_cubes(const FieldBatch& field, const Domain& domain, int resolution);

/// {u = 0} sampled on resolution^2 nodes of a 2D box. Saddle cells are resolved
/// by the sign of the field at the cell center.
Contour2D marching_squares(const FieldBatch& field, const Domain& domain, int resolution);
/// Contour of a 2D grid through its cell centers; saddle centers use the
/// average of the four corners.
Contour2D marching_squares(const Grid& grid);

/// Maps vertices from the normalized frame back to the input frame.
Mesh transform_mesh(const Mesh& mesh, const NormalizeTransform& t);
Contour2D transform_contour(const Contour2D& contour, const NormalizeTransform& t);

/// OBJ with "v x y z" and 1-based "f i j k" lines (9 significant digits).
void save_obj(const Mesh& mesh, const std::string& path);
/// Reads v and f records; polygonal faces are fan-triangulated and
/// "i/t/n" index forms are accepted.
Mesh load_obj(const std::string& path);

/// "x,y" rows, one polyline per block, blocks separated by a blank line.
void save_contour_csv(const Contour2D& contour, const std::string& path);
Contour2D load_contour_csv(const std::string& path);

}  // namespace steik
