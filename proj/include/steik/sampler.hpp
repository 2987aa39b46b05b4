#pragma once

#include <string>

#include <Eigen/Dense>

#include "steik/fieldnet.hpp"
#include "steik/rng.hpp"

namespace steik {

/// Points stored column-wise (dim x count); normals empty or the same shape.
struct PointCloud {
  Eigen::MatrixXd points;
  Eigen::MatrixXd normals;

  int dim() const { return static_cast<int>(points.rows()); }
  Eigen::Index size() const { return points.cols(); }
  bool has_normals() const { return normals.cols() > 0; }
  /// Throws ContractError on a normals count mismatch or non-unit normals.
  void validate() const;
};

struct Domain {
  Vec bbox_min;
  Vec bbox_max;

  int dim() const { return static_cast<int>(bbox_min.size()); }
  Vec center() const { return 0.5 * (bbox_min + bbox_max); }
  void validate() const;
};

/// x -> (x - center) / scale.
struct NormalizeTransform {
  Vec center;
  double scale = 1.0;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& points) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& points) const;
};

enum class PointFormat { XYZ, PLY };

/// Guesses the format from the file extension (.xyz/.txt/.pts or .ply).
PointFormat format_from_path(const std::string& path);

/// XYZ: "x y z [nx ny nz]" per line ('#' comments and blank lines skipped).
/// PLY: ascii or binary_little_endian vertex elements with x, y, z and optional
/// nx, ny, nz. Malformed input raises ParseError carrying the line number.
PointCloud load_pointcloud(const std::string& path, PointFormat format);
void save_xyz(const PointCloud& pc, const std::string& path);

struct NormalizedCloud {
  PointCloud cloud;
  NormalizeTransform transform;
  Domain domain;
};

/// Centers at the centroid, scales the largest norm to 1 and returns the shape's
/// bounding box enlarged 1.1 times about its center. Axes along which the
/// shape is flat are padded to 0.1 times the largest half-extent.
NormalizedCloud normalize(const PointCloud& pc);

/// Bounding box of the points enlarged `factor` times about its center, with
/// the same flat-axis padding as normalize.
Domain bounding_domain(const Eigen::MatrixXd& points, double factor = 1.1);

struct SurfaceSamples {
  Eigen::MatrixXd points;
  Eigen::MatrixXd normals;
};

/// k points drawn uniformly with replacement (normals follow when present).
SurfaceSamples sample_surface(const PointCloud& pc, Eigen::Index k, Rng& rng);

/// k i.i.d. uniform points in the box.
Eigen::MatrixXd sample_uniform(const Domain& domain, Eigen::Index k, Rng& rng);

}  // namespace steik
