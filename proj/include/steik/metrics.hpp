#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "steik/extract.hpp"
#include "steik/rng.hpp"

namespace steik {

/// Exact nearest-neighbour queries on a fixed point set (columns of a dim x n
/// matrix, dim 1 to 3) through a uniform cell grid searched in growing shells.
/// Results are bitwise identical to a linear scan.
class NearestNeighbors {
 public:
  explicit NearestNeighbors(Eigen::MatrixXd points);

  struct Hit {
    Eigen::Index index = -1;
    double sq_dist = 0.0;
  };
  Hit query(const Eigen::Ref<const Eigen::VectorXd>& q) const;
  Eigen::Index size() const { return points_.cols(); }

 private:
  Eigen::MatrixXd points_;
  Eigen::VectorXd origin_;
  double cell_ = 1.0;
  std::vector<Eigen::Index> dims_;
  std::vector<Eigen::Index> start_;  // CSR offsets into order_, one per cell plus one
  std::vector<Eigen::Index> order_;
};

/// Distance from each column of `from` to its nearest column of `to`.
Eigen::VectorXd nearest_distances(const Eigen::MatrixXd& from, const Eigen::MatrixXd& to);
Eigen::VectorXd nearest_distances_brute(const Eigen::MatrixXd& from, const Eigen::MatrixXd& to);

/// 0.5 (mean_a d(a, B) + mean_b d(b, A)).
double chamfer(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// max(sup_a d(a, B), sup_b d(b, A)).
double hausdorff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// mean_a d(a, B): reconstruction a against reference b.
double chamfer_one_sided(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// sup_a d(a, B).
double hausdorff_one_sided(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// 0.5 (mean_a d(a, B)^2 + mean_b d(b, A)^2).
double squared_chamfer(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

double chamfer_brute(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
double hausdorff_brute(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
double squared_chamfer_brute(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// |pred and gt| / |pred or gt|, 1 when both are empty. Inside means u < 0.
double iou(const std::vector<bool>& pred_inside, const std::vector<bool>& gt_inside);

/// k points uniform over the mesh surface (triangles weighted by area).
Eigen::MatrixXd sample_mesh_points(const Mesh& mesh, Eigen::Index k, Rng& rng);

struct MetricReport {
  std::optional<double> d_C;
  std::optional<double> d_H;
  std::optional<double> d_C_one_sided;
  std::optional<double> d_H_one_sided;
  std::optional<double> squared_chamfer;
  std::optional<double> iou;

  /// Distances between reconstruction samples and reference samples.
  static MetricReport distances(const Eigen::MatrixXd& recon, const Eigen::MatrixXd& reference);

  /// "metric,value" rows; absent metrics are skipped.
  std::string to_csv() const;
  std::string to_text() const;
};

}  // namespace steik
