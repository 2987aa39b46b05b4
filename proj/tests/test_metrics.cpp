#include <doctest.h>

#include <cmath>

#include "steik/error.hpp"
#include "steik/metrics.hpp"
#include "support.hpp"

using namespace steik;
using Eigen::MatrixXd;

namespace {

MatrixXd pts(std::initializer_list<std::initializer_list<double>> cols) {
  const int dim = static_cast<int>(cols.begin()->size());
  MatrixXd m(dim, static_cast<Eigen::Index>(cols.size()));
  Eigen::Index j = 0;
  for (const auto& c : cols) {
    int i = 0;
    for (double v : c) m(i++, j) = v;
    ++j;
  }
  return m;
}

}  // namespace

TEST_CASE("distance examples") {
  const MatrixXd a = pts({{0, 0, 0}, {1, 0, 0}});
  CHECK(chamfer(a, a) == 0.0);
  CHECK(hausdorff(a, a) == 0.0);
  const MatrixXd b = pts({{0, 0, 1}, {1, 0, 1}});
  CHECK(chamfer(a, b) == 1.0);
  CHECK(hausdorff(a, b) == 1.0);
  CHECK(squared_chamfer(a, b) == 1.0);
  const MatrixXd one = pts({{0, 0}}), two = pts({{0, 0}, {3, 4}});
  CHECK(chamfer_one_sided(one, two) == 0.0);
  CHECK(chamfer_one_sided(two, one) == 2.5);
  CHECK(hausdorff_one_sided(two, one) == 5.0);
  CHECK(chamfer(one, two) == 1.25);
  CHECK(hausdorff(one, two) == 5.0);
  CHECK_THROWS_AS(chamfer(MatrixXd(3, 0), a), ContractError);
  CHECK_THROWS_AS(chamfer(one, a), ContractError);
  MatrixXd bad = a;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(hausdorff(bad, a), NumericalError);
}

TEST_CASE("grid search agrees with a linear scan") {
  Rng rng(3);
  for (int dim = 1; dim <= 3; ++dim)
    for (Eigen::Index n : {1, 7, 300, 10000}) {
      const MatrixXd a = test::random_points(dim, n, rng);
      MatrixXd b = test::random_points(dim, 2 * n / 3 + 1, rng, -2, 0.5);
      if (dim == 3 && n > 1) b.col(0) = a.col(0);
      CHECK(nearest_distances(a, b) == nearest_distances_brute(a, b));
      if (n <= 300) {
        CHECK(chamfer(a, b) == chamfer_brute(a, b));
        CHECK(hausdorff(a, b) == hausdorff_brute(a, b));
        CHECK(squared_chamfer(a, b) == squared_chamfer_brute(a, b));
      }
    }
  // Clustered points with a far outlier stress the cell sizing.
  MatrixXd c = 1e-3 * test::random_points(3, 2000, rng);
  c.col(0) = Eigen::Vector3d(100, -50, 20);
  const MatrixXd q = test::random_points(3, 500, rng, -5, 5);
  CHECK(nearest_distances(q, c) == nearest_distances_brute(q, c));
  const MatrixXd dup = MatrixXd::Zero(2, 50);
  const NearestNeighbors nn(dup);
  CHECK(nn.query(Eigen::Vector2d(1, 0)).index == 0);
}

TEST_CASE("metric properties") {
  Rng rng(8);
  for (int k = 0; k < 20; ++k) {
    const MatrixXd a = test::random_points(3, 40 + k, rng), b = test::random_points(3, 30, rng, -0.5, 1.5);
    CHECK(chamfer(a, b) == chamfer(b, a));
    CHECK(hausdorff(a, b) == hausdorff(b, a));
    CHECK(hausdorff(a, b) >= chamfer(a, b));
    CHECK(chamfer(a, b) >= 0.0);
  }
}

TEST_CASE("iou") {
  CHECK(iou({true, true, false}, {true, true, false}) == 1.0);
  CHECK(iou({true, false}, {false, true}) == 0.0);
  CHECK(iou({true, true, false}, {false, true, true}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou({false, false}, {false, false}) == 1.0);
  CHECK_THROWS_AS(iou({true}, {true, false}), ContractError);
}

TEST_CASE("surface sampling") {
  Mesh m;
  m.vertices = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0),
                Eigen::Vector3d(0, 0, 5), Eigen::Vector3d(3, 0, 5), Eigen::Vector3d(0, 1, 5)};
  m.triangles = {{0, 1, 2}, {3, 4, 5}};
  Rng rng(5);
  CHECK(sample_mesh_points(m, 0, rng).cols() == 0);
  const Eigen::Index k = 40000;
  const MatrixXd s = sample_mesh_points(m, k, rng);
  Eigen::Index upper = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double z = s(2, i);
    const double sx = z > 2.5 ? s(0, i) / 3.0 : s(0, i);
    CHECK((std::abs(z) < 1e-12 || std::abs(z - 5.0) < 1e-12));
    CHECK(sx >= -1e-15);
    CHECK(s(1, i) >= -1e-15);
    CHECK(sx + s(1, i) <= 1 + 1e-12);
    upper += z > 2.5;
  }
  // Areas 1:3, so the upper triangle gets a binomial share with p = 3/4.
  const double sigma = std::sqrt(k * 0.75 * 0.25);
  CHECK(std::abs(upper - 0.75 * k) < 3 * sigma);
  // Uniform within a triangle: the centroid of the samples approaches the triangle centroid.
  double mx = 0, my = 0;
  Eigen::Index lower = 0;
  for (Eigen::Index i = 0; i < k; ++i)
    if (s(2, i) < 2.5) {
      mx += s(0, i);
      my += s(1, i);
      ++lower;
    }
  CHECK(mx / lower == doctest::Approx(1.0 / 3.0).epsilon(0.03));
  CHECK(my / lower == doctest::Approx(1.0 / 3.0).epsilon(0.03));
  CHECK_THROWS_AS(sample_mesh_points(Mesh{}, 5, rng), ContractError);
}

TEST_CASE("metric report") {
  const MatrixXd a = pts({{0, 0, 0}, {1, 0, 0}});
  const MatrixXd b = pts({{0, 0, 1}, {1, 0, 1}});
  MetricReport r = MetricReport::distances(a, b);
  CHECK(*r.d_C == 1.0);
  CHECK(*r.d_H == 1.0);
  CHECK(*r.squared_chamfer == 1.0);
  CHECK_FALSE(r.iou);
  r.iou = 0.5;
  const std::string csv = r.to_csv();
  CHECK(csv.rfind("metric,value\n", 0) == 0);
  CHECK(csv.find("iou,0.5") != std::string::npos);
  CHECK(r.to_text().find("iou") != std::string::npos);
}
