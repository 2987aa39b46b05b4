#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <fstream>

#include "steik/error.hpp"
#include "steik/sampler.hpp"
#include "steik/shapes.hpp"
#include "support.hpp"

using namespace steik;
using Eigen::MatrixXd;

namespace {

std::string write_file(const std::string& name, const std::string& text) {
  const auto path = (test::scratch_dir("sampler_" + name) / name).string();
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

}  // namespace

TEST_CASE("xyz parsing") {
  const PointCloud a = load_pointcloud(write_file("a.xyz", "0 0 0\n1 0 0\n"), PointFormat::XYZ);
  CHECK(a.size() == 2);
  CHECK_FALSE(a.has_normals());
  CHECK(a.points(0, 1) == 1.0);

  const PointCloud b = load_pointcloud(write_file("b.xyz", "# header\n\n0 0 0 0 0 1\n1 1 1 0 2 0\n"), PointFormat::XYZ);
  REQUIRE(b.has_normals());
  CHECK(b.normals.col(0) == Eigen::Vector3d(0, 0, 1));
  CHECK(b.normals.col(1) == Eigen::Vector3d(0, 1, 0));

  try {
    load_pointcloud(write_file("c.xyz", "0 0\n"), PointFormat::XYZ);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
  }
  try {
    load_pointcloud(write_file("d.xyz", "0 0 0\n1 1 1 0 0 1\n"), PointFormat::XYZ);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(load_pointcloud(write_file("e.xyz", "0 0 x\n"), PointFormat::XYZ), ParseError);
  CHECK_THROWS_AS(load_pointcloud("/nonexistent/file.xyz", PointFormat::XYZ), IoError);
}

TEST_CASE("ply parsing") {
  const PointCloud a = load_pointcloud(
      write_file("a.ply",
                 "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
                 "property float nx\nproperty float ny\nproperty float nz\nend_header\n0 0 0 0 0 1\n1 2 3 1 0 0\n"),
      PointFormat::PLY);
  CHECK(a.size() == 2);
  CHECK(a.points.col(1) == Eigen::Vector3d(1, 2, 3));
  CHECK(a.normals.col(0) == Eigen::Vector3d(0, 0, 1));

  std::string bin =
      "ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\nproperty double y\n"
      "property double z\nproperty uchar red\nend_header\n";
  for (double v : {1.0, 2.0, 3.0}) bin.append(reinterpret_cast<const char*>(&v), 8);
  bin.push_back('\x7f');
  for (double v : {-1.0, 0.5, 0.25}) bin.append(reinterpret_cast<const char*>(&v), 8);
  bin.push_back('\x01');
  const PointCloud b = load_pointcloud(write_file("b.ply", bin), PointFormat::PLY);
  CHECK(b.size() == 2);
  CHECK(b.points.col(1) == Eigen::Vector3d(-1, 0.5, 0.25));
  CHECK_THROWS_AS(load_pointcloud(write_file("c.ply", bin.substr(0, bin.size() - 5)), PointFormat::PLY), ParseError);
  CHECK_THROWS_AS(load_pointcloud(write_file("d.ply", "plx\n"), PointFormat::PLY), ParseError);
  CHECK(format_from_path("x/y.PLY") == PointFormat::PLY);
  CHECK(format_from_path("cloud.xyz") == PointFormat::XYZ);
}

TEST_CASE("save and reload") {
  Rng rng(1);
  const PointCloud pc = shapes::sample_sphere(Eigen::Vector3d(0.1, 0, 0), 0.5, 50, rng);
  const auto path = (test::scratch_dir("save") / "s.xyz").string();
  save_xyz(pc, path);
  const PointCloud back = load_pointcloud(path, PointFormat::XYZ);
  CHECK(back.points == pc.points);
  CHECK((back.normals - pc.normals).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("normalize") {
  PointCloud two;
  two.points = MatrixXd(3, 2);
  two.points << 0, 2, 0, 0, 0, 0;
  const NormalizedCloud n = normalize(two);
  CHECK(n.cloud.points.col(0) == Eigen::Vector3d(-1, 0, 0));
  CHECK(n.cloud.points.col(1) == Eigen::Vector3d(1, 0, 0));
  CHECK(n.transform.scale == 1.0);
  CHECK(n.domain.bbox_min(0) == doctest::Approx(-1.1));
  CHECK(n.domain.bbox_max(0) == doctest::Approx(1.1));
  CHECK(n.domain.bbox_max(1) == doctest::Approx(0.11));
  CHECK(n.domain.bbox_min(1) == doctest::Approx(-0.11));

  PointCloud one;
  one.points = MatrixXd::Ones(3, 1);
  CHECK_THROWS_AS(normalize(one), ContractError);

  Rng rng(2);
  PointCloud sphere = shapes::sample_sphere(Eigen::Vector3d::Zero(), 1.0, 20000, rng);
  const NormalizedCloud s = normalize(sphere);
  CHECK(s.transform.center.norm() < 0.02);
  CHECK(s.transform.scale == doctest::Approx(1.0).epsilon(0.02));

  PointCloud skew = shapes::sample_sphere(Eigen::Vector3d(3, -2, 5), 4.0, 500, rng);
  const NormalizedCloud k = normalize(skew);
  CHECK(k.cloud.points.rowwise().mean().norm() < 1e-12);
  CHECK(std::abs(k.cloud.points.colwise().norm().maxCoeff() - 1.0) < 1e-12);
  const MatrixXd back = k.transform.invert(k.cloud.points);
  CHECK((back - skew.points).cwiseAbs().maxCoeff() <= 1e-9 * skew.points.cwiseAbs().maxCoeff());
  CHECK((k.transform.apply(skew.points) - k.cloud.points).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(k.cloud.normals == skew.normals);
}

TEST_CASE("sampling") {
  Rng r0(5);
  PointCloud pc = shapes::sample_sphere(Eigen::Vector3d::Zero(), 1.0, 10, r0);
  Rng a(9), b(9);
  CHECK(sample_surface(pc, 0, a).points.cols() == 0);
  const SurfaceSamples s1 = sample_surface(pc, 100, a), s2 = sample_surface(pc, 100, b);
  CHECK(s1.points == s2.points);
  CHECK(s1.normals == s2.normals);
  bool repeated = false;
  for (Eigen::Index i = 1; i < 100 && !repeated; ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (s1.points.col(i) == s1.points.col(j)) repeated = true;
  CHECK(repeated);

  Domain flat;
  flat.bbox_min = Eigen::Vector3d(1, 2, 3);
  flat.bbox_max = Eigen::Vector3d(1, 2, 3);
  Rng c(1);
  const MatrixXd same = sample_uniform(flat, 5, c);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(same.col(i) == Eigen::Vector3d(1, 2, 3));

  Domain box;
  box.bbox_min = Eigen::Vector3d(-1, 0, 2);
  box.bbox_max = Eigen::Vector3d(1, 4, 3);
  Rng d(11), e(11);
  CHECK(sample_uniform(box, 1, d) == sample_uniform(box, 1, e));
  const Eigen::Index n = 100000;
  const MatrixXd u = sample_uniform(box, n, d);
  const Eigen::Vector3d width = box.bbox_max - box.bbox_min;
  for (int axis = 0; axis < 3; ++axis) {
    const double sigma = width(axis) / std::sqrt(12.0 * n);
    CHECK(std::abs(u.row(axis).mean() - box.center()(axis)) < 3 * sigma);
    CHECK(u.row(axis).minCoeff() >= box.bbox_min(axis));
    CHECK(u.row(axis).maxCoeff() < box.bbox_max(axis));
  }
  // Chi-square over the eight octants, 7 degrees of freedom: 99% quantile 18.475.
  double counts[8] = {};
  for (Eigen::Index i = 0; i < n; ++i) {
    int o = 0;
    for (int axis = 0; axis < 3; ++axis) o |= (u(axis, i) > box.center()(axis)) << axis;
    counts[o] += 1;
  }
  double chi2 = 0;
  for (double c8 : counts) chi2 += (c8 - n / 8.0) * (c8 - n / 8.0) / (n / 8.0);
  CHECK(chi2 < 18.475);
}
