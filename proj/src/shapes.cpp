#include "steik/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "steik/error.hpp"

namespace steik::shapes {

namespace {

using Eigen::Index;
using Eigen::Vector2d;

double segment_distance(const Vector2d& a, const Vector2d& b, const Vector2d& p) {
  const Vector2d d = b - a;
  const double t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * d)).norm();
}

bool inside(const Polygon& poly, const Vector2d& p) {
  bool in = false;
  const auto& v = poly.vertices;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if ((v[i].y() > p.y()) != (v[j].y() > p.y())) {
      const double x = v[j].x() + (p.y() - v[j].y()) * (v[i].x() - v[j].x()) / (v[i].y() - v[j].y());
      if (p.x() < x) in = !in;
    }
  }
  return in;
}

double signed_area(const std::vector<Vector2d>& v) {
  double a = 0.0;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) a += v[j].x() * v[i].y() - v[i].x() * v[j].y();
  return 0.5 * a;
}

// Cumulative arc length at each vertex (size n + 1).
std::vector<double> arc_lengths(const Polygon& poly) {
  const auto& v = poly.vertices;
  std::vector<double> s{0.0};
  for (std::size_t i = 0; i < v.size(); ++i) s.push_back(s.back() + (v[(i + 1) % v.size()] - v[i]).norm());
  return s;
}

void point_at(const Polygon& poly, const std::vector<double>& s, double t, Vector2d& p, Vector2d& n) {
  const auto& v = poly.vertices;
  const std::size_t e =
      std::min<std::size_t>(static_cast<std::size_t>(std::upper_bound(s.begin(), s.end(), t) - s.begin()) - 1,
                            v.size() - 1);
  const Vector2d a = v[e], b = v[(e + 1) % v.size()];
  const double len = s[e + 1] - s[e];
  p = a + (b - a) * ((t - s[e]) / len);
  const Vector2d d = (b - a) / len;
  n = Vector2d(d.y(), -d.x());  // right of a counter-clockwise edge
}

}  // namespace

FieldJet plane_jet(const Vec& normal, double offset, const Vec& x) {
  FieldJet j;
  j.value = normal.dot(x) - offset;
  j.grad = normal;
  j.hess = Mat::Zero(x.size(), x.size());
  return j;
}

FieldJet sphere_jet(const Vec& center, double radius, const Vec& x) {
  const Vec d = x - center;
  const double rho = d.norm();
  if (!(rho > 0.0)) throw ContractError("sphere jet is undefined at the center");
  const Vec n = d / rho;
  FieldJet j;
  j.value = rho - radius;
  j.grad = n;
  j.hess = (Mat::Identity(x.size(), x.size()) - n * n.transpose()) / rho;
  return j;
}

double sphere_sdf(const Vec& center, double radius, const Vec& x) { return (x - center).norm() - radius; }

double torus_sdf(double ring, double tube, const Eigen::Vector3d& x) {
  const Vector2d q(x.head<2>().norm() - ring, x.z());
  return q.norm() - tube;
}

PointCloud sample_torus(double ring, double tube, Index count, Rng& rng) {
  if (!(ring > tube) || !(tube > 0.0)) throw ContractError("torus requires ring > tube > 0");
  PointCloud pc;
  pc.points.resize(3, count);
  pc.normals.resize(3, count);
  for (Index i = 0; i < count; ++i) {
    const double u = 2.0 * std::numbers::pi * rng.uniform();
    double v;
    // Area element is proportional to (ring + tube cos v).
    do v = 2.0 * std::numbers::pi * rng.uniform();
    while (rng.uniform() * (ring + tube) > ring + tube * std::cos(v));
    const double w = ring + tube * std::cos(v);
    pc.points.col(i) << w * std::cos(u), w * std::sin(u), tube * std::sin(v);
    pc.normals.col(i) << std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v);
  }
  return pc;
}

PointCloud sample_sphere(const Eigen::Vector3d& center, double radius, Index count, Rng& rng) {
  PointCloud pc;
  pc.points.resize(3, count);
  pc.normals.resize(3, count);
  for (Index i = 0; i < count; ++i) {
    const double z = rng.uniform(-1.0, 1.0);
    const double t = 2.0 * std::numbers::pi * rng.uniform();
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Eigen::Vector3d n(r * std::cos(t), r * std::sin(t), z);
    pc.normals.col(i) = n;
    pc.points.col(i) = center + radius * n;
  }
  return pc;
}

double square_sdf(const Vector2d& center, double a, const Vector2d& x) {
  const Vector2d q = (x - center).cwiseAbs() - Vector2d::Constant(a);
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

void Polygon::validate_and_orient() {
  if (vertices.size() < 3) throw ContractError("polygon needs at least three vertices");
  for (std::size_t i = 0; i < vertices.size(); ++i)
    if ((vertices[(i + 1) % vertices.size()] - vertices[i]).norm() == 0.0)
      throw ContractError("polygon has repeated consecutive vertices");
  const double a = signed_area(vertices);
  if (!(std::abs(a) > 0.0)) throw ContractError("polygon has zero area");
  if (a < 0.0) std::reverse(vertices.begin(), vertices.end());
}

double Polygon::perimeter() const { return arc_lengths(*this).back(); }

double polygon_sdf(const Polygon& poly, const Vector2d& x) {
  double d = std::numeric_limits<double>::infinity();
  const auto& v = poly.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) d = std::min(d, segment_distance(v[i], v[(i + 1) % v.size()], x));
  return inside(poly, x) ? -d : d;
}

Polygon snowflake(const SnowflakeParams& params) {
  if (!(params.radius > 0.0) || params.depth < 0 || params.depth > 6)
    throw ContractError("snowflake needs radius > 0 and depth in [0, 6]");
  std::vector<Vector2d> v;
  for (int k = 0; k < 3; ++k) {
    const double t = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * k / 3.0;
    v.emplace_back(params.radius * std::cos(t), params.radius * std::sin(t));
  }
  const Eigen::Rotation2Dd outward(-std::numbers::pi / 3.0);
  for (int level = 0; level < params.depth; ++level) {
    std::vector<Vector2d> next;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vector2d a = v[i], b = v[(i + 1) % v.size()];
      const Vector2d third = (b - a) / 3.0;
      next.push_back(a);
      next.push_back(a + third);
      next.push_back(a + third + outward * third);
      next.push_back(a + 2.0 * third);
    }
    v = std::move(next);
  }
  Polygon p;
  for (const Vector2d& q : v) p.vertices.push_back(q + params.center);
  p.validate_and_orient();
  return p;
}

PointCloud sample_polygon(const Polygon& poly, Index count, Rng& rng) {
  const auto s = arc_lengths(poly);
  PointCloud pc;
  pc.points.resize(2, count);
  pc.normals.resize(2, count);
  for (Index i = 0; i < count; ++i) {
    Vector2d p, n;
    point_at(poly, s, rng.uniform() * s.back(), p, n);
    pc.points.col(i) = p;
    pc.normals.col(i) = n;
  }
  return pc;
}

Eigen::MatrixXd polygon_boundary(const Polygon& poly, Index count) {
  const auto s = arc_lengths(poly);
  Eigen::MatrixXd pts(2, count);
  for (Index i = 0; i < count; ++i) {
    Vector2d p, n;
    point_at(poly, s, s.back() * (static_cast<double>(i) + 0.5) / static_cast<double>(count), p, n);
    pts.col(i) = p;
  }
  return pts;
}

}  // namespace steik::shapes
