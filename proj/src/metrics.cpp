#include "steik/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "steik/error.hpp"
#include "steik/parallel.hpp"

namespace steik {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr Index kQueryChunk = 1024;

double sq_dist(const double* a, const double* b, Index dim) {
  double s = 0.0;
  for (Index k = 0; k < dim; ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

void require_sets(const MatrixXd& a, const MatrixXd& b) {
  if (a.cols() == 0 || b.cols() == 0) throw ContractError("distance metrics need nonempty point sets");
  if (a.rows() != b.rows()) throw ContractError("point sets differ in dimension");
  if (a.rows() < 1 || a.rows() > 3) throw ContractError("point sets must be 1D to 3D");
  if (!a.allFinite() || !b.allFinite()) throw NumericalError("point set contains non-finite coordinates");
}

double mean(const VectorXd& v) {
  double s = 0.0;
  for (Index i = 0; i < v.size(); ++i) s += v(i);
  return s / static_cast<double>(v.size());
}

double mean_sq(const VectorXd& v) {
  double s = 0.0;
  for (Index i = 0; i < v.size(); ++i) s += v(i) * v(i);
  return s / static_cast<double>(v.size());
}

}  // namespace

NearestNeighbors::NearestNeighbors(MatrixXd points) : points_(std::move(points)) {
  const Index dim = points_.rows(), n = points_.cols();
  if (n == 0 || dim < 1 || dim > 3) throw ContractError("nearest-neighbour set must be nonempty and 1D to 3D");
  if (!points_.allFinite()) throw NumericalError("point set contains non-finite coordinates");
  origin_ = points_.rowwise().minCoeff();
  const VectorXd extent = points_.rowwise().maxCoeff() - origin_;
  const double span = std::max(extent.maxCoeff(), 1e-12);
  // About two cells per point, shaped after the bounding box.
  double volume = 1.0;
  for (Index a = 0; a < dim; ++a) volume *= std::max(extent(a), span * 1e-3);
  cell_ = std::max(std::pow(volume / (2.0 * static_cast<double>(n)), 1.0 / static_cast<double>(dim)), span * 1e-6);
  Index cells = 1;
  dims_.resize(dim);
  for (Index a = 0; a < dim; ++a) {
    dims_[a] = std::min<Index>(static_cast<Index>(extent(a) / cell_) + 1, 1 << 20);
    cells *= dims_[a];
  }

  std::vector<Index> cell_of(n);
  start_.assign(cells + 1, 0);
  for (Index p = 0; p < n; ++p) {
    Index flat = 0;
    for (Index a = dim - 1; a >= 0; --a) {
      const Index c = std::clamp<Index>(static_cast<Index>((points_(a, p) - origin_(a)) / cell_), 0, dims_[a] - 1);
      flat = flat * dims_[a] + c;
    }
    cell_of[p] = flat;
    ++start_[flat + 1];
  }
  for (Index c = 0; c < cells; ++c) start_[c + 1] += start_[c];
  order_.resize(n);
  std::vector<Index> fill(start_.begin(), start_.end() - 1);
  for (Index p = 0; p < n; ++p) order_[fill[cell_of[p]]++] = p;
}

NearestNeighbors::Hit NearestNeighbors::query(const Eigen::Ref<const VectorXd>& q) const {
  const Index dim = points_.rows();
  if (q.size() != dim) throw ContractError("query dimension does not match the point set");
  Index c[3] = {0, 0, 0}, d[3] = {1, 1, 1};
  for (Index a = 0; a < dim; ++a) {
    d[a] = dims_[a];
    c[a] = std::clamp<Index>(static_cast<Index>(std::floor((q(a) - origin_(a)) / cell_)), 0, d[a] - 1);
  }
  Hit best{-1, kInf};
  auto scan_cell = [&](Index x, Index y, Index z) {
    const Index flat = x + d[0] * (y + d[1] * z);
    for (Index k = start_[flat]; k < start_[flat + 1]; ++k) {
      const Index p = order_[k];
      const double s = sq_dist(q.data(), points_.col(p).data(), dim);
      if (s < best.sq_dist || (s == best.sq_dist && p < best.index)) best = {p, s};
    }
  };
  for (Index r = 0;; ++r) {
    const Index lo[3] = {c[0] - r, c[1] - r, c[2] - r}, hi[3] = {c[0] + r, c[1] + r, c[2] + r};
    for (Index z = std::max<Index>(lo[2], 0); z <= std::min(hi[2], d[2] - 1); ++z)
      for (Index y = std::max<Index>(lo[1], 0); y <= std::min(hi[1], d[1] - 1); ++y)
        for (Index x = std::max<Index>(lo[0], 0); x <= std::min(hi[0], d[0] - 1); ++x) {
          const Index cheb = std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])});
          if (cheb == r) scan_cell(x, y, z);
        }
    // Unvisited points lie beyond the faces of the visited block.
    double bound = kInf;
    for (Index a = 0; a < dim; ++a) {
      if (lo[a] > 0) bound = std::min(bound, q(a) - (origin_(a) + static_cast<double>(lo[a]) * cell_));
      if (hi[a] + 1 < d[a]) bound = std::min(bound, origin_(a) + static_cast<double>(hi[a] + 1) * cell_ - q(a));
    }
    if (bound == kInf) break;
    if (bound > 0.0 && best.sq_dist < bound * bound * (1.0 - 1e-9)) break;
  }
  return best;
}

VectorXd nearest_distances(const MatrixXd& from, const MatrixXd& to) {
  require_sets(from, to);
  const NearestNeighbors nn(to);
  VectorXd out(from.cols());
  const auto chunks = static_cast<std::size_t>((from.cols() + kQueryChunk - 1) / kQueryChunk);
  parallel_for(chunks, [&](std::size_t ch) {
    const Index begin = static_cast<Index>(ch) * kQueryChunk, end = std::min(begin + kQueryChunk, from.cols());
    for (Index i = begin; i < end; ++i) out(i) = std::sqrt(nn.query(from.col(i)).sq_dist);
  });
  return out;
}

VectorXd nearest_distances_brute(const MatrixXd& from, const MatrixXd& to) {
  require_sets(from, to);
  VectorXd out(from.cols());
  for (Index i = 0; i < from.cols(); ++i) {
    double best = kInf;
    for (Index j = 0; j < to.cols(); ++j) best = std::min(best, sq_dist(from.col(i).data(), to.col(j).data(), from.rows()));
    out(i) = std::sqrt(best);
  }
  return out;
}

double chamfer(const MatrixXd& a, const MatrixXd& b) {
  return 0.5 * (mean(nearest_distances(a, b)) + mean(nearest_distances(b, a)));
}

double hausdorff(const MatrixXd& a, const MatrixXd& b) {
  return std::max(nearest_distances(a, b).maxCoeff(), nearest_distances(b, a).maxCoeff());
}

double chamfer_one_sided(const MatrixXd& a, const MatrixXd& b) { return mean(nearest_distances(a, b)); }

double hausdorff_one_sided(const MatrixXd& a, const MatrixXd& b) { return nearest_distances(a, b).maxCoeff(); }

double squared_chamfer(const MatrixXd& a, const MatrixXd& b) {
  return 0.5 * (mean_sq(nearest_distances(a, b)) + mean_sq(nearest_distances(b, a)));
}

double chamfer_brute(const MatrixXd& a, const MatrixXd& b) {
  return 0.5 * (mean(nearest_distances_brute(a, b)) + mean(nearest_distances_brute(b, a)));
}

double hausdorff_brute(const MatrixXd& a, const MatrixXd& b) {
  return std::max(nearest_distances_brute(a, b).maxCoeff(), nearest_distances_brute(b, a).maxCoeff());
}

double squared_chamfer_brute(const MatrixXd& a, const MatrixXd& b) {
  return 0.5 * (mean_sq(nearest_distances_brute(a, b)) + mean_sq(nearest_distances_brute(b, a)));
}

double iou(const std::vector<bool>& pred, const std::vector<bool>& gt) {
  if (pred.size() != gt.size())
    throw ContractError("occupancy label counts differ (" + std::to_string(pred.size()) + " vs " +
                        std::to_string(gt.size()) + ")");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] && gt[i];
    uni += pred[i] || gt[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MatrixXd sample_mesh_points(const Mesh& mesh, Index k, Rng& rng) {
  if (k < 0) throw ContractError("sample count must be >= 0");
  mesh.validate();
  MatrixXd out(3, k);
  if (k == 0) return out;
  std::vector<double> cum(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& f = mesh.triangles[t];
    total += 0.5 * (mesh.vertices[f[1]] - mesh.vertices[f[0]]).cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]).norm();
    cum[t] = total;
  }
  if (!(total > 0.0)) throw ContractError("cannot sample a mesh with zero area");
  for (Index i = 0; i < k; ++i) {
    const double pick = rng.uniform() * total;
    const auto t = std::min<std::size_t>(std::upper_bound(cum.begin(), cum.end(), pick) - cum.begin(), cum.size() - 1);
    const auto& f = mesh.triangles[t];
    const double s = std::sqrt(rng.uniform()), r = rng.uniform();
    out.col(i) = (1.0 - s) * mesh.vertices[f[0]] + s * (1.0 - r) * mesh.vertices[f[1]] + s * r * mesh.vertices[f[2]];
  }
  return out;
}

MetricReport MetricReport::distances(const MatrixXd& recon, const MatrixXd& reference) {
  const VectorXd ab = nearest_distances(recon, reference), ba = nearest_distances(reference, recon);
  MetricReport r;
  r.d_C = 0.5 * (mean(ab) + mean(ba));
  r.d_H = std::max(ab.maxCoeff(), ba.maxCoeff());
  r.d_C_one_sided = mean(ab);
  r.d_H_one_sided = ab.maxCoeff();
  r.squared_chamfer = 0.5 * (mean_sq(ab) + mean_sq(ba));
  return r;
}

namespace {

template <class Fn>
void for_each_metric(const MetricReport& r, Fn fn) {
  const std::pair<const char*, const std::optional<double>*> all[] = {
      {"d_C", &r.d_C},           {"d_H", &r.d_H}, {"d_C_one_sided", &r.d_C_one_sided}, {"d_H_one_sided", &r.d_H_one_sided},
      {"squared_chamfer", &r.squared_chamfer}, {"iou", &r.iou}};
  for (const auto& [name, v] : all)
    if (v->has_value()) fn(name, **v);
}

}  // namespace

std::string MetricReport::to_csv() const {
  std::ostringstream s;
  s << "metric,value\n";
  char buf[32];
  for_each_metric(*this, [&](const char* name, double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    s << name << ',' << buf << '\n';
  });
  return s.str();
}

std::string MetricReport::to_text() const {
  std::ostringstream s;
  char buf[64];
  for_each_metric(*this, [&](const char* name, double v) {
    std::snprintf(buf, sizeof(buf), "%-16s %.6g\n", name, v);
    s << buf;
  });
  return s.str();
}

}  // namespace steik
