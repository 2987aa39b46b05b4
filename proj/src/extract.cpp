#include "steik/extract.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "mc_tables.hpp"
#include "steik/error.hpp"

namespace steik {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

constexpr double kMinArea = 1e-12;

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

// Marching squares corners 0 (0,0) 1 (1,0) 2 (1,1) 3 (0,1); edges 0 (0-1)
// 1 (1-2) 2 (2-3) 3 (3-0). Segments per case as edge pairs; saddles 5 and 10
// are listed with the center outside the shape.
constexpr int kSquareCorner[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
constexpr int kSquareEdge[4][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
constexpr int kSquareSegs[16][4] = {{-1, -1, -1, -1}, {3, 0, -1, -1}, {0, 1, -1, -1}, {3, 1, -1, -1},
                                    {1, 2, -1, -1},   {3, 0, 1, 2},   {0, 2, -1, -1}, {3, 2, -1, -1},
                                    {2, 3, -1, -1},   {0, 2, -1, -1}, {0, 1, 2, 3},   {1, 2, -1, -1},
                                    {1, 3, -1, -1},   {0, 1, -1, -1}, {3, 0, -1, -1}, {-1, -1, -1, -1}};
constexpr int kSaddleInside[16][4] = {{}, {}, {}, {}, {}, {0, 1, 2, 3}, {}, {}, {}, {}, {3, 0, 1, 2}};

void require_resolution(const Domain& domain, int resolution, int dim) {
  domain.validate();
  if (domain.dim() != dim) throw ContractError("extraction domain must be " + std::to_string(dim) + "D");
  if (resolution < 2) throw ContractError("resolution must be >= 2");
}

void check_finite(const VectorXd& v, int res, int dims, int k) {
  for (Index n = 0; n < v.size(); ++n) {
    if (std::isfinite(v(n))) continue;
    const Index i = n % res, j = n / res;
    std::string at = "(" + std::to_string(i) + ", " + std::to_string(j);
    if (dims == 3) at += ", " + std::to_string(k);
    throw NumericalError("non-finite field value at grid node " + at + ")");
  }
}

// Point where the field crosses zero on the segment from a (value va) to b.
template <class V>
V crossing(const V& a, const V& b, double va, double vb) {
  const double t = va / (va - vb);
  return a + t * (b - a);
}

// Chains undirected segments between numbered points into polylines.
Contour2D chain(const std::vector<Vector2d>& pts, const std::vector<std::array<int, 2>>& segs) {
  std::vector<std::vector<int>> adj(pts.size());
  for (std::size_t s = 0; s < segs.size(); ++s) {
    adj[segs[s][0]].push_back(static_cast<int>(s));
    adj[segs[s][1]].push_back(static_cast<int>(s));
  }
  std::vector<char> used(segs.size(), 0);
  Contour2D c;
  auto walk = [&](int start) {
    std::vector<int> ids{start};
    int cur = start;
    for (;;) {
      int next_seg = -1;
      for (int s : adj[cur])
        if (!used[s]) {
          next_seg = s;
          break;
        }
      if (next_seg < 0) break;
      used[next_seg] = 1;
      cur = segs[next_seg][0] == cur ? segs[next_seg][1] : segs[next_seg][0];
      ids.push_back(cur);
    }
    std::vector<Vector2d> line;
    for (int id : ids)
      if (line.empty() || (pts[id] - line.back()).norm() > 0.0) line.push_back(pts[id]);
    if (line.size() >= 2) c.polylines.push_back(std::move(line));
  };
  for (std::size_t v = 0; v < pts.size(); ++v)
    if (adj[v].size() == 1 && !used[adj[v][0]]) walk(static_cast<int>(v));
  for (std::size_t v = 0; v < pts.size(); ++v)
    if (!adj[v].empty()) walk(static_cast<int>(v));
  return c;
}

// values: nx * ny node samples with i fastest. center(i, j) gives the field
// at the middle of cell (i, j) and is only called for saddle cells.
template <class Pos, class Center>
Contour2D contour_nodes(const VectorXd& values, int nx, int ny, Pos pos, Center center) {
  std::vector<Vector2d> pts;
  std::vector<std::array<int, 2>> segs;
  std::unordered_map<std::uint64_t, int> ids;
  auto node = [&](int i, int j) { return static_cast<std::uint64_t>(i) + static_cast<std::uint64_t>(nx) * j; };
  auto vertex = [&](int i0, int j0, int i1, int j1) {
    const std::uint64_t a = node(i0, j0), b = node(i1, j1);
    const bool fwd = a < b;
    const std::uint64_t lo = fwd ? a : b;
    const std::uint64_t key = lo * 2 + (i0 != i1 ? 0 : 1);
    auto [it, fresh] = ids.try_emplace(key, static_cast<int>(pts.size()));
    if (fresh) {
      const int li = fwd ? i0 : i1, lj = fwd ? j0 : j1, hi = fwd ? i1 : i0, hj = fwd ? j1 : j0;
      pts.push_back(crossing(pos(li, lj), pos(hi, hj), values(node(li, lj)), values(node(hi, hj))));
    }
    return it->second;
  };
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      int code = 0;
      for (int c = 0; c < 4; ++c)
        if (values(node(i + kSquareCorner[c][0], j + kSquareCorner[c][1])) < 0.0) code |= 1 << c;
      const int* table = kSquareSegs[code];
      if ((code == 5 || code == 10) && center(i, j) < 0.0) table = kSaddleInside[code];
      for (int s = 0; s < 4 && table[s] >= 0; s += 2) {
        std::array<int, 2> seg;
        for (int e = 0; e < 2; ++e) {
          const int* edge = kSquareEdge[table[s + e]];
          seg[e] = vertex(i + kSquareCorner[edge[0]][0], j + kSquareCorner[edge[0]][1], i + kSquareCorner[edge[1]][0],
                          j + kSquareCorner[edge[1]][1]);
        }
        if (seg[0] != seg[1]) segs.push_back(seg);
      }
    }
  return chain(pts, segs);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}

}  // namespace

FieldBatch network_field(const NetworkParams& params) {
  return [&params](const MatrixXd& pts) { return forward_values(params, pts); };
}

double Mesh::area() const {
  double a = 0.0;
  for (const auto& t : triangles)
    a += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
  return a;
}

void Mesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (const auto& t : triangles)
    for (int i : t)
      if (i < 0 || i >= n) throw ContractError("triangle index " + std::to_string(i) + " out of range");
}

double Contour2D::length() const {
  double l = 0.0;
  for (const auto& line : polylines)
    for (std::size_t k = 1; k < line.size(); ++k) l += (line[k] - line[k - 1]).norm();
  return l;
}

MatrixXd Contour2D::points() const {
  std::vector<Vector2d> all;
  for (const auto& line : polylines) {
    std::size_t n = line.size();
    if (n > 2 && line.front() == line.back()) --n;
    all.insert(all.end(), line.begin(), line.begin() + static_cast<std::ptrdiff_t>(n));
  }
  MatrixXd m(2, static_cast<Index>(all.size()));
  for (std::size_t k = 0; k < all.size(); ++k) m.col(static_cast<Index>(k)) = all[k];
  return m;
}

Mesh marching_cubes(const FieldBatch& field, const Domain& domain, int res) {
  require_resolution(domain, res, 3);
  const Vector3d lo = domain.bbox_min, step = (domain.bbox_max - domain.bbox_min) / (res - 1);
  const Index plane = static_cast<Index>(res) * res;
  auto pos = [&](int i, int j, int k) { return Vector3d(lo + step.cwiseProduct(Vector3d(i, j, k))); };
  auto slab = [&](int k) {
    MatrixXd pts(3, plane);
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i) pts.col(i + static_cast<Index>(res) * j) = pos(i, j, k);
    VectorXd v = field(pts);
    if (v.size() != plane) throw ContractError("field returned the wrong number of values");
    check_finite(v, res, 3, k);
    return v;
  };

  Mesh mesh;
  std::unordered_map<std::uint64_t, int> ids;
  VectorXd below = slab(0);
  for (int k = 0; k + 1 < res; ++k) {
    const VectorXd above = slab(k + 1);
    auto value = [&](int i, int j, int dk) { return (dk ? above : below)(i + static_cast<Index>(res) * j); };
    for (int j = 0; j + 1 < res; ++j)
      for (int i = 0; i + 1 < res; ++i) {
        double v[8];
        int code = 0;
        for (int c = 0; c < 8; ++c) {
          v[c] = value(i + kCorner[c][0], j + kCorner[c][1], kCorner[c][2]);
          if (v[c] < 0.0) code |= 1 << c;
        }
        if (code == 0 || code == 255) continue;
        const auto& tri = detail::kTriTable[code];
        auto vertex = [&](int e) {
          int a = kEdge[e][0], b = kEdge[e][1];
          int axis = 0;
          while (kCorner[a][axis] == kCorner[b][axis]) ++axis;
          if (kCorner[a][axis] > kCorner[b][axis]) std::swap(a, b);
          const int ai = i + kCorner[a][0], aj = j + kCorner[a][1], ak = k + kCorner[a][2];
          const std::uint64_t node =
              static_cast<std::uint64_t>(ai) + static_cast<std::uint64_t>(res) * (aj + static_cast<std::uint64_t>(res) * ak);
          auto [it, fresh] = ids.try_emplace(node * 3 + axis, static_cast<int>(mesh.vertices.size()));
          if (fresh)
            mesh.vertices.push_back(crossing(pos(ai, aj, ak), pos(i + kCorner[b][0], j + kCorner[b][1], k + kCorner[b][2]),
                                             v[a], v[b]));
          return it->second;
        };
        for (int t = 0; t < 16 && tri[t] >= 0; t += 3) {
          // Reversed table order so that normals point towards positive values.
          const std::array<int, 3> f{vertex(tri[t]), vertex(tri[t + 2]), vertex(tri[t + 1])};
          const Vector3d& p0 = mesh.vertices[f[0]];
          const double area = 0.5 * (mesh.vertices[f[1]] - p0).cross(mesh.vertices[f[2]] - p0).norm();
          if (area > kMinArea) mesh.triangles.push_back(f);
        }
      }
    below = above;
  }
  return mesh;
}

Contour2D marching_squares(const FieldBatch& field, const Domain& domain, int res) {
  require_resolution(domain, res, 2);
  const Vector2d lo = domain.bbox_min, step = (domain.bbox_max - domain.bbox_min) / (res - 1);
  auto pos = [&](int i, int j) { return Vector2d(lo + step.cwiseProduct(Vector2d(i, j))); };
  MatrixXd pts(2, static_cast<Index>(res) * res);
  for (int j = 0; j < res; ++j)
    for (int i = 0; i < res; ++i) pts.col(i + static_cast<Index>(res) * j) = pos(i, j);
  const VectorXd values = field(pts);
  if (values.size() != pts.cols()) throw ContractError("field returned the wrong number of values");
  check_finite(values, res, 2, 0);
  auto center = [&](int i, int j) {
    MatrixXd c(2, 1);
    c.col(0) = pos(i, j) + 0.5 * step;
    const double v = field(c)(0);
    if (!std::isfinite(v)) throw NumericalError("non-finite field value at the center of cell (" + std::to_string(i) +
                                                ", " + std::to_string(j) + ")");
    return v;
  };
  return contour_nodes(values, res, res, pos, center);
}

Contour2D marching_squares(const Grid& g) {
  if (g.dims != 2) throw ContractError("marching squares needs a 2D grid");
  g.validate();
  auto pos = [&](int i, int j) { return Vector2d(g.x(i), g.y(j)); };
  auto center = [&](int i, int j) { return 0.25 * (g.at(i, j) + g.at(i + 1, j) + g.at(i, j + 1) + g.at(i + 1, j + 1)); };
  return contour_nodes(g.values, g.nx, g.ny, pos, center);
}

Mesh transform_mesh(const Mesh& mesh, const NormalizeTransform& t) {
  Mesh out = mesh;
  for (Vector3d& v : out.vertices) v = t.scale * v + t.center;
  return out;
}

Contour2D transform_contour(const Contour2D& contour, const NormalizeTransform& t) {
  Contour2D out = contour;
  for (auto& line : out.polylines)
    for (Vector2d& p : line) p = t.scale * p + t.center;
  return out;
}

void save_obj(const Mesh& mesh, const std::string& path) {
  mesh.validate();
  std::ofstream out = open_out(path);
  char buf[96];
  for (const Vector3d& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

Mesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  Mesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vector3d v;
      if (!(ss >> v.x() >> v.y() >> v.z())) throw ParseError("bad vertex record", lineno);
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        int k = 0;
        try {
          k = std::stoi(tok.substr(0, tok.find('/')));
        } catch (const std::exception&) {
          throw ParseError("bad face index '" + tok + "'", lineno);
        }
        if (k < 0) k += static_cast<int>(mesh.vertices.size()) + 1;
        if (k < 1 || k > static_cast<int>(mesh.vertices.size()))
          throw ParseError("face index " + tok + " out of range", lineno);
        idx.push_back(k - 1);
      }
      if (idx.size() < 3) throw ParseError("face with fewer than three vertices", lineno);
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  return mesh;
}

void save_contour_csv(const Contour2D& contour, const std::string& path) {
  std::ofstream out = open_out(path);
  char buf[64];
  for (std::size_t l = 0; l < contour.polylines.size(); ++l) {
    if (l) out << '\n';
    for (const Vector2d& p : contour.polylines[l]) {
      std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", p.x(), p.y());
      out << buf;
    }
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

Contour2D load_contour_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  Contour2D c;
  std::vector<Vector2d> cur;
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (!cur.empty()) c.polylines.push_back(std::move(cur));
    cur.clear();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      flush();
      continue;
    }
    double x, y;
    char comma;
    std::istringstream ss(line);
    if (!(ss >> x >> comma >> y) || comma != ',') throw ParseError("expected 'x,y'", lineno);
    cur.emplace_back(x, y);
  }
  flush();
  return c;
}

}  // namespace steik
