#include "steik/sampler.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "steik/error.hpp"

namespace steik {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

std::string lower_extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return {};
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

PointCloud assemble(const std::vector<std::array<double, 6>>& rows, bool with_normals) {
  PointCloud pc;
  const Index n = static_cast<Index>(rows.size());
  pc.points.resize(3, n);
  if (with_normals) pc.normals.resize(3, n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    pc.points.col(i) << r[0], r[1], r[2];
    if (with_normals) pc.normals.col(i) << r[3], r[4], r[5];
  }
  return pc;
}

void normalize_normals(PointCloud& pc, const std::vector<std::size_t>& lines) {
  for (Index i = 0; i < pc.normals.cols(); ++i) {
    const double len = pc.normals.col(i).norm();
    if (!(len > 0.0) || !std::isfinite(len))
      throw ParseError("zero or non-finite normal", lines.empty() ? 0 : lines[static_cast<std::size_t>(i)]);
    pc.normals.col(i) /= len;
  }
}

PointCloud load_xyz(std::istream& in) {
  std::vector<std::array<double, 6>> rows;
  std::vector<std::size_t> lines;
  int columns = 0;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::array<double, 6> r{};
    int count = 0;
    std::string tok;
    while (ss >> tok) {
      if (count == 6) throw ParseError("too many values", lineno);
      try {
        std::size_t used = 0;
        r[static_cast<std::size_t>(count)] = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("invalid number '" + tok + "'", lineno);
      }
      ++count;
    }
    if (count == 0) continue;
    if (count != 3 && count != 6) throw ParseError("expected 3 or 6 values, got " + std::to_string(count), lineno);
    if (columns == 0) columns = count;
    if (count != columns) throw ParseError("mixed presence of normals", lineno);
    for (int k = 0; k < count; ++k)
      if (!std::isfinite(r[static_cast<std::size_t>(k)])) throw ParseError("non-finite value", lineno);
    rows.push_back(r);
    lines.push_back(lineno);
  }
  PointCloud pc = assemble(rows, columns == 6);
  normalize_normals(pc, lines);
  return pc;
}

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

PlyType ply_type(const std::string& s, std::size_t lineno) {
  if (s == "char" || s == "int8") return PlyType::I8;
  if (s == "uchar" || s == "uint8") return PlyType::U8;
  if (s == "short" || s == "int16") return PlyType::I16;
  if (s == "ushort" || s == "uint16") return PlyType::U16;
  if (s == "int" || s == "int32") return PlyType::I32;
  if (s == "uint" || s == "uint32") return PlyType::U32;
  if (s == "float" || s == "float32") return PlyType::F32;
  if (s == "double" || s == "float64") return PlyType::F64;
  throw ParseError("unknown PLY property type '" + s + "'", lineno);
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::I8:
    case PlyType::U8: return 1;
    case PlyType::I16:
    case PlyType::U16: return 2;
    case PlyType::I32:
    case PlyType::U32:
    case PlyType::F32: return 4;
    case PlyType::F64: return 8;
  }
  return 0;
}

template <class T>
double read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return static_cast<double>(v);
}

double decode(PlyType t, const char* p) {
  switch (t) {
    case PlyType::I8: return read_le<std::int8_t>(p);
    case PlyType::U8: return read_le<std::uint8_t>(p);
    case PlyType::I16: return read_le<std::int16_t>(p);
    case PlyType::U16: return read_le<std::uint16_t>(p);
    case PlyType::I32: return read_le<std::int32_t>(p);
    case PlyType::U32: return read_le<std::uint32_t>(p);
    case PlyType::F32: return read_le<float>(p);
    case PlyType::F64: return read_le<double>(p);
  }
  return 0.0;
}

PointCloud load_ply(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&] {
    if (!std::getline(in, line)) throw ParseError("unexpected end of PLY header", lineno);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  next_line();
  if (line != "ply") throw ParseError("missing 'ply' magic", lineno);

  bool binary = false;
  bool in_vertex = false;
  bool seen_vertex = false;
  long long count = -1;
  struct Prop {
    std::string name;
    PlyType type;
  };
  std::vector<Prop> props;
  for (;;) {
    next_line();
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "end_header") break;
    if (key == "comment" || key == "obj_info" || key.empty()) continue;
    if (key == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        throw ParseError("unsupported PLY format '" + fmt + "'", lineno);
    } else if (key == "element") {
      std::string name;
      long long n = -1;
      ss >> name >> n;
      if (name == "vertex") {
        if (seen_vertex) throw ParseError("duplicate vertex element", lineno);
        if (n < 0) throw ParseError("invalid vertex count", lineno);
        in_vertex = seen_vertex = true;
        count = n;
      } else {
        if (!seen_vertex) throw ParseError("vertex element must come first", lineno);
        in_vertex = false;
      }
    } else if (key == "property") {
      if (!in_vertex) continue;
      std::string type, name;
      ss >> type;
      if (type == "list") throw ParseError("list properties are not supported in the vertex element", lineno);
      ss >> name;
      props.push_back({name, ply_type(type, lineno)});
    } else {
      throw ParseError("unexpected PLY header keyword '" + key + "'", lineno);
    }
  }
  if (!seen_vertex) throw ParseError("PLY file has no vertex element", lineno);

  std::array<int, 6> slot;
  slot.fill(-1);
  const char* names[6] = {"x", "y", "z", "nx", "ny", "nz"};
  for (std::size_t p = 0; p < props.size(); ++p)
    for (int k = 0; k < 6; ++k)
      if (props[p].name == names[k]) slot[static_cast<std::size_t>(k)] = static_cast<int>(p);
  for (int k = 0; k < 3; ++k)
    if (slot[static_cast<std::size_t>(k)] < 0) throw ParseError(std::string("missing vertex property ") + names[k], 0);
  const int normal_slots = (slot[3] >= 0) + (slot[4] >= 0) + (slot[5] >= 0);
  if (normal_slots != 0 && normal_slots != 3) throw ParseError("incomplete normal properties", 0);
  const bool with_normals = normal_slots == 3;

  std::vector<std::array<double, 6>> rows(static_cast<std::size_t>(count));
  std::vector<std::size_t> lines;
  std::vector<double> values(props.size());
  std::size_t stride = 0;
  std::vector<std::size_t> offsets;
  for (const Prop& p : props) {
    offsets.push_back(stride);
    stride += ply_size(p.type);
  }
  std::vector<char> buf(stride);
  for (long long v = 0; v < count; ++v) {
    if (binary) {
      if (!in.read(buf.data(), static_cast<std::streamsize>(stride)))
        throw ParseError("truncated binary vertex data at vertex " + std::to_string(v), 0);
      for (std::size_t p = 0; p < props.size(); ++p) values[p] = decode(props[p].type, buf.data() + offsets[p]);
    } else {
      next_line();
      std::istringstream ss(line);
      for (std::size_t p = 0; p < props.size(); ++p)
        if (!(ss >> values[p])) throw ParseError("malformed vertex line", lineno);
      lines.push_back(lineno);
    }
    auto& r = rows[static_cast<std::size_t>(v)];
    for (int k = 0; k < (with_normals ? 6 : 3); ++k) {
      r[static_cast<std::size_t>(k)] = values[static_cast<std::size_t>(slot[static_cast<std::size_t>(k)])];
      if (!std::isfinite(r[static_cast<std::size_t>(k)]))
        throw ParseError("non-finite vertex value", binary ? 0 : lineno);
    }
  }
  PointCloud pc = assemble(rows, with_normals);
  normalize_normals(pc, lines);
  return pc;
}

}  // namespace

void PointCloud::validate() const {
  if (points.rows() < 1 || points.rows() > 3) throw ContractError("points must have dimension 1, 2 or 3");
  if (!has_normals()) return;
  if (normals.rows() != points.rows() || normals.cols() != points.cols())
    throw ContractError("normals must match points in count and dimension");
  for (Index i = 0; i < normals.cols(); ++i)
    if (std::abs(normals.col(i).norm() - 1.0) > 1e-6) throw ContractError("normals must have unit length");
}

void Domain::validate() const {
  if (bbox_min.size() != bbox_max.size() || bbox_min.size() == 0) throw ContractError("domain corners differ in dimension");
  if (!(bbox_min.array() < bbox_max.array()).all()) throw ContractError("domain requires bbox_min < bbox_max");
}

MatrixXd NormalizeTransform::apply(const MatrixXd& points) const {
  return (points.colwise() - Eigen::VectorXd(center)) / scale;
}

MatrixXd NormalizeTransform::invert(const MatrixXd& points) const {
  return (points * scale).colwise() + Eigen::VectorXd(center);
}

PointFormat format_from_path(const std::string& path) {
  const std::string ext = lower_extension(path);
  if (ext == "ply") return PointFormat::PLY;
  if (ext == "xyz" || ext == "txt" || ext == "pts") return PointFormat::XYZ;
  throw ContractError("cannot infer point cloud format from '" + path + "'");
}

PointCloud load_pointcloud(const std::string& path, PointFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  PointCloud pc = format == PointFormat::XYZ ? load_xyz(in) : load_ply(in);
  if (pc.size() == 0) throw ParseError("point cloud '" + path + "' is empty", 0);
  return pc;
}

void save_xyz(const PointCloud& pc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << std::setprecision(17);
  for (Index i = 0; i < pc.size(); ++i) {
    for (Index k = 0; k < pc.points.rows(); ++k) out << (k ? " " : "") << pc.points(k, i);
    if (pc.has_normals())
      for (Index k = 0; k < pc.normals.rows(); ++k) out << ' ' << pc.normals(k, i);
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

Domain bounding_domain(const MatrixXd& points, double factor) {
  if (points.cols() == 0) throw ContractError("cannot bound an empty point set");
  const Eigen::VectorXd lo = points.rowwise().minCoeff();
  const Eigen::VectorXd hi = points.rowwise().maxCoeff();
  const Eigen::VectorXd mid = 0.5 * (lo + hi);
  Eigen::VectorXd half = 0.5 * factor * (hi - lo);
  const double largest = half.maxCoeff();
  if (!(largest > 0.0)) throw ContractError("point set has zero extent");
  for (Index k = 0; k < half.size(); ++k)
    if (half(k) < 1e-12 * largest) half(k) = 0.1 * largest;
  Domain d;
  d.bbox_min = mid - half;
  d.bbox_max = mid + half;
  return d;
}

NormalizedCloud normalize(const PointCloud& pc) {
  pc.validate();
  if (pc.size() == 0) throw ContractError("cannot normalize an empty point cloud");
  NormalizedCloud out;
  out.transform.center = pc.points.rowwise().mean();
  const MatrixXd centered = pc.points.colwise() - Eigen::VectorXd(out.transform.center);
  const double scale = centered.colwise().norm().maxCoeff();
  if (!(scale > 0.0)) throw ContractError("point cloud has zero extent");
  out.transform.scale = scale;
  out.cloud.points = centered / scale;
  out.cloud.normals = pc.normals;
  out.domain = bounding_domain(out.cloud.points, 1.1);
  return out;
}

SurfaceSamples sample_surface(const PointCloud& pc, Index k, Rng& rng) {
  if (k < 0) throw ContractError("sample count must be nonnegative");
  if (k > 0 && pc.size() == 0) throw ContractError("cannot sample from an empty point cloud");
  SurfaceSamples s;
  s.points.resize(pc.points.rows(), k);
  if (pc.has_normals()) s.normals.resize(pc.normals.rows(), k);
  for (Index i = 0; i < k; ++i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(pc.size())));
    s.points.col(i) = pc.points.col(j);
    if (pc.has_normals()) s.normals.col(i) = pc.normals.col(j);
  }
  return s;
}

MatrixXd sample_uniform(const Domain& domain, Index k, Rng& rng) {
  if (k < 0) throw ContractError("sample count must be nonnegative");
  if (domain.bbox_min.size() != domain.bbox_max.size()) throw ContractError("domain corners differ in dimension");
  MatrixXd pts(domain.dim(), k);
  for (Index i = 0; i < k; ++i)
    for (Index a = 0; a < pts.rows(); ++a) pts(a, i) = rng.uniform(domain.bbox_min(a), domain.bbox_max(a));
  return pts;
}

}  // namespace steik
