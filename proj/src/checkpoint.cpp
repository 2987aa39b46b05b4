#include "steik/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "steik/error.hpp"

namespace steik {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using Eigen::Index;

constexpr char kMagic[6] = {'S', 'T', 'E', 'I', 'K', '1'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <class T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_array(const double* p, Index n) { out_.write(reinterpret_cast<const char*>(p), n * 8); }
  void put_rowmajor(const Eigen::MatrixXd& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = m;
    put_array(r.data(), r.size());
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const std::string& path) : in_(in), path_(path) {}
  template <class T>
  T get() {
    T v;
    read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }
  void get_array(double* p, Index n) { read(reinterpret_cast<char*>(p), n * 8); }
  Eigen::MatrixXd get_rowmajor(Index rows, Index cols) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r(rows, cols);
    get_array(r.data(), r.size());
    return r;
  }
  std::uint32_t get_bounded(std::uint32_t max, const char* what) {
    const auto v = get<std::uint32_t>();
    if (v > max) throw ParseError(std::string("checkpoint field out of range: ") + what, 0);
    return v;
  }

 private:
  void read(char* p, std::streamsize n) {
    if (!in_.read(p, n)) throw ParseError("checkpoint '" + path_ + "' is truncated", 0);
  }
  std::ifstream& in_;
  const std::string& path_;
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ckpt.params.validate();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    Writer w(out);
    out.write(kMagic, sizeof(kMagic));
    w.put<std::uint32_t>(kCheckpointVersion);
    const NetworkConfig& c = ckpt.params.config;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.input_dim));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.hidden_layers));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.hidden_width));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.layer_kind));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.init_scheme));
    w.put<double>(c.omega0_first);
    w.put<double>(c.omega0_hidden);
    w.put<double>(c.quadratic_init_eps);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.layers.size()));
    for (const LayerParams& l : ckpt.params.layers) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(l.out_dim()));
      w.put<std::uint32_t>(static_cast<std::uint32_t>(l.in_dim()));
      w.put<std::uint32_t>(static_cast<std::uint32_t>(l.kind));
      w.put<std::uint32_t>(l.activation.type == Activation::Type::Sine ? 0u : 1u);
      w.put<double>(l.activation.omega0);
      w.put_rowmajor(l.W1);
      w.put_array(l.b1.data(), l.b1.size());
      w.put_rowmajor(l.W2);
      w.put_array(l.b2.data(), l.b2.size());
      w.put_rowmajor(l.W3);
      w.put_array(l.b3.data(), l.b3.size());
    }
    const bool frame = ckpt.transform.has_value() && ckpt.domain.has_value();
    const std::uint32_t flags = (frame ? 1u : 0u) | (ckpt.optimizer ? 2u : 0u);
    w.put<std::uint32_t>(flags);
    if (frame) {
      const auto dim = static_cast<std::uint32_t>(ckpt.transform->center.size());
      if (ckpt.domain->bbox_min.size() != dim || ckpt.domain->bbox_max.size() != dim)
        throw ContractError("transform and domain differ in dimension");
      w.put<std::uint32_t>(dim);
      w.put_array(ckpt.transform->center.data(), dim);
      w.put<double>(ckpt.transform->scale);
      w.put_array(ckpt.domain->bbox_min.data(), dim);
      w.put_array(ckpt.domain->bbox_max.data(), dim);
    }
    if (ckpt.optimizer) {
      const OptimizerState& s = *ckpt.optimizer;
      if (s.m.size() != s.v.size()) throw ContractError("optimizer moments differ in length");
      w.put<std::uint64_t>(s.iteration);
      w.put<std::uint64_t>(s.step);
      w.put<std::uint64_t>(static_cast<std::uint64_t>(s.m.size()));
      w.put_array(s.m.data(), s.m.size());
      w.put_array(s.v.data(), s.v.size());
    }
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move checkpoint into '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  Reader r(in, path);
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError("'" + path + "' is not a checkpoint (bad magic)", 0);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 0);

  Checkpoint ck;
  NetworkConfig& c = ck.params.config;
  c.input_dim = static_cast<int>(r.get_bounded(3, "input_dim"));
  c.hidden_layers = static_cast<int>(r.get_bounded(1u << 16, "hidden_layers"));
  c.hidden_width = static_cast<int>(r.get_bounded(1u << 20, "hidden_width"));
  c.layer_kind = static_cast<LayerKind>(r.get_bounded(1, "layer_kind"));
  c.init_scheme = static_cast<InitScheme>(r.get_bounded(2, "init_scheme"));
  c.omega0_first = r.get<double>();
  c.omega0_hidden = r.get<double>();
  c.quadratic_init_eps = r.get<double>();
  const auto layers = r.get_bounded(1u << 16, "layer_count");
  for (std::uint32_t i = 0; i < layers; ++i) {
    const Index out = r.get_bounded(1u << 20, "layer out");
    const Index inp = r.get_bounded(1u << 20, "layer in");
    const auto kind = static_cast<LayerKind>(r.get_bounded(1, "layer kind"));
    const auto act = r.get_bounded(1, "activation");
    const double w0 = r.get<double>();
    LayerParams l = LayerParams::zeros(out, inp, kind, act == 0 ? Activation::sine(w0) : Activation::identity());
    l.activation.omega0 = w0;
    l.W1 = r.get_rowmajor(out, inp);
    r.get_array(l.b1.data(), out);
    l.W2 = r.get_rowmajor(out, inp);
    r.get_array(l.b2.data(), out);
    l.W3 = r.get_rowmajor(out, inp);
    r.get_array(l.b3.data(), out);
    ck.params.layers.push_back(std::move(l));
  }
  try {
    ck.params.validate();
  } catch (const ContractError& e) {
    throw ParseError(std::string("inconsistent checkpoint: ") + e.what(), 0);
  }

  const auto flags = r.get<std::uint32_t>();
  if (flags & ~3u) throw ParseError("unknown checkpoint flags", 0);
  if (flags & 1u) {
    const Index dim = r.get_bounded(3, "frame dimension");
    NormalizeTransform t;
    Domain d;
    t.center.resize(dim);
    d.bbox_min.resize(dim);
    d.bbox_max.resize(dim);
    r.get_array(t.center.data(), dim);
    t.scale = r.get<double>();
    r.get_array(d.bbox_min.data(), dim);
    r.get_array(d.bbox_max.data(), dim);
    ck.transform = t;
    ck.domain = d;
  }
  if (flags & 2u) {
    OptimizerState s;
    s.iteration = r.get<std::uint64_t>();
    s.step = r.get<std::uint64_t>();
    const auto n = r.get<std::uint64_t>();
    if (n > (1ull << 32)) throw ParseError("optimizer state too large", 0);
    s.m.resize(static_cast<Index>(n));
    s.v.resize(static_cast<Index>(n));
    r.get_array(s.m.data(), s.m.size());
    r.get_array(s.v.data(), s.v.size());
    ck.optimizer = std::move(s);
  }
  if (in.peek() != std::ifstream::traits_type::eof()) throw ParseError("trailing bytes after checkpoint data", 0);
  return ck;
}

}  // namespace steik
