#include "steik/fieldnet.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "jet_engine.hpp"
#include "steik/error.hpp"
#include "steik/rng.hpp"

namespace steik {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr Index kValueChunk = 8192;

void fill_uniform(MatrixXd& m, Rng& rng, double half_width) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-half_width, half_width);
}

void fill_uniform(VectorXd& v, Rng& rng, double half_width) {
  for (Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-half_width, half_width);
}

void fill_normal(MatrixXd& m, Rng& rng, double stddev) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = stddev * rng.normal();
}

void fill_normal(VectorXd& v, Rng& rng, double stddev) {
  for (Index i = 0; i < v.size(); ++i) v(i) = stddev * rng.normal();
}

// SIREN: first layer U(-1/in, 1/in), later layers U(-sqrt(6/in)/w0, sqrt(6/in)/w0);
// biases follow the usual fan-in rule U(-1/sqrt(in), 1/sqrt(in)).
void siren_layer(LayerParams& layer, std::size_t index, const NetworkConfig& cfg, Rng& rng) {
  const double in = static_cast<double>(layer.in_dim());
  const double bound = index == 0 ? 1.0 / in : std::sqrt(6.0 / in) / cfg.omega0_hidden;
  fill_uniform(layer.W2, rng, bound);
  fill_uniform(layer.b2, rng, 1.0 / std::sqrt(in));
}

// Sine variant of geometric initialization. The hidden stack is kept in the
// near-linear regime of sin, the last hidden layer turns each unit into
// cos(pi/2 h) ~ 1 - (pi h)^2 / 8 and the output sums them with weight -1, so the
// initial field is a bowl around the origin. The output layer is calibrated
// later to unit mean slope and a zero level set at init_radius.
void geometric_layer(LayerParams& layer, std::size_t index, std::size_t last, const NetworkConfig& cfg, Rng& rng) {
  const double out = static_cast<double>(layer.out_dim());
  const double half_pi = 0.5 * std::numbers::pi;
  if (index == last) {
    fill_normal(layer.W2, rng, 1e-5);
    layer.W2.array() -= 1.0;
    layer.b2.setConstant(static_cast<double>(layer.in_dim()));
    return;
  }
  const double w0 = index == 0 ? cfg.omega0_first : cfg.omega0_hidden;
  if (index + 1 == last && index > 0) {
    fill_normal(layer.W2, rng, 1e-3);
    layer.W2.diagonal().array() += half_pi;
    fill_normal(layer.b2, rng, 1e-3);
    layer.b2.array() += half_pi;
    layer.W2 /= w0;
    layer.b2 /= w0;
    return;
  }
  fill_uniform(layer.W2, rng, std::sqrt(3.0 / out));
  if (index > 0) layer.W2.diagonal().array() += 1.0;
  layer.W2 /= w0;
  fill_uniform(layer.b2, rng, 1.0 / (1000.0 * out));
}

// Multi-frequency variant: the first layer's rows are split into a geometric
// low-frequency block and three blocks scaled by 4, 16 and 64; the next layer
// couples to the high-frequency units with weight 1e-3 so the initial shape is
// the geometric one.
void multifreq_adjust(NetworkParams& net) {
  LayerParams& first = net.layers.front();
  const Index rows = first.out_dim();
  const Index low = std::max<Index>(1, rows / 4);
  const Index rest = rows - low;
  for (Index r = low; r < rows; ++r) {
    const Index block = rest > 0 ? std::min<Index>(2, (r - low) * 3 / rest) : 0;
    first.W2.row(r) *= std::pow(4.0, static_cast<double>(block + 1));
  }
  if (net.layers.size() > 2) net.layers[1].W2.rightCols(rest) *= 1e-3;
}

std::vector<Eigen::VectorXd> calibration_points(int dim, double radius) {
  std::vector<Eigen::VectorXd> pts;
  constexpr int count = 64;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd p(dim);
    if (dim == 1) {
      p(0) = i % 2 == 0 ? radius : -radius;
    } else if (dim == 2) {
      const double t = 2.0 * std::numbers::pi * (i + 0.5) / count;
      p << radius * std::cos(t), radius * std::sin(t);
    } else {
      const double z = 1.0 - 2.0 * (i + 0.5) / count;
      const double r = std::sqrt(1.0 - z * z);
      const double t = std::numbers::pi * (3.0 - std::sqrt(5.0)) * i;
      p << radius * r * std::cos(t), radius * r * std::sin(t), radius * z;
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

FieldJet jet_at(const MatrixXd& out, const detail::JetLayout& lay, Index s) {
  FieldJet jet;
  jet.value = out(0, s);
  if (lay.order >= JetOrder::Gradient) {
    jet.grad.resize(lay.dim);
    for (int k = 0; k < lay.dim; ++k) jet.grad(k) = out(0, lay.grad(k) * lay.batch + s);
  }
  if (lay.order >= JetOrder::Hessian) {
    jet.hess.resize(lay.dim, lay.dim);
    for (auto [k, l] : lay.hess_pairs()) {
      const double v = out(0, lay.hess(k, l) * lay.batch + s);
      jet.hess(k, l) = v;
      jet.hess(l, k) = v;
    }
  }
  return jet;
}

void check_point_dim(const NetworkParams& params, Index rows) {
  if (rows != params.input_dim())
    throw ContractError("point dimension " + std::to_string(rows) + " does not match network input dimension " +
                        std::to_string(params.input_dim()));
}

}  // namespace

LayerParams LayerParams::zeros(Index out, Index in, LayerKind kind, Activation act) {
  LayerParams l;
  l.kind = kind;
  l.activation = act;
  l.W1 = MatrixXd::Zero(out, in);
  l.W2 = MatrixXd::Zero(out, in);
  l.W3 = MatrixXd::Zero(out, in);
  l.b1 = VectorXd::Ones(out);
  l.b2 = VectorXd::Zero(out);
  l.b3 = VectorXd::Zero(out);
  return l;
}

void LayerParams::validate() const {
  const Index out = W2.rows(), in = W2.cols();
  if (W1.rows() != out || W1.cols() != in || W3.rows() != out || W3.cols() != in)
    throw ContractError("layer weight matrices must share dimensions");
  if (b1.size() != out || b2.size() != out || b3.size() != out)
    throw ContractError("layer biases must have length equal to the output width");
  if (activation.type == Activation::Type::Sine && !(activation.omega0 > 0.0))
    throw ContractError("sine activation requires omega0 > 0");
  if (kind == LayerKind::Linear) {
    if (!W1.isZero(0.0) || !W3.isZero(0.0) || !b3.isZero(0.0) || !(b1.array() == 1.0).all())
      throw ContractError("linear layer requires W1 = W3 = 0, b3 = 0 and b1 = 1");
  }
}

void NetworkConfig::validate() const {
  if (input_dim < 1 || input_dim > 3) throw ContractError("input_dim must be 1, 2 or 3");
  if (hidden_layers < 1) throw ContractError("hidden_layers must be >= 1");
  if (hidden_width < 1) throw ContractError("hidden_width must be >= 1");
  if (!(omega0_first > 0.0) || !(omega0_hidden > 0.0)) throw ContractError("omega0 must be > 0");
  if (!(quadratic_init_eps >= 0.0)) throw ContractError("quadratic_init_eps must be >= 0");
  if (!(init_radius > 0.0)) throw ContractError("init_radius must be > 0");
}

void NetworkParams::validate() const {
  config.validate();
  if (layers.empty()) throw ContractError("network has no layers");
  Index width = config.input_dim;
  for (const LayerParams& l : layers) {
    l.validate();
    if (l.in_dim() != width) throw ContractError("layer dimensions do not chain");
    width = l.out_dim();
  }
  if (width != 1) throw ContractError("network output must be scalar");
}

std::vector<int> layer_widths(const NetworkConfig& config) {
  std::vector<int> w{config.input_dim};
  for (int i = 0; i < config.hidden_layers; ++i) w.push_back(config.hidden_width);
  w.push_back(1);
  return w;
}

std::size_t param_count(const NetworkConfig& config) {
  config.validate();
  const auto w = layer_widths(config);
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i)
    n += static_cast<std::size_t>(w[i + 1]) * static_cast<std::size_t>(w[i] + 1);
  return config.layer_kind == LayerKind::Quadratic ? 3 * n : n;
}

double forward(const NetworkParams& params, const Eigen::Ref<const VectorXd>& x) {
  check_point_dim(params, x.size());
  VectorXd h = x;
  for (const LayerParams& l : params.layers) {
    VectorXd a;
    if (l.kind == LayerKind::Linear) {
      a = l.W2 * h + l.b2;
    } else {
      const VectorXd sq = h.array().square();
      a = ((l.W1 * h + l.b1).array() * (l.W2 * h + l.b2).array()).matrix() + l.W3 * sq + l.b3;
    }
    if (l.activation.type == Activation::Type::Sine) a = (l.activation.omega0 * a.array()).sin().matrix();
    h = std::move(a);
  }
  return h(0);
}

std::vector<FieldJet> forward_jets(const NetworkParams& params, const Eigen::Ref<const MatrixXd>& points,
                                   JetOrder order) {
  check_point_dim(params, points.rows());
  std::vector<FieldJet> jets;
  jets.reserve(static_cast<std::size_t>(points.cols()));
  const Index chunk = order == JetOrder::Value ? kValueChunk : 512;
  for (Index start = 0; start < points.cols(); start += chunk) {
    detail::JetLayout lay{params.input_dim(), order, std::min(chunk, points.cols() - start)};
    const MatrixXd out = detail::propagate(params, lay, points.middleCols(start, lay.batch), nullptr);
    for (Index s = 0; s < lay.batch; ++s) jets.push_back(jet_at(out, lay, s));
  }
  return jets;
}

FieldJet forward_jet(const NetworkParams& params, const Eigen::Ref<const VectorXd>& x) {
  check_point_dim(params, x.size());
  MatrixXd p = x;
  return forward_jets(params, p, JetOrder::Hessian).front();
}

VectorXd forward_values(const NetworkParams& params, const Eigen::Ref<const MatrixXd>& points) {
  check_point_dim(params, points.rows());
  VectorXd values(points.cols());
  for (Index start = 0; start < points.cols(); start += kValueChunk) {
    detail::JetLayout lay{params.input_dim(), JetOrder::Value, std::min(kValueChunk, points.cols() - start)};
    values.segment(start, lay.batch) =
        detail::propagate(params, lay, points.middleCols(start, lay.batch), nullptr).row(0).transpose();
  }
  return values;
}

NetworkParams init(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  NetworkParams net;
  net.config = config;
  const auto widths = layer_widths(config);
  const std::size_t last = widths.size() - 2;
  Rng rng(seed);

  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const Activation act =
        i == last ? Activation::identity() : Activation::sine(i == 0 ? config.omega0_first : config.omega0_hidden);
    LayerParams layer = LayerParams::zeros(widths[i + 1], widths[i], config.layer_kind, act);
    if (config.init_scheme == InitScheme::SirenUniform)
      siren_layer(layer, i, config, rng);
    else
      geometric_layer(layer, i, last, config, rng);
    if (config.layer_kind == LayerKind::Quadratic) {
      const double eps = config.quadratic_init_eps;
      fill_uniform(layer.W1, rng, eps);
      fill_uniform(layer.W3, rng, eps);
      fill_uniform(layer.b3, rng, eps);
      layer.b1.setOnes();
    }
    net.layers.push_back(std::move(layer));
  }

  if (config.init_scheme == InitScheme::MultiFreqGeometric) multifreq_adjust(net);
  if (config.init_scheme != InitScheme::SirenUniform) {
    const auto pts = calibration_points(config.input_dim, config.init_radius);
    double slope = 0.0;
    for (const auto& p : pts) slope += forward_jet(net, p).grad.norm();
    slope /= static_cast<double>(pts.size());
    LayerParams& out = net.layers.back();
    out.W2 /= slope;
    out.b2 /= slope;
    double mean = 0.0;
    for (const auto& p : pts) mean += forward(net, p);
    mean /= static_cast<double>(pts.size());
    net.layers.back().b2(0) -= mean;
  }
  return net;
}

const char* to_string(LayerKind kind) { return kind == LayerKind::Linear ? "linear" : "quadratic"; }

const char* to_string(InitScheme scheme) {
  switch (scheme) {
    case InitScheme::SirenUniform: return "siren";
    case InitScheme::GeometricSine: return "geometric";
    case InitScheme::MultiFreqGeometric: return "mfgi";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "linear") return LayerKind::Linear;
  if (s == "quadratic") return LayerKind::Quadratic;
  throw ContractError("unknown layer kind '" + s + "'");
}

InitScheme init_scheme_from_string(const std::string& s) {
  if (s == "siren") return InitScheme::SirenUniform;
  if (s == "geometric") return InitScheme::GeometricSine;
  if (s == "mfgi") return InitScheme::MultiFreqGeometric;
  throw ContractError("unknown init scheme '" + s + "'");
}

}  // namespace steik
