#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "steik/fieldnet.hpp"
#include "steik/losses.hpp"
#include "steik/rng.hpp"

namespace steik::test {

/// Network with every weight drawn from N(0, 4 / (fan_in omega0^2)) (sine
/// pre-activations of order one) and quadratic-only entries scaled by quad, so
/// all code paths carry weight.
inline NetworkParams random_net(LayerKind kind, int layers, int width, int input_dim, double omega0,
                                std::uint64_t seed, double quad = 0.3) {
  NetworkConfig c;
  c.input_dim = input_dim;
  c.hidden_layers = layers;
  c.hidden_width = width;
  c.layer_kind = kind;
  c.omega0_first = c.omega0_hidden = omega0;
  c.init_scheme = InitScheme::SirenUniform;
  NetworkParams p = init(c, seed);
  Rng rng(seed * 7919 + 1);
  for (LayerParams& l : p.layers) {
    const double w = l.activation.type == Activation::Type::Sine ? l.activation.omega0 : 1.0;
    const double s = 2.0 / (w * std::sqrt(static_cast<double>(l.in_dim())));
    for (Eigen::Index k = 0; k < l.W2.size(); ++k) l.W2.data()[k] = s * rng.normal();
    for (Eigen::Index k = 0; k < l.b2.size(); ++k) l.b2(k) = 0.5 * rng.normal();
    if (kind == LayerKind::Quadratic) {
      for (Eigen::Index k = 0; k < l.W1.size(); ++k) l.W1.data()[k] = quad * s * rng.normal();
      for (Eigen::Index k = 0; k < l.W3.size(); ++k) l.W3.data()[k] = quad * s * rng.normal();
      for (Eigen::Index k = 0; k < l.b1.size(); ++k) l.b1(k) = 1.0 + quad * rng.normal();
      for (Eigen::Index k = 0; k < l.b3.size(); ++k) l.b3(k) = quad * rng.normal();
    }
  }
  return p;
}

/// Two activation-free quadratic layers computing c0 + c1 x + c2 x^2 + c3 x^3 + c4 x^4
/// (c3 nonzero). The first layer emits (x^2, x); the second forms
/// (x^2 + c1/c3)(c3 x) + c4 (x^2)^2 + c2 x^2 + c0.
inline NetworkParams quartic_net(const double c[5]) {
  NetworkParams p;
  p.config.input_dim = 1;
  p.config.hidden_layers = 1;
  p.config.hidden_width = 2;
  p.config.layer_kind = LayerKind::Quadratic;
  LayerParams l1 = LayerParams::zeros(2, 1, LayerKind::Quadratic, Activation::identity());
  l1.W1(0, 0) = 1;
  l1.b1(0) = 0;
  l1.W2(0, 0) = 1;
  l1.b1(1) = 1;
  l1.W2(1, 0) = 1;
  LayerParams l2 = LayerParams::zeros(1, 2, LayerKind::Quadratic, Activation::identity());
  l2.W1(0, 0) = 1;
  l2.b1(0) = c[1] / c[3];
  l2.W2(0, 1) = c[3];
  l2.W3(0, 0) = c[4];
  l2.W3(0, 1) = c[2];
  l2.b3(0) = c[0];
  p.layers = {l1, l2};
  return p;
}

inline Eigen::MatrixXd random_points(int dim, Eigen::Index n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Eigen::MatrixXd m(dim, n);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(lo, hi);
  return m;
}

inline SampleBatch random_batch(int dim, Eigen::Index ns, Eigen::Index no, std::uint64_t seed, bool normals = false) {
  Rng rng(seed);
  SampleBatch b;
  b.surface = random_points(dim, ns, rng, -0.8, 0.8);
  b.offsurface = random_points(dim, no, rng);
  if (normals) {
    b.surface_normals = random_points(dim, ns, rng);
    b.surface_normals.colwise().normalize();
  }
  return b;
}

inline SampleBatch jet_batch(std::vector<FieldJet> surface, std::vector<FieldJet> off) {
  SampleBatch b;
  const int dim = !surface.empty() ? static_cast<int>(surface[0].grad.size())
                                   : (!off.empty() ? static_cast<int>(off[0].grad.size()) : 1);
  b.surface = Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(surface.size()));
  b.offsurface = Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(off.size()));
  b.surface_jets = std::move(surface);
  b.offsurface_jets = std::move(off);
  return b;
}

inline FieldJet make_jet(double value, Vec grad, Mat hess) {
  FieldJet j;
  j.value = value;
  j.grad = std::move(grad);
  j.hess = std::move(hess);
  return j;
}

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("steik_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace steik::test
