#include <doctest.h>

#include <cmath>

#include "steik/error.hpp"
#include "steik/fieldnet.hpp"
#include "steik/jetdiff.hpp"
#include "support.hpp"

using namespace steik;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

NetworkParams single_layer(int in, LayerKind kind) {
  NetworkParams p;
  p.config.input_dim = in;
  p.config.hidden_layers = 1;
  p.config.hidden_width = 1;
  p.config.layer_kind = kind;
  p.layers.push_back(LayerParams::zeros(1, in, kind, Activation::identity()));
  return p;
}

// Central differences of forward with step h, Richardson-extrapolated with h/2.
FieldJet fd_jet(const NetworkParams& p, const VectorXd& x, double h) {
  const int n = static_cast<int>(x.size());
  auto f = [&](int a, double da, int b, double db) {
    VectorXd y = x;
    y(a) += da;
    y(b) += db;
    return forward(p, y);
  };
  auto central = [&](double s) {
    FieldJet j;
    j.value = forward(p, x);
    j.grad = Vec::Zero(n);
    j.hess = Mat::Zero(n, n);
    for (int a = 0; a < n; ++a) {
      j.grad(a) = (f(a, s, a, 0) - f(a, -s, a, 0)) / (2 * s);
      j.hess(a, a) = (f(a, s, a, 0) - 2 * j.value + f(a, -s, a, 0)) / (s * s);
      for (int b = a + 1; b < n; ++b)
        j.hess(a, b) = j.hess(b, a) = (f(a, s, b, s) - f(a, s, b, -s) - f(a, -s, b, s) + f(a, -s, b, -s)) / (4 * s * s);
    }
    return j;
  };
  const FieldJet coarse = central(h), fine = central(h / 2);
  FieldJet j = fine;
  j.grad = (4 * fine.grad - coarse.grad) / 3;
  j.hess = (4 * fine.hess - coarse.hess) / 3;
  return j;
}

}  // namespace

TEST_CASE("quadratic layer examples") {
  NetworkParams p = single_layer(1, LayerKind::Quadratic);
  p.layers[0].b1(0) = 1;
  p.layers[0].W2(0, 0) = 3;
  p.layers[0].b2(0) = 1;
  CHECK(forward(p, VectorXd::Constant(1, 2.0)) == 7.0);

  p = single_layer(1, LayerKind::Quadratic);
  p.layers[0].W1(0, 0) = 1;
  p.layers[0].b1(0) = 0;
  p.layers[0].W2(0, 0) = 1;
  CHECK(forward(p, VectorXd::Constant(1, 3.0)) == 9.0);
}

TEST_CASE("composition oracle builds x^4") {
  const double c[5] = {0, 0, 0, 1e-300, 1};
  NetworkParams p = test::quartic_net(c);
  p.layers[1].b1(0) = 0;
  p.layers[1].W2(0, 1) = 0;
  CHECK(forward(p, VectorXd::Constant(1, 1.5)) == doctest::Approx(5.0625).epsilon(1e-15));
}

TEST_CASE("quartic expressivity on a random polynomial") {
  Rng rng(42);
  double c[5];
  for (double& ck : c) ck = rng.uniform(-1, 1);
  if (std::abs(c[3]) < 0.1) c[3] = 0.5;
  const NetworkParams p = test::quartic_net(c);
  for (int k = 0; k < 100; ++k) {
    const double x = rng.uniform(-2, 2);
    double exact = 0, scale = 0;
    for (int d = 4; d >= 0; --d) {
      exact = exact * x + c[d];
      scale += std::abs(c[d]) * std::pow(std::abs(x), d);
    }
    CHECK(std::abs(forward(p, VectorXd::Constant(1, x)) - exact) <= 1e-10 * scale);
  }
}

TEST_CASE("contrived jets") {
  NetworkParams plane = single_layer(2, LayerKind::Linear);
  plane.layers[0].W2(0, 0) = 1;
  const FieldJet a = forward_jet(plane, Eigen::Vector2d(0.3, -0.7));
  CHECK(a.value == 0.3);
  CHECK(a.grad(0) == 1.0);
  CHECK(a.grad(1) == 0.0);
  CHECK(a.hess.norm() == 0.0);

  NetworkParams bowl = single_layer(2, LayerKind::Quadratic);
  bowl.layers[0].W3.setOnes();
  const FieldJet b = forward_jet(bowl, Eigen::Vector2d(1, 2));
  CHECK(b.value == 5.0);
  CHECK(b.grad(0) == 4.0 / 2.0);
  CHECK(b.grad(1) == 4.0);
  CHECK((b.hess - 2.0 * Mat::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("jets match forward and finite differences on random networks") {
  Rng rng(7);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const LayerKind kind = trial % 2 ? LayerKind::Quadratic : LayerKind::Linear;
    const int dim = 1 + trial % 3;
    const NetworkParams p = test::random_net(kind, 1 + trial % 3, 8, dim, 2.0, static_cast<std::uint64_t>(trial));
    const VectorXd x = test::random_points(dim, 1, rng).col(0);
    const FieldJet j = forward_jet(p, x);
    REQUIRE(std::abs(j.value - forward(p, x)) <= 1e-12 * std::max(1.0, std::abs(j.value)));
    CHECK((j.hess - j.hess.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const FieldJet fd = fd_jet(p, x, 1e-4);
    const double ge = (j.grad - fd.grad).cwiseAbs().maxCoeff() / std::max(j.grad.cwiseAbs().maxCoeff(), 1.0);
    const double he = (j.hess - fd.hess).cwiseAbs().maxCoeff() / std::max(j.hess.cwiseAbs().maxCoeff(), 1.0);
    CHECK(ge < 1e-5);
    CHECK(he < 1e-5);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("batched jets agree with single-point jets") {
  const NetworkParams p = test::random_net(LayerKind::Quadratic, 3, 16, 3, 30.0, 5);
  Rng rng(3);
  const MatrixXd pts = test::random_points(3, 1100, rng);
  const auto jets = forward_jets(p, pts);
  const VectorXd values = forward_values(p, pts);
  for (Eigen::Index i = 0; i < pts.cols(); i += 97) {
    const FieldJet s = forward_jet(p, pts.col(i));
    CHECK(jets[i].value == s.value);
    CHECK(values(i) == s.value);
    CHECK((jets[i].grad - s.grad).norm() == 0.0);
    CHECK((jets[i].hess - s.hess).norm() == 0.0);
  }
  const auto grads = forward_jets(p, pts, JetOrder::Gradient);
  CHECK(grads[5].hess.size() == 0);
  CHECK((grads[5].grad - jets[5].grad).norm() == 0.0);
}

TEST_CASE("quadratic layer with linear settings equals the linear layer") {
  const NetworkParams lin = test::random_net(LayerKind::Linear, 3, 12, 2, 30.0, 11);
  NetworkParams quad = lin;
  quad.config.layer_kind = LayerKind::Quadratic;
  for (LayerParams& l : quad.layers) l.kind = LayerKind::Quadratic;
  Rng rng(1);
  for (int k = 0; k < 20; ++k) {
    const VectorXd x = test::random_points(2, 1, rng).col(0);
    const FieldJet a = forward_jet(lin, x), b = forward_jet(quad, x);
    CHECK(a.value == b.value);
    CHECK((a.grad - b.grad).norm() == 0.0);
    CHECK((a.hess - b.hess).norm() == 0.0);
  }
}

TEST_CASE("init") {
  NetworkConfig c;
  c.hidden_layers = 3;
  c.hidden_width = 32;
  SUBCASE("zero epsilon quadratic equals its linear sub-network") {
    c.quadratic_init_eps = 0.0;
    for (InitScheme s : {InitScheme::SirenUniform, InitScheme::GeometricSine, InitScheme::MultiFreqGeometric}) {
      c.init_scheme = s;
      const NetworkParams q = init(c, 9);
      NetworkParams l = q;
      l.config.layer_kind = LayerKind::Linear;
      for (LayerParams& layer : l.layers) layer.kind = LayerKind::Linear;
      l.validate();
      Rng rng(2);
      for (int k = 0; k < 10; ++k) {
        const VectorXd x = test::random_points(3, 1, rng).col(0);
        CHECK(forward(q, x) == forward(l, x));
      }
    }
  }
  SUBCASE("deterministic") {
    const NetworkParams a = init(c, 123), b = init(c, 123), d = init(c, 124);
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
      CHECK(a.layers[k].W1 == b.layers[k].W1);
      CHECK(a.layers[k].W2 == b.layers[k].W2);
      CHECK(a.layers[k].b2 == b.layers[k].b2);
      CHECK(a.layers[k].W3 == b.layers[k].W3);
    }
    CHECK(a.layers[1].W2 != d.layers[1].W2);
  }
  SUBCASE("quadratic extras are small and b1 is one") {
    const NetworkParams p = init(c, 5);
    for (const LayerParams& l : p.layers) {
      CHECK(l.W1.cwiseAbs().maxCoeff() <= 1e-4);
      CHECK(l.W3.cwiseAbs().maxCoeff() <= 1e-4);
      CHECK(l.b3.cwiseAbs().maxCoeff() <= 1e-4);
      CHECK((l.b1.array() == 1.0).all());
    }
  }
  SUBCASE("siren hidden range") {
    c.init_scheme = InitScheme::SirenUniform;
    const NetworkParams p = init(c, 77);
    for (std::size_t k = 1; k < p.layers.size(); ++k) {
      const double bound = std::sqrt(6.0 / static_cast<double>(p.layers[k].in_dim())) / c.omega0_hidden;
      CHECK(p.layers[k].W2.cwiseAbs().maxCoeff() <= bound);
      CHECK(p.layers[k].W2.cwiseAbs().maxCoeff() > 0.5 * bound);
    }
  }
  SUBCASE("geometric schemes start near a sphere-like field") {
    for (InitScheme s : {InitScheme::GeometricSine, InitScheme::MultiFreqGeometric}) {
      c.init_scheme = s;
      const NetworkParams p = init(c, 4);
      CHECK(forward(p, Eigen::Vector3d::Zero()) < 0.0);
      CHECK(forward(p, Eigen::Vector3d(1.5, 0, 0)) > 0.0);
      // Averaged over the sphere of radius init_radius: near zero with unit slope.
      Rng rng(9);
      double value = 0, slope = 0;
      const int n = 500;
      for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d q = c.init_radius * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
        const FieldJet j = forward_jet(p, q);
        value += j.value / n;
        slope += j.grad.norm() / n;
      }
      CHECK(std::abs(value) < 0.05);
      CHECK(slope == doctest::Approx(1.0).epsilon(0.1));
    }
  }
}

TEST_CASE("param_count") {
  NetworkConfig c;
  c.layer_kind = LayerKind::Linear;
  c.hidden_layers = 5;
  c.hidden_width = 256;
  CHECK(param_count(c) == 264449);
  CHECK(std::round(param_count(c) / 1e4) / 100 == doctest::Approx(0.26));
  c.layer_kind = LayerKind::Quadratic;
  c.hidden_width = 128;
  CHECK(param_count(c) == 200067);
  CHECK(std::round(param_count(c) / 1e4) / 100 == doctest::Approx(0.20));
  c = NetworkConfig{};
  c.input_dim = 1;
  c.layer_kind = LayerKind::Linear;
  c.hidden_layers = 1;
  c.hidden_width = 1;
  CHECK(param_count(c) == 4);
  c.layer_kind = LayerKind::Quadratic;
  CHECK(param_count(c) == 12);
  CHECK(trainable_count(init(c, 0)) == 12);
  c = NetworkConfig{};
  CHECK(trainable_count(init(c, 0)) == param_count(c));
}

TEST_CASE("contract errors") {
  const NetworkParams p = test::random_net(LayerKind::Linear, 2, 4, 3, 30.0, 1);
  CHECK_THROWS_AS(forward(p, Eigen::Vector2d(0, 0)), ContractError);
  CHECK_THROWS_AS(forward_jet(p, Eigen::Vector4d(0, 0, 0, 0)), ContractError);
  NetworkConfig c;
  c.hidden_layers = 0;
  CHECK_THROWS_AS(init(c, 0), ContractError);
  LayerParams l = LayerParams::zeros(2, 2, LayerKind::Linear, Activation::sine(30));
  l.W1(0, 0) = 1;
  CHECK_THROWS_AS(l.validate(), ContractError);
  CHECK_THROWS_AS(layer_kind_from_string("cubic"), ContractError);
  CHECK(layer_kind_from_string(to_string(LayerKind::Quadratic)) == LayerKind::Quadratic);
  CHECK(init_scheme_from_string(to_string(InitScheme::GeometricSine)) == InitScheme::GeometricSine);
}
