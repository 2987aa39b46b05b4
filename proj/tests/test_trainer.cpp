#include <doctest.h>

#include <cmath>
#include <fstream>

#include "steik/checkpoint.hpp"
#include "steik/error.hpp"
#include "steik/jetdiff.hpp"
#include "steik/trainer.hpp"
#include "support.hpp"

using namespace steik;
using Eigen::VectorXd;

namespace {

PointCloud plane_cloud(int n, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud pc;
  pc.points = Eigen::MatrixXd::Zero(3, n);
  for (int i = 0; i < n; ++i) {
    pc.points(0, i) = rng.uniform(-1, 1);
    pc.points(1, i) = rng.uniform(-1, 1);
  }
  return pc;
}

NetworkConfig small_linear() {
  NetworkConfig c;
  c.layer_kind = LayerKind::Linear;
  c.hidden_layers = 3;
  c.hidden_width = 32;
  c.init_scheme = InitScheme::GeometricSine;
  return c;
}

TrainConfig small_train(int iters) {
  TrainConfig t;
  t.iterations = iters;
  t.lr = 1e-3;
  t.surface_batch = 128;
  t.offsurface_batch = 128;
  t.schedule = {iters / 5, 2 * iters / 5, AnnealSchedule::Mode::LinearToZero};
  t.seed = 3;
  return t;
}

bool same_params(const NetworkParams& a, const NetworkParams& b) { return flatten(a) == flatten(b); }

}  // namespace

TEST_CASE("adam") {
  OptimizerState s;
  VectorXd p = VectorXd::Constant(3, 0.5);
  adam_step(p, VectorXd::Zero(3), s, 1e-2, 0.9, 0.999, 1e-8);
  CHECK(p == VectorXd::Constant(3, 0.5));

  OptimizerState t;
  VectorXd q = VectorXd::Zero(1);
  adam_step(q, VectorXd::Ones(1), t, 1e-3, 0.9, 0.999, 1e-8);
  CHECK(q(0) == doctest::Approx(-1e-3).epsilon(1e-7));
  CHECK(t.step == 1);

  OptimizerState u;
  VectorXd th = VectorXd::Ones(1);
  for (int k = 0; k < 200; ++k) adam_step(th, 2.0 * th, u, 0.1, 0.9, 0.999, 1e-8);
  CHECK(std::abs(th(0)) < 1e-2);
  CHECK_THROWS_AS(adam_step(th, VectorXd::Zero(2), u, 0.1, 0.9, 0.999, 1e-8), ContractError);
}

TEST_CASE("zero iterations return the initialization") {
  const PointCloud pc = plane_cloud(50, 1);
  TrainConfig t = small_train(0);
  const FitResult r = fit(pc, small_linear(), t);
  CHECK(r.history.records.empty());
  CHECK(same_params(r.params, init(small_linear(), t.seed)));
}

TEST_CASE("plane fit drives the manifold loss down") {
  const PointCloud pc = plane_cloud(200, 2);
  NetworkConfig net = small_linear();
  net.init_scheme = InitScheme::SirenUniform;
  net.omega0_first = net.omega0_hidden = 3.0;
  TrainConfig t = small_train(500);
  t.lr = 1e-4;
  t.surface_batch = t.offsurface_batch = 256;
  t.schedule = {100, 200, AnnealSchedule::Mode::LinearToZero};
  const FitResult r = fit(pc, net, t);
  REQUIRE(r.history.records.size() == 500);
  for (const HistoryRecord& h : r.history.records) {
    REQUIRE(std::isfinite(h.loss.total));
    CHECK(h.loss.nonmanifold > 0.0);
    CHECK(h.loss.nonmanifold <= 1.0);
  }
  const double start = forward_values(init(net, t.seed), r.transform.apply(pc.points)).cwiseAbs().mean();
  const double end = forward_values(r.params, r.transform.apply(pc.points)).cwiseAbs().mean();
  CHECK(end < 2e-3);
  CHECK(end < 0.05 * start);
}

TEST_CASE("determinism and resume equivalence") {
  const PointCloud pc = plane_cloud(100, 4);
  const NetworkConfig net = small_linear();
  const auto dir = test::scratch_dir("resume");
  TrainConfig full = small_train(1000);
  full.surface_batch = full.offsurface_batch = 32;
  const FitResult a = fit(pc, net, full);
  const FitResult b = fit(pc, net, full);
  CHECK(same_params(a.params, b.params));

  TrainConfig half = full;
  half.iterations = 500;
  FitOptions o;
  o.checkpoint_path = (dir / "half.ckpt").string();
  fit(pc, net, half, o);
  FitOptions resume;
  resume.resume = load_checkpoint(o.checkpoint_path);
  const FitResult c = fit(pc, net, full, resume);
  CHECK(c.history.records.size() == 500);
  CHECK(c.history.records.front().iter == 500);
  CHECK(same_params(a.params, c.params));
  CHECK(a.optimizer.m == c.optimizer.m);
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto dir = test::scratch_dir("ckpt");
  const PointCloud pc = plane_cloud(60, 5);
  FitOptions o;
  o.checkpoint_path = (dir / "a.ckpt").string();
  const FitResult r = fit(pc, small_linear(), small_train(3), o);
  const Checkpoint back = load_checkpoint(o.checkpoint_path);
  CHECK(same_params(back.params, r.params));
  CHECK(back.params.config.hidden_width == 32);
  REQUIRE(back.optimizer);
  CHECK(back.optimizer->iteration == 3);
  CHECK(back.optimizer->v == r.optimizer.v);
  REQUIRE(back.transform);
  CHECK(back.transform->center == r.transform.center);
  CHECK(back.domain->bbox_max == r.domain.bbox_max);

  std::string bytes;
  {
    std::ifstream in(o.checkpoint_path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, std::string content) {
    const auto p = (dir / name).string();
    std::ofstream(p, std::ios::binary) << content;
    return p;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(load_checkpoint(write("magic.ckpt", bad_magic)), ParseError);
  std::string bad_version = bytes;
  bad_version[6] = 9;
  CHECK_THROWS_AS(load_checkpoint(write("version.ckpt", bad_version)), ParseError);
  CHECK_THROWS_AS(load_checkpoint(write("short.ckpt", bytes.substr(0, bytes.size() / 2))), ParseError);
  CHECK_THROWS_AS(load_checkpoint(write("long.ckpt", bytes + "x")), ParseError);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()), IoError);
}

TEST_CASE("history csv") {
  TrainHistory h;
  h.records.push_back({0, 1.0, LossBreakdown{1, 2, 3, 4, 5, 6, 0}});
  const auto path = (test::scratch_dir("history") / "h.csv").string();
  save_history_csv(h, path);
  save_history_csv(h, path, true);
  std::ifstream in(path);
  std::string header, row, row2, extra;
  std::getline(in, header);
  std::getline(in, row);
  std::getline(in, row2);
  CHECK(header == "iter,total,eik,manifold,nonmanifold,directional,divergence");
  CHECK(row == "0,1,2,3,4,5,6");
  CHECK(row2 == row);
  CHECK_FALSE(std::getline(in, extra));
}

TEST_CASE("presets") {
  const Preset srb = preset("srb");
  CHECK(srb.train.lr == 1e-4);
  CHECK(srb.train.iterations == 10000);
  CHECK(srb.train.surface_batch == 15000);
  CHECK(srb.train.offsurface_batch == 15000);
  CHECK(srb.train.weights.alpha_e == 50);
  CHECK(srb.train.weights.alpha_m == 2000);
  CHECK(srb.train.weights.alpha_n == 100);
  CHECK(srb.train.weights.alpha_l == 100);
  CHECK(srb.train.schedule.start_iter == 2000);
  CHECK(srb.train.schedule.end_iter == 4000);
  CHECK(srb.net.layer_kind == LayerKind::Quadratic);
  CHECK(srb.net.hidden_layers == 5);
  CHECK(srb.net.hidden_width == 128);
  const Preset sn = preset("shapenet");
  CHECK(sn.train.lr == 5e-5);
  CHECK(sn.train.weights.alpha_m == 5000);
  const Preset sc = preset("scene");
  CHECK(sc.train.lr == 8e-6);
  CHECK(sc.train.weights.alpha_l == 10);
  CHECK(sc.train.weights.alpha_m == 5000);
  CHECK(sc.train.schedule.start_iter == 10000);
  CHECK(sc.train.schedule.end_iter == 30000);
  CHECK(sc.net.hidden_layers == 8);
  CHECK(sc.net.hidden_width == 256);
  CHECK_THROWS_AS(preset("dfaust"), ContractError);
}

TEST_CASE("config validation") {
  TrainConfig t;
  t.lr = 0;
  CHECK_THROWS_AS(t.validate(), ContractError);
  t = TrainConfig{};
  t.surface_batch = t.offsurface_batch = 0;
  CHECK_THROWS_AS(t.validate(), ContractError);
  PointCloud pc2;
  pc2.points = Eigen::MatrixXd::Random(2, 10);
  CHECK_THROWS_AS(fit(pc2, small_linear(), small_train(1)), ContractError);
}
