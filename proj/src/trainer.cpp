#include "steik/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "steik/error.hpp"
#include "steik/jetdiff.hpp"
#include "steik/rng.hpp"

namespace steik {

void TrainConfig::validate() const {
  if (iterations < 0) throw ContractError("iterations must be >= 0");
  if (!(lr > 0.0)) throw ContractError("learning rate must be > 0");
  if (surface_batch < 0 || offsurface_batch < 0 || surface_batch + offsurface_batch == 0)
    throw ContractError("batch sizes must be nonnegative and not both zero");
  if (checkpoint_every < 0) throw ContractError("checkpoint_every must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
    throw ContractError("Adam requires betas in [0, 1) and eps > 0");
  weights.validate();
  schedule.validate();
}

void save_history_csv(const TrainHistory& history, const std::string& path, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  if (!append || out.tellp() == 0) out << "iter,total,eik,manifold,nonmanifold,directional,divergence\n";
  out << std::setprecision(10);
  for (const HistoryRecord& r : history.records)
    out << r.iter << ',' << r.loss.total << ',' << r.loss.eikonal << ',' << r.loss.manifold << ','
        << r.loss.nonmanifold << ',' << r.loss.directional << ',' << r.loss.divergence << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, OptimizerState& s, double lr, double beta1,
               double beta2, double eps) {
  if (grad.size() != params.size()) throw ContractError("gradient and parameters differ in length");
  if (s.m.size() != params.size()) {
    s.m = Eigen::VectorXd::Zero(params.size());
    s.v = Eigen::VectorXd::Zero(params.size());
  }
  ++s.step;
  s.m = beta1 * s.m + (1.0 - beta1) * grad;
  s.v = beta2 * s.v + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(s.step));
  params.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps);
}

Checkpoint FitResult::checkpoint() const {
  Checkpoint c;
  c.params = params;
  c.transform = transform;
  c.domain = domain;
  c.optimizer = optimizer;
  return c;
}

FitResult fit(const PointCloud& pc, const NetworkConfig& net_config, const TrainConfig& cfg, const FitOptions& opt) {
  cfg.validate();
  net_config.validate();
  pc.validate();
  if (pc.dim() != net_config.input_dim)
    throw ContractError("point cloud dimension " + std::to_string(pc.dim()) + " does not match the network input");

  FitResult r;
  PointCloud cloud;
  if (cfg.normalize_input) {
    NormalizedCloud n = normalize(pc);
    cloud = std::move(n.cloud);
    r.transform = n.transform;
    r.domain = n.domain;
  } else {
    cloud = pc;
    r.transform.center = Vec::Zero(pc.dim());
    r.transform.scale = 1.0;
    r.domain = bounding_domain(pc.points, 1.1);
  }

  if (opt.resume) {
    r.params = opt.resume->params;
    if (r.params.input_dim() != net_config.input_dim) throw ContractError("resume checkpoint has a different input dim");
    if (opt.resume->optimizer) r.optimizer = *opt.resume->optimizer;
    if (opt.resume->transform) r.transform = *opt.resume->transform;
    if (opt.resume->domain) r.domain = *opt.resume->domain;
  } else {
    r.params = init(net_config, cfg.seed);
  }

  const bool use_normals = cfg.weights.alpha_normal > 0.0;
  if (use_normals && !cloud.has_normals()) throw ContractError("normal loss weight is set but the cloud has no normals");

  auto write_checkpoint = [&] {
    if (!opt.checkpoint_path.empty()) save_checkpoint(opt.checkpoint_path, r.checkpoint());
  };

  Eigen::VectorXd theta = flatten(r.params);
  const auto start = static_cast<int>(r.optimizer.iteration);
  for (int it = start; it < cfg.iterations; ++it) {
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(it));
    SampleBatch batch;
    SurfaceSamples surf = sample_surface(cloud, cfg.surface_batch, rng);
    batch.surface = std::move(surf.points);
    if (use_normals) batch.surface_normals = std::move(surf.normals);
    batch.offsurface = sample_uniform(r.domain, cfg.offsurface_batch, rng);

    HistoryRecord rec;
    rec.iter = it;
    rec.anneal = anneal_factor(cfg.schedule, it);
    GradResult g;
    try {
      g = grad_loss(r.params, batch, cfg.weights, rec.anneal);
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(it) + ": " + e.what());
    }
    const Eigen::VectorXd grad = flatten(g.grad, r.params);
    if (!grad.allFinite()) throw NumericalError("iteration " + std::to_string(it) + ": non-finite gradient");
    rec.loss = g.loss;

    adam_step(theta, grad, r.optimizer, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    unflatten(theta, r.params);
    r.optimizer.iteration = static_cast<std::uint64_t>(it + 1);
    r.history.records.push_back(rec);
    if (opt.on_iteration) opt.on_iteration(rec);
    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) write_checkpoint();
  }
  write_checkpoint();
  return r;
}

Preset preset(const std::string& name) {
  Preset p;
  p.net.input_dim = 3;
  p.net.hidden_layers = 5;
  p.net.hidden_width = 128;
  p.net.layer_kind = LayerKind::Quadratic;
  p.net.init_scheme = InitScheme::MultiFreqGeometric;
  TrainConfig& t = p.train;
  t.iterations = 10000;
  t.surface_batch = t.offsurface_batch = 15000;
  t.schedule = {2000, 4000, AnnealSchedule::Mode::LinearToZero};
  t.weights = LossWeights{};
  if (name == "srb") {
    t.lr = 1e-4;
    t.weights.alpha_m = 2000.0;
  } else if (name == "shapenet") {
    t.lr = 5e-5;
    t.weights.alpha_m = 5000.0;
  } else if (name == "scene") {
    t.lr = 8e-6;
    t.iterations = 100000;
    t.weights.alpha_m = 5000.0;
    t.weights.alpha_l = 10.0;
    t.schedule = {10000, 30000, AnnealSchedule::Mode::LinearToZero};
    p.net.hidden_layers = 8;
    p.net.hidden_width = 256;
    p.net.init_scheme = InitScheme::SirenUniform;
  } else {
    throw ContractError("unknown preset '" + name + "' (expected srb, shapenet or scene)");
  }
  return p;
}

}  // namespace steik
