#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "steik/checkpoint.hpp"
#include "steik/fieldnet.hpp"
#include "steik/losses.hpp"
#include "steik/sampler.hpp"

namespace steik {

struct TrainConfig {
  int iterations = 10000;
  double lr = 1e-4;
  Eigen::Index surface_batch = 15000;
  Eigen::Index offsurface_batch = 15000;
  LossWeights weights;
  AnnealSchedule schedule;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: only at the end
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Center and scale the cloud first; otherwise the cloud is used as given and
  /// the domain is its bounding box enlarged 1.1 times.
  bool normalize_input = true;

  void validate() const;
};

struct HistoryRecord {
  int iter = 0;
  double anneal = 1.0;
  LossBreakdown loss;
};

struct TrainHistory {
  std::vector<HistoryRecord> records;
};

/// CSV with header iter,total,eik,manifold,nonmanifold,directional,divergence.
/// Terms whose jets were not needed at an iteration (second-order terms after
/// the anneal window closes) are reported as 0.
void save_history_csv(const TrainHistory& history, const std::string& path, bool append = false);

/// Textbook Adam with bias correction; increments state.step.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, OptimizerState& state, double lr, double beta1,
               double beta2, double eps);

struct FitOptions {
  std::string checkpoint_path;  // empty: no checkpoints
  std::optional<Checkpoint> resume;
  std::function<void(const HistoryRecord&)> on_iteration;
};

struct FitResult {
  NetworkParams params;
  TrainHistory history;
  NormalizeTransform transform;
  Domain domain;
  OptimizerState optimizer;

  Checkpoint checkpoint() const;
};

/// Adam on total_loss. Iteration i draws its batch from Rng::stream(seed, i),
/// so a resumed run reproduces an uninterrupted one bit for bit.
FitResult fit(const PointCloud& pc, const NetworkConfig& net_config, const TrainConfig& cfg,
              const FitOptions& options = {});

struct Preset {
  NetworkConfig net;
  TrainConfig train;
};

/// "srb", "shapenet" or "scene".
Preset preset(const std::string& name);

}  // namespace steik
