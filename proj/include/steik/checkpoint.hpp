#pragma once

// Binary checkpoint format (all integers and floats little-endian):
//
//   "STEIK1"                          6-byte magic
//   u32 version                       currently 1
//   u32 input_dim, hidden_layers, hidden_width, layer_kind, init_scheme
//   f64 omega0_first, omega0_hidden, quadratic_init_eps
//   u32 layer_count
//   per layer:
//     u32 out, in, kind, activation (0 sine, 1 identity); f64 omega0
//     f64 arrays W1 (out x in, row-major), b1, W2, b2, W3, b3
//   u32 flags
//   flags & 1: u32 dim; f64 center[dim]; f64 scale; f64 bbox_min[dim]; f64 bbox_max[dim]
//   flags & 2: u64 iteration; u64 adam_step; u64 n; f64 m[n]; f64 v[n]

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "steik/fieldnet.hpp"
#include "steik/sampler.hpp"

namespace steik {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Adam moments over the flattened trainable parameters.
struct OptimizerState {
  std::uint64_t iteration = 0;  // training iterations completed
  std::uint64_t step = 0;       // Adam bias-correction counter
  Eigen::VectorXd m;
  Eigen::VectorXd v;
};

struct Checkpoint {
  NetworkParams params;
  std::optional<NormalizeTransform> transform;
  std::optional<Domain> domain;
  std::optional<OptimizerState> optimizer;
};

/// Writes to a temporary file and renames it over `path`.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws IoError when unreadable, ParseError on bad magic, version or truncation.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace steik
