#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "steik/fieldnet.hpp"
#include "steik/losses.hpp"

namespace steik::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

/// Parses one subcommand (fit, evolve, extract, eval, gradcheck, ablate) and runs
/// it. Library errors map to the exit codes above.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Expands `--config FILE` into `--key=value` arguments placed right after the
/// subcommand, so later command-line flags override them. FILE holds flat
/// "key = value" lines; '#' starts a comment.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

struct GradcheckOptions {
  LayerKind kind = LayerKind::Quadratic;
  int layers = 3;
  int width = 16;
  int dim = 3;
  double omega0 = 30.0;
  std::uint64_t seed = 0;
  int coords = 64;
  double step = 1e-5;
  /// all, eikonal, manifold, nonmanifold, directional, divergence or normal.
  std::string term = "all";
  Eigen::Index surface = 8;
  Eigen::Index offsurface = 8;
};

/// Random network with sine pre-activations of order one and nonzero quadratic
/// terms, so every path of the backward pass carries weight.
NetworkParams gradcheck_network(const GradcheckOptions& o);
LossWeights gradcheck_weights(const std::string& term);

/// Largest relative error of the analytic loss gradient against central
/// differences, with the output layer of gradcheck_network rescaled to unit mean
/// slope over the batch.
double gradcheck(const GradcheckOptions& o);

struct AblateOptions {
  Eigen::Index points = 20000;
  int iterations = 200;
  Eigen::Index batch = 256;
  int layers = 2;
  int width = 32;
  int resolution = 48;
  Eigen::Index eval_samples = 5000;
  std::uint64_t seed = 0;
};

struct AblateRow {
  PNorm eikonal = PNorm::L1;
  PNorm regularizer = PNorm::L1;
  LossBreakdown final_loss;
  double d_C = 0.0;  // NaN when the extracted mesh is empty
  double d_H = 0.0;

  bool finite() const;
};

/// Fits the torus fixture (ring 0.5, tube 0.2) once per cell of the eikonal x
/// regularizer norm matrix with the directional regularizer.
std::vector<AblateRow> ablate(const AblateOptions& o);
/// One row per cell plus a comment line with the published L1/L1 reference.
std::string ablate_csv(const std::vector<AblateRow>& rows);

}  // namespace steik::cli
