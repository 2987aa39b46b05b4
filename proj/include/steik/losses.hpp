#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "steik/fieldnet.hpp"

namespace steik {

/// Guard for |grad u| in denominators.
inline constexpr double kEpsGrad = 1e-12;

enum class PNorm { L1 = 1, L2 = 2 };

const char* to_string(PNorm p);
PNorm pnorm_from_string(const std::string& s);

struct LossWeights {
  double alpha_e = 50.0;   // eikonal
  double alpha_m = 2000.0; // manifold
  double alpha_n = 100.0;  // non-manifold
  double alpha_l = 100.0;  // directional divergence
  double alpha_d = 0.0;    // full divergence
  double alpha = 100.0;    // sharpness of exp(-alpha |u|)
  double alpha_normal = 0.0;
  PNorm p_eik = PNorm::L1;
  PNorm p_reg = PNorm::L1;
  bool normalize_directional = true;

  void validate() const;
};

struct AnnealSchedule {
  enum class Mode { LinearToZero, Constant };
  int start_iter = 2000;
  int end_iter = 4000;
  Mode mode = Mode::LinearToZero;

  void validate() const;
};

/// Surface samples (points on the shape, optional normals) and off-surface
/// samples (drawn from the bounding box). Points are stored column-wise; the jet
/// vectors are filled by evaluate_jets or set directly by callers.
struct SampleBatch {
  Eigen::MatrixXd surface;
  Eigen::MatrixXd surface_normals;  // empty or same shape as surface
  Eigen::MatrixXd offsurface;
  std::vector<FieldJet> surface_jets;
  std::vector<FieldJet> offsurface_jets;

  bool has_normals() const { return surface_normals.cols() > 0; }
};

/// Unweighted loss terms plus the weighted total.
struct LossBreakdown {
  double total = 0.0;
  double eikonal = 0.0;
  double manifold = 0.0;
  double nonmanifold = 0.0;
  double directional = 0.0;
  double divergence = 0.0;
  double normal = 0.0;
};

void evaluate_jets(const NetworkParams& params, SampleBatch& batch, JetOrder order = JetOrder::Hessian);

double eikonal_loss(const SampleBatch& batch, PNorm p);
double manifold_loss(const SampleBatch& batch);
double nonmanifold_loss(const SampleBatch& batch, double alpha);
double divergence_loss(const SampleBatch& batch, PNorm p);
double directional_div_loss(const SampleBatch& batch, bool normalized, PNorm p = PNorm::L1);
double normal_loss(const SampleBatch& batch, PNorm p);

double anneal_factor(const AnnealSchedule& schedule, int iter);

/// Weighted total; the directional and divergence weights are multiplied by
/// anneal_factor(schedule, iter).
LossBreakdown total_loss(const SampleBatch& batch, const LossWeights& weights, int iter,
                         const AnnealSchedule& schedule);
/// Same, with the anneal factor given directly.
LossBreakdown total_loss(const SampleBatch& batch, const LossWeights& weights, double regularizer_factor = 1.0);

struct SecondOrderSplit {
  double u_nn = 0.0;      // second derivative along the unit gradient
  double u_tt_sum = 0.0;  // sum of tangential second derivatives
};

SecondOrderSplit decompose_second_order(const FieldJet& jet);

/// Highest jet order the weighted loss depends on.
JetOrder required_order(const LossWeights& weights, double regularizer_factor);

// Per-sample pieces shared by total_loss and the gradient engine.

enum class SampleRole { Surface, OffSurface };

/// Derivative of a scalar with respect to a jet; hess is the full symmetric
/// derivative (d/dH_kl for every k, l).
struct JetAdjoint {
  double value = 0.0;
  Vec grad;
  Mat hess;
};

/// Multipliers applied to each raw per-sample term: weight times anneal factor
/// divided by the number of samples the term is averaged over.
struct TermScales {
  double eikonal = 0.0;
  double manifold = 0.0;
  double nonmanifold = 0.0;
  double directional = 0.0;
  double divergence = 0.0;
  double normal = 0.0;
};

TermScales term_scales(const LossWeights& weights, double regularizer_factor, std::size_t surface_count,
                       std::size_t offsurface_count);

/// Raw (unaveraged, unweighted) terms of one sample. Terms that do not apply to
/// the role or need derivatives the jet does not carry are 0. When `adjoint` is
/// non-null it receives the derivative of sum(scale * term) with respect to the jet.
LossBreakdown sample_terms(const FieldJet& jet, SampleRole role, const Vec* normal, const LossWeights& weights,
                           const TermScales& scales, JetAdjoint* adjoint);

/// Turns per-role sums of raw terms into the averaged, weighted breakdown.
LossBreakdown finish_breakdown(const LossBreakdown& surface_sums, const LossBreakdown& offsurface_sums,
                               const LossWeights& weights, double regularizer_factor, std::size_t surface_count,
                               std::size_t offsurface_count);

}  // namespace steik
