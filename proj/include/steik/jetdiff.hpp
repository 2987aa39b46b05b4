#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "steik/fieldnet.hpp"
#include "steik/losses.hpp"

namespace steik {

/// Tensors shaped like one layer's parameters.
struct LayerGradient {
  Eigen::MatrixXd W1, W2, W3;
  Eigen::VectorXd b1, b2, b3;

  static LayerGradient zeros_like(const LayerParams& layer);
};

struct ParamGradient {
  std::vector<LayerGradient> layers;

  static ParamGradient zeros_like(const NetworkParams& params);
  ParamGradient& operator+=(const ParamGradient& other);
  ParamGradient& operator*=(double s);
};

/// Trainable scalars in a fixed order: per layer W1, b1, W2, b2, W3, b3
/// (matrices column-major) for quadratic layers and W2, b2 for linear ones.
std::size_t trainable_count(const NetworkParams& params);
Eigen::VectorXd flatten(const NetworkParams& params);
void unflatten(const Eigen::VectorXd& flat, NetworkParams& params);
Eigen::VectorXd flatten(const ParamGradient& grad, const NetworkParams& shape);

/// Forward jet evaluation of a set of points with every layer intermediate
/// recorded, so a single reverse sweep can map jet adjoints to parameter
/// gradients. The params must outlive the tape.
class JetTape {
 public:
  JetTape(const NetworkParams& params, const Eigen::Ref<const Eigen::MatrixXd>& points, JetOrder order);
  ~JetTape();
  JetTape(JetTape&&) noexcept;
  JetTape& operator=(JetTape&&) noexcept;

  std::size_t size() const;
  std::vector<FieldJet> jets() const;

  /// Accumulates into `grad` the parameter gradient of sum_i <adjoints[i], jet_i>.
  void backward(const std::vector<JetAdjoint>& adjoints, ParamGradient& grad) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct GradResult {
  LossBreakdown loss;
  ParamGradient grad;
};

/// Loss (identical to total_loss on the batch's points) and its exact gradient
/// with respect to every parameter. Samples are processed in fixed-size chunks
/// whose gradients are summed in chunk order, so the result does not depend on
/// the worker count. Only the points (and normals) of `batch` are used.
GradResult grad_loss(const NetworkParams& params, const SampleBatch& batch, const LossWeights& weights,
                     double regularizer_factor = 1.0);

/// Largest |analytic - central difference| / max(|central difference|, 1e-8)
/// over n_coords trainable coordinates drawn with the given seed.
double check_grad(const NetworkParams& params, const SampleBatch& batch, const LossWeights& weights, double step,
                  int n_coords, std::uint64_t seed, double regularizer_factor = 1.0);

}  // namespace steik
