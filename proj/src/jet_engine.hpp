#pragma once

// Batched propagation of spatial jets through the network and the matching
// reverse sweep. Internal to the library.
//
// A jet batch is stored "component-major": a matrix with one row per unit and
// comps * batch columns, where block c (columns [c*batch, (c+1)*batch)) holds
// component c for every sample. Component 0 is the value, 1..dim the gradient,
// and the remaining dim*(dim+1)/2 the upper triangle of the Hessian, row-major
// ((0,0), (0,1), ..., (1,1), ...).

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "steik/fieldnet.hpp"
#include "steik/jetdiff.hpp"

namespace steik::detail {

struct JetLayout {
  int dim = 3;
  JetOrder order = JetOrder::Hessian;
  Eigen::Index batch = 0;

  int grad_comps() const { return order >= JetOrder::Gradient ? dim : 0; }
  int hess_comps() const { return order >= JetOrder::Hessian ? dim * (dim + 1) / 2 : 0; }
  int comps() const { return 1 + grad_comps() + hess_comps(); }
  Eigen::Index cols() const { return comps() * batch; }

  int grad(int k) const { return 1 + k; }
  int hess(int k, int l) const {
    if (k > l) std::swap(k, l);
    return 1 + dim + k * dim - k * (k - 1) / 2 + (l - k);
  }
  /// (k, l) pairs with k <= l in packed order.
  std::vector<std::pair<int, int>> hess_pairs() const {
    std::vector<std::pair<int, int>> pairs;
    if (order < JetOrder::Hessian) return pairs;
    for (int k = 0; k < dim; ++k)
      for (int l = k; l < dim; ++l) pairs.emplace_back(k, l);
    return pairs;
  }
};

/// Per-layer intermediates kept for the reverse sweep.
struct LayerRecord {
  Eigen::MatrixXd input;  // layer input jets
  Eigen::MatrixXd l1;     // W1 x + b1 (quadratic only)
  Eigen::MatrixXd l2;     // W2 x + b2 (quadratic only)
  Eigen::MatrixXd pre;    // pre-activation jets
};

using LayerTensors = LayerGradient;

/// Seeds the input jet for points (dim x batch).
Eigen::MatrixXd input_jets(const JetLayout& layout, const Eigen::Ref<const Eigen::MatrixXd>& points);

/// Forward propagation. Returns the output jets (1 x cols). When `records` is
/// non-null the per-layer intermediates are appended to it.
Eigen::MatrixXd propagate(const NetworkParams& params, const JetLayout& layout,
                          const Eigen::Ref<const Eigen::MatrixXd>& points, std::vector<LayerRecord>* records);

/// Reverse sweep: accumulates d(loss)/d(params) into `grads` given the adjoint
/// of the output jets (1 x cols).
void backpropagate(const NetworkParams& params, const JetLayout& layout, const std::vector<LayerRecord>& records,
                   const Eigen::Ref<const Eigen::MatrixXd>& output_adjoint, std::vector<LayerTensors>& grads);

}  // namespace steik::detail
