#include "jet_engine.hpp"

#include <cmath>

namespace steik::detail {

namespace {

using Eigen::ArrayXXd;
using Eigen::Index;
using Eigen::MatrixXd;

auto blk(MatrixXd& m, const JetLayout& lay, int c) { return m.middleCols(c * lay.batch, lay.batch).array(); }
auto blk(const MatrixXd& m, const JetLayout& lay, int c) { return m.middleCols(c * lay.batch, lay.batch).array(); }

// Y = W X + b, with b added to the value block only.
MatrixXd affine(const MatrixXd& W, const Eigen::VectorXd& b, const MatrixXd& X, const JetLayout& lay) {
  MatrixXd Y;
  Y.noalias() = W * X;
  Y.leftCols(lay.batch).colwise() += b;
  return Y;
}

// Jet of the element-wise product P * Q.
MatrixXd product(const MatrixXd& P, const MatrixXd& Q, const JetLayout& lay) {
  MatrixXd A(P.rows(), P.cols());
  blk(A, lay, 0) = blk(P, lay, 0) * blk(Q, lay, 0);
  for (int k = 0; k < lay.grad_comps(); ++k) {
    const int c = lay.grad(k);
    blk(A, lay, c) = blk(P, lay, c) * blk(Q, lay, 0) + blk(P, lay, 0) * blk(Q, lay, c);
  }
  for (auto [k, l] : lay.hess_pairs()) {
    const int c = lay.hess(k, l);
    const int ck = lay.grad(k), cl = lay.grad(l);
    blk(A, lay, c) = blk(P, lay, c) * blk(Q, lay, 0) + blk(P, lay, 0) * blk(Q, lay, c) +
                     blk(P, lay, ck) * blk(Q, lay, cl) + blk(P, lay, cl) * blk(Q, lay, ck);
  }
  return A;
}

// Accumulates the adjoints of P and Q given the adjoint of their product jet.
// P_bar and Q_bar may alias (used for squares).
void product_reverse(const MatrixXd& P, const MatrixXd& Q, const MatrixXd& A_bar, const JetLayout& lay,
                     MatrixXd& P_bar, MatrixXd& Q_bar) {
  blk(P_bar, lay, 0) += blk(A_bar, lay, 0) * blk(Q, lay, 0);
  blk(Q_bar, lay, 0) += blk(A_bar, lay, 0) * blk(P, lay, 0);
  for (int k = 0; k < lay.grad_comps(); ++k) {
    const int c = lay.grad(k);
    const auto a = blk(A_bar, lay, c);
    blk(P_bar, lay, c) += a * blk(Q, lay, 0);
    blk(Q_bar, lay, 0) += a * blk(P, lay, c);
    blk(P_bar, lay, 0) += a * blk(Q, lay, c);
    blk(Q_bar, lay, c) += a * blk(P, lay, 0);
  }
  for (auto [k, l] : lay.hess_pairs()) {
    const int c = lay.hess(k, l);
    const int ck = lay.grad(k), cl = lay.grad(l);
    const auto a = blk(A_bar, lay, c);
    blk(P_bar, lay, c) += a * blk(Q, lay, 0);
    blk(Q_bar, lay, 0) += a * blk(P, lay, c);
    blk(P_bar, lay, 0) += a * blk(Q, lay, c);
    blk(Q_bar, lay, c) += a * blk(P, lay, 0);
    blk(P_bar, lay, ck) += a * blk(Q, lay, cl);
    blk(Q_bar, lay, cl) += a * blk(P, lay, ck);
    blk(P_bar, lay, cl) += a * blk(Q, lay, ck);
    blk(Q_bar, lay, ck) += a * blk(P, lay, cl);
  }
}

// Jet of sin(w * a).
MatrixXd sine(const MatrixXd& A, double w, const JetLayout& lay) {
  MatrixXd Z(A.rows(), A.cols());
  const ArrayXXd arg = w * blk(A, lay, 0);
  const ArrayXXd s = arg.sin();
  const ArrayXXd c1 = w * arg.cos();  // first derivative
  blk(Z, lay, 0) = s;
  for (int k = 0; k < lay.grad_comps(); ++k) blk(Z, lay, lay.grad(k)) = c1 * blk(A, lay, lay.grad(k));
  if (lay.order >= JetOrder::Hessian) {
    const ArrayXXd c2 = -(w * w) * s;  // second derivative
    for (auto [k, l] : lay.hess_pairs()) {
      blk(Z, lay, lay.hess(k, l)) =
          c1 * blk(A, lay, lay.hess(k, l)) + c2 * blk(A, lay, lay.grad(k)) * blk(A, lay, lay.grad(l));
    }
  }
  return Z;
}

MatrixXd sine_reverse(const MatrixXd& A, double w, const MatrixXd& Z_bar, const JetLayout& lay) {
  MatrixXd A_bar = MatrixXd::Zero(A.rows(), A.cols());
  const ArrayXXd arg = w * blk(A, lay, 0);
  const ArrayXXd s = arg.sin();
  const ArrayXXd co = arg.cos();
  const ArrayXXd c1 = w * co;
  const ArrayXXd c2 = -(w * w) * s;
  const ArrayXXd c3 = -(w * w * w) * co;

  ArrayXXd v_bar = blk(Z_bar, lay, 0) * c1;
  for (int k = 0; k < lay.grad_comps(); ++k) {
    const int c = lay.grad(k);
    blk(A_bar, lay, c) += blk(Z_bar, lay, c) * c1;
    v_bar += blk(Z_bar, lay, c) * c2 * blk(A, lay, c);
  }
  for (auto [k, l] : lay.hess_pairs()) {
    const int c = lay.hess(k, l);
    const int ck = lay.grad(k), cl = lay.grad(l);
    const auto zb = blk(Z_bar, lay, c);
    blk(A_bar, lay, c) += zb * c1;
    blk(A_bar, lay, ck) += zb * c2 * blk(A, lay, cl);
    blk(A_bar, lay, cl) += zb * c2 * blk(A, lay, ck);
    v_bar += zb * (c2 * blk(A, lay, c) + c3 * blk(A, lay, ck) * blk(A, lay, cl));
  }
  blk(A_bar, lay, 0) += v_bar;
  return A_bar;
}

}  // namespace

MatrixXd input_jets(const JetLayout& lay, const Eigen::Ref<const MatrixXd>& points) {
  MatrixXd X = MatrixXd::Zero(lay.dim, lay.cols());
  X.leftCols(lay.batch) = points;
  for (int k = 0; k < lay.grad_comps(); ++k) X.row(k).middleCols(lay.grad(k) * lay.batch, lay.batch).setOnes();
  return X;
}

MatrixXd propagate(const NetworkParams& params, const JetLayout& lay, const Eigen::Ref<const MatrixXd>& points,
                   std::vector<LayerRecord>* records) {
  MatrixXd X = input_jets(lay, points);
  for (const LayerParams& layer : params.layers) {
    LayerRecord rec;
    MatrixXd A;
    if (layer.kind == LayerKind::Linear) {
      A = affine(layer.W2, layer.b2, X, lay);
    } else {
      MatrixXd L1 = affine(layer.W1, layer.b1, X, lay);
      MatrixXd L2 = affine(layer.W2, layer.b2, X, lay);
      A = product(L1, L2, lay);
      const MatrixXd S = product(X, X, lay);
      A.noalias() += layer.W3 * S;
      A.leftCols(lay.batch).colwise() += layer.b3;
      if (records) {
        rec.l1 = std::move(L1);
        rec.l2 = std::move(L2);
      }
    }
    MatrixXd Z = layer.activation.type == Activation::Type::Sine ? sine(A, layer.activation.omega0, lay) : A;
    if (records) {
      rec.input = std::move(X);
      rec.pre = std::move(A);
      records->push_back(std::move(rec));
    }
    X = std::move(Z);
  }
  return X;
}

void backpropagate(const NetworkParams& params, const JetLayout& lay, const std::vector<LayerRecord>& records,
                   const Eigen::Ref<const MatrixXd>& output_adjoint, std::vector<LayerTensors>& grads) {
  MatrixXd Z_bar = output_adjoint;
  for (std::size_t i = params.layers.size(); i-- > 0;) {
    const LayerParams& layer = params.layers[i];
    const LayerRecord& rec = records[i];
    LayerTensors& g = grads[i];
    const bool need_input_adjoint = i > 0;

    MatrixXd A_bar = layer.activation.type == Activation::Type::Sine
                         ? sine_reverse(rec.pre, layer.activation.omega0, Z_bar, lay)
                         : std::move(Z_bar);
    const MatrixXd& X = rec.input;

    if (layer.kind == LayerKind::Linear) {
      g.W2.noalias() += A_bar * X.transpose();
      g.b2 += A_bar.leftCols(lay.batch).rowwise().sum();
      if (need_input_adjoint) Z_bar.noalias() = layer.W2.transpose() * A_bar;
      continue;
    }

    const MatrixXd S = product(X, X, lay);
    g.W3.noalias() += A_bar * S.transpose();
    g.b3 += A_bar.leftCols(lay.batch).rowwise().sum();

    MatrixXd L1_bar = MatrixXd::Zero(A_bar.rows(), A_bar.cols());
    MatrixXd L2_bar = MatrixXd::Zero(A_bar.rows(), A_bar.cols());
    product_reverse(rec.l1, rec.l2, A_bar, lay, L1_bar, L2_bar);
    g.W1.noalias() += L1_bar * X.transpose();
    g.b1 += L1_bar.leftCols(lay.batch).rowwise().sum();
    g.W2.noalias() += L2_bar * X.transpose();
    g.b2 += L2_bar.leftCols(lay.batch).rowwise().sum();

    if (need_input_adjoint) {
      const MatrixXd S_bar = layer.W3.transpose() * A_bar;
      MatrixXd X_bar = layer.W1.transpose() * L1_bar;
      X_bar.noalias() += layer.W2.transpose() * L2_bar;
      product_reverse(X, X, S_bar, lay, X_bar, X_bar);
      Z_bar = std::move(X_bar);
    }
  }
}

}  // namespace steik::detail
