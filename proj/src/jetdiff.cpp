#include "steik/jetdiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>

#include "jet_engine.hpp"
#include "steik/error.hpp"
#include "steik/parallel.hpp"
#include "steik/rng.hpp"

namespace steik {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr Index kChunk = 256;

template <class Fn>
void visit_trainable(const LayerParams& layer, Fn fn) {
  if (layer.kind == LayerKind::Quadratic) {
    fn(0);
    fn(1);
  }
  fn(2);
  fn(3);
  if (layer.kind == LayerKind::Quadratic) {
    fn(4);
    fn(5);
  }
}

// Uniform access to W1, b1, W2, b2, W3, b3 as flat arrays.
template <class L>
auto tensor(L& l, int which) {
  using Ptr = std::conditional_t<std::is_const_v<L>, const double*, double*>;
  struct View {
    Ptr data;
    Index size;
  };
  switch (which) {
    case 0: return View{l.W1.data(), l.W1.size()};
    case 1: return View{l.b1.data(), l.b1.size()};
    case 2: return View{l.W2.data(), l.W2.size()};
    case 3: return View{l.b2.data(), l.b2.size()};
    case 4: return View{l.W3.data(), l.W3.size()};
    default: return View{l.b3.data(), l.b3.size()};
  }
}

MatrixXd pack_adjoints(const std::vector<JetAdjoint>& adj, const detail::JetLayout& lay) {
  MatrixXd out = MatrixXd::Zero(1, lay.cols());
  const auto pairs = lay.hess_pairs();
  for (Index s = 0; s < lay.batch; ++s) {
    const JetAdjoint& a = adj[static_cast<std::size_t>(s)];
    out(0, s) = a.value;
    for (int k = 0; k < lay.grad_comps(); ++k) out(0, lay.grad(k) * lay.batch + s) = a.grad(k);
    for (auto [k, l] : pairs)
      out(0, lay.hess(k, l) * lay.batch + s) = k == l ? a.hess(k, k) : a.hess(k, l) + a.hess(l, k);
  }
  return out;
}

struct Chunk {
  const MatrixXd* points;
  SampleRole role;
  Index start;
  Index count;
};

struct ChunkResult {
  std::vector<LossBreakdown> terms;
  ParamGradient grad;
};

const char* first_nonfinite(const LossBreakdown& t) {
  if (!std::isfinite(t.eikonal)) return "eikonal";
  if (!std::isfinite(t.manifold)) return "manifold";
  if (!std::isfinite(t.nonmanifold)) return "nonmanifold";
  if (!std::isfinite(t.directional)) return "directional";
  if (!std::isfinite(t.divergence)) return "divergence";
  if (!std::isfinite(t.normal)) return "normal";
  return nullptr;
}

}  // namespace

LayerGradient LayerGradient::zeros_like(const LayerParams& layer) {
  LayerGradient t;
  t.W1 = MatrixXd::Zero(layer.W1.rows(), layer.W1.cols());
  t.W2 = MatrixXd::Zero(layer.W2.rows(), layer.W2.cols());
  t.W3 = MatrixXd::Zero(layer.W3.rows(), layer.W3.cols());
  t.b1 = VectorXd::Zero(layer.b1.size());
  t.b2 = VectorXd::Zero(layer.b2.size());
  t.b3 = VectorXd::Zero(layer.b3.size());
  return t;
}

ParamGradient ParamGradient::zeros_like(const NetworkParams& params) {
  ParamGradient g;
  for (const LayerParams& l : params.layers) g.layers.push_back(LayerGradient::zeros_like(l));
  return g;
}

ParamGradient& ParamGradient::operator+=(const ParamGradient& o) {
  if (o.layers.size() != layers.size()) throw ContractError("gradient shapes differ");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].W1 += o.layers[i].W1;
    layers[i].W2 += o.layers[i].W2;
    layers[i].W3 += o.layers[i].W3;
    layers[i].b1 += o.layers[i].b1;
    layers[i].b2 += o.layers[i].b2;
    layers[i].b3 += o.layers[i].b3;
  }
  return *this;
}

ParamGradient& ParamGradient::operator*=(double s) {
  for (LayerGradient& l : layers) {
    l.W1 *= s;
    l.W2 *= s;
    l.W3 *= s;
    l.b1 *= s;
    l.b2 *= s;
    l.b3 *= s;
  }
  return *this;
}

std::size_t trainable_count(const NetworkParams& params) {
  std::size_t n = 0;
  for (const LayerParams& l : params.layers)
    visit_trainable(l, [&](int w) { n += static_cast<std::size_t>(tensor(l, w).size); });
  return n;
}

VectorXd flatten(const NetworkParams& params) {
  VectorXd flat(static_cast<Index>(trainable_count(params)));
  Index at = 0;
  for (const LayerParams& l : params.layers)
    visit_trainable(l, [&](int w) {
      const auto v = tensor(l, w);
      std::copy(v.data, v.data + v.size, flat.data() + at);
      at += v.size;
    });
  return flat;
}

void unflatten(const VectorXd& flat, NetworkParams& params) {
  if (static_cast<std::size_t>(flat.size()) != trainable_count(params))
    throw ContractError("flat parameter vector has the wrong length");
  Index at = 0;
  for (LayerParams& l : params.layers)
    visit_trainable(l, [&](int w) {
      const auto v = tensor(l, w);
      std::copy(flat.data() + at, flat.data() + at + v.size, v.data);
      at += v.size;
    });
}

VectorXd flatten(const ParamGradient& grad, const NetworkParams& shape) {
  if (grad.layers.size() != shape.layers.size()) throw ContractError("gradient shape does not match the network");
  VectorXd flat(static_cast<Index>(trainable_count(shape)));
  Index at = 0;
  for (std::size_t i = 0; i < shape.layers.size(); ++i)
    visit_trainable(shape.layers[i], [&](int w) {
      const auto v = tensor(grad.layers[i], w);
      std::copy(v.data, v.data + v.size, flat.data() + at);
      at += v.size;
    });
  return flat;
}

struct JetTape::Impl {
  const NetworkParams* params;
  detail::JetLayout layout;
  std::vector<detail::LayerRecord> records;
  MatrixXd output;
};

JetTape::JetTape(const NetworkParams& params, const Eigen::Ref<const MatrixXd>& points, JetOrder order)
    : impl_(std::make_unique<Impl>()) {
  if (points.rows() != params.input_dim()) throw ContractError("point dimension does not match the network");
  impl_->params = &params;
  impl_->layout = detail::JetLayout{params.input_dim(), order, points.cols()};
  impl_->output = detail::propagate(params, impl_->layout, points, &impl_->records);
}

JetTape::~JetTape() = default;
JetTape::JetTape(JetTape&&) noexcept = default;
JetTape& JetTape::operator=(JetTape&&) noexcept = default;

std::size_t JetTape::size() const { return static_cast<std::size_t>(impl_->layout.batch); }

std::vector<FieldJet> JetTape::jets() const {
  const auto& lay = impl_->layout;
  const MatrixXd& out = impl_->output;
  std::vector<FieldJet> jets(static_cast<std::size_t>(lay.batch));
  for (Index s = 0; s < lay.batch; ++s) {
    FieldJet& j = jets[static_cast<std::size_t>(s)];
    j.value = out(0, s);
    if (lay.order >= JetOrder::Gradient) {
      j.grad.resize(lay.dim);
      for (int k = 0; k < lay.dim; ++k) j.grad(k) = out(0, lay.grad(k) * lay.batch + s);
    }
    if (lay.order >= JetOrder::Hessian) {
      j.hess.resize(lay.dim, lay.dim);
      for (auto [k, l] : lay.hess_pairs()) j.hess(k, l) = j.hess(l, k) = out(0, lay.hess(k, l) * lay.batch + s);
    }
  }
  return jets;
}

void JetTape::backward(const std::vector<JetAdjoint>& adjoints, ParamGradient& grad) const {
  if (adjoints.size() != size()) throw ContractError("one adjoint per taped point is required");
  if (grad.layers.size() != impl_->params->layers.size()) grad = ParamGradient::zeros_like(*impl_->params);
  detail::backpropagate(*impl_->params, impl_->layout, impl_->records, pack_adjoints(adjoints, impl_->layout),
                        grad.layers);
}

GradResult grad_loss(const NetworkParams& params, const SampleBatch& batch, const LossWeights& weights,
                     double factor) {
  weights.validate();
  if (batch.surface.cols() + batch.offsurface.cols() == 0) throw ContractError("empty sample batch");
  if (batch.has_normals() && batch.surface_normals.cols() != batch.surface.cols())
    throw ContractError("surface normals and surface points differ in count");
  if (weights.alpha_normal > 0.0 && !batch.has_normals())
    throw ContractError("normal loss weight is set but the batch has no normals");

  const auto ns = static_cast<std::size_t>(batch.surface.cols());
  const auto no = static_cast<std::size_t>(batch.offsurface.cols());
  const JetOrder order = required_order(weights, factor);
  const TermScales scales = term_scales(weights, factor, ns, no);

  std::vector<Chunk> chunks;
  for (Index s = 0; s < batch.surface.cols(); s += kChunk)
    chunks.push_back({&batch.surface, SampleRole::Surface, s, std::min(kChunk, batch.surface.cols() - s)});
  for (Index s = 0; s < batch.offsurface.cols(); s += kChunk)
    chunks.push_back({&batch.offsurface, SampleRole::OffSurface, s, std::min(kChunk, batch.offsurface.cols() - s)});

  GradResult result;
  result.grad = ParamGradient::zeros_like(params);
  LossBreakdown sum_s, sum_o;

  const std::size_t wave = static_cast<std::size_t>(std::max(1, thread_count()));
  for (std::size_t first = 0; first < chunks.size(); first += wave) {
    const std::size_t count = std::min(wave, chunks.size() - first);
    std::vector<ChunkResult> results(count);
    parallel_for(count, [&](std::size_t w) {
      const Chunk& c = chunks[first + w];
      const JetTape tape(params, c.points->middleCols(c.start, c.count), order);
      const std::vector<FieldJet> jets = tape.jets();
      std::vector<JetAdjoint> adj(jets.size());
      ChunkResult& r = results[w];
      r.terms.resize(jets.size());
      for (std::size_t i = 0; i < jets.size(); ++i) {
        const Index idx = c.start + static_cast<Index>(i);
        Vec normal;
        const bool with_normal = c.role == SampleRole::Surface && batch.has_normals();
        if (with_normal) normal = batch.surface_normals.col(idx);
        r.terms[i] = sample_terms(jets[i], c.role, with_normal ? &normal : nullptr, weights, scales, &adj[i]);
        if (const char* bad = first_nonfinite(r.terms[i]))
          throw NumericalError(std::string("non-finite ") + bad + " loss at " +
                               (c.role == SampleRole::Surface ? "surface" : "off-surface") + " sample " +
                               std::to_string(idx));
      }
      r.grad = ParamGradient::zeros_like(params);
      tape.backward(adj, r.grad);
    });
    for (std::size_t w = 0; w < count; ++w) {
      LossBreakdown& sum = chunks[first + w].role == SampleRole::Surface ? sum_s : sum_o;
      for (const LossBreakdown& t : results[w].terms) {
        sum.eikonal += t.eikonal;
        sum.manifold += t.manifold;
        sum.nonmanifold += t.nonmanifold;
        sum.directional += t.directional;
        sum.divergence += t.divergence;
        sum.normal += t.normal;
      }
      result.grad += results[w].grad;
    }
  }
  result.loss = finish_breakdown(sum_s, sum_o, weights, factor, ns, no);
  if (!std::isfinite(result.loss.total)) throw NumericalError("non-finite total loss");
  return result;
}

double check_grad(const NetworkParams& params, const SampleBatch& batch, const LossWeights& weights, double step,
                  int n_coords, std::uint64_t seed, double factor) {
  if (!(step > 0.0)) throw ContractError("finite-difference step must be positive");
  const VectorXd analytic = flatten(grad_loss(params, batch, weights, factor).grad, params);
  const JetOrder order = required_order(weights, factor);

  NetworkParams probe = params;
  const VectorXd theta = flatten(params);
  auto loss_at = [&](const VectorXd& t) {
    unflatten(t, probe);
    SampleBatch b = batch;
    evaluate_jets(probe, b, order);
    return total_loss(b, weights, factor).total;
  };

  Rng rng(seed);
  double worst = 0.0;
  for (int c = 0; c < n_coords; ++c) {
    const auto i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(theta.size())));
    VectorXd t = theta;
    t(i) = theta(i) + step;
    const double up = loss_at(t);
    t(i) = theta(i) - step;
    const double down = loss_at(t);
    const double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic(i) - fd) / std::max(std::abs(fd), 1e-8));
  }
  return worst;
}

}  // namespace steik
