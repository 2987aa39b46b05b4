#include "steik/losses.hpp"

#include <cmath>
#include <string>

#include "steik/error.hpp"

namespace steik {

namespace {

double sgn(double x) { return (x > 0.0) - (x < 0.0); }

double pow_p(double x, PNorm p) { return p == PNorm::L1 ? std::abs(x) : x * x; }

// d|x|^p / dx
double dpow_p(double x, PNorm p) { return p == PNorm::L1 ? sgn(x) : 2.0 * x; }

bool has_grad(const FieldJet& j) { return j.grad.size() > 0; }
bool has_hess(const FieldJet& j) { return j.hess.size() > 0; }

void require_grad(const std::vector<FieldJet>& jets, const char* what) {
  for (const FieldJet& j : jets)
    if (!has_grad(j)) throw ContractError(std::string(what) + " needs jets with gradients");
}

void require_hess(const std::vector<FieldJet>& jets, const char* what) {
  for (const FieldJet& j : jets)
    if (!has_hess(j)) throw ContractError(std::string(what) + " needs jets with Hessians");
}

double directional_residual(const FieldJet& jet, bool normalized) {
  const double q = jet.grad.dot(jet.hess * jet.grad);
  return normalized ? q / std::max(jet.grad.squaredNorm(), kEpsGrad) : q;
}

Vec normal_of(const SampleBatch& batch, std::size_t i) { return batch.surface_normals.col(static_cast<Eigen::Index>(i)); }

template <class Fn>
double mean_over(const std::vector<FieldJet>& jets, Fn fn) {
  if (jets.empty()) return 0.0;
  double s = 0.0;
  for (const FieldJet& j : jets) s += fn(j);
  return s / static_cast<double>(jets.size());
}

}  // namespace

const char* to_string(PNorm p) { return p == PNorm::L1 ? "L1" : "L2"; }

PNorm pnorm_from_string(const std::string& s) {
  if (s == "L1" || s == "l1" || s == "1") return PNorm::L1;
  if (s == "L2" || s == "l2" || s == "2") return PNorm::L2;
  throw ContractError("unknown norm '" + s + "' (expected L1 or L2)");
}

void LossWeights::validate() const {
  for (double w : {alpha_e, alpha_m, alpha_n, alpha_l, alpha_d, alpha_normal})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ContractError("loss weights must be finite and nonnegative");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ContractError("alpha must be finite and positive");
}

void AnnealSchedule::validate() const {
  if (start_iter > end_iter) throw ContractError("anneal start_iter must not exceed end_iter");
}

void evaluate_jets(const NetworkParams& params, SampleBatch& batch, JetOrder order) {
  batch.surface_jets = forward_jets(params, batch.surface, order);
  batch.offsurface_jets = forward_jets(params, batch.offsurface, order);
}

double eikonal_loss(const SampleBatch& batch, PNorm p) {
  require_grad(batch.surface_jets, "eikonal loss");
  require_grad(batch.offsurface_jets, "eikonal loss");
  const double n = static_cast<double>(batch.surface_jets.size() + batch.offsurface_jets.size());
  if (n == 0.0) return 0.0;
  const double half = p == PNorm::L2 ? 0.5 : 1.0;
  double s = 0.0;
  for (const auto* jets : {&batch.surface_jets, &batch.offsurface_jets})
    for (const FieldJet& j : *jets) s += half * pow_p(j.grad.norm() - 1.0, p);
  return s / n;
}

double manifold_loss(const SampleBatch& batch) {
  return mean_over(batch.surface_jets, [](const FieldJet& j) { return std::abs(j.value); });
}

double nonmanifold_loss(const SampleBatch& batch, double alpha) {
  return mean_over(batch.offsurface_jets, [alpha](const FieldJet& j) { return std::exp(-alpha * std::abs(j.value)); });
}

double divergence_loss(const SampleBatch& batch, PNorm p) {
  require_hess(batch.offsurface_jets, "divergence loss");
  return mean_over(batch.offsurface_jets, [p](const FieldJet& j) { return pow_p(j.hess.trace(), p); });
}

double directional_div_loss(const SampleBatch& batch, bool normalized, PNorm p) {
  require_hess(batch.surface_jets, "directional divergence loss");
  require_hess(batch.offsurface_jets, "directional divergence loss");
  const double n = static_cast<double>(batch.surface_jets.size() + batch.offsurface_jets.size());
  if (n == 0.0) return 0.0;
  double s = 0.0;
  for (const auto* jets : {&batch.surface_jets, &batch.offsurface_jets})
    for (const FieldJet& j : *jets) s += pow_p(directional_residual(j, normalized), p);
  return s / n;
}

double normal_loss(const SampleBatch& batch, PNorm p) {
  if (!batch.has_normals()) throw ContractError("normal loss requires surface normals");
  if (static_cast<std::size_t>(batch.surface_normals.cols()) != batch.surface_jets.size())
    throw ContractError("surface normals and surface jets differ in count");
  require_grad(batch.surface_jets, "normal loss");
  if (batch.surface_jets.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < batch.surface_jets.size(); ++i)
    s += pow_p((batch.surface_jets[i].grad - normal_of(batch, i)).norm(), p);
  return s / static_cast<double>(batch.surface_jets.size());
}

double anneal_factor(const AnnealSchedule& schedule, int iter) {
  if (schedule.mode == AnnealSchedule::Mode::Constant || iter <= schedule.start_iter) return 1.0;
  if (iter >= schedule.end_iter) return 0.0;
  return static_cast<double>(schedule.end_iter - iter) / static_cast<double>(schedule.end_iter - schedule.start_iter);
}

SecondOrderSplit decompose_second_order(const FieldJet& jet) {
  if (!has_hess(jet) || !has_grad(jet)) throw ContractError("decomposition needs gradient and Hessian");
  SecondOrderSplit s;
  s.u_nn = directional_residual(jet, true);
  s.u_tt_sum = jet.hess.trace() - s.u_nn;
  return s;
}

JetOrder required_order(const LossWeights& w, double factor) {
  if (factor * (w.alpha_l + w.alpha_d) > 0.0) return JetOrder::Hessian;
  if (w.alpha_e > 0.0 || w.alpha_normal > 0.0) return JetOrder::Gradient;
  return JetOrder::Value;
}

TermScales term_scales(const LossWeights& w, double factor, std::size_t ns, std::size_t no) {
  const auto inv = [](std::size_t n) { return n == 0 ? 0.0 : 1.0 / static_cast<double>(n); };
  TermScales s;
  s.eikonal = w.alpha_e * inv(ns + no);
  s.manifold = w.alpha_m * inv(ns);
  s.nonmanifold = w.alpha_n * inv(no);
  s.directional = factor * w.alpha_l * inv(ns + no);
  s.divergence = factor * w.alpha_d * inv(no);
  s.normal = w.alpha_normal * inv(ns);
  return s;
}

LossBreakdown sample_terms(const FieldJet& jet, SampleRole role, const Vec* normal, const LossWeights& w,
                           const TermScales& sc, JetAdjoint* adj) {
  LossBreakdown t;
  const bool grad = has_grad(jet);
  const bool hess = has_hess(jet);
  const Eigen::Index n = jet.grad.size();
  if (adj) {
    adj->value = 0.0;
    adj->grad = Vec::Zero(n);
    adj->hess = Mat::Zero(hess ? n : 0, hess ? n : 0);
  }

  if (role == SampleRole::Surface) {
    t.manifold = std::abs(jet.value);
    if (adj) adj->value += sc.manifold * sgn(jet.value);
  } else {
    const double e = std::exp(-w.alpha * std::abs(jet.value));
    t.nonmanifold = e;
    if (adj) adj->value += sc.nonmanifold * (-w.alpha * sgn(jet.value) * e);
  }

  if (grad) {
    const double g = jet.grad.norm();
    const double half = w.p_eik == PNorm::L2 ? 0.5 : 1.0;
    t.eikonal = half * pow_p(g - 1.0, w.p_eik);
    if (adj && g > kEpsGrad) adj->grad += (sc.eikonal * half * dpow_p(g - 1.0, w.p_eik) / g) * jet.grad;

    if (role == SampleRole::Surface && normal) {
      const Vec d = jet.grad - *normal;
      const double dn = d.norm();
      t.normal = pow_p(dn, w.p_eik);
      if (adj) {
        if (w.p_eik == PNorm::L2)
          adj->grad += (2.0 * sc.normal) * d;
        else if (dn > kEpsGrad)
          adj->grad += (sc.normal / dn) * d;
      }
    }
  }

  if (grad && hess) {
    const Vec Hg = jet.hess * jet.grad;
    const double q = jet.grad.dot(Hg);
    const double g2 = jet.grad.squaredNorm();
    const bool guarded = w.normalize_directional && g2 <= kEpsGrad;
    const double den = w.normalize_directional ? std::max(g2, kEpsGrad) : 1.0;
    const double r = q / den;
    t.directional = pow_p(r, w.p_reg);
    if (adj && sc.directional != 0.0) {
      const double c = sc.directional * dpow_p(r, w.p_reg);
      // r = g^T H g / den: dr/dH = g g^T / den, dr/dg = 2 H g / den - 2 r g / den (unless guarded)
      adj->hess += (c / den) * (jet.grad * jet.grad.transpose());
      adj->grad += (2.0 * c / den) * Hg;
      if (w.normalize_directional && !guarded) adj->grad -= (2.0 * c * r / den) * jet.grad;
    }

    if (role == SampleRole::OffSurface) {
      const double tr = jet.hess.trace();
      t.divergence = pow_p(tr, w.p_reg);
      if (adj && sc.divergence != 0.0) adj->hess.diagonal().array() += sc.divergence * dpow_p(tr, w.p_reg);
    }
  }

  t.total = sc.eikonal * t.eikonal + sc.manifold * t.manifold + sc.nonmanifold * t.nonmanifold +
            sc.directional * t.directional + sc.divergence * t.divergence + sc.normal * t.normal;
  return t;
}

LossBreakdown finish_breakdown(const LossBreakdown& s, const LossBreakdown& o, const LossWeights& w, double factor,
                               std::size_t ns, std::size_t no) {
  const auto mean = [](double sum, std::size_t n) { return n == 0 ? 0.0 : sum / static_cast<double>(n); };
  LossBreakdown b;
  b.eikonal = mean(s.eikonal + o.eikonal, ns + no);
  b.manifold = mean(s.manifold, ns);
  b.nonmanifold = mean(o.nonmanifold, no);
  b.directional = mean(s.directional + o.directional, ns + no);
  b.divergence = mean(o.divergence, no);
  b.normal = mean(s.normal, ns);
  b.total = w.alpha_e * b.eikonal + w.alpha_m * b.manifold + w.alpha_n * b.nonmanifold +
            factor * (w.alpha_l * b.directional + w.alpha_d * b.divergence) + w.alpha_normal * b.normal;
  return b;
}

LossBreakdown total_loss(const SampleBatch& batch, const LossWeights& weights, int iter,
                         const AnnealSchedule& schedule) {
  return total_loss(batch, weights, anneal_factor(schedule, iter));
}

LossBreakdown total_loss(const SampleBatch& batch, const LossWeights& weights, double factor) {
  weights.validate();
  const std::size_t ns = batch.surface_jets.size(), no = batch.offsurface_jets.size();
  if (weights.alpha_normal > 0.0 && !batch.has_normals())
    throw ContractError("normal loss weight is set but the batch has no normals");
  const TermScales sc = term_scales(weights, factor, ns, no);

  // Sum raw terms in sample order, then average; this is the reduction the
  // gradient engine reproduces.
  LossBreakdown sum_s, sum_o;
  for (std::size_t i = 0; i < ns; ++i) {
    const Vec nrm = batch.has_normals() ? normal_of(batch, i) : Vec();
    const LossBreakdown t =
        sample_terms(batch.surface_jets[i], SampleRole::Surface, batch.has_normals() ? &nrm : nullptr, weights, sc, nullptr);
    sum_s.eikonal += t.eikonal;
    sum_s.manifold += t.manifold;
    sum_s.directional += t.directional;
    sum_s.normal += t.normal;
  }
  for (std::size_t i = 0; i < no; ++i) {
    const LossBreakdown t = sample_terms(batch.offsurface_jets[i], SampleRole::OffSurface, nullptr, weights, sc, nullptr);
    sum_o.eikonal += t.eikonal;
    sum_o.nonmanifold += t.nonmanifold;
    sum_o.directional += t.directional;
    sum_o.divergence += t.divergence;
  }
  return finish_breakdown(sum_s, sum_o, weights, factor, ns, no);
}

}  // namespace steik
