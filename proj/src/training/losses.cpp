#include "sigma/training/losses.hpp"

#include "sigma/core/errors.hpp"

namespace sigma::training {
namespace {

void require_column(const Var& logits, std::size_t n, const char* what) {
  if (logits.cols() != 1 || logits.rows() != n)
    throw ShapeMismatch(std::string(what) + ": logits " + logits.value().shape_string() +
                        " vs " + std::to_string(n) + " targets");
}

}  // namespace

Var loss_seg(const Var& logits, const Tensor& gt) {
  require_column(logits, gt.size(), "loss_seg");
  const Tensor target(gt.size(), 1, std::vector<double>(gt.storage()));
  const double n = static_cast<double>(gt.size());
  const Var bce = ag::scale(ag::bce_with_logits_sum(logits, target), 1.0 / n);
  const Var p = ag::sigmoid(logits);
  const Var overlap = ag::sum(ag::mul(p, ag::constant(target)));
  const Var numerator = ag::add_scalar(ag::scale(overlap, 2.0), kDiceSmoothing);
  const Var denominator = ag::add_scalar(ag::sum(p), target.sum() + kDiceSmoothing);
  const Var dice = ag::add_scalar(ag::scale(ag::mul(numerator, ag::reciprocal(denominator)), -1.0), 1.0);
  return ag::add(bce, dice);
}

Var loss_seg(const Var& logits, const ByteMap& gt) {
  Tensor t(gt.size(), 1);
  for (std::size_t i = 0; i < gt.size(); ++i) t[i] = gt[i] ? 1.0 : 0.0;
  return loss_seg(logits, t);
}

Var loss_calib(const Var& logits) {
  if (logits.cols() != 1 || logits.rows() == 0) throw ShapeMismatch("loss_calib: logits must be [n x 1]");
  const Tensor zeros(logits.rows(), 1);
  return ag::scale(ag::bce_with_logits_sum(logits, zeros), 1.0 / static_cast<double>(logits.rows()));
}

ByteMap confidence_mask(const RealMap& pseudo) {
  ByteMap m(pseudo.width(), pseudo.height());
  for (std::size_t i = 0; i < pseudo.size(); ++i)
    m[i] = pseudo[i] > kConfidentHigh || pseudo[i] < kConfidentLow ? 1 : 0;
  return m;
}

Tensor confidence_mask(const Tensor& pseudo) {
  Tensor m(pseudo.rows(), pseudo.cols());
  for (std::size_t i = 0; i < pseudo.size(); ++i)
    m[i] = pseudo[i] > kConfidentHigh || pseudo[i] < kConfidentLow ? 1.0 : 0.0;
  return m;
}

Var loss_pl(const Var& student_logits, const Var& teacher_prob) {
  const Tensor pseudo = ag::detach(teacher_prob).value();
  if (!student_logits.value().same_shape(pseudo))
    throw ShapeMismatch("loss_pl: student " + student_logits.value().shape_string() + " vs teacher " +
                        pseudo.shape_string());
  const Tensor confident = confidence_mask(pseudo);
  const double count = confident.sum();
  if (count == 0.0) return ag::scale(ag::sum(student_logits), 0.0);
  Tensor hard(pseudo.rows(), pseudo.cols());
  for (std::size_t i = 0; i < hard.size(); ++i) hard[i] = pseudo[i] > 0.5 ? 1.0 : 0.0;
  return ag::scale(ag::bce_with_logits_sum(student_logits, hard, confident), 1.0 / count);
}

Var loss_disent(const Var& d_edit, const Var& d_noise, const Var& support) {
  if (!d_edit.value().same_shape(d_noise.value()))
    throw ShapeMismatch("loss_disent: d_edit " + d_edit.value().shape_string() + " vs d_noise " +
                        d_noise.value().shape_string());
  const Tensor p = ag::detach(support).value();
  if (p.rows() != d_edit.rows() || p.cols() != 1)
    throw ShapeMismatch("loss_disent: support must be [N x 1], got " + p.shape_string());
  const double mass = p.sum();
  const Var hinge = ag::relu(ag::row_dot(ag::normalize_rows(d_edit), ag::normalize_rows(d_noise)));
  if (mass < kDisentSupportFloor) return ag::scale(ag::sum(hinge), 0.0);
  return ag::scale(ag::sum(ag::mul(hinge, ag::constant(p))), 1.0 / mass);
}

LossReport stage2_total(double seg, double calib, double pl, double disent, const LossWeights& w) {
  return {seg, calib, pl, disent, w.seg * seg + w.calib * calib + w.pl * pl + w.disent * disent};
}

Var stage2_total(const Var& seg, const Var& calib, const Var& pl, const Var& disent,
                 const LossWeights& w) {
  return ag::add(ag::add(ag::scale(seg, w.seg), ag::scale(calib, w.calib)),
                 ag::add(ag::scale(pl, w.pl), ag::scale(disent, w.disent)));
}

}  // namespace sigma::training
