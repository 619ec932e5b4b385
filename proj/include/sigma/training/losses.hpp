#pragma once

// Training objectives. Logits are [H*W x 1] in raster order; every loss is
// averaged over pixels (or patches) so the stage weights do not depend on
// resolution.

#include "sigma/autograd/ops.hpp"
#include "sigma/image/image.hpp"

namespace sigma::training {

using ag::Var;

inline constexpr double kDiceSmoothing = 1.0;
inline constexpr double kConfidentHigh = 0.8;
inline constexpr double kConfidentLow = 0.2;
inline constexpr double kDisentSupportFloor = 1e-6;

// Mean BCE on sigmoid(logits) plus 1 - (2 sum p*g + s) / (sum p + sum g + s).
// Throws ShapeMismatch.
Var loss_seg(const Var& logits, const ByteMap& gt);
Var loss_seg(const Var& logits, const Tensor& gt);

// Mean BCE against the all-zero mask.
Var loss_calib(const Var& logits);

// 1 where pseudo > 0.8 or pseudo < 0.2 (strict).
ByteMap confidence_mask(const RealMap& pseudo);
Tensor confidence_mask(const Tensor& pseudo);

// Mean over confident pixels of BCE(student, 1[pseudo > 0.5]); zero when no
// pixel is confident. `teacher_prob` is detached, so no gradient reaches
// whatever produced it. Throws ShapeMismatch.
Var loss_pl(const Var& student_logits, const Var& teacher_prob);

// (1/|P|) sum_i P_i max(0, <d_edit_i/|d_edit_i|, d_noise_i/|d_noise_i|>) with
// |P| = sum P; zero when |P| < 1e-6. P ([N x 1], in [0,1]) is detached: it
// only weights the hinge. Throws ShapeMismatch.
Var loss_disent(const Var& d_edit, const Var& d_noise, const Var& support);

struct LossWeights {
  double seg = 10.0;
  double calib = 0.1;
  double pl = 0.5;
  double disent = 0.5;
};

struct LossReport {
  double seg = 0.0, calib = 0.0, pl = 0.0, disent = 0.0, total = 0.0;
};

// total = w_seg seg + w_calib calib + w_pl pl + w_disent disent.
LossReport stage2_total(double seg, double calib, double pl, double disent,
                        const LossWeights& weights = {});
Var stage2_total(const Var& seg, const Var& calib, const Var& pl, const Var& disent,
                 const LossWeights& weights = {});

}  // namespace sigma::training
