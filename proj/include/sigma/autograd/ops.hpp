#pragma once

// Differentiable ops on ag::Var. Binary elementwise ops broadcast the second
// operand when it is 1x1, 1xC (per column) or Rx1 (per row).

#include <cstdint>
#include <utility>
#include <vector>

#include "sigma/autograd/autograd.hpp"

namespace sigma::ag {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
// x [n x in] * weight [in x out] (+ bias [1 x out])
Var linear(const Var& x, const Var& weight, const Var& bias = {});

Var abs(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);  // exact erf form
Var sigmoid(const Var& a);
Var reciprocal(const Var& a);  // 1/x; no guard against zero

Var sum(const Var& a);
Var mean(const Var& a);
Var row_dot(const Var& a, const Var& b);  // [n x 1], per-row inner product

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, std::size_t start, std::size_t count);
Var slice_rows(const Var& a, std::size_t start, std::size_t count);

// Rows scaled to unit Euclidean norm; rows with norm < 1e-12 become zero.
Var normalize_rows(const Var& a);

// Per-row layer normalization with affine gamma/beta [1 x C].
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Scaled dot-product attention split into `heads` column groups.
// q [n x C], k and v [m x C] -> [n x C].
Var multi_head_attention(const Var& q, const Var& k, const Var& v, std::size_t heads);

// Sum over elements of w * BCE(sigmoid(logits), target), computed stably
// from logits. `weight` may be empty (all ones). Target and weight are
// constants.
Var bce_with_logits_sum(const Var& logits, const Tensor& target, const Tensor& weight = {});

// Linear spatial resampling: out[o] = sum_i w_oi * in[i] for every channel.
struct Resampler {
  std::size_t in_height = 0, in_width = 0, out_height = 0, out_width = 0;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> taps;  // per output pixel

  // Adaptive average pooling bins [floor(i*H/oh), ceil((i+1)*H/oh)).
  static Resampler adaptive_avg_pool(std::size_t h, std::size_t w, std::size_t oh,
                                     std::size_t ow);
  // src = floor(dst * in / out)
  static Resampler nearest(std::size_t h, std::size_t w, std::size_t oh, std::size_t ow);
  // Half-pixel centers, edge clamped (align_corners = false).
  static Resampler bilinear(std::size_t h, std::size_t w, std::size_t oh, std::size_t ow);

  Tensor apply(const Tensor& in) const;
};

Var resample(const Var& x, const Resampler& map);

// k x k convolution, stride 1, zero padding k/2, on an (h x w) map stored as
// [h*w x Cin]. weight is [k*k*Cin x Cout], rows ordered (ky, kx, cin).
Var conv2d(const Var& x, std::size_t h, std::size_t w, const Var& weight, const Var& bias,
           std::size_t ksize);

}  // namespace sigma::ag
