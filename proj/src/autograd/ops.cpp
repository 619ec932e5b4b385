#include "sigma/autograd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sigma/core/errors.hpp"
#include "sigma/simd/kernels.hpp"

namespace sigma::ag {
namespace {

enum class Broadcast { same, scalar, row, col };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return Broadcast::same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::col;
  throw ShapeMismatch(std::string(op) + ": cannot broadcast " + b.shape_string() + " onto " +
                      a.shape_string());
}

inline double bval(const Tensor& b, Broadcast kind, std::size_t r, std::size_t c) {
  switch (kind) {
    case Broadcast::same: return b(r, c);
    case Broadcast::scalar: return b[0];
    case Broadcast::row: return b[c];
    case Broadcast::col: return b[r];
  }
  return 0.0;
}

// Sums a full-shape gradient down to the broadcast operand's shape.
Tensor reduce_to(const Tensor& g, const Tensor& like, Broadcast kind) {
  if (kind == Broadcast::same) return g;
  Tensor out(like.rows(), like.cols());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      const double v = g(r, c);
      switch (kind) {
        case Broadcast::scalar: out[0] += v; break;
        case Broadcast::row: out[c] += v; break;
        case Broadcast::col: out[r] += v; break;
        case Broadcast::same: break;
      }
    }
  }
  return out;
}

template <class Fwd>
Tensor map_unary(const Tensor& a, Fwd f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;

}  // namespace

Var add(const Var& a, const Var& b) {
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "add");
  Tensor out(a.rows(), a.cols());
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c)
      out(r, c) = a.value()(r, c) + bval(b.value(), kind, r, c);
  return record(std::move(out), {a, b}, [kind](Node& self) {
    accumulate(self.parents[0], self.grad);
    if (self.parents[1]->requires_grad)
      accumulate(self.parents[1], reduce_to(self.grad, self.parents[1]->value, kind));
  });
}

Var sub(const Var& a, const Var& b) {
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "sub");
  Tensor out(a.rows(), a.cols());
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c)
      out(r, c) = a.value()(r, c) - bval(b.value(), kind, r, c);
  return record(std::move(out), {a, b}, [kind](Node& self) {
    accumulate(self.parents[0], self.grad);
    if (self.parents[1]->requires_grad) {
      Tensor neg = map_unary(self.grad, [](double g) { return -g; });
      accumulate(self.parents[1], reduce_to(neg, self.parents[1]->value, kind));
    }
  });
}

Var mul(const Var& a, const Var& b) {
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "mul");
  Tensor out(a.rows(), a.cols());
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c)
      out(r, c) = a.value()(r, c) * bval(b.value(), kind, r, c);
  return record(std::move(out), {a, b}, [kind](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      Tensor ga(av.rows(), av.cols());
      for (std::size_t r = 0; r < ga.rows(); ++r)
        for (std::size_t c = 0; c < ga.cols(); ++c)
          ga(r, c) = self.grad(r, c) * bval(bv, kind, r, c);
      accumulate(self.parents[0], ga);
    }
    if (self.parents[1]->requires_grad) {
      Tensor gb(av.rows(), av.cols());
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = self.grad[i] * av[i];
      accumulate(self.parents[1], reduce_to(gb, bv, kind));
    }
  });
}

Var scale(const Var& a, double s) {
  return record(map_unary(a.value(), [s](double x) { return s * x; }), {a}, [s](Node& self) {
    accumulate(self.parents[0], map_unary(self.grad, [s](double g) { return s * g; }));
  });
}

Var add_scalar(const Var& a, double s) {
  return record(map_unary(a.value(), [s](double x) { return x + s; }), {a},
                [](Node& self) { accumulate(self.parents[0], self.grad); });
}

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
  Tensor out = sigma::matmul(a.value(), b.value(), trans_a, trans_b);
  return record(std::move(out), {a, b}, [trans_a, trans_b](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    const Tensor& g = self.grad;
    if (self.parents[0]->requires_grad) {
      // C = op(A) op(B): dop(A) = G op(B)^T
      Tensor ga = trans_a ? sigma::matmul(bv, g, trans_b, true)   // (G op(B)^T)^T = op(B) G^T
                          : sigma::matmul(g, bv, false, !trans_b);
      accumulate(self.parents[0], ga);
    }
    if (self.parents[1]->requires_grad) {
      // dop(B) = op(A)^T G
      Tensor gb = trans_b ? sigma::matmul(g, av, true, trans_a)    // (op(A)^T G)^T = G^T op(A)
                          : sigma::matmul(av, g, !trans_a, false);
      accumulate(self.parents[1], gb);
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  Var y = matmul(x, weight);
  if (bias.defined()) y = add(y, bias);
  return y;
}

Var abs(const Var& a) {
  return record(map_unary(a.value(), [](double x) { return std::fabs(x); }), {a},
                [](Node& self) {
                  const Tensor& x = self.parents[0]->value;
                  Tensor g(x.rows(), x.cols());
                  for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] = x[i] > 0.0 ? self.grad[i] : (x[i] < 0.0 ? -self.grad[i] : 0.0);
                  accumulate(self.parents[0], g);
                });
}

Var relu(const Var& a) {
  return record(map_unary(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), {a},
                [](Node& self) {
                  const Tensor& x = self.parents[0]->value;
                  Tensor g(x.rows(), x.cols());
                  for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] = x[i] > 0.0 ? self.grad[i] : 0.0;
                  accumulate(self.parents[0], g);
                });
}

Var gelu(const Var& a) {
  auto f = [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); };
  return record(map_unary(a.value(), f), {a}, [](Node& self) {
    const Tensor& x = self.parents[0]->value;
    Tensor g(x.rows(), x.cols());
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
      g[i] = self.grad[i] * (cdf + x[i] * pdf);
    }
    accumulate(self.parents[0], g);
  });
}

Var sigmoid(const Var& a) {
  auto f = [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return record(map_unary(a.value(), f), {a}, [](Node& self) {
    Tensor g(self.value.rows(), self.value.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = self.value[i];
      g[i] = self.grad[i] * s * (1.0 - s);
    }
    accumulate(self.parents[0], g);
  });
}

Var reciprocal(const Var& a) {
  return record(map_unary(a.value(), [](double x) { return 1.0 / x; }), {a}, [](Node& self) {
    Tensor g(self.value.rows(), self.value.cols());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = -self.grad[i] * self.value[i] * self.value[i];
    accumulate(self.parents[0], g);
  });
}

Var sum(const Var& a) {
  return record(Tensor::scalar(a.value().sum()), {a}, [](Node& self) {
    const Tensor& x = self.parents[0]->value;
    accumulate(self.parents[0], Tensor(x.rows(), x.cols(), self.grad[0]));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeMismatch("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var row_dot(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "row_dot");
  const auto& k = simd::kernels();
  Tensor out(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r)
    out[r] = k.dot(a.value().row(r), b.value().row(r), a.cols());
  return record(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    for (int side = 0; side < 2; ++side) {
      if (!self.parents[side]->requires_grad) continue;
      const Tensor& other = side == 0 ? bv : av;
      Tensor g(av.rows(), av.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = self.grad[r] * other(r, c);
      accumulate(self.parents[side], g);
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeMismatch("concat_cols row count mismatch");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.value().row(r), p.cols(), out.row(r) + offset);
    offset += p.cols();
  }
  return record(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (const auto& parent : self.parents) {
      const std::size_t pc = parent->value.cols();
      if (parent->requires_grad) {
        Tensor g(self.grad.rows(), pc);
        for (std::size_t r = 0; r < g.rows(); ++r)
          std::copy_n(self.grad.row(r) + off, pc, g.row(r));
        accumulate(parent, g);
      }
      off += pc;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows of nothing");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeMismatch("concat_rows column count mismatch");
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.row(offset));
    offset += p.rows();
  }
  return record(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (const auto& parent : self.parents) {
      const std::size_t pr = parent->value.rows();
      if (parent->requires_grad) {
        Tensor g(pr, self.grad.cols());
        std::copy_n(self.grad.row(off), g.size(), g.data());
        accumulate(parent, g);
      }
      off += pr;
    }
  });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
  if (start + count > a.cols()) throw ShapeMismatch("slice_cols out of range");
  Tensor out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r)
    std::copy_n(a.value().row(r) + start, count, out.row(r));
  return record(std::move(out), {a}, [start, count](Node& self) {
    const Tensor& x = self.parents[0]->value;
    Tensor g(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
      std::copy_n(self.grad.row(r), count, g.row(r) + start);
    accumulate(self.parents[0], g);
  });
}

Var slice_rows(const Var& a, std::size_t start, std::size_t count) {
  if (start + count > a.rows()) throw ShapeMismatch("slice_rows out of range");
  Tensor out(count, a.cols());
  std::copy_n(a.value().row(start), out.size(), out.data());
  return record(std::move(out), {a}, [start](Node& self) {
    const Tensor& x = self.parents[0]->value;
    Tensor g(x.rows(), x.cols());
    std::copy_n(self.grad.data(), self.grad.size(), g.row(start));
    accumulate(self.parents[0], g);
  });
}

Var normalize_rows(const Var& a) {
  const Tensor& x = a.value();
  const auto& k = simd::kernels();
  Tensor out(x.rows(), x.cols());
  std::vector<double> norms(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double n = std::sqrt(k.dot(x.row(r), x.row(r), x.cols()));
    norms[r] = n;
    if (n >= 1e-12) {
      for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) / n;
    }
  }
  return record(std::move(out), {a}, [norms = std::move(norms)](Node& self) {
    const auto& kk = simd::kernels();
    const Tensor& y = self.value;
    Tensor g(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      if (norms[r] < 1e-12) continue;
      const double yg = kk.dot(y.row(r), self.grad.row(r), y.cols());
      for (std::size_t c = 0; c < y.cols(); ++c)
        g(r, c) = (self.grad(r, c) - y(r, c) * yg) / norms[r];
    }
    accumulate(self.parents[0], g);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  if (gamma.cols() != c || beta.cols() != c) throw ShapeMismatch("layer_norm affine width");
  Tensor xhat(n, c);
  std::vector<double> inv_std(n);
  Tensor out(n, c);
  for (std::size_t r = 0; r < n; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xv(r, j);
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xv(r, j) - mu) * (xv(r, j) - mu);
    var /= static_cast<double>(c);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat(r, j) = (xv(r, j) - mu) * inv_std[r];
      out(r, j) = xhat(r, j) * gamma.value()[j] + beta.value()[j];
    }
  }
  return record(std::move(out), {x, gamma, beta},
                [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                  const Tensor& gam = self.parents[1]->value;
                  const std::size_t rows = xhat.rows(), cols = xhat.cols();
                  const double inv_c = 1.0 / static_cast<double>(cols);
                  if (self.parents[0]->requires_grad) {
                    Tensor gx(rows, cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t j = 0; j < cols; ++j) {
                        const double dxh = self.grad(r, j) * gam[j];
                        m1 += dxh;
                        m2 += dxh * xhat(r, j);
                      }
                      m1 *= inv_c;
                      m2 *= inv_c;
                      for (std::size_t j = 0; j < cols; ++j) {
                        const double dxh = self.grad(r, j) * gam[j];
                        gx(r, j) = inv_std[r] * (dxh - m1 - xhat(r, j) * m2);
                      }
                    }
                    accumulate(self.parents[0], gx);
                  }
                  if (self.parents[1]->requires_grad || self.parents[2]->requires_grad) {
                    Tensor gg(1, cols), gb(1, cols);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < cols; ++j) {
                        gg[j] += self.grad(r, j) * xhat(r, j);
                        gb[j] += self.grad(r, j);
                      }
                    accumulate(self.parents[1], gg);
                    accumulate(self.parents[2], gb);
                  }
                });
}

namespace {

Tensor copy_head(const Tensor& src, std::size_t head, std::size_t width) {
  Tensor out(src.rows(), width);
  for (std::size_t r = 0; r < src.rows(); ++r)
    std::copy_n(src.row(r) + head * width, width, out.row(r));
  return out;
}

void add_head(Tensor& dst, const Tensor& src, std::size_t head, std::size_t width) {
  for (std::size_t r = 0; r < src.rows(); ++r) {
    double* d = dst.row(r) + head * width;
    const double* s = src.row(r);
    for (std::size_t c = 0; c < width; ++c) d[c] += s[c];
  }
}

void softmax_rows(Tensor& s) {
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double* row = s.row(r);
    double mx = row[0];
    for (std::size_t c = 1; c < s.cols(); ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < s.cols(); ++c) {
      row[c] = std::exp(row[c] - mx);
      z += row[c];
    }
    const double inv = 1.0 / z;
    for (std::size_t c = 0; c < s.cols(); ++c) row[c] *= inv;
  }
}

}  // namespace

Var multi_head_attention(const Var& q, const Var& k, const Var& v, std::size_t heads) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (heads == 0 || qv.cols() % heads != 0) throw ShapeMismatch("attention heads must divide width");
  if (kv.cols() != qv.cols() || vv.cols() != qv.cols() || kv.rows() != vv.rows())
    throw ShapeMismatch("attention q/k/v shapes: " + qv.shape_string() + ", " +
                        kv.shape_string() + ", " + vv.shape_string());
  const std::size_t width = qv.cols() / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(width));
  const bool keep = grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());

  Tensor out(qv.rows(), qv.cols());
  std::vector<Tensor> probs;
  if (keep) probs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = copy_head(qv, h, width);
    const Tensor kh = copy_head(kv, h, width);
    const Tensor vh = copy_head(vv, h, width);
    Tensor s = sigma::matmul(qh, kh, false, true);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= scale_factor;
    softmax_rows(s);
    add_head(out, sigma::matmul(s, vh), h, width);
    if (keep) probs.push_back(std::move(s));
  }
  if (!keep) return Var(std::move(out), false);

  return record(std::move(out), {q, k, v},
                [probs = std::move(probs), heads, width, scale_factor](Node& self) {
                  const Tensor& qv2 = self.parents[0]->value;
                  const Tensor& kv2 = self.parents[1]->value;
                  const Tensor& vv2 = self.parents[2]->value;
                  Tensor gq(qv2.rows(), qv2.cols());
                  Tensor gk(kv2.rows(), kv2.cols());
                  Tensor gv(vv2.rows(), vv2.cols());
                  for (std::size_t h = 0; h < heads; ++h) {
                    const Tensor& p = probs[h];
                    const Tensor go = copy_head(self.grad, h, width);
                    const Tensor vh = copy_head(vv2, h, width);
                    Tensor dp = sigma::matmul(go, vh, false, true);
                    add_head(gv, sigma::matmul(p, go, true, false), h, width);
                    for (std::size_t r = 0; r < dp.rows(); ++r) {
                      double dot = 0.0;
                      for (std::size_t c = 0; c < dp.cols(); ++c) dot += dp(r, c) * p(r, c);
                      for (std::size_t c = 0; c < dp.cols(); ++c)
                        dp(r, c) = p(r, c) * (dp(r, c) - dot) * scale_factor;
                    }
                    const Tensor qh = copy_head(qv2, h, width);
                    const Tensor kh = copy_head(kv2, h, width);
                    add_head(gq, sigma::matmul(dp, kh), h, width);
                    add_head(gk, sigma::matmul(dp, qh, true, false), h, width);
                  }
                  accumulate(self.parents[0], gq);
                  accumulate(self.parents[1], gk);
                  accumulate(self.parents[2], gv);
                });
}

Var bce_with_logits_sum(const Var& logits, const Tensor& target, const Tensor& weight) {
  const Tensor& x = logits.value();
  require_same_shape(x, target, "bce target");
  if (!weight.empty()) require_same_shape(x, weight, "bce weight");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = weight.empty() ? 1.0 : weight[i];
    if (w == 0.0) continue;
    const double l = std::max(x[i], 0.0) - x[i] * target[i] + std::log1p(std::exp(-std::fabs(x[i])));
    total += w * l;
  }
  return record(Tensor::scalar(total), {logits}, [target, weight](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    Tensor g(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double w = weight.empty() ? 1.0 : weight[i];
      const double s = xv[i] >= 0 ? 1.0 / (1.0 + std::exp(-xv[i]))
                                  : std::exp(xv[i]) / (1.0 + std::exp(xv[i]));
      g[i] = self.grad[0] * w * (s - target[i]);
    }
    accumulate(self.parents[0], g);
  });
}

Resampler Resampler::adaptive_avg_pool(std::size_t h, std::size_t w, std::size_t oh,
                                       std::size_t ow) {
  Resampler m{h, w, oh, ow, {}};
  m.taps.resize(oh * ow);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    const std::size_t y0 = oy * h / oh;
    const std::size_t y1 = ((oy + 1) * h + oh - 1) / oh;
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const std::size_t x0 = ox * w / ow;
      const std::size_t x1 = ((ox + 1) * w + ow - 1) / ow;
      const double inv = 1.0 / static_cast<double>((y1 - y0) * (x1 - x0));
      auto& t = m.taps[oy * ow + ox];
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x)
          t.emplace_back(static_cast<std::uint32_t>(y * w + x), inv);
    }
  }
  return m;
}

Resampler Resampler::nearest(std::size_t h, std::size_t w, std::size_t oh, std::size_t ow) {
  Resampler m{h, w, oh, ow, {}};
  m.taps.resize(oh * ow);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    const std::size_t sy = std::min(h - 1, oy * h / oh);
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const std::size_t sx = std::min(w - 1, ox * w / ow);
      m.taps[oy * ow + ox].emplace_back(static_cast<std::uint32_t>(sy * w + sx), 1.0);
    }
  }
  return m;
}

namespace {
struct LinearTap {
  std::size_t i0, i1;
  double w1;  // weight on i1; i0 gets 1 - w1
};

LinearTap bilinear_tap(std::size_t dst, std::size_t in, std::size_t out) {
  double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) /
                   static_cast<double>(out) - 0.5;
  if (src < 0.0) src = 0.0;
  std::size_t i0 = static_cast<std::size_t>(src);
  if (i0 > in - 1) i0 = in - 1;
  const std::size_t i1 = std::min(i0 + 1, in - 1);
  return {i0, i1, src - static_cast<double>(i0)};
}
}  // namespace

Resampler Resampler::bilinear(std::size_t h, std::size_t w, std::size_t oh, std::size_t ow) {
  Resampler m{h, w, oh, ow, {}};
  m.taps.resize(oh * ow);
  std::vector<LinearTap> xs(ow);
  for (std::size_t ox = 0; ox < ow; ++ox) xs[ox] = bilinear_tap(ox, w, ow);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    const LinearTap ty = bilinear_tap(oy, h, oh);
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const LinearTap& tx = xs[ox];
      auto& t = m.taps[oy * ow + ox];
      const double wy[2] = {1.0 - ty.w1, ty.w1};
      const double wx[2] = {1.0 - tx.w1, tx.w1};
      const std::size_t ys[2] = {ty.i0, ty.i1};
      const std::size_t xs2[2] = {tx.i0, tx.i1};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const double wt = wy[a] * wx[b];
          if (wt != 0.0) t.emplace_back(static_cast<std::uint32_t>(ys[a] * w + xs2[b]), wt);
        }
    }
  }
  return m;
}

Tensor Resampler::apply(const Tensor& in) const {
  if (in.rows() != in_height * in_width)
    throw ShapeMismatch("resample input has " + std::to_string(in.rows()) + " pixels, expected " +
                        std::to_string(in_height * in_width));
  const auto& k = simd::kernels();
  Tensor out(out_height * out_width, in.cols());
  for (std::size_t o = 0; o < taps.size(); ++o)
    for (const auto& [i, wt] : taps[o]) k.axpy(wt, in.row(i), out.row(o), in.cols());
  return out;
}

Var resample(const Var& x, const Resampler& map) {
  return record(map.apply(x.value()), {x}, [map](Node& self) {
    const auto& k = simd::kernels();
    const Tensor& xv = self.parents[0]->value;
    Tensor g(xv.rows(), xv.cols());
    for (std::size_t o = 0; o < map.taps.size(); ++o)
      for (const auto& [i, wt] : map.taps[o]) k.axpy(wt, self.grad.row(o), g.row(i), g.cols());
    accumulate(self.parents[0], g);
  });
}

namespace {

constexpr std::size_t kConvChunk = 2048;  // output pixels per im2col tile

// Fills cols [count x k*k*cin] for output pixels [first, first + count).
void im2col(const Tensor& x, std::size_t h, std::size_t w, std::size_t ksize, std::size_t first,
            std::size_t count, Tensor& cols) {
  const std::size_t cin = x.cols();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ksize / 2);
  cols.fill(0.0);
  for (std::size_t o = 0; o < count; ++o) {
    const std::size_t pix = first + o;
    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(pix / w);
    const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(pix % w);
    double* dst = cols.row(o);
    for (std::size_t ky = 0; ky < ksize; ++ky) {
      const std::ptrdiff_t sy = y + static_cast<std::ptrdiff_t>(ky) - pad;
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
      for (std::size_t kx = 0; kx < ksize; ++kx) {
        const std::ptrdiff_t sx = xx + static_cast<std::ptrdiff_t>(kx) - pad;
        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
        std::copy_n(x.row(static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)), cin,
                    dst + (ky * ksize + kx) * cin);
      }
    }
  }
}

void col2im_add(const Tensor& cols, std::size_t h, std::size_t w, std::size_t ksize,
                std::size_t first, std::size_t count, Tensor& gx) {
  const std::size_t cin = gx.cols();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ksize / 2);
  for (std::size_t o = 0; o < count; ++o) {
    const std::size_t pix = first + o;
    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(pix / w);
    const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(pix % w);
    const double* src = cols.row(o);
    for (std::size_t ky = 0; ky < ksize; ++ky) {
      const std::ptrdiff_t sy = y + static_cast<std::ptrdiff_t>(ky) - pad;
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
      for (std::size_t kx = 0; kx < ksize; ++kx) {
        const std::ptrdiff_t sx = xx + static_cast<std::ptrdiff_t>(kx) - pad;
        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
        double* d = gx.row(static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx));
        const double* s = src + (ky * ksize + kx) * cin;
        for (std::size_t c = 0; c < cin; ++c) d[c] += s[c];
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, std::size_t h, std::size_t w, const Var& weight, const Var& bias,
           std::size_t ksize) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (xv.rows() != h * w) throw ShapeMismatch("conv2d input pixel count");
  if (ksize % 2 == 0) throw ShapeMismatch("conv2d kernel must be odd");
  if (wv.rows() != ksize * ksize * xv.cols())
    throw ShapeMismatch("conv2d weight rows " + std::to_string(wv.rows()) + " for " +
                        std::to_string(ksize) + "x" + std::to_string(ksize) + "x" +
                        std::to_string(xv.cols()));
  const std::size_t cout = wv.cols();
  const auto& k = simd::kernels();
  Tensor out(h * w, cout);
  Tensor cols;
  for (std::size_t first = 0; first < h * w; first += kConvChunk) {
    const std::size_t count = std::min(kConvChunk, h * w - first);
    if (cols.rows() != count) cols = Tensor(count, wv.rows());
    im2col(xv, h, w, ksize, first, count, cols);
    k.gemm(false, false, count, cout, wv.rows(), 1.0, cols.data(), cols.cols(), wv.data(), cout,
           0.0, out.row(first), cout);
  }
  Var y = record(std::move(out), {x, weight}, [h, w, ksize](Node& self) {
    const auto& kk = simd::kernels();
    const Tensor& xin = self.parents[0]->value;
    const Tensor& wt = self.parents[1]->value;
    const std::size_t co = wt.cols();
    Tensor gw(wt.rows(), wt.cols());
    Tensor gx(xin.rows(), xin.cols());
    Tensor tile;
    Tensor gcols;
    for (std::size_t first = 0; first < h * w; first += kConvChunk) {
      const std::size_t count = std::min(kConvChunk, h * w - first);
      if (tile.rows() != count) {
        tile = Tensor(count, wt.rows());
        gcols = Tensor(count, wt.rows());
      }
      im2col(xin, h, w, ksize, first, count, tile);
      const double* g = self.grad.row(first);
      if (self.parents[1]->requires_grad)
        kk.gemm(true, false, wt.rows(), co, count, 1.0, tile.data(), tile.cols(), g, co, 1.0,
                gw.data(), co);
      if (self.parents[0]->requires_grad) {
        kk.gemm(false, true, count, wt.rows(), co, 1.0, g, co, wt.data(), co, 0.0, gcols.data(),
                gcols.cols());
        col2im_add(gcols, h, w, ksize, first, count, gx);
      }
    }
    accumulate(self.parents[0], gx);
    accumulate(self.parents[1], gw);
  });
  if (bias.defined()) y = add(y, bias);
  return y;
}

}  // namespace sigma::ag
