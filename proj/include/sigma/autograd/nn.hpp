#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sigma/autograd/ops.hpp"
#include "sigma/core/rng.hpp"

namespace sigma::nn {

using ag::Var;

// Named trainable tensors. Names are module paths ("diff.proj.l1.weight");
// iteration order is lexicographic so checkpoints and optimizer state are
// laid out deterministically.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const std::map<std::string, Var>& all() const noexcept { return params_; }
  std::size_t count() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  void fill(double value);
  // Copies values from another store with identical names and shapes.
  void copy_values_from(const ParamStore& other);
  // Order-sensitive digest of all values (FNV-1a over the raw bytes).
  std::uint64_t digest() const;

 private:
  std::map<std::string, Var> params_;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights.
Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);

struct Linear {
  Var weight;  // [in x out]
  Var bias;    // [1 x out], may be undefined
  Var operator()(const Var& x) const { return ag::linear(x, weight, bias); }
};

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                   Rng& rng, bool with_bias = true);

struct LayerNorm {
  Var gamma, beta;
  Var operator()(const Var& x) const { return ag::layer_norm(x, gamma, beta); }
};

LayerNorm make_layer_norm(ParamStore& store, const std::string& name, std::size_t width);

// Pre-norm multi-head attention sublayer: Wo * MHA(Wq LN_q(q), Wk LN_kv(kv), Wv LN_kv(kv)).
// The residual addition is left to the caller.
struct Attention {
  LayerNorm norm_query;
  LayerNorm norm_context;
  Linear query, key, value, output;
  std::size_t heads = 1;
  Var operator()(const Var& q_tokens, const Var& context_tokens) const;
};

Attention make_attention(ParamStore& store, const std::string& name, std::size_t width,
                         std::size_t heads, Rng& rng);

// Pre-norm GELU feed-forward: W2 gelu(W1 LN(x)).
struct FeedForward {
  LayerNorm norm;
  Linear up, down;
  Var operator()(const Var& x) const;
};

FeedForward make_feed_forward(ParamStore& store, const std::string& name, std::size_t width,
                              std::size_t hidden, Rng& rng);

struct Conv2d {
  Var weight;  // [k*k*cin x cout]
  Var bias;    // [1 x cout]
  std::size_t ksize = 3;
  Var operator()(const Var& x, std::size_t h, std::size_t w) const {
    return ag::conv2d(x, h, w, weight, bias, ksize);
  }
};

Conv2d make_conv2d(ParamStore& store, const std::string& name, std::size_t cin, std::size_t cout,
                   std::size_t ksize, Rng& rng);

}  // namespace sigma::nn
