#include "sigma/autograd/nn.hpp"

#include <cmath>
#include <cstring>

#include "sigma/core/errors.hpp"

namespace sigma::nn {

Var ParamStore::add(const std::string& name, Tensor init) {
  if (params_.count(name)) throw ConfigInvalid("duplicate parameter name " + name);
  Var v = ag::parameter(std::move(init));
  params_.emplace(name, v);
  return v;
}

const Var& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigInvalid("unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : params_) n += v.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, v] : params_) v.zero_grad();
}

void ParamStore::fill(double value) {
  for (auto& [_, v] : params_) v.mutable_value().fill(value);
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.params_.size() != params_.size()) throw ShapeMismatch("parameter sets differ in size");
  for (auto& [name, v] : params_) {
    const Var& src = other.get(name);
    require_same_shape(v.value(), src.value(), name.c_str());
    v.mutable_value() = src.value();
  }
}

std::uint64_t ParamStore::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, v] : params_) {
    feed(name.data(), name.size());
    feed(v.value().data(), v.value().size() * sizeof(double));
  }
  return h;
}

Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                   Rng& rng, bool with_bias) {
  Linear l;
  l.weight = store.add(name + ".weight", uniform_init(in, out, in, rng));
  if (with_bias) l.bias = store.add(name + ".bias", Tensor(1, out));
  return l;
}

LayerNorm make_layer_norm(ParamStore& store, const std::string& name, std::size_t width) {
  return {store.add(name + ".gamma", Tensor(1, width, 1.0)),
          store.add(name + ".beta", Tensor(1, width))};
}

Var Attention::operator()(const Var& q_tokens, const Var& context_tokens) const {
  const Var qn = norm_query(q_tokens);
  const Var cn = norm_context(context_tokens);
  return output(ag::multi_head_attention(query(qn), key(cn), value(cn), heads));
}

Attention make_attention(ParamStore& store, const std::string& name, std::size_t width,
                         std::size_t heads, Rng& rng) {
  Attention a;
  a.norm_query = make_layer_norm(store, name + ".norm_q", width);
  a.norm_context = make_layer_norm(store, name + ".norm_kv", width);
  a.query = make_linear(store, name + ".q", width, width, rng);
  a.key = make_linear(store, name + ".k", width, width, rng);
  a.value = make_linear(store, name + ".v", width, width, rng);
  a.output = make_linear(store, name + ".o", width, width, rng);
  a.heads = heads;
  return a;
}

Var FeedForward::operator()(const Var& x) const { return down(ag::gelu(up(norm(x)))); }

FeedForward make_feed_forward(ParamStore& store, const std::string& name, std::size_t width,
                              std::size_t hidden, Rng& rng) {
  FeedForward f;
  f.norm = make_layer_norm(store, name + ".norm", width);
  f.up = make_linear(store, name + ".up", width, hidden, rng);
  f.down = make_linear(store, name + ".down", hidden, width, rng);
  return f;
}

Conv2d make_conv2d(ParamStore& store, const std::string& name, std::size_t cin, std::size_t cout,
                   std::size_t ksize, Rng& rng) {
  const std::size_t fan_in = ksize * ksize * cin;
  return {store.add(name + ".weight", uniform_init(fan_in, cout, fan_in, rng)),
          store.add(name + ".bias", Tensor(1, cout)), ksize};
}

}  // namespace sigma::nn
