#include "sigma/diff/semantic_diff.hpp"

#include <cmath>
#include <string>

#include "sigma/core/errors.hpp"

namespace sigma::diff {

DiffParams make_diff_params(nn::ParamStore& store, const ModelConfig& config, Rng& rng) {
  const std::size_t d = config.backbone.embed_dim, c = config.diff_channels;
  DiffParams p;
  for (std::size_t l = 0; l < backbone::kLevels; ++l)
    p.projection[l] = nn::make_linear(store, "diff.proj.l" + std::to_string(l + 1), 4 * d, c, rng);
  for (std::size_t b = 0; b < config.n_drb; ++b) {
    DrbBlock block;
    for (std::size_t l = 0; l < backbone::kLevels; ++l) {
      const std::string base = "diff.drb" + std::to_string(b) + ".l" + std::to_string(l + 1);
      block.self_attention[l] = nn::make_attention(store, base + ".self", c, config.heads, rng);
      block.cross_attention[l] = nn::make_attention(store, base + ".cross", c, config.heads, rng);
      block.feed_forward[l] = nn::make_feed_forward(store, base + ".ff", c, config.ff_multiplier * c, rng);
    }
    p.blocks.push_back(std::move(block));
  }
  p.aggregation = nn::make_linear(store, "diff.agg", 3 * c, config.evidence_channels, rng);
  return p;
}

Tensor normalize_l2(const Tensor& features) {
  Tensor out(features.rows(), features.cols());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < features.cols(); ++j) sq += features(r, j) * features(r, j);
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) continue;
    for (std::size_t j = 0; j < features.cols(); ++j) out(r, j) = features(r, j) / norm;
  }
  return out;
}

Var difference_features(const Tensor& f_o, const Tensor& f_e) {
  require_same_shape(f_o, f_e, "difference_features");
  const Var o = ag::constant(normalize_l2(f_o));
  const Var e = ag::constant(normalize_l2(f_e));
  return ag::concat_cols({ag::abs(ag::sub(o, e)), ag::mul(o, e), o, e});
}

LevelTriple compute_difference(const backbone::MultiLevelFeatures& f_o,
                               const backbone::MultiLevelFeatures& f_e, const DiffParams& params) {
  if (!(f_o.grid == f_e.grid) || f_o.dim() != f_e.dim())
    throw ShapeMismatch("original and edited features disagree in grid or width");
  LevelTriple out;
  for (std::size_t l = 0; l < backbone::kLevels; ++l)
    out[l] = params.projection[l](difference_features(f_o.levels[l], f_e.levels[l]));
  return out;
}

namespace {

Var run_sublayer(const SublayerCall& call, const DrbBlock& block, const RefineHooks& hooks) {
  if (hooks.sublayer) return hooks.sublayer(call);
  switch (call.kind) {
    case SublayerKind::self_attention: return block.self_attention[call.level](call.query, call.context);
    case SublayerKind::cross_attention: return block.cross_attention[call.level](call.query, call.context);
    case SublayerKind::feed_forward: return block.feed_forward[call.level](call.query);
  }
  return {};
}

}  // namespace

LevelTriple refine(const LevelTriple& diffs, const DiffParams& params, const RefineHooks& hooks) {
  LevelTriple x = diffs;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const DrbBlock& block = params.blocks[b];
    for (std::size_t l = 0; l < backbone::kLevels; ++l) {
      const SublayerCall call{b, l, SublayerKind::self_attention, x[l], x[l]};
      x[l] = ag::add(x[l], run_sublayer(call, block, hooks));
    }
    // Cross-level keys come from the post-self-attention states of the block.
    const LevelTriple after_self = x;
    for (std::size_t l = 0; l < backbone::kLevels; ++l) {
      std::vector<Var> others;
      for (std::size_t m = 0; m < backbone::kLevels; ++m)
        if (m != l) others.push_back(after_self[m]);
      const SublayerCall call{b, l, SublayerKind::cross_attention, after_self[l], ag::concat_rows(others)};
      x[l] = ag::add(after_self[l], run_sublayer(call, block, hooks));
    }
    for (std::size_t l = 0; l < backbone::kLevels; ++l) {
      const SublayerCall call{b, l, SublayerKind::feed_forward, x[l], {}};
      x[l] = ag::add(x[l], run_sublayer(call, block, hooks));
    }
  }
  return x;
}

Var aggregate(const LevelTriple& refined, const DiffParams& params) {
  for (const Var& level : refined)
    if (level.rows() != refined[0].rows() || level.cols() != refined[0].cols())
      throw ShapeMismatch("refined levels disagree in shape");
  return params.aggregation(ag::concat_cols({refined[0], refined[1], refined[2]}));
}

}  // namespace sigma::diff
