#pragma once

#include <array>
#include <functional>
#include <vector>

#include "sigma/autograd/nn.hpp"
#include "sigma/backbone/backbone.hpp"
#include "sigma/model/config.hpp"

namespace sigma::diff {

using ag::Var;
using LevelTriple = std::array<Var, backbone::kLevels>;

// One Difference Refinement Block; every level owns its own sublayers.
struct DrbBlock {
  std::array<nn::Attention, backbone::kLevels> self_attention;
  std::array<nn::Attention, backbone::kLevels> cross_attention;
  std::array<nn::FeedForward, backbone::kLevels> feed_forward;
};

struct DiffParams {
  std::array<nn::Linear, backbone::kLevels> projection;  // 4D -> C
  std::vector<DrbBlock> blocks;
  nn::Linear aggregation;                                 // 3C -> C'
};

// Registers parameters under "diff.*".
DiffParams make_diff_params(nn::ParamStore& store, const ModelConfig& config, Rng& rng);

// Rows scaled to unit norm; rows with norm < 1e-12 become zero.
Tensor normalize_l2(const Tensor& features);

// [|fo - fe| , fo * fe , fo , fe] on L2-normalised rows, N x 4D.
Var difference_features(const Tensor& f_o, const Tensor& f_e);

// Per level: Proj_l(difference_features(f_o_l, f_e_l)). Throws ShapeMismatch.
LevelTriple compute_difference(const backbone::MultiLevelFeatures& f_o,
                               const backbone::MultiLevelFeatures& f_e, const DiffParams& params);

enum class SublayerKind { self_attention, cross_attention, feed_forward };

struct SublayerCall {
  std::size_t block = 0;
  std::size_t level = 0;
  SublayerKind kind = SublayerKind::self_attention;
  Var query;    // input tokens (for feed-forward, the only input)
  Var context;  // attention keys/values; undefined for feed-forward
};

// Substitutes sublayer outputs (before the residual add). An empty hook runs
// the real sublayer.
struct RefineHooks {
  std::function<Var(const SublayerCall&)> sublayer;
};

// For each block: residual self-attention on every level, then residual
// cross-level attention where level l attends to the other two levels'
// tokens stacked row-wise (2N keys), then a residual GELU feed-forward.
LevelTriple refine(const LevelTriple& diffs, const DiffParams& params,
                   const RefineHooks& hooks = {});

// Channel concat of the three levels then the 1x1 projection: E_v^(0).
Var aggregate(const LevelTriple& refined, const DiffParams& params);

}  // namespace sigma::diff
