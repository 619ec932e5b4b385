#pragma once

#include <array>
#include <functional>
#include <utility>
#include <vector>

#include "sigma/autograd/nn.hpp"
#include "sigma/diff/semantic_diff.hpp"
#include "sigma/model/config.hpp"

namespace sigma::fusion {

using ag::Var;

struct BcmrIteration {
  nn::Attention visual_update;       // E_v attends to E_i
  nn::Attention instruction_update;  // E_i attends to the new E_v
};

struct FusionParams {
  std::vector<BcmrIteration> iterations;  // K
  nn::Linear consensus;                   // 2C' -> C'
};

// Registers "fusion.*".
FusionParams make_fusion_params(nn::ParamStore& store, const ModelConfig& config, Rng& rng);

enum class BcmrDirection { visual, instruction };

struct BcmrCall {
  std::size_t iteration = 0;
  BcmrDirection direction = BcmrDirection::visual;
  Var query;
  Var context;
};

// Substitutes the attention output (before the residual add). Empty runs the
// real sublayer.
struct BcmrHooks {
  std::function<Var(const BcmrCall&)> attention;
};

// For k = 1..K: E_v += Attn_v(E_v, E_i); then E_i += Attn_i(E_i, E_v) using
// the E_v just updated. Throws ShapeMismatch.
std::pair<Var, Var> bcmr_refine(const Var& e_v0, const Var& e_i0, const FusionParams& params,
                                const BcmrHooks& hooks = {});

// Z = Proj([E_v ; E_i]) channel-wise. Throws ShapeMismatch.
Var consensus(const Var& e_v, const Var& e_i, const FusionParams& params);

// Residual block x + conv2(relu(conv1(x))) with 3x3 convolutions.
struct ResidualBlock {
  nn::Conv2d conv1, conv2;
  Var operator()(const Var& x, std::size_t h, std::size_t w) const;
};

struct DecoderParams {
  std::array<nn::Linear, backbone::kLevels> lateral;  // C -> dec, finest first
  nn::Conv2d smooth;                                   // 3x3 on the finest FPN map
  nn::Linear fuse;                                     // [FPN ; Z] (dec + C') -> dec
  ResidualBlock fusion_block;                          // yields Z-hat
  ResidualBlock terminal_block;
  nn::Linear mask_head;                                // dec -> 1
};

// Registers "decoder.*".
DecoderParams make_decoder_params(nn::ParamStore& store, const ModelConfig& config, Rng& rng);

struct PyramidSizes {
  std::array<backbone::PatchGrid, backbone::kLevels> levels;  // finest first
};

// (H_p, W_p), (ceil(H_p/2), ceil(W_p/2)), (ceil(H_p/4), ceil(W_p/4)).
PyramidSizes pyramid_sizes(const backbone::PatchGrid& grid);

// FPN over the refined levels, bilinear lift of FPN and Z to out_h x out_w,
// fusion block, terminal block and mask head. Returns [out_h*out_w x 1]
// logits in raster order. The 1x1 fusion projection runs before the
// bilinear lift; both are linear per pixel so the order does not matter.
Var decode(const diff::LevelTriple& refined, const Var& z, const backbone::PatchGrid& grid,
           const DecoderParams& params, std::size_t out_h, std::size_t out_w);

}  // namespace sigma::fusion
