#include "sigma/fusion/fusion_decoder.hpp"

#include <string>

#include "sigma/core/errors.hpp"

namespace sigma::fusion {

FusionParams make_fusion_params(nn::ParamStore& store, const ModelConfig& config, Rng& rng) {
  const std::size_t c = config.evidence_channels;
  FusionParams p;
  for (std::size_t k = 0; k < config.bcmr_iterations; ++k) {
    const std::string base = "fusion.bcmr" + std::to_string(k);
    p.iterations.push_back({nn::make_attention(store, base + ".visual", c, config.heads, rng),
                            nn::make_attention(store, base + ".instruction", c, config.heads, rng)});
  }
  p.consensus = nn::make_linear(store, "fusion.consensus", 2 * c, c, rng);
  return p;
}

namespace {

void require_matching(const Var& a, const Var& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch(std::string(what) + ": " + a.value().shape_string() + " vs " +
                        b.value().shape_string());
}

}  // namespace

std::pair<Var, Var> bcmr_refine(const Var& e_v0, const Var& e_i0, const FusionParams& params,
                                const BcmrHooks& hooks) {
  require_matching(e_v0, e_i0, "bcmr_refine");
  Var e_v = e_v0, e_i = e_i0;
  for (std::size_t k = 0; k < params.iterations.size(); ++k) {
    const BcmrIteration& it = params.iterations[k];
    const BcmrCall v_call{k, BcmrDirection::visual, e_v, e_i};
    e_v = ag::add(e_v, hooks.attention ? hooks.attention(v_call) : it.visual_update(e_v, e_i));
    const BcmrCall i_call{k, BcmrDirection::instruction, e_i, e_v};
    e_i = ag::add(e_i, hooks.attention ? hooks.attention(i_call) : it.instruction_update(e_i, e_v));
  }
  return {e_v, e_i};
}

Var consensus(const Var& e_v, const Var& e_i, const FusionParams& params) {
  require_matching(e_v, e_i, "consensus");
  return params.consensus(ag::concat_cols({e_v, e_i}));
}

Var ResidualBlock::operator()(const Var& x, std::size_t h, std::size_t w) const {
  return ag::add(x, conv2(ag::relu(conv1(x, h, w)), h, w));
}

DecoderParams make_decoder_params(nn::ParamStore& store, const ModelConfig& config, Rng& rng) {
  const std::size_t c = config.diff_channels, dec = config.decoder_channels;
  DecoderParams p;
  for (std::size_t l = 0; l < backbone::kLevels; ++l)
    p.lateral[l] = nn::make_linear(store, "decoder.lateral.l" + std::to_string(l + 1), c, dec, rng);
  p.smooth = nn::make_conv2d(store, "decoder.smooth", dec, dec, 3, rng);
  p.fuse = nn::make_linear(store, "decoder.fuse", dec + config.evidence_channels, dec, rng);
  p.fusion_block = {nn::make_conv2d(store, "decoder.fusion_block.conv1", dec, dec, 3, rng),
                    nn::make_conv2d(store, "decoder.fusion_block.conv2", dec, dec, 3, rng)};
  p.terminal_block = {nn::make_conv2d(store, "decoder.terminal_block.conv1", dec, dec, 3, rng),
                      nn::make_conv2d(store, "decoder.terminal_block.conv2", dec, dec, 3, rng)};
  p.mask_head = nn::make_linear(store, "decoder.mask_head", dec, 1, rng);
  return p;
}

PyramidSizes pyramid_sizes(const backbone::PatchGrid& grid) {
  auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
  return {{grid, {ceil_div(grid.rows, 2), ceil_div(grid.cols, 2)}, {ceil_div(grid.rows, 4), ceil_div(grid.cols, 4)}}};
}

Var decode(const diff::LevelTriple& refined, const Var& z, const backbone::PatchGrid& grid,
           const DecoderParams& params, std::size_t out_h, std::size_t out_w) {
  for (const Var& level : refined)
    if (level.rows() != grid.tokens()) throw ShapeMismatch("refined level does not match the patch grid");
  if (z.rows() != grid.tokens()) throw ShapeMismatch("consensus map does not match the patch grid");
  if (out_h == 0 || out_w == 0) throw ShapeMismatch("decoder output size must be positive");

  const PyramidSizes sizes = pyramid_sizes(grid);
  std::array<Var, backbone::kLevels> lateral;
  for (std::size_t l = 0; l < backbone::kLevels; ++l) {
    Var x = refined[l];
    if (l > 0) {
      const auto pool = ag::Resampler::adaptive_avg_pool(grid.rows, grid.cols, sizes.levels[l].rows,
                                                         sizes.levels[l].cols);
      x = ag::resample(x, pool);
    }
    lateral[l] = params.lateral[l](x);
  }
  // Top-down: coarse maps are nearest-upsampled and added to the next finer lateral.
  Var top = lateral[2];
  for (std::size_t l = 2; l-- > 0;) {
    const auto& from = sizes.levels[l + 1];
    const auto& to = sizes.levels[l];
    top = ag::add(lateral[l], ag::resample(top, ag::Resampler::nearest(from.rows, from.cols, to.rows, to.cols)));
  }
  const Var fpn = params.smooth(top, grid.rows, grid.cols);

  const Var fused = params.fuse(ag::concat_cols({fpn, z}));
  const auto lift = ag::Resampler::bilinear(grid.rows, grid.cols, out_h, out_w);
  const Var z_hat = params.fusion_block(ag::resample(fused, lift), out_h, out_w);
  return params.mask_head(params.terminal_block(z_hat, out_h, out_w));
}

}  // namespace sigma::fusion
