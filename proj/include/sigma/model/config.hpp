#pragma once

#include <cstddef>
#include <cstdint>

#include "sigma/backbone/backbone.hpp"

namespace sigma {

// Architecture hyperparameters shared by every branch of the annotator.
struct ModelConfig {
  std::size_t side = 518;              // working image side
  backbone::BackboneSpec backbone;     // patch size and embedding width live here
  std::size_t diff_channels = 256;     // C, per-level difference width
  std::size_t evidence_channels = 256; // C', shared evidence width
  std::size_t heads = 8;
  std::size_t ff_multiplier = 4;
  std::size_t n_drb = 2;
  std::size_t bcmr_iterations = 2;     // K
  std::size_t decoder_channels = 32;
  std::uint64_t init_seed = 0;

  backbone::PatchGrid grid() const { return backbone::patch_grid(side, backbone.patch_size); }
  // Throws InvalidSpec.
  void validate() const;
};

}  // namespace sigma
