#include "sigma/model/config.hpp"

#include "sigma/core/errors.hpp"

namespace sigma {

void ModelConfig::validate() const {
  backbone.validate(side);
  if (diff_channels == 0 || evidence_channels == 0 || decoder_channels == 0)
    throw InvalidSpec("channel widths must be positive");
  if (heads == 0 || diff_channels % heads != 0 || evidence_channels % heads != 0)
    throw InvalidSpec("head count must divide the attention widths");
  if (bcmr_iterations == 0) throw InvalidSpec("BCMR needs at least one iteration");
  if (ff_multiplier == 0) throw InvalidSpec("feed-forward multiplier must be positive");
}

}  // namespace sigma
