#pragma once

#include <string>

#include "sigma/corpus/records.hpp"
#include "sigma/image/image.hpp"

namespace sigma {

// Anything that turns an (original, edited, instruction) triple into a mask
// at the images' own resolution.
class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual MaskResult annotate(const RgbImage& original, const RgbImage& edited,
                              const std::string& instruction) const = 0;
  virtual std::string name() const = 0;
};

}  // namespace sigma
