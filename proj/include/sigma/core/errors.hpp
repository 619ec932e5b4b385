#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sigma {

// Base for every error raised by the library. Subclasses name the failure
// so callers (and the CLI) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SIGMA_DEFINE_ERROR(Name)              \
  class Name : public Error {                 \
   public:                                    \
    explicit Name(const std::string& what)    \
        : Error(std::string(#Name ": ") + what) {} \
  }

SIGMA_DEFINE_ERROR(ShapeMismatch);
SIGMA_DEFINE_ERROR(MissingFile);
SIGMA_DEFINE_ERROR(ImageDimensionMismatch);
SIGMA_DEFINE_ERROR(NonBinaryInput);
SIGMA_DEFINE_ERROR(UnsupportedImageFormat);
SIGMA_DEFINE_ERROR(InvalidSpec);
SIGMA_DEFINE_ERROR(DecodeFailure);
SIGMA_DEFINE_ERROR(ProviderUnavailable);
SIGMA_DEFINE_ERROR(IndivisibleSide);
SIGMA_DEFINE_ERROR(ParserOutputInvalid);
SIGMA_DEFINE_ERROR(UnknownAction);
SIGMA_DEFINE_ERROR(GrounderUnavailable);
SIGMA_DEFINE_ERROR(CodecUnavailable);
SIGMA_DEFINE_ERROR(ConfigInvalid);
SIGMA_DEFINE_ERROR(DataEmpty);
SIGMA_DEFINE_ERROR(MissingGroundTruth);
SIGMA_DEFINE_ERROR(IoFailure);

#undef SIGMA_DEFINE_ERROR

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& what)
      : Error("MalformedRecord(line " + std::to_string(line) + "): " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace sigma
