#include "sigma/corpus/records.hpp"

#include "sigma/core/errors.hpp"

namespace sigma {

void PerturbSpec::validate() const {
  switch (kind) {
    case PerturbKind::none:
      return;
    case PerturbKind::jpeg:
      if (jpeg_quality < 60 || jpeg_quality > 100)
        throw InvalidSpec("jpeg quality " + std::to_string(jpeg_quality) + " outside [60, 100]");
      return;
    case PerturbKind::awgn:
      if (!(awgn_variance >= 0.0)) throw InvalidSpec("awgn variance must be >= 0");
      return;
    case PerturbKind::gaussian_blur:
      if (blur_kernel < 1 || blur_kernel % 2 == 0)
        throw InvalidSpec("blur kernel must be an odd integer >= 1, got " +
                          std::to_string(blur_kernel));
      return;
  }
}

double PerturbSpec::parameter() const {
  switch (kind) {
    case PerturbKind::none: return 0.0;
    case PerturbKind::jpeg: return jpeg_quality;
    case PerturbKind::awgn: return awgn_variance;
    case PerturbKind::gaussian_blur: return blur_kernel;
  }
  return 0.0;
}

std::string to_string(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::none: return "none";
    case PerturbKind::jpeg: return "jpeg";
    case PerturbKind::awgn: return "awgn";
    case PerturbKind::gaussian_blur: return "gaussian_blur";
  }
  return "none";
}

PerturbKind perturb_kind_from_string(const std::string& s) {
  if (s == "none") return PerturbKind::none;
  if (s == "jpeg") return PerturbKind::jpeg;
  if (s == "awgn") return PerturbKind::awgn;
  if (s == "gaussian_blur" || s == "blur") return PerturbKind::gaussian_blur;
  throw InvalidSpec("unknown perturbation kind '" + s + "'");
}

MaskResult MaskResult::from_prob(RealMap prob, double threshold, std::string annotator) {
  MaskResult r;
  r.binary = ByteMap(prob.width(), prob.height());
  for (std::size_t i = 0; i < prob.size(); ++i) r.binary[i] = prob[i] > threshold ? 1 : 0;
  r.prob = std::move(prob);
  r.threshold = threshold;
  r.annotator = std::move(annotator);
  return r;
}

}  // namespace sigma
