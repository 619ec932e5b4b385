#pragma once

#include <string>

namespace sigma::acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;  // measured values next to their thresholds
};

// Property and oracle suites.
Outcome metric_oracle();
Outcome otsu_oracle();
Outcome pixdiff_monotonicity();
Outcome fusion_rule_table();
Outcome shape_contract();
Outcome gradient_checks();
Outcome loss_composition();
Outcome ema_algebra();
Outcome parser_contract();

// Training experiments on synthetic pairs.
Outcome toy_overfit();
Outcome calibration_effect();
Outcome instruction_prior_effect();
Outcome robustness_direction();
Outcome determinism();

}  // namespace sigma::acceptance
