#pragma once

#include "mapdistill/pipeline.hpp"

namespace mapdistill {

struct AdamWConfig {
  double lr = 4e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::vector<MatXd> m, v;  // aligned with ModelParams::items
  long step = 0;
};

// One decoupled-weight-decay Adam step with bias-corrected moments. Throws
// NumericError (before mutating anything) if any gradient is non-finite.
void adamw_step(ModelParams& params, const std::vector<MatXd>& grads, AdamWState& state,
                const AdamWConfig& cfg);

// Piecewise-constant step decay: lr0 multiplied by factor at each milestone.
double lr_schedule(int epoch, double lr0, const std::vector<int>& milestones, double factor);

}  // namespace mapdistill
