#pragma once

#include "mapdistill/train.hpp"

namespace mapdistill {

struct AuditResult {
  std::string name;
  int instances = 0;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct AuditConfig {
  int instances = 100;
  double tolerance = 1e-4;
  double step = 1e-5;
  std::uint64_t seed = 42;
  // Coordinates sampled per instance for the large whole-pipeline checks;
  // smaller checks are exhaustive.
  Index pipeline_coords = 8;
};

// Finite-difference audit of every differentiable operation: tensor
// primitives, attention, relation KL, feature MSE, focal, Manhattan point
// loss, map loss, and the full teacher/student pipelines.
std::vector<AuditResult> gradient_audit(const AuditConfig& cfg);

}  // namespace mapdistill
