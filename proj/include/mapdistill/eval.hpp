#pragma once

#include <array>
#include <map>

#include "mapdistill/map_types.hpp"

namespace mapdistill {

struct EvalConfig {
  std::vector<double> thresholds{0.5, 1.0, 1.5};  // Chamfer match thresholds, meters
  Eigen::Index resample_n = 100;                  // points per element for Chamfer
  double score_floor = 0.0;

  void validate() const;
};

struct EvalReport {
  // ap[class][threshold index], aligned with EvalConfig::thresholds.
  std::vector<std::array<double, kNumMapClasses>> ap_by_threshold;
  std::array<double, kNumMapClasses> class_ap{};  // mean over thresholds
  double map = 0.0;                               // mean over classes
  std::vector<double> thresholds;
};

// Symmetric mean nearest-point distance after resampling both polylines.
double chamfer_distance(const Polyline& a, const Polyline& b, Eigen::Index resample_n);

struct ScoredLabel {
  double score;
  bool tp;
};

// Greedy one-to-one matching in descending score order: a prediction is TP if
// its closest still-unmatched GT is within tau. chamfer(i,j) is the
// prediction-by-GT distance matrix; scores are per prediction.
std::vector<ScoredLabel> match_at_threshold(const std::vector<double>& scores,
                                            const Eigen::MatrixXd& chamfer, double tau);

// Area under the max-interpolated precision envelope. num_gt == 0 yields 1.0
// with no predictions and 0.0 otherwise.
double average_precision(std::vector<ScoredLabel> labels, std::size_t num_gt);

// Predictions are matched to ground truth by sample_id; missing samples count
// as zero predictions.
EvalReport mean_ap(const std::vector<PredictionSet>& preds, const std::vector<MapSample>& gts,
                   const EvalConfig& cfg);

void write_eval_csv(const std::string& path, const EvalReport& report);
std::string eval_summary_json(const EvalReport& report);

}  // namespace mapdistill
