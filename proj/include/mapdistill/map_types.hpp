#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mapdistill/geometry.hpp"

namespace mapdistill {

enum class MapClass : int {
  kPedestrianCrossing = 0,
  kLaneDivider = 1,
  kRoadBoundary = 2,
};
inline constexpr int kNumMapClasses = 3;

// Perception range in ego-frame meters.
inline constexpr double kRangeX = 15.0;
inline constexpr double kRangeY = 30.0;

// One vectorized map element: a class plus an ordered polyline. Predictions
// carry a confidence score; ground truth does not.
struct MapElement {
  MapClass class_id = MapClass::kLaneDivider;
  Polyline points;
  std::optional<double> score;
};

struct MapSample {
  std::string sample_id;
  std::uint64_t scene_seed = 0;
  std::vector<MapElement> ground_truth;
};

struct PredictionSet {
  std::string sample_id;
  std::vector<MapElement> elements;  // all with scores
};

// Throws ConfigError naming the sample if invariants are violated
// (>=2 points, inside perception range, scores in [0,1]).
void validate_elements(const std::vector<MapElement>& elems, const std::string& sample_id,
                       bool require_scores);

// Line-delimited dataset file, one JSON object per line. The writer is
// canonical: fixed key order, doubles as %.17g, so save->load->save is
// byte-identical.
std::vector<MapSample> load_dataset(const std::string& path);
void save_dataset(const std::string& path, const std::vector<MapSample>& samples);

std::vector<PredictionSet> load_predictions(const std::string& path);
void save_predictions(const std::string& path, const std::vector<PredictionSet>& preds);

// %.17g formatting shared by dataset and CSV writers.
std::string format_double(double v);

}  // namespace mapdistill
