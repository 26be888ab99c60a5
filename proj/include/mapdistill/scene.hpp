#pragma once

#include "mapdistill/map_types.hpp"
#include "mapdistill/tensor.hpp"

namespace mapdistill {

// Synthetic stand-in for camera images and LiDAR sweeps. Both "sensors" see
// a rasterization of the same scene on the BEV grid; the camera raster is
// noisy, the LiDAR raster is (nearly) clean, so the LiDAR channel carries the
// cleaner geometric signal.
struct SceneConfig {
  Index H = 8;
  Index W = 8;
  int min_per_class = 1;
  int max_per_class = 4;
  double cam_noise = 0.5;
  double lidar_noise = 0.05;

  // Raster channels (3 classes) + occupancy + 2 positional + 12 per-class
  // pose channels (mass, mean, covariance, principal-axis endpoint
  // estimates, minor half-axis vector).
  static Index input_channels() { return 42; }
  static Index raster_channels() { return 4; }
};

struct SceneInputs {
  MatXd cam;    // [HW x input_channels]
  MatXd lidar;  // [HW x input_channels]
};

struct Scene {
  MapSample sample;
  SceneInputs inputs;
};

Scene synth_generate_scene(std::uint64_t seed, const SceneConfig& cfg);

// Deterministic batch of scenes with ids "scene-<seed0+i>".
std::vector<Scene> synth_generate_scenes(std::uint64_t seed0, int count, const SceneConfig& cfg);

}  // namespace mapdistill
