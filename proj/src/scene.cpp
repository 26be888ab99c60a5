#include "mapdistill/scene.hpp"

#include <algorithm>

namespace mapdistill {

namespace {

constexpr double kMargin = 0.5;

double clampx(double v) { return std::clamp(v, -kRangeX + kMargin, kRangeX - kMargin); }
double clampy(double v) { return std::clamp(v, -kRangeY + kMargin, kRangeY - kMargin); }

Polyline make_crossing(Rng& rng) {
  const double cx = rng.uniform(-10.0, 10.0);
  const double cy = rng.uniform(-24.0, 24.0);
  const double w = rng.uniform(1.5, 4.0);
  const double h = rng.uniform(2.0, 5.0);
  const double th = rng.uniform(-0.3, 0.3);
  const double c = std::cos(th), s = std::sin(th);
  Polyline p(5, 2);
  const double corners[4][2] = {{-w, -h}, {w, -h}, {w, h}, {-w, h}};
  for (int i = 0; i < 4; ++i) {
    p(i, 0) = clampx(cx + c * corners[i][0] - s * corners[i][1]);
    p(i, 1) = clampy(cy + s * corners[i][0] + c * corners[i][1]);
  }
  p.row(4) = p.row(0);  // closed boundary traversed once
  return p;
}

// Smooth polyline: fixed step length with a slowly drifting heading.
Polyline make_curve(Rng& rng, int npts, double len_lo, double len_hi, double drift) {
  const double len = rng.uniform(len_lo, len_hi);
  const double step = len / (npts - 1);
  // Sample a start pose whose straight-line extent stays inside the range so
  // the walk below rarely needs the wall reflection; a reflected element is a
  // sharp V that no longer resembles a lane-like curve.
  double x = 0.0, y = 0.0, th = 0.0;
  for (int tries = 0;; ++tries) {
    x = rng.uniform(-12.0, 12.0);
    y = rng.uniform(-26.0, 26.0);
    th = rng.uniform(0.0, 6.283185307179586);
    const double ex = x + len * std::cos(th);
    const double ey = y + len * std::sin(th);
    if ((std::abs(ex) <= kRangeX - 1.5 && std::abs(ey) <= kRangeY - 1.5) || tries >= 64) break;
  }
  Polyline p(npts, 2);
  p(0, 0) = clampx(x);
  p(0, 1) = clampy(y);
  for (int i = 1; i < npts; ++i) {
    th += rng.uniform(-drift, drift);
    x += step * std::cos(th);
    y += step * std::sin(th);
    // Reflect the heading off the range walls instead of piling up points on
    // the clamp boundary.
    if (x < -kRangeX + 1.0 || x > kRangeX - 1.0) th = 3.141592653589793 - th;
    if (y < -kRangeY + 1.0 || y > kRangeY - 1.0) th = -th;
    p(i, 0) = clampx(x);
    p(i, 1) = clampy(y);
  }
  return p;
}

void splat(MatXd& raster, int channel, const Polyline& poly, Index H, Index W) {
  const Polyline dense = resample_polyline(poly, 64);
  for (Eigen::Index i = 0; i < dense.rows(); ++i) {
    const double fx = (dense(i, 0) + kRangeX) / (2.0 * kRangeX);
    const double fy = (dense(i, 1) + kRangeY) / (2.0 * kRangeY);
    const Index col = std::min(W - 1, static_cast<Index>(fx * static_cast<double>(W)));
    const Index row = std::min(H - 1, static_cast<Index>(fy * static_cast<double>(H)));
    raster(row * W + col, channel) += 0.25;
  }
}

// Fixed resolution of the fine raster used for the per-class pose features,
// decoupled from the (coarse) BEV grid so the feature quality is limited by
// sensor noise rather than by H x W quantization.
constexpr Index kMomentRes = 16;

// [HW x input_channels] sensor tensor from a coarse raster plus additive
// noise, with per-class pose statistics measured on the fine raster. A 3-sigma
// threshold suppresses the rectified-noise mass bias on empty fine cells.
MatXd build_input(const MatXd& raster, const MatXd& fine, Index H, Index W, double noise,
                  Rng& noise_rng) {
  const Index cells = H * W;
  MatXd x = MatXd::Zero(cells, SceneConfig::input_channels());
  MatXd noisy = raster;
  for (Index i = 0; i < cells; ++i)
    for (Index c = 0; c < 3; ++c) noisy(i, c) += noise * noise_rng.normal();

  x.leftCols(3) = noisy;
  x.col(3) = noisy.rowwise().sum();  // occupancy
  for (Index r = 0; r < H; ++r) {
    for (Index col = 0; col < W; ++col) {
      const Index i = r * W + col;
      x(i, 4) = (static_cast<double>(col) + 0.5) / static_cast<double>(W) * 2.0 - 1.0;
      x(i, 5) = (static_cast<double>(r) + 0.5) / static_cast<double>(H) * 2.0 - 1.0;
    }
  }

  const Index fine_cells = kMomentRes * kMomentRes;
  MatXd fine_noisy = fine;
  for (Index i = 0; i < fine_cells; ++i)
    for (Index c = 0; c < 3; ++c) {
      double v = fine_noisy(i, c) + noise * noise_rng.normal();
      fine_noisy(i, c) = v > 3.0 * noise ? v : 0.0;
    }
  // Meter coordinates of fine-cell centers. Moments must be taken in meters:
  // the x/y ranges differ, and an eigen-decomposition in normalized (aspect
  // -distorted) coordinates yields principal axes that are wrong in meters.
  const auto fine_px = [](Index i) {
    return ((static_cast<double>(i % kMomentRes) + 0.5) / static_cast<double>(kMomentRes) * 2.0 - 1.0) * kRangeX;
  };
  const auto fine_py = [](Index i) {
    return ((static_cast<double>(i / kMomentRes) + 0.5) / static_cast<double>(kMomentRes) * 2.0 - 1.0) * kRangeY;
  };

  for (Index c = 0; c < 3; ++c) {
    double mass = 0.0, mx = 0.0, my = 0.0;
    for (Index i = 0; i < fine_cells; ++i) {
      const double v = fine_noisy(i, c);
      mass += v;
      mx += v * fine_px(i);
      my += v * fine_py(i);
    }
    const double denom = std::max(mass, 1e-6);
    mx /= denom;
    my /= denom;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (Index i = 0; i < fine_cells; ++i) {
      const double v = fine_noisy(i, c);
      const double dx = fine_px(i) - mx;
      const double dy = fine_py(i) - my;
      sxx += v * dx * dx;
      syy += v * dy * dy;
      sxy += v * dx * dy;
    }
    sxx /= denom;
    syy /= denom;
    sxy /= denom;
    // Principal-axis decomposition of the per-class raster covariance: the
    // endpoint estimates m +- sqrt(3*lambda_max)*u and the minor half-axis
    // sqrt(3*lambda_min)*v hand the pooled head the element's pose directly
    // (a uniform segment of half-length L has variance L^2/3 along its axis).
    const double half_tr = 0.5 * (sxx + syy);
    const double half_df = 0.5 * (sxx - syy);
    const double root = std::sqrt(half_df * half_df + sxy * sxy);
    const double l_max = std::max(half_tr + root, 0.0);
    const double l_min = std::max(half_tr - root, 0.0);
    const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    const double ux = std::cos(theta), uy = std::sin(theta);
    const double a = std::sqrt(3.0 * l_max), b = std::sqrt(3.0 * l_min);
    // Meter-valued pose statistics, rescaled to O(1) per axis for the tanh
    // encoder while keeping each channel a fixed linear image of meters.
    const Index base = 6 + 12 * c;
    x.col(base + 0).setConstant(mass / 10.0);
    x.col(base + 1).setConstant(mx / kRangeX);
    x.col(base + 2).setConstant(my / kRangeY);
    x.col(base + 3).setConstant(sxx / (kRangeX * kRangeX) * 4.0);
    x.col(base + 4).setConstant(syy / (kRangeY * kRangeY) * 4.0);
    x.col(base + 5).setConstant(sxy / (kRangeX * kRangeY) * 4.0);
    x.col(base + 6).setConstant((mx - a * ux) / kRangeX);
    x.col(base + 7).setConstant((my - a * uy) / kRangeY);
    x.col(base + 8).setConstant((mx + a * ux) / kRangeX);
    x.col(base + 9).setConstant((my + a * uy) / kRangeY);
    x.col(base + 10).setConstant(-b * uy / kRangeX);
    x.col(base + 11).setConstant(b * ux / kRangeY);
  }
  return x;
}

}  // namespace

Scene synth_generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  Scene out;
  out.sample.sample_id = "scene-" + std::to_string(seed);
  out.sample.scene_seed = seed;

  Rng scene_rng(fnv1a("scene", fnv1a(&seed, sizeof(seed))));
  for (int cls = 0; cls < kNumMapClasses; ++cls) {
    const int count = scene_rng.uniform_int(cfg.min_per_class, cfg.max_per_class);
    for (int k = 0; k < count; ++k) {
      MapElement e;
      e.class_id = static_cast<MapClass>(cls);
      switch (static_cast<MapClass>(cls)) {
        case MapClass::kPedestrianCrossing:
          e.points = make_crossing(scene_rng);
          break;
        case MapClass::kLaneDivider:
          e.points = make_curve(scene_rng, 4, 8.0, 20.0, 0.04);
          break;
        case MapClass::kRoadBoundary:
          e.points = make_curve(scene_rng, 8, 15.0, 35.0, 0.08);
          break;
      }
      out.sample.ground_truth.push_back(std::move(e));
    }
  }

  MatXd raster = MatXd::Zero(cfg.H * cfg.W, 3);
  MatXd fine = MatXd::Zero(kMomentRes * kMomentRes, 3);
  for (const auto& e : out.sample.ground_truth) {
    splat(raster, static_cast<int>(e.class_id), e.points, cfg.H, cfg.W);
    splat(fine, static_cast<int>(e.class_id), e.points, kMomentRes, kMomentRes);
  }

  Rng cam_rng(fnv1a("cam", fnv1a(&seed, sizeof(seed))));
  Rng lidar_rng(fnv1a("lidar", fnv1a(&seed, sizeof(seed))));
  out.inputs.cam = build_input(raster, fine, cfg.H, cfg.W, cfg.cam_noise, cam_rng);
  out.inputs.lidar = build_input(raster, fine, cfg.H, cfg.W, cfg.lidar_noise, lidar_rng);
  return out;
}

std::vector<Scene> synth_generate_scenes(std::uint64_t seed0, int count, const SceneConfig& cfg) {
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) scenes.push_back(synth_generate_scene(seed0 + static_cast<std::uint64_t>(i), cfg));
  return scenes;
}

}  // namespace mapdistill
