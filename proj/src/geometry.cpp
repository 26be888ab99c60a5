#include "mapdistill/geometry.hpp"

namespace mapdistill {

double polyline_length(const Polyline& p) {
  double len = 0.0;
  for (Eigen::Index i = 1; i < p.rows(); ++i) len += (p.row(i) - p.row(i - 1)).norm();
  return len;
}

Polyline resample_polyline(const Polyline& p, Eigen::Index n) {
  if (p.rows() < 2) throw GeometryError("resample_polyline: need at least 2 points");
  if (n < 2) throw GeometryError("resample_polyline: n must be >= 2");
  const double total = polyline_length(p);
  if (total <= 0.0) throw GeometryError("resample_polyline: zero-length polyline");

  Polyline out(n, 2);
  out.row(0) = p.row(0);
  out.row(n - 1) = p.row(p.rows() - 1);

  Eigen::Index seg = 0;
  double seg_start = 0.0;                               // arc length at p.row(seg)
  double seg_len = (p.row(1) - p.row(0)).norm();
  for (Eigen::Index i = 1; i < n - 1; ++i) {
    const double target = total * static_cast<double>(i) / static_cast<double>(n - 1);
    while (seg_start + seg_len < target && seg + 2 < p.rows()) {
      seg_start += seg_len;
      ++seg;
      seg_len = (p.row(seg + 1) - p.row(seg)).norm();
    }
    const double t = seg_len > 0.0 ? (target - seg_start) / seg_len : 0.0;
    out.row(i) = p.row(seg) + t * (p.row(seg + 1) - p.row(seg));
  }
  return out;
}

}  // namespace mapdistill
