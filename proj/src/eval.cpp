#include "mapdistill/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace mapdistill {

void EvalConfig::validate() const {
  if (thresholds.empty()) throw ConfigError("eval config: thresholds must be nonempty");
  for (double t : thresholds)
    if (t <= 0.0) throw ConfigError("eval config: thresholds must be strictly positive");
  if (resample_n < 2) throw ConfigError("eval config: resample_n must be >= 2");
}

double chamfer_distance(const Polyline& a, const Polyline& b, Eigen::Index resample_n) {
  const Polyline ra = resample_polyline(a, resample_n);
  const Polyline rb = resample_polyline(b, resample_n);
  double sum_ab = 0.0, sum_ba = 0.0;
  for (Eigen::Index i = 0; i < ra.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < rb.rows(); ++j)
      best = std::min(best, (ra.row(i) - rb.row(j)).squaredNorm());
    sum_ab += std::sqrt(best);
  }
  for (Eigen::Index j = 0; j < rb.rows(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < ra.rows(); ++i)
      best = std::min(best, (rb.row(j) - ra.row(i)).squaredNorm());
    sum_ba += std::sqrt(best);
  }
  const double n = static_cast<double>(resample_n);
  return 0.5 * (sum_ab / n + sum_ba / n);
}

std::vector<ScoredLabel> match_at_threshold(const std::vector<double>& scores,
                                            const Eigen::MatrixXd& chamfer, double tau) {
  const auto n_pred = static_cast<Eigen::Index>(scores.size());
  if (chamfer.rows() != n_pred)
    throw DimensionError("match_at_threshold: score/matrix size mismatch");

  std::vector<Eigen::Index> order(scores.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)]; });

  std::vector<bool> gt_used(static_cast<std::size_t>(chamfer.cols()), false);
  std::vector<ScoredLabel> out(scores.size());
  for (Eigen::Index i : order) {
    Eigen::Index best_gt = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < chamfer.cols(); ++j) {
      if (gt_used[static_cast<std::size_t>(j)]) continue;
      if (chamfer(i, j) < best_d) {
        best_d = chamfer(i, j);
        best_gt = j;
      }
    }
    const bool tp = best_gt >= 0 && best_d <= tau;
    if (tp) gt_used[static_cast<std::size_t>(best_gt)] = true;
    out[static_cast<std::size_t>(i)] = {scores[static_cast<std::size_t>(i)], tp};
  }
  return out;
}

double average_precision(std::vector<ScoredLabel> labels, std::size_t num_gt) {
  if (num_gt == 0) return labels.empty() ? 1.0 : 0.0;
  std::stable_sort(labels.begin(), labels.end(),
                   [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });

  const std::size_t n = labels.size();
  std::vector<double> precision(n), recall(n);
  double tp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i].tp) tp += 1.0;
    precision[i] = tp / static_cast<double>(i + 1);
    recall[i] = tp / static_cast<double>(num_gt);
  }
  // Monotone precision envelope from the right.
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

EvalReport mean_ap(const std::vector<PredictionSet>& preds, const std::vector<MapSample>& gts,
                   const EvalConfig& cfg) {
  cfg.validate();
  std::unordered_map<std::string, const PredictionSet*> by_id;
  for (const auto& p : preds) by_id[p.sample_id] = &p;

  const std::size_t n_tau = cfg.thresholds.size();
  // Global label pools: [class][threshold] -> scored labels across samples.
  std::vector<std::vector<std::vector<ScoredLabel>>> pools(
      kNumMapClasses, std::vector<std::vector<ScoredLabel>>(n_tau));
  std::array<std::size_t, kNumMapClasses> num_gt{};

  for (const auto& sample : gts) {
    const PredictionSet* ps = nullptr;
    if (auto it = by_id.find(sample.sample_id); it != by_id.end()) ps = it->second;

    for (int cls = 0; cls < kNumMapClasses; ++cls) {
      std::vector<const MapElement*> gt_elems;
      for (const auto& e : sample.ground_truth)
        if (static_cast<int>(e.class_id) == cls) gt_elems.push_back(&e);
      num_gt[static_cast<std::size_t>(cls)] += gt_elems.size();

      std::vector<const MapElement*> pred_elems;
      std::vector<double> scores;
      if (ps) {
        for (const auto& e : ps->elements) {
          if (static_cast<int>(e.class_id) != cls) continue;
          if (!e.score) throw ConfigError("mean_ap: prediction without score in " + ps->sample_id);
          if (*e.score < cfg.score_floor) continue;
          pred_elems.push_back(&e);
          scores.push_back(*e.score);
        }
      }
      if (pred_elems.empty()) continue;

      Eigen::MatrixXd chamfer(static_cast<Eigen::Index>(pred_elems.size()),
                              static_cast<Eigen::Index>(gt_elems.size()));
      for (std::size_t i = 0; i < pred_elems.size(); ++i)
        for (std::size_t j = 0; j < gt_elems.size(); ++j)
          chamfer(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
              chamfer_distance(pred_elems[i]->points, gt_elems[j]->points, cfg.resample_n);

      for (std::size_t t = 0; t < n_tau; ++t) {
        auto labels = match_at_threshold(scores, chamfer, cfg.thresholds[t]);
        auto& pool = pools[static_cast<std::size_t>(cls)][t];
        pool.insert(pool.end(), labels.begin(), labels.end());
      }
    }
  }

  EvalReport report;
  report.thresholds = cfg.thresholds;
  report.ap_by_threshold.resize(n_tau);
  for (int cls = 0; cls < kNumMapClasses; ++cls) {
    double acc = 0.0;
    for (std::size_t t = 0; t < n_tau; ++t) {
      const double ap = average_precision(pools[static_cast<std::size_t>(cls)][t], num_gt[static_cast<std::size_t>(cls)]);
      report.ap_by_threshold[t][static_cast<std::size_t>(cls)] = ap;
      acc += ap;
    }
    report.class_ap[static_cast<std::size_t>(cls)] = acc / static_cast<double>(n_tau);
  }
  report.map = (report.class_ap[0] + report.class_ap[1] + report.class_ap[2]) / 3.0;
  return report;
}

namespace {
const char* kClassNames[kNumMapClasses] = {"pedestrian_crossing", "lane_divider", "road_boundary"};
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "class,tau,AP\n";
  for (int cls = 0; cls < kNumMapClasses; ++cls)
    for (std::size_t t = 0; t < report.thresholds.size(); ++t)
      os << kClassNames[cls] << "," << format_double(report.thresholds[t]) << ","
         << format_double(report.ap_by_threshold[t][static_cast<std::size_t>(cls)]) << "\n";
  for (int cls = 0; cls < kNumMapClasses; ++cls)
    os << kClassNames[cls] << ",mean," << format_double(report.class_ap[static_cast<std::size_t>(cls)]) << "\n";
  os << "all,mAP," << format_double(report.map) << "\n";
  if (!os) throw IoError("write failed: " + path);
}

std::string eval_summary_json(const EvalReport& report) {
  std::ostringstream os;
  os << "{\"AP_ped\":" << format_double(report.class_ap[0])
     << ",\"AP_div\":" << format_double(report.class_ap[1])
     << ",\"AP_bou\":" << format_double(report.class_ap[2])
     << ",\"mAP\":" << format_double(report.map) << "}";
  return os.str();
}

}  // namespace mapdistill
