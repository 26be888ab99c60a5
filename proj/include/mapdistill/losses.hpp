#pragma once

#include "mapdistill/pipeline.hpp"

namespace mapdistill {

// Loss weights and ablation switches. A switched-off loss contributes zero
// regardless of its lambda.
struct DistillWeights {
  double lambda1 = 0.3;  // relation
  double lambda2 = 0.6;  // feature
  double lambda3 = 0.9;  // head
  bool use_relation = true;
  bool use_feature = true;
  bool use_head = true;
  // Relation variant switch: false swaps in the uni-modal (a,a)/(b,b) pairs.
  bool cross_modal_relation = true;

  void validate() const;
  double eff_lambda1() const { return use_relation ? lambda1 : 0.0; }
  double eff_lambda2() const { return use_feature ? lambda2 : 0.0; }
  double eff_lambda3() const { return use_head ? lambda3 : 0.0; }
};

struct MapLossWeights {
  double w_cls = 1.0;
  double w_point = 1.0;
  double w_dir = 1.0;
};

// Weight of the class-probability term in the bipartite matching cost
// (cost = point distance - kMatchClassWeight * p[class]). A strong class term
// locks each query to a class as soon as the classifier breaks symmetry,
// which stops the assignment from churning between near-identical queries
// early in training.
inline constexpr double kMatchClassWeight = 30.0;

struct FocalParams {
  double gamma = 2.0;
  double alpha = 0.25;
};

struct LossBreakdown {
  double l_map = 0.0;
  double l_relation = 0.0;
  double l_low = 0.0;
  double l_high = 0.0;
  double l_feature = 0.0;
  double l_cls = 0.0;
  double l_point = 0.0;
  double l_head = 0.0;
  double total = 0.0;
};

// softmax_rows(p_a p_b^T / sqrt(d_k)); rows sum to 1.
Tensor cross_modal_attention(Tape& tape, const Tensor& p_a, const Tensor& p_b, double d_k);

// KL(teacher || student) summed over the two attention directions, mean over
// rows per matrix. Teacher operands are detached internally.
Tensor relation_loss(Tape& tape, const Tensor& a_c2l_T, const Tensor& a_l2c_T,
                     const Tensor& a_c2l_S, const Tensor& a_l2c_S);

struct FeatureLossParts {
  Tensor l_low, l_high, l_feature;
};
FeatureLossParts feature_loss(Tape& tape, const Tensor& fused_T, const Tensor& fused_S,
                              const Tensor& high_T, const Tensor& high_S);

// Mean over rows of alpha * (1 - p_label)^gamma * (-ln p_label) where p is
// the row softmax of the logits.
Tensor focal_loss(Tape& tape, const Tensor& logits, const std::vector<Index>& labels,
                  const FocalParams& fp);

// Optimal student-query -> teacher-query permutation minimizing
// mean-Manhattan point cost plus negative student probability of the
// teacher's argmax class. Value-level only (no gradients).
std::vector<Index> match_predictions(const Tensor& cls_T, const Tensor& point_T,
                                     const Tensor& cls_S, const Tensor& point_S);

struct HeadLossParts {
  Tensor l_cls, l_point, l_head;
};
HeadLossParts head_loss(Tape& tape, const Tensor& cls_T, const Tensor& point_T,
                        const Tensor& cls_S, const Tensor& point_S,
                        const std::vector<Index>& student_to_teacher, const FocalParams& fp);

// Discrete choices made by map_loss: per-query matched GT index (-1 for
// no-object) and per-query traversal direction. The loss is smooth only for a
// fixed plan; finite-difference checks freeze it via plan_in.
struct MapMatchPlan {
  std::vector<Index> query_to_gt;
  std::vector<char> use_reverse;
};

// Base map loss against ground truth: optimal query-to-element assignment
// with a no-object class for unmatched queries, direction-min Manhattan point
// loss, and (1 - cosine) edge direction loss. plan_out reports the matching;
// plan_in reuses one instead of recomputing it.
Tensor map_loss(Tape& tape, const PipelineConfig& cfg, const Tensor& cls_full, const Tensor& point,
                const MapSample& gt, const MapLossWeights& w, const FocalParams& fp,
                MapMatchPlan* plan_out = nullptr, const MapMatchPlan* plan_in = nullptr);

struct TotalMatchPlan {
  MapMatchPlan map_plan;
  std::vector<Index> head_match;  // student query -> teacher query
};

struct TotalLoss {
  Tensor total;
  LossBreakdown values;
};

// Weighted sum of the base map loss and the three distillation losses; the
// teacher side never receives gradients. plan_out/plan_in as in map_loss.
TotalLoss total_loss(Tape& tape, const PipelineConfig& cfg, const TeacherOutputs& t,
                     const StudentOutputs& s, const MapSample& gt, const DistillWeights& dw,
                     const MapLossWeights& mw, const FocalParams& fp,
                     TotalMatchPlan* plan_out = nullptr, const TotalMatchPlan* plan_in = nullptr);

}  // namespace mapdistill
