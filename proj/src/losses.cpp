#include "mapdistill/losses.hpp"

#include <algorithm>

#include "mapdistill/assignment.hpp"

namespace mapdistill {

void DistillWeights::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
    throw ConfigError("distill weights: lambdas must be non-negative");
}

Tensor cross_modal_attention(Tape& tape, const Tensor& p_a, const Tensor& p_b, double d_k) {
  if (d_k <= 0.0) throw ConfigError("cross_modal_attention: d_k must be positive");
  if (p_a.rank() != 2 || p_b.rank() != 2 || p_a.shape() != p_b.shape())
    throw DimensionError("cross_modal_attention: patch sequences must share shape, got " +
                         shape_str(p_a.shape()) + " vs " + shape_str(p_b.shape()));
  Tensor scores = scale(tape, matmul(tape, p_a, transpose2d(tape, p_b)), 1.0 / std::sqrt(d_k));
  return softmax_rows(tape, scores);
}

namespace {

// Mean over rows of sum_j T_ij ln(T_ij / S_ij), teacher treated as constant.
Tensor kl_teacher_student(Tape& tape, const Tensor& att_T, const Tensor& att_S) {
  if (att_T.shape() != att_S.shape())
    throw DimensionError("relation_loss: attention shape mismatch");
  if ((att_S.value().array() <= 0.0).any())
    throw NumericError("relation_loss: student attention has non-positive entries");
  Tensor t = tape.detach(att_T);
  Tensor log_ratio = sub(tape, log_op(tape, t), log_op(tape, att_S));
  return scale(tape, sum(tape, hadamard(tape, t, log_ratio)), 1.0 / static_cast<double>(att_T.rows()));
}

}  // namespace

Tensor relation_loss(Tape& tape, const Tensor& a_c2l_T, const Tensor& a_l2c_T,
                     const Tensor& a_c2l_S, const Tensor& a_l2c_S) {
  return add(tape, kl_teacher_student(tape, a_c2l_T, a_c2l_S),
             kl_teacher_student(tape, a_l2c_T, a_l2c_S));
}

FeatureLossParts feature_loss(Tape& tape, const Tensor& fused_T, const Tensor& fused_S,
                              const Tensor& high_T, const Tensor& high_S) {
  FeatureLossParts p;
  p.l_low = mse(tape, tape.detach(fused_T), fused_S);
  p.l_high = mse(tape, tape.detach(high_T), high_S);
  p.l_feature = add(tape, p.l_low, p.l_high);
  return p;
}

Tensor focal_loss(Tape& tape, const Tensor& logits, const std::vector<Index>& labels,
                  const FocalParams& fp) {
  if (logits.rank() != 2 || static_cast<Index>(labels.size()) != logits.rows())
    throw DimensionError("focal_loss: one label per logits row required");
  const Index k = logits.cols();
  Tensor probs = softmax_rows(tape, logits);
  std::vector<Index> flat;
  flat.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw DimensionError("focal_loss: label out of range");
    flat.push_back(static_cast<Index>(i) * k + labels[i]);
  }
  Tensor p_label = gather(tape, probs, flat, {logits.rows(), 1});
  Tensor one_minus = add_scalar(tape, scale(tape, p_label, -1.0), 1.0);
  Tensor modulator = pow_const(tape, one_minus, fp.gamma);
  Tensor nll = scale(tape, log_op(tape, p_label), -1.0);
  return scale(tape, mean(tape, hadamard(tape, modulator, nll)), fp.alpha);
}

namespace {

Index argmax_row(Eigen::Map<const MatXd> m, Index row) {
  Index best = 0;
  for (Index j = 1; j < m.cols(); ++j)
    if (m(row, j) > m(row, best)) best = j;
  return best;
}

Eigen::RowVectorXd softmax_row_values(Eigen::Map<const MatXd> m, Index row) {
  Eigen::RowVectorXd p = m.row(row);
  p = (p.array() - p.maxCoeff()).exp();
  p /= p.sum();
  return p;
}

// Mean over points of |dx| + |dy| between two interleaved (x,y) rows.
double mean_manhattan(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  return (a - b).cwiseAbs().sum() / (static_cast<double>(a.size()) / 2.0);
}

}  // namespace

std::vector<Index> match_predictions(const Tensor& cls_T, const Tensor& point_T,
                                     const Tensor& cls_S, const Tensor& point_S) {
  if (cls_T.rows() != cls_S.rows() || point_T.shape() != point_S.shape())
    throw DimensionError("match_predictions: teacher/student query sets must align");
  const Index q = cls_T.rows();
  const auto tc = cls_T.matrix();
  const auto sc = cls_S.matrix();
  const auto tp = point_T.matrix();
  const auto sp = point_S.matrix();

  MatXd cost(q, q);
  for (Index i = 0; i < q; ++i) {
    const Eigen::RowVectorXd p_s = softmax_row_values(sc, i);
    for (Index j = 0; j < q; ++j) {
      const Index label = argmax_row(tc, j);
      cost(i, j) = mean_manhattan(sp.row(i), tp.row(j)) - kMatchClassWeight * p_s[label];
    }
  }
  return solve_assignment(cost);
}

HeadLossParts head_loss(Tape& tape, const Tensor& cls_T, const Tensor& point_T,
                        const Tensor& cls_S, const Tensor& point_S,
                        const std::vector<Index>& student_to_teacher, const FocalParams& fp) {
  const Index q = cls_S.rows();
  if (static_cast<Index>(student_to_teacher.size()) != q)
    throw DimensionError("head_loss: assignment size mismatch");

  const auto tc = cls_T.matrix();
  std::vector<Index> labels(static_cast<std::size_t>(q));
  for (Index i = 0; i < q; ++i) labels[static_cast<std::size_t>(i)] = argmax_row(tc, student_to_teacher[static_cast<std::size_t>(i)]);

  HeadLossParts out;
  out.l_cls = focal_loss(tape, cls_S, labels, fp);

  Tensor target = select_rows(tape, tape.detach(point_T), student_to_teacher);
  Tensor diff = abs_op(tape, sub(tape, point_S, target));
  const double n_points = static_cast<double>(point_S.size()) / 2.0;
  out.l_point = scale(tape, sum(tape, diff), 1.0 / n_points);
  out.l_head = add(tape, out.l_cls, out.l_point);
  return out;
}

namespace {

// Flattened (x,y)-interleaved row for a resampled ground-truth polyline.
Eigen::RowVectorXd flatten_points(const Polyline& p) {
  Eigen::RowVectorXd v(2 * p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    v[2 * i] = p(i, 0);
    v[2 * i + 1] = p(i, 1);
  }
  return v;
}

// Per-element point loss under a fixed target: mean over points of Manhattan
// distance.
Tensor point_term(Tape& tape, const Tensor& pred_row, const Eigen::RowVectorXd& target) {
  Tensor t = tape.constant(target);
  Tensor diff = abs_op(tape, sub(tape, pred_row, t));
  return scale(tape, sum(tape, diff), 2.0 / static_cast<double>(target.size()));
}

// Mean (1 - cosine similarity) between consecutive-edge vectors of the
// prediction and the (constant) target polyline.
Tensor direction_term(Tape& tape, const Tensor& pred_row, const Polyline& target) {
  const Index k = target.rows();
  Tensor pts = reshape(tape, pred_row, {k, 2});
  std::vector<Index> tail(static_cast<std::size_t>(k - 1)), head(static_cast<std::size_t>(k - 1));
  for (Index i = 0; i < k - 1; ++i) {
    tail[static_cast<std::size_t>(i)] = i;
    head[static_cast<std::size_t>(i)] = i + 1;
  }
  Tensor edges = sub(tape, select_rows(tape, pts, head), select_rows(tape, pts, tail));

  MatXd gt_edges(k - 1, 2);
  for (Index i = 0; i < k - 1; ++i) gt_edges.row(i) = target.row(i + 1) - target.row(i);
  Tensor ge = tape.constant(gt_edges);
  Tensor ones2 = tape.constant(MatXd::Ones(2, 1));

  Tensor dot = matmul(tape, hadamard(tape, edges, ge), ones2);                          // [k-1 x 1]
  Tensor nu = sqrt_op(tape, add_scalar(tape, matmul(tape, hadamard(tape, edges, edges), ones2), 1e-12));
  MatXd nv(k - 1, 1);
  for (Index i = 0; i < k - 1; ++i) nv(i, 0) = std::sqrt(gt_edges.row(i).squaredNorm() + 1e-12);
  Tensor denom = hadamard(tape, nu, tape.constant(nv));
  Tensor cos_sim = hadamard(tape, dot, pow_const(tape, denom, -1.0));
  return add_scalar(tape, scale(tape, mean(tape, cos_sim), -1.0), 1.0);
}

}  // namespace

Tensor map_loss(Tape& tape, const PipelineConfig& cfg, const Tensor& cls_full, const Tensor& point,
                const MapSample& gt, const MapLossWeights& w, const FocalParams& fp,
                MapMatchPlan* plan_out, const MapMatchPlan* plan_in) {
  const Index q = cfg.Q;
  const Index g = static_cast<Index>(gt.ground_truth.size());
  if (g > q)
    throw DimensionError("map_loss: " + std::to_string(g) + " ground-truth elements exceed " +
                         std::to_string(q) + " queries");
  if (cls_full.rows() != q || cls_full.cols() != kNumMapClasses + 1 || point.rows() != q)
    throw DimensionError("map_loss: head output shapes do not match config");

  // Resampled targets, both traversal directions.
  std::vector<Polyline> targets_fwd, targets_rev;
  for (const auto& e : gt.ground_truth) {
    Polyline fwd = resample_polyline(e.points, cfg.K_pts);
    targets_fwd.push_back(fwd);
    targets_rev.push_back(fwd.colwise().reverse().eval());
  }

  const auto cls_v = cls_full.matrix();
  const auto pts_v = point.matrix();

  // Discrete matching: either reuse the caller's frozen plan or compute the
  // optimal assignment (direction-min point cost minus class probability).
  MapMatchPlan plan;
  if (plan_in) {
    if (static_cast<Index>(plan_in->query_to_gt.size()) != q ||
        static_cast<Index>(plan_in->use_reverse.size()) != q)
      throw DimensionError("map_loss: frozen plan size mismatch");
    plan = *plan_in;
  } else {
    MatXd cost = MatXd::Zero(q, q);  // columns >= g are "no-object" slots
    MatXd dir_choice = MatXd::Zero(q, std::max<Index>(g, 1));
    for (Index i = 0; i < q; ++i) {
      const Eigen::RowVectorXd p_i = softmax_row_values(cls_v, i);
      for (Index j = 0; j < g; ++j) {
        const double c_f = mean_manhattan(pts_v.row(i), flatten_points(targets_fwd[static_cast<std::size_t>(j)]));
        const double c_r = mean_manhattan(pts_v.row(i), flatten_points(targets_rev[static_cast<std::size_t>(j)]));
        dir_choice(i, j) = c_r < c_f ? 1.0 : 0.0;
        cost(i, j) = std::min(c_f, c_r) -
                     kMatchClassWeight * p_i[static_cast<int>(gt.ground_truth[static_cast<std::size_t>(j)].class_id)];
      }
    }
    const std::vector<Index> assign = solve_assignment(cost);
    plan.query_to_gt.assign(static_cast<std::size_t>(q), -1);
    plan.use_reverse.assign(static_cast<std::size_t>(q), 0);
    for (Index i = 0; i < q; ++i) {
      const Index j = assign[static_cast<std::size_t>(i)];
      if (j < g) {
        plan.query_to_gt[static_cast<std::size_t>(i)] = j;
        plan.use_reverse[static_cast<std::size_t>(i)] = dir_choice(i, j) > 0.5 ? 1 : 0;
      }
    }
  }
  if (plan_out) *plan_out = plan;

  // Classification over all queries: matched -> element class, else no-object.
  std::vector<Index> labels(static_cast<std::size_t>(q), kNumMapClasses);
  for (Index i = 0; i < q; ++i) {
    const Index j = plan.query_to_gt[static_cast<std::size_t>(i)];
    if (j >= 0) labels[static_cast<std::size_t>(i)] = static_cast<Index>(gt.ground_truth[static_cast<std::size_t>(j)].class_id);
  }
  Tensor l_cls = focal_loss(tape, cls_full, labels, fp);

  Tensor l_point = tape.scalar_constant(0.0);
  Tensor l_dir = tape.scalar_constant(0.0);
  for (Index i = 0; i < q; ++i) {
    const Index j = plan.query_to_gt[static_cast<std::size_t>(i)];
    if (j < 0) continue;
    const Polyline& target =
        plan.use_reverse[static_cast<std::size_t>(i)] ? targets_rev[static_cast<std::size_t>(j)] : targets_fwd[static_cast<std::size_t>(j)];
    Tensor row = select_rows(tape, point, {i});
    l_point = add(tape, l_point, point_term(tape, row, flatten_points(target)));
    l_dir = add(tape, l_dir, direction_term(tape, row, target));
  }
  const double inv_g = 1.0 / static_cast<double>(std::max<Index>(g, 1));
  l_point = scale(tape, l_point, inv_g);
  l_dir = scale(tape, l_dir, inv_g);

  return add(tape, add(tape, scale(tape, l_cls, w.w_cls), scale(tape, l_point, w.w_point)),
             scale(tape, l_dir, w.w_dir));
}

TotalLoss total_loss(Tape& tape, const PipelineConfig& cfg, const TeacherOutputs& t,
                     const StudentOutputs& s, const MapSample& gt, const DistillWeights& dw,
                     const MapLossWeights& mw, const FocalParams& fp, TotalMatchPlan* plan_out,
                     const TotalMatchPlan* plan_in) {
  dw.validate();
  const double dk = cfg.d_k();

  TotalMatchPlan plan;
  Tensor l_map = map_loss(tape, cfg, s.f_cls_full, s.f_point, gt, mw, fp, &plan.map_plan,
                          plan_in ? &plan_in->map_plan : nullptr);

  // Attention pairs: cross-modal by default, uni-modal when ablated.
  Tensor pt_c = patchify(tape, tape.detach(t.f_c_bev), cfg);
  Tensor pt_l = patchify(tape, tape.detach(t.f_l_bev), cfg);
  Tensor ps_1 = patchify(tape, s.f_sub1, cfg);
  Tensor ps_2 = patchify(tape, s.f_sub2, cfg);
  Tensor l_rel;
  if (dw.cross_modal_relation) {
    Tensor a_c2l_T = cross_modal_attention(tape, pt_c, pt_l, dk);
    Tensor a_l2c_T = cross_modal_attention(tape, pt_l, pt_c, dk);
    Tensor a_c2l_S = cross_modal_attention(tape, ps_1, ps_2, dk);
    Tensor a_l2c_S = cross_modal_attention(tape, ps_2, ps_1, dk);
    l_rel = relation_loss(tape, a_c2l_T, a_l2c_T, a_c2l_S, a_l2c_S);
  } else {
    Tensor a_cc_T = cross_modal_attention(tape, pt_c, pt_c, dk);
    Tensor a_ll_T = cross_modal_attention(tape, pt_l, pt_l, dk);
    Tensor a_cc_S = cross_modal_attention(tape, ps_1, ps_1, dk);
    Tensor a_ll_S = cross_modal_attention(tape, ps_2, ps_2, dk);
    l_rel = relation_loss(tape, a_cc_T, a_ll_T, a_cc_S, a_ll_S);
  }

  FeatureLossParts feat = feature_loss(tape, t.f_fused, s.f_fused, t.f_high, s.f_high);

  plan.head_match =
      plan_in ? plan_in->head_match : match_predictions(t.f_cls, t.f_point, s.f_cls, s.f_point);
  HeadLossParts head = head_loss(tape, t.f_cls, t.f_point, s.f_cls, s.f_point, plan.head_match, fp);
  if (plan_out) *plan_out = plan;

  const double w1 = dw.eff_lambda1(), w2 = dw.eff_lambda2(), w3 = dw.eff_lambda3();
  Tensor total = add(tape, l_map,
                     add(tape, scale(tape, l_rel, w1),
                         add(tape, scale(tape, feat.l_feature, w2), scale(tape, head.l_head, w3))));

  TotalLoss out;
  out.total = total;
  out.values.l_map = l_map.scalar();
  out.values.l_relation = l_rel.scalar();
  out.values.l_low = feat.l_low.scalar();
  out.values.l_high = feat.l_high.scalar();
  out.values.l_feature = feat.l_feature.scalar();
  out.values.l_cls = head.l_cls.scalar();
  out.values.l_point = head.l_point.scalar();
  out.values.l_head = head.l_head.scalar();
  out.values.total = total.scalar();
  return out;
}

}  // namespace mapdistill
