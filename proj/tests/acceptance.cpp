// Acceptance gate: one pass/fail line per criterion, non-zero exit if any
// criterion fails. Each check is self-contained and uses independently coded
// oracles (factorial assignment search, brute-force PR curves, central finite
// differences) rather than the library's own fast paths.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include "mapdistill/assignment.hpp"
#include "mapdistill/audit.hpp"
#include "mapdistill/train.hpp"

using namespace mapdistill;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& what, bool pass, const std::string& detail) {
  std::printf("criterion %d [%s] %s — %s\n", criterion, pass ? "PASS" : "FAIL", what.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

MatXd random_mat(Rng& rng, Index r, Index c, double lo = -2.0, double hi = 2.0) {
  MatXd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Criterion 1: finite-difference audit of every differentiable operation.
// ---------------------------------------------------------------------------
void criterion1() {
  const double t_start = now_seconds();
  AuditConfig cfg;  // 100 instances per op, tolerance 1e-4
  std::vector<AuditResult> results;
  bool ok = true;
  std::string detail;
  try {
    results = gradient_audit(cfg);
  } catch (const std::exception& e) {
    report(1, "gradient audit", false, std::string("threw: ") + e.what());
    return;
  }
  double worst = 0.0;
  std::string worst_name = "-";
  int min_instances = 1 << 30;
  for (const auto& r : results) {
    min_instances = std::min(min_instances, r.instances);
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
    if (!r.pass) ok = false;
  }
  const double elapsed = now_seconds() - t_start;
  if (elapsed >= 60.0) ok = false;
  if (min_instances < 100) ok = false;
  detail = std::to_string(results.size()) + " ops, >=" + std::to_string(min_instances) +
           " instances each, worst rel err " + fmt(worst) + " (" + worst_name + "), " +
           fmt(elapsed) + " s (limit 60)";
  report(1, "gradient audit vs central finite differences (tol 1e-4)", ok, detail);
}

// ---------------------------------------------------------------------------
// Criterion 2: loss invariants.
// ---------------------------------------------------------------------------
void criterion2() {
  Rng rng(2026);
  bool ok = true;
  std::string why;

  // relation_loss(T,T) == 0 within 1e-9, and >= 0 over 1000 random pairs.
  double worst_self = 0.0, worst_neg = 0.0;
  for (int it = 0; it < 1000 && ok; ++it) {
    const Index n = 2 + static_cast<Index>(rng.next_u64() % 5);
    const Index d = 4 + static_cast<Index>(rng.next_u64() % 5);
    Tape tape;
    Tensor pa_t = tape.constant(random_mat(rng, n, d));
    Tensor pb_t = tape.constant(random_mat(rng, n, d));
    Tensor pa_s = tape.constant(random_mat(rng, n, d));
    Tensor pb_s = tape.constant(random_mat(rng, n, d));
    Tensor a_t = cross_modal_attention(tape, pa_t, pb_t, static_cast<double>(d));
    Tensor b_t = cross_modal_attention(tape, pb_t, pa_t, static_cast<double>(d));
    Tensor a_s = cross_modal_attention(tape, pa_s, pb_s, static_cast<double>(d));
    Tensor b_s = cross_modal_attention(tape, pb_s, pa_s, static_cast<double>(d));
    const double self_v = std::abs(relation_loss(tape, a_t, b_t, a_t, b_t).scalar());
    const double cross_v = relation_loss(tape, a_t, b_t, a_s, b_s).scalar();
    worst_self = std::max(worst_self, self_v);
    worst_neg = std::min(worst_neg, cross_v);
    if (self_v > 1e-9) { ok = false; why = "relation(T,T) = " + fmt(self_v); }
    if (cross_v < 0.0) { ok = false; why = "relation < 0: " + fmt(cross_v); }
  }

  // feature loss zero on identical inputs.
  if (ok) {
    Tape tape;
    Tensor f = tape.constant(random_mat(rng, 16, 8));
    Tensor h = tape.constant(random_mat(rng, 16, 8));
    const double v = feature_loss(tape, f, f, h, h).l_feature.scalar();
    if (v != 0.0) { ok = false; why = "feature_loss(identical) = " + fmt(v); }
  }

  // point loss zero on identical inputs.
  if (ok) {
    Tape tape;
    Tensor cls = tape.constant(random_mat(rng, 5, 3));
    Tensor pts = tape.constant(random_mat(rng, 5, 8));
    std::vector<Index> ident{0, 1, 2, 3, 4};
    const double v = head_loss(tape, cls, pts, cls, pts, ident, FocalParams{}).l_point.scalar();
    if (v != 0.0) { ok = false; why = "point loss(identical) = " + fmt(v); }
  }

  // LossBreakdown identity to 1e-12 and lambda=0 collapse, on real forwards.
  TrainConfig tc;
  tc.Q = 6;
  tc.K_pts = 8;
  tc.C = 8;
  tc.hidden_teacher = tc.hidden_student = 8;
  tc.max_per_class = 2;
  const PipelineConfig pc = tc.pipeline();
  Rng ir(7);
  ModelParams teacher = init_teacher_params(pc, ir);
  ModelParams student = init_student_params(pc, ir);
  double worst_identity = 0.0, worst_collapse = 0.0;
  for (int it = 0; it < 20 && ok; ++it) {
    Scene scene = synth_generate_scene(5000 + static_cast<std::uint64_t>(it), tc.scene());
    Tape tape;
    TeacherOutputs t = teacher_forward(tape, pc, teacher, scene.inputs.cam, scene.inputs.lidar, false);
    StudentOutputs s = student_forward(tape, pc, student, scene.inputs.cam, false);
    DistillWeights dw = tc.distill();
    TotalLoss tl = total_loss(tape, pc, t, s, scene.sample, dw, tc.map_weights(), tc.focal());
    const LossBreakdown& v = tl.values;
    const double recon = v.l_map + dw.eff_lambda1() * v.l_relation +
                         dw.eff_lambda2() * v.l_feature + dw.eff_lambda3() * v.l_head;
    worst_identity = std::max(worst_identity, std::abs(v.total - recon));
    if (std::abs(v.total - recon) > 1e-12) {
      ok = false;
      why = "breakdown identity off by " + fmt(std::abs(v.total - recon));
    }

    DistillWeights zw = dw;
    zw.lambda1 = zw.lambda2 = zw.lambda3 = 0.0;
    TotalLoss zl = total_loss(tape, pc, t, s, scene.sample, zw, tc.map_weights(), tc.focal());
    worst_collapse = std::max(worst_collapse, std::abs(zl.values.total - zl.values.l_map));
    if (zl.values.total != zl.values.l_map) {
      ok = false;
      why = "lambda=0 total != l_map, diff " + fmt(std::abs(zl.values.total - zl.values.l_map));
    }
  }

  const std::string detail =
      ok ? ("1000 pairs, worst self-KL " + fmt(worst_self) + ", min KL " + fmt(worst_neg) +
            ", worst breakdown residual " + fmt(worst_identity))
         : why;
  report(2, "loss invariants (self-KL, non-negativity, zero-on-identical, breakdown identity)", ok,
         detail);
}

// ---------------------------------------------------------------------------
// Criterion 3: attention rows sum to 1; N=1 is exactly 1.0.
// ---------------------------------------------------------------------------
void criterion3() {
  Rng rng(3);
  bool ok = true;
  double worst = 0.0;
  std::string why;
  for (int it = 0; it < 500 && ok; ++it) {
    const Index n = 1 + static_cast<Index>(rng.next_u64() % 7);
    const Index d = 2 + static_cast<Index>(rng.next_u64() % 8);
    Tape tape;
    Tensor pa = tape.constant(random_mat(rng, n, d, -5.0, 5.0));
    Tensor pb = tape.constant(random_mat(rng, n, d, -5.0, 5.0));
    Tensor a = cross_modal_attention(tape, pa, pb, static_cast<double>(d));
    const auto m = a.matrix();
    for (Index i = 0; i < n; ++i) {
      const double dev = std::abs(m.row(i).sum() - 1.0);
      worst = std::max(worst, dev);
      if (dev > 1e-9) { ok = false; why = "row sum off by " + fmt(dev); }
    }
    if (n == 1 && m(0, 0) != 1.0) {
      ok = false;
      why = "N=1 attention is " + fmt(m(0, 0)) + ", not exactly 1.0";
    }
  }
  report(3, "attention rows sum to 1 (tol 1e-9), N=1 exactly 1.0", ok,
         ok ? ("500 matrices, worst row-sum deviation " + fmt(worst)) : why);
}

// ---------------------------------------------------------------------------
// Criterion 4: assignment vs factorial brute force, exact cost equality.
// ---------------------------------------------------------------------------
double softmax_prob(const Eigen::RowVectorXd& logits, Index k) {
  Eigen::RowVectorXd p = logits;
  p = (p.array() - p.maxCoeff()).exp();
  return p[k] / p.sum();
}

double brute_force_min_cost(const MatXd& cost) {
  const Index n = cost.rows();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Index i = 0; i < n; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

void criterion4() {
  const double t_start = now_seconds();
  Rng rng(4);
  bool ok = true;
  std::string why;
  int done_match = 0, done_map = 0;

  // match_predictions against exhaustive permutation search.
  for (int it = 0; it < 150 && ok; ++it) {
    const Index q = 2 + static_cast<Index>(rng.next_u64() % 5);  // 2..6
    const Index kpts = 3;
    Tape tape;
    Tensor ct = tape.constant(random_mat(rng, q, 3));
    Tensor pt = tape.constant(random_mat(rng, q, 2 * kpts, -5.0, 5.0));
    Tensor cs = tape.constant(random_mat(rng, q, 3));
    Tensor ps = tape.constant(random_mat(rng, q, 2 * kpts, -5.0, 5.0));
    const std::vector<Index> got = match_predictions(ct, pt, cs, ps);

    MatXd cost(q, q);
    const auto tc = ct.matrix(), sc = cs.matrix(), tp = pt.matrix(), sp = ps.matrix();
    for (Index i = 0; i < q; ++i)
      for (Index j = 0; j < q; ++j) {
        Index label = 0;
        tc.row(j).maxCoeff(&label);
        cost(i, j) = (sp.row(i) - tp.row(j)).cwiseAbs().sum() / static_cast<double>(kpts) -
                     kMatchClassWeight * softmax_prob(sc.row(i), label);
      }
    double got_cost = 0.0;
    std::vector<char> used(static_cast<std::size_t>(q), 0);
    for (Index i = 0; i < q; ++i) {
      const Index j = got[static_cast<std::size_t>(i)];
      if (j < 0 || j >= q || used[static_cast<std::size_t>(j)]) { ok = false; why = "invalid permutation"; break; }
      used[static_cast<std::size_t>(j)] = 1;
      got_cost += cost(i, j);
    }
    if (ok && got_cost != brute_force_min_cost(cost)) {
      ok = false;
      why = "match_predictions cost " + fmt(got_cost) + " != brute force";
    }
    ++done_match;
  }

  // map_loss matching plan against exhaustive search over padded assignments.
  TrainConfig tc_cfg;
  tc_cfg.Q = 5;
  tc_cfg.K_pts = 4;
  const PipelineConfig pc = tc_cfg.pipeline();
  for (int it = 0; it < 100 && ok; ++it) {
    SceneConfig sc_cfg;
    sc_cfg.max_per_class = 1;
    Scene scene = synth_generate_scene(9000 + static_cast<std::uint64_t>(it), sc_cfg);
    if (static_cast<Index>(scene.sample.ground_truth.size()) > pc.Q) continue;
    Tape tape;
    Tensor cls = tape.constant(random_mat(rng, pc.Q, 4));
    Tensor pts = tape.constant(random_mat(rng, pc.Q, 2 * pc.K_pts, -10.0, 10.0));
    MapMatchPlan plan;
    map_loss(tape, pc, cls, pts, scene.sample, MapLossWeights{}, FocalParams{}, &plan);

    const Index g = static_cast<Index>(scene.sample.ground_truth.size());
    MatXd cost = MatXd::Zero(pc.Q, pc.Q);
    const auto cv = cls.matrix(), pv = pts.matrix();
    for (Index i = 0; i < pc.Q; ++i)
      for (Index j = 0; j < g; ++j) {
        const auto& e = scene.sample.ground_truth[static_cast<std::size_t>(j)];
        Polyline fwd = resample_polyline(e.points, pc.K_pts);
        Eigen::RowVectorXd vf(2 * pc.K_pts), vr(2 * pc.K_pts);
        for (Index p = 0; p < pc.K_pts; ++p) {
          vf[2 * p] = fwd(p, 0);
          vf[2 * p + 1] = fwd(p, 1);
          vr[2 * p] = fwd(pc.K_pts - 1 - p, 0);
          vr[2 * p + 1] = fwd(pc.K_pts - 1 - p, 1);
        }
        const double cf = (pv.row(i) - vf).cwiseAbs().sum() / static_cast<double>(pc.K_pts);
        const double cr = (pv.row(i) - vr).cwiseAbs().sum() / static_cast<double>(pc.K_pts);
        cost(i, j) = std::min(cf, cr) -
                     kMatchClassWeight * softmax_prob(cv.row(i), static_cast<Index>(e.class_id));
      }
    double got_cost = 0.0;
    for (Index i = 0; i < pc.Q; ++i) {
      const Index j = plan.query_to_gt[static_cast<std::size_t>(i)];
      if (j >= 0) got_cost += cost(i, j);
    }
    if (got_cost != brute_force_min_cost(cost)) {
      ok = false;
      why = "map_loss matching cost " + fmt(got_cost) + " != brute force";
    }
    ++done_map;
  }

  const double elapsed = now_seconds() - t_start;
  if (elapsed >= 60.0) { ok = false; why = "runtime " + fmt(elapsed) + " s >= 60"; }
  if (done_match + done_map < 200) { ok = false; why = "only ran " + std::to_string(done_match + done_map) + " instances"; }
  report(4, "assignment vs factorial brute force (exact cost equality, Q <= 6)", ok,
         ok ? (std::to_string(done_match + done_map) + " instances, " + fmt(elapsed) + " s (limit 60)")
            : why);
}

// ---------------------------------------------------------------------------
// Criterion 5: evaluator vs independent brute-force PR construction.
// ---------------------------------------------------------------------------
double brute_force_ap(std::vector<ScoredLabel> labels, std::size_t num_gt) {
  if (num_gt == 0) return labels.empty() ? 1.0 : 0.0;
  std::stable_sort(labels.begin(), labels.end(),
                   [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].tp) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }
  for (std::size_t i = precision.size(); i-- > 1;)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_r = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_r) * precision[i];
    prev_r = recall[i];
  }
  return ap;
}

EvalReport oracle_mean_ap(const std::vector<PredictionSet>& preds,
                          const std::vector<MapSample>& gts, const EvalConfig& cfg) {
  EvalReport rep;
  rep.thresholds = cfg.thresholds;
  rep.ap_by_threshold.assign(cfg.thresholds.size(), {});
  for (int cls = 0; cls < kNumMapClasses; ++cls) {
    for (std::size_t ti = 0; ti < cfg.thresholds.size(); ++ti) {
      std::vector<ScoredLabel> pool;
      std::size_t num_gt = 0;
      for (const auto& gt : gts) {
        std::vector<const MapElement*> g_elems, p_elems;
        for (const auto& e : gt.ground_truth)
          if (static_cast<int>(e.class_id) == cls) g_elems.push_back(&e);
        for (const auto& ps : preds)
          if (ps.sample_id == gt.sample_id)
            for (const auto& e : ps.elements)
              if (static_cast<int>(e.class_id) == cls && *e.score >= cfg.score_floor)
                p_elems.push_back(&e);
        num_gt += g_elems.size();
        std::vector<double> scores;
        Eigen::MatrixXd dist(static_cast<Eigen::Index>(p_elems.size()),
                             static_cast<Eigen::Index>(g_elems.size()));
        for (std::size_t i = 0; i < p_elems.size(); ++i) {
          scores.push_back(*p_elems[i]->score);
          for (std::size_t j = 0; j < g_elems.size(); ++j)
            dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                chamfer_distance(p_elems[i]->points, g_elems[j]->points, cfg.resample_n);
        }
        const auto labels = match_at_threshold(scores, dist, cfg.thresholds[ti]);
        pool.insert(pool.end(), labels.begin(), labels.end());
      }
      rep.ap_by_threshold[ti][static_cast<std::size_t>(cls)] = brute_force_ap(pool, num_gt);
    }
    double sum = 0.0;
    for (std::size_t ti = 0; ti < cfg.thresholds.size(); ++ti)
      sum += rep.ap_by_threshold[ti][static_cast<std::size_t>(cls)];
    rep.class_ap[static_cast<std::size_t>(cls)] = sum / static_cast<double>(cfg.thresholds.size());
  }
  rep.map = (rep.class_ap[0] + rep.class_ap[1] + rep.class_ap[2]) / 3.0;
  return rep;
}

void criterion5() {
  Rng rng(5);
  bool ok = true;
  std::string why;

  SceneConfig sc;
  std::vector<MapSample> gts;
  std::vector<PredictionSet> noisy, perfect, empty;
  for (int i = 0; i < 20; ++i) {
    Scene scene = synth_generate_scene(7000 + static_cast<std::uint64_t>(i), sc);
    gts.push_back(scene.sample);
    PredictionSet pf, ny, em;
    pf.sample_id = ny.sample_id = em.sample_id = scene.sample.sample_id;
    for (const auto& e : scene.sample.ground_truth) {
      MapElement p = e;
      p.score = rng.uniform(0.5, 1.0);
      pf.elements.push_back(p);
      MapElement n = p;
      for (Eigen::Index r = 0; r < n.points.rows(); ++r) {
        n.points(r, 0) += rng.uniform(-1.0, 1.0);
        n.points(r, 1) += rng.uniform(-1.0, 1.0);
      }
      n.score = rng.uniform(0.0, 1.0);
      ny.elements.push_back(n);
      if (rng.uniform(0.0, 1.0) < 0.3) {  // distractor prediction
        MapElement d = n;
        d.score = rng.uniform(0.0, 1.0);
        ny.elements.push_back(d);
      }
    }
    perfect.push_back(pf);
    noisy.push_back(ny);
    empty.push_back(em);
  }

  EvalConfig ec;
  const EvalReport got = mean_ap(noisy, gts, ec);
  const EvalReport want = oracle_mean_ap(noisy, gts, ec);
  double worst = std::abs(got.map - want.map);
  for (std::size_t ti = 0; ti < ec.thresholds.size(); ++ti)
    for (int c = 0; c < kNumMapClasses; ++c)
      worst = std::max(worst, std::abs(got.ap_by_threshold[ti][static_cast<std::size_t>(c)] -
                                       want.ap_by_threshold[ti][static_cast<std::size_t>(c)]));
  if (worst > 1e-12) { ok = false; why = "mean_ap vs oracle differ by " + fmt(worst); }

  const double perfect_map = mean_ap(perfect, gts, ec).map;
  if (ok && perfect_map != 1.0) { ok = false; why = "perfect predictions mAP = " + fmt(perfect_map); }
  const double empty_map = mean_ap(empty, gts, ec).map;
  if (ok && empty_map != 0.0) { ok = false; why = "empty predictions mAP = " + fmt(empty_map); }

  report(5, "mean_ap vs brute-force PR on 20 scenes (tol 1e-12); perfect=1, empty=0", ok,
         ok ? ("worst |AP diff| " + fmt(worst) + ", perfect mAP 1.0, empty mAP 0.0") : why);
}

// ---------------------------------------------------------------------------
// Criteria 6 & 7: ablation ordering and teacher-advantage, seeds 0..4.
// ---------------------------------------------------------------------------
TrainConfig accept_train_config() {
  TrainConfig cfg;
  cfg.epochs = 260;
  cfg.batch = 8;
  cfg.lr0 = 4e-3;
  cfg.decay_factor = 1.0;  // constant learning rate
  cfg.train_scenes = 352;
  cfg.eval_scenes = 48;
  cfg.eval_every = 0;  // final eval only
  cfg.H = 4;
  cfg.W = 4;
  cfg.Q = 3;
  cfg.K_pts = 20;
  cfg.C = 16;
  cfg.hidden_teacher = 48;
  cfg.hidden_student = 48;
  cfg.max_per_class = 1;
  return cfg;
}

void criteria6and7() {
  const double t_start = now_seconds();
  const TrainConfig base = accept_train_config();
  const char* names[8] = {"baseline", "a", "b", "c", "d", "e", "f", "g"};
  double row_sum[8] = {0.0};
  double teacher_sum = 0.0;

  try {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      ModelParams teacher;
      train_teacher(cfg, teacher);
      teacher_sum += evaluate_model(cfg, teacher, true).map;
      const auto rows = ablation_suite(cfg, teacher, 4);
      for (int i = 0; i < 8; ++i) row_sum[i] += rows[static_cast<std::size_t>(i)].report.map;
    }
  } catch (const std::exception& e) {
    report(6, "ablation ordering over seeds 0..4", false, std::string("threw: ") + e.what());
    report(7, "teacher advantage >= 5 mAP points over undistilled student", false,
           std::string("threw: ") + e.what());
    return;
  }

  double mean[8];
  for (int i = 0; i < 8; ++i) mean[i] = row_sum[i] / 5.0;
  const double teacher_map = teacher_sum / 5.0;

  bool ok6 = mean[0] < mean[1] && mean[0] < mean[2] && mean[0] < mean[3];
  double best = mean[0];
  for (int i = 1; i < 8; ++i) best = std::max(best, mean[i]);
  if (mean[7] < best) ok6 = false;
  const double elapsed = now_seconds() - t_start;
  if (elapsed >= 1800.0) ok6 = false;

  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  for (int i = 0; i < 8; ++i) os << names[i] << "=" << mean[i] << (i + 1 < 8 ? " " : "");
  os << ", " << fmt(elapsed) << " s (limit 1800)";
  report(6, "ablation ordering: baseline < {a,b,c}, g is the maximum (mean over seeds 0..4)", ok6,
         os.str());

  const double gap = teacher_map - mean[0];
  const bool ok7 = gap >= 0.05;
  std::ostringstream o7;
  o7.precision(4);
  o7 << std::fixed << "teacher mAP " << teacher_map << ", undistilled student mAP " << mean[0]
     << ", gap " << gap << " (need >= 0.05)";
  report(7, "teacher advantage over undistilled student, mean over 5 seeds", ok7, o7.str());
}

// ---------------------------------------------------------------------------
// Criterion 8: byte-identical metrics CSVs for identical config+seed.
// ---------------------------------------------------------------------------
std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void criterion8() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 4;
  cfg.train_scenes = 12;
  cfg.eval_scenes = 8;
  cfg.eval_every = 1;
  cfg.Q = 6;
  cfg.K_pts = 8;
  cfg.C = 8;
  cfg.hidden_teacher = cfg.hidden_student = 8;
  cfg.max_per_class = 2;

  bool ok = true;
  std::string why;
  try {
    ModelParams t1, t2, s1, s2;
    RunRecord rt1 = train_teacher(cfg, t1);
    RunRecord rt2 = train_teacher(cfg, t2);
    write_metrics_csv("accept_metrics_t1.csv", rt1);
    write_metrics_csv("accept_metrics_t2.csv", rt2);
    RunRecord rs1 = train_student(cfg, t1, s1);
    RunRecord rs2 = train_student(cfg, t2, s2);
    write_metrics_csv("accept_metrics_s1.csv", rs1);
    write_metrics_csv("accept_metrics_s2.csv", rs2);
    if (slurp("accept_metrics_t1.csv") != slurp("accept_metrics_t2.csv")) {
      ok = false;
      why = "teacher metrics CSVs differ";
    }
    if (slurp("accept_metrics_s1.csv") != slurp("accept_metrics_s2.csv")) {
      ok = false;
      why = "student metrics CSVs differ";
    }
    for (const char* f : {"accept_metrics_t1.csv", "accept_metrics_t2.csv",
                          "accept_metrics_s1.csv", "accept_metrics_s2.csv"})
      std::remove(f);
  } catch (const std::exception& e) {
    ok = false;
    why = std::string("threw: ") + e.what();
  }
  report(8, "determinism: identical config+seed gives byte-identical metrics CSVs", ok,
         ok ? "teacher and student CSVs byte-identical across repeated runs" : why);
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criteria6and7();
  criterion8();
  if (g_failures == 0) {
    std::printf("acceptance: all 8 criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criterion(s) failed\n", g_failures);
  return 1;
}
