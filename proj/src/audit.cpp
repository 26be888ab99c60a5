#include "mapdistill/audit.hpp"

#include <algorithm>
#include <numeric>

#include "mapdistill/grad_check.hpp"

namespace mapdistill {

namespace {

MatXd random_mat(Rng& rng, Index r, Index c, double lo, double hi) {
  MatXd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

VecXd flatten(const MatXd& m) {
  VecXd v(m.size());
  Eigen::Map<MatXd>(v.data(), m.rows(), m.cols()) = m;
  return v;
}

struct CheckInstance {
  ScalarFn fn;
  Shape shape;
  VecXd x0;
  Index max_coords = -1;  // subsample for expensive functions
};

// Runs `instances` independent check_gradient calls; each gets a fresh
// function and input from `make`.
template <typename Make>
AuditResult run_check(const std::string& name, const AuditConfig& cfg, Make make) {
  Rng rng(fnv1a(name, cfg.seed));
  AuditResult res;
  res.name = name;
  res.instances = cfg.instances;
  for (int i = 0; i < cfg.instances; ++i) {
    CheckInstance inst = make(rng);
    res.max_rel_error = std::max(
        res.max_rel_error,
        check_gradient(inst.fn, inst.shape, inst.x0, cfg.step, inst.max_coords, rng.next_u64()));
  }
  res.pass = res.max_rel_error <= cfg.tolerance;
  return res;
}

// f(x) = mean(op(x) .* C) for a random constant C; exercises op's backward.
// out_r/out_c give op's output shape when it differs from the input's.
template <typename Op>
CheckInstance probe_unary(Rng& rng, Index r, Index c, double lo, double hi, Op op, Index out_r = -1,
                          Index out_c = -1) {
  if (out_r < 0) out_r = r;
  if (out_c < 0) out_c = c;
  MatXd x0 = random_mat(rng, r, c, lo, hi);
  MatXd w = random_mat(rng, out_r, out_c, -1.0, 1.0);
  ScalarFn fn = [w, op](Tape& tape, const Tensor& x) {
    return mean(tape, hadamard(tape, op(tape, x), tape.constant(w)));
  };
  return {fn, {r, c}, flatten(x0)};
}

AuditResult audit_pipeline(const std::string& name, const AuditConfig& cfg, bool student) {
  TrainConfig tc;  // toy defaults
  const PipelineConfig pc = tc.pipeline();
  AuditResult res;
  res.name = name;
  res.instances = cfg.instances;
  Rng rng(fnv1a(name, cfg.seed));

  for (int inst = 0; inst < cfg.instances; ++inst) {
    const Scene scene = synth_generate_scene(7000 + static_cast<std::uint64_t>(inst), tc.scene());
    Rng init_t(rng.next_u64());
    Rng init_s(rng.next_u64());
    ModelParams teacher = init_teacher_params(pc, init_t);
    ModelParams params = student ? init_student_params(pc, init_s) : teacher;

    TotalMatchPlan total_plan;
    MapMatchPlan map_plan;
    bool have_plan = false;
    auto loss_of = [&](const ModelParams& p, BoundParams* bound) {
      Tape tape;
      if (student) {
        TeacherOutputs t_out =
            teacher_forward(tape, pc, teacher, scene.inputs.cam, scene.inputs.lidar, false);
        StudentOutputs s_out = student_forward(tape, pc, p, scene.inputs.cam, true, bound);
        TotalLoss tl = total_loss(tape, pc, t_out, s_out, scene.sample, tc.distill(),
                                  tc.map_weights(), tc.focal(), &total_plan,
                                  have_plan ? &total_plan : nullptr);
        if (bound) tape.backward(tl.total);
        return tl.total.scalar();
      }
      TeacherOutputs out =
          teacher_forward(tape, pc, p, scene.inputs.cam, scene.inputs.lidar, true, bound);
      Tensor l = map_loss(tape, pc, out.f_cls_full, out.f_point, scene.sample, tc.map_weights(),
                          tc.focal(), &map_plan, have_plan ? &map_plan : nullptr);
      if (bound) tape.backward(l);
      return l.scalar();
    };

    BoundParams bound;
    loss_of(params, &bound);
    have_plan = true;  // all finite-difference evals reuse the x0 matching

    for (Index k = 0; k < cfg.pipeline_coords; ++k) {
      // Random parameter coordinate.
      const std::size_t pi = static_cast<std::size_t>(rng.next_u64() % params.items.size());
      auto& [pname, pmat] = params.items[pi];
      const Index ci = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(pmat.size()));
      const double analytic = bound.at(pname).grad()[ci];

      const double orig = pmat.data()[ci];
      pmat.data()[ci] = orig + cfg.step;
      const double fp = loss_of(params, nullptr);
      pmat.data()[ci] = orig - cfg.step;
      const double fm = loss_of(params, nullptr);
      pmat.data()[ci] = orig;
      const double numeric = (fp - fm) / (2.0 * cfg.step);
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      res.max_rel_error = std::max(res.max_rel_error, err);
    }
  }
  res.pass = res.max_rel_error <= cfg.tolerance;
  return res;
}

}  // namespace

std::vector<AuditResult> gradient_audit(const AuditConfig& cfg) {
  std::vector<AuditResult> results;

  results.push_back(run_check("matmul", cfg, [](Rng& rng) {
    MatXd b = random_mat(rng, 4, 5, -1.0, 1.0);
    return probe_unary(
        rng, 3, 4, -2.0, 2.0,
        [b](Tape& t, const Tensor& x) { return matmul(t, x, t.constant(b)); }, 3, 5);
  }));
  results.push_back(run_check("transpose2d", cfg, [](Rng& rng) {
    MatXd w = random_mat(rng, 5, 3, -1.0, 1.0);
    MatXd x0 = random_mat(rng, 3, 5, -2.0, 2.0);
    ScalarFn fn = [w](Tape& t, const Tensor& x) {
      return mean(t, hadamard(t, transpose2d(t, x), t.constant(w)));
    };
    return CheckInstance{fn, {3, 5}, flatten(x0)};
  }));
  results.push_back(run_check("softmax_rows", cfg, [](Rng& rng) {
    MatXd c = random_mat(rng, 4, 6, 0.0, 1.0);
    MatXd x0 = random_mat(rng, 4, 6, -3.0, 3.0);
    ScalarFn fn = [c](Tape& t, const Tensor& x) {
      return mse(t, softmax_rows(t, x), t.constant(c));
    };
    return CheckInstance{fn, {4, 6}, flatten(x0)};
  }));
  results.push_back(run_check("tanh", cfg, [](Rng& rng) {
    return probe_unary(rng, 3, 4, -2.0, 2.0, [](Tape& t, const Tensor& x) { return tanh_op(t, x); });
  }));
  results.push_back(run_check("sigmoid", cfg, [](Rng& rng) {
    return probe_unary(rng, 3, 4, -3.0, 3.0, [](Tape& t, const Tensor& x) { return sigmoid(t, x); });
  }));
  results.push_back(run_check("log", cfg, [](Rng& rng) {
    return probe_unary(rng, 3, 4, 0.2, 4.0, [](Tape& t, const Tensor& x) { return log_op(t, x); });
  }));
  results.push_back(run_check("sqrt", cfg, [](Rng& rng) {
    return probe_unary(rng, 3, 4, 0.2, 4.0, [](Tape& t, const Tensor& x) { return sqrt_op(t, x); });
  }));
  results.push_back(run_check("pow_const", cfg, [](Rng& rng) {
    return probe_unary(rng, 3, 4, 0.2, 3.0,
                       [](Tape& t, const Tensor& x) { return pow_const(t, x, 1.7); });
  }));
  results.push_back(run_check("abs", cfg, [](Rng& rng) {
    return probe_unary(rng, 3, 4, 0.3, 2.5, [](Tape& t, const Tensor& x) {
      // Shifted away from the abs kink at 0 by sign-symmetric offsetting.
      return abs_op(t, add_scalar(t, x, -1.4));
    });
  }));

  constexpr Index N = 6, D = 10;
  const double dk = static_cast<double>(D);

  results.push_back(run_check("cross_modal_attention", cfg, [&](Rng& rng) {
    MatXd c = random_mat(rng, N, N, 0.0, 1.0);
    MatXd x0 = random_mat(rng, 2 * N, D, -1.0, 1.0);
    ScalarFn fn = [c, dk, N](Tape& t, const Tensor& x) {
      std::vector<Index> top(static_cast<std::size_t>(N)), bot(static_cast<std::size_t>(N));
      for (Index i = 0; i < N; ++i) {
        top[static_cast<std::size_t>(i)] = i;
        bot[static_cast<std::size_t>(i)] = N + i;
      }
      Tensor pa = select_rows(t, x, top);
      Tensor pb = select_rows(t, x, bot);
      return mse(t, cross_modal_attention(t, pa, pb, dk), t.constant(c));
    };
    return CheckInstance{fn, {2 * N, D}, flatten(x0)};
  }));

  results.push_back(run_check("relation_kl", cfg, [&](Rng& rng) {
    MatXd ta = random_mat(rng, N, D, -1.0, 1.0);
    MatXd tb = random_mat(rng, N, D, -1.0, 1.0);
    MatXd x0 = random_mat(rng, 2 * N, D, -1.0, 1.0);
    ScalarFn fn = [ta, tb, dk, N](Tape& t, const Tensor& x) {
      std::vector<Index> top(static_cast<std::size_t>(N)), bot(static_cast<std::size_t>(N));
      for (Index i = 0; i < N; ++i) {
        top[static_cast<std::size_t>(i)] = i;
        bot[static_cast<std::size_t>(i)] = N + i;
      }
      Tensor pa = select_rows(t, x, top);
      Tensor pb = select_rows(t, x, bot);
      Tensor a_t1 = cross_modal_attention(t, t.constant(ta), t.constant(tb), dk);
      Tensor a_t2 = cross_modal_attention(t, t.constant(tb), t.constant(ta), dk);
      Tensor a_s1 = cross_modal_attention(t, pa, pb, dk);
      Tensor a_s2 = cross_modal_attention(t, pb, pa, dk);
      return relation_loss(t, a_t1, a_t2, a_s1, a_s2);
    };
    return CheckInstance{fn, {2 * N, D}, flatten(x0)};
  }));

  results.push_back(run_check("feature_mse", cfg, [](Rng& rng) {
    MatXd fused_t = random_mat(rng, 8, 5, -1.0, 1.0);
    MatXd high_t = random_mat(rng, 8, 5, -1.0, 1.0);
    MatXd x0 = random_mat(rng, 16, 5, -1.0, 1.0);
    ScalarFn fn = [fused_t, high_t](Tape& t, const Tensor& x) {
      std::vector<Index> top(8), bot(8);
      for (Index i = 0; i < 8; ++i) {
        top[static_cast<std::size_t>(i)] = i;
        bot[static_cast<std::size_t>(i)] = 8 + i;
      }
      Tensor fused_s = select_rows(t, x, top);
      Tensor high_s = select_rows(t, x, bot);
      return feature_loss(t, t.constant(fused_t), fused_s, t.constant(high_t), high_s).l_feature;
    };
    return CheckInstance{fn, {16, 5}, flatten(x0)};
  }));

  results.push_back(run_check("focal", cfg, [](Rng& rng) {
    const Index q = 5, k = 4;
    std::vector<Index> labels;
    for (Index i = 0; i < q; ++i) labels.push_back(rng.uniform_int(0, static_cast<int>(k) - 1));
    MatXd x0 = random_mat(rng, q, k, -2.0, 2.0);
    ScalarFn fn = [labels](Tape& t, const Tensor& x) { return focal_loss(t, x, labels, {2.0, 0.25}); };
    return CheckInstance{fn, {q, k}, flatten(x0)};
  }));

  results.push_back(run_check("manhattan_point", cfg, [](Rng& rng) {
    const Index q = 4, twok = 12;
    MatXd tgt_cls = random_mat(rng, q, 3, -1.0, 1.0);
    MatXd tgt_pts = random_mat(rng, q, twok, -5.0, 5.0);
    MatXd s_cls = random_mat(rng, q, 3, -1.0, 1.0);
    MatXd x0 = random_mat(rng, q, twok, -5.0, 5.0);
    std::vector<Index> match(static_cast<std::size_t>(q));
    std::iota(match.begin(), match.end(), Index{0});
    ScalarFn fn = [tgt_cls, tgt_pts, s_cls, match](Tape& t, const Tensor& x) {
      return head_loss(t, t.constant(tgt_cls), t.constant(tgt_pts), t.constant(s_cls), x, match,
                       {2.0, 0.25})
          .l_point;
    };
    return CheckInstance{fn, {q, twok}, flatten(x0)};
  }));

  results.push_back(run_check("map_loss", cfg, [](Rng& rng) {
    TrainConfig tc;
    SceneConfig sc = tc.scene();
    sc.max_per_class = 2;
    const Scene scene = synth_generate_scene(rng.next_u64() % 100000, sc);
    PipelineConfig pc = tc.pipeline();
    const Index q = pc.Q, cols = 4 + 2 * pc.K_pts;
    MatXd x0(q, cols);
    x0.leftCols(4) = random_mat(rng, q, 4, -1.0, 1.0);
    x0.rightCols(2 * pc.K_pts) = random_mat(rng, q, 2 * pc.K_pts, -10.0, 10.0);
    MapSample gt = scene.sample;
    // The matching is a constant of the forward pass; freeze the plan found
    // at x0 so finite differences probe the smooth branch the analytic
    // gradient lives on.
    auto plan = std::make_shared<MapMatchPlan>();
    {
      Tape t;
      map_loss(t, pc, t.constant(x0.leftCols(4)), t.constant(x0.rightCols(2 * pc.K_pts)), gt,
               {1.0, 1.0, 1.0}, {2.0, 0.25}, plan.get());
    }
    ScalarFn fn = [gt, pc, cols, plan](Tape& t, const Tensor& x) {
      Tensor cls = slice_cols(t, x, 0, 4);
      Tensor pts = slice_cols(t, x, 4, cols - 4);
      return map_loss(t, pc, cls, pts, gt, {1.0, 1.0, 1.0}, {2.0, 0.25}, nullptr, plan.get());
    };
    return CheckInstance{fn, {q, cols}, flatten(x0), 16};
  }));

  results.push_back(audit_pipeline("pipeline_teacher", cfg, false));
  results.push_back(audit_pipeline("pipeline_student", cfg, true));

  return results;
}

}  // namespace mapdistill
