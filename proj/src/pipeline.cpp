#include "mapdistill/pipeline.hpp"

#include <algorithm>

namespace mapdistill {

Index PipelineConfig::patches() const { return (H / P) * (W / P); }

void PipelineConfig::validate() const {
  if (H <= 0 || W <= 0 || C <= 0 || P <= 0 || Q <= 0 || K_pts <= 0 || hidden_teacher <= 0 ||
      hidden_student <= 0 || input_channels <= 0)
    throw ConfigError("pipeline config: all dimensions must be positive");
  if (H % P != 0 || W % P != 0)
    throw ConfigError("pipeline config: patch size " + std::to_string(P) +
                      " must divide H=" + std::to_string(H) + " and W=" + std::to_string(W));
}

MatXd& ModelParams::at(const std::string& name) {
  for (auto& [k, v] : items)
    if (k == name) return v;
  throw ConfigError("unknown parameter: " + name);
}

const MatXd& ModelParams::at(const std::string& name) const {
  for (const auto& [k, v] : items)
    if (k == name) return v;
  throw ConfigError("unknown parameter: " + name);
}

bool ModelParams::has(const std::string& name) const {
  for (const auto& [k, v] : items)
    if (k == name) return true;
  return false;
}

Index ModelParams::total_size() const {
  Index n = 0;
  for (const auto& [k, v] : items) n += v.size();
  return n;
}

std::uint64_t ModelParams::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [k, v] : items) {
    h = fnv1a(k, h);
    h = fnv1a(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double), h);
  }
  return h;
}

const Tensor& BoundParams::at(const std::string& name) const {
  for (const auto& [k, v] : leaves)
    if (k == name) return v;
  throw ConfigError("unbound parameter: " + name);
}

namespace {

MatXd init_matrix(Rng& rng, Index rows, Index cols, Index fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  MatXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

void add_param(ModelParams& p, Rng& rng, const std::string& name, Index rows, Index cols,
               Index fan_in) {
  p.items.emplace_back(name, init_matrix(rng, rows, cols, fan_in));
}

// MapEnc + MapHead parameters, shared structure between teacher and student.
void add_enc_head_params(ModelParams& p, Rng& rng, const PipelineConfig& cfg, Index hidden) {
  const Index C = cfg.C;
  add_param(p, rng, "enc.w1", C, hidden, C);
  add_param(p, rng, "enc.b1", 1, hidden, C);
  add_param(p, rng, "enc.w2", hidden, C, hidden);
  add_param(p, rng, "enc.b2", 1, C, hidden);
  add_param(p, rng, "head.queries", cfg.Q, C, C);
  // Queries start an order of magnitude larger than the other weights so
  // their initial predictions differ enough for the bipartite matching to
  // assign them consistently; with unit-scale init all queries emit nearly
  // identical outputs and the assignment churns, stalling specialization.
  p.items.back().second *= 30.0;
  add_param(p, rng, "head.w_h1", C, hidden, C);
  add_param(p, rng, "head.b_h1", 1, hidden, C);
  add_param(p, rng, "head.w_h2", hidden, hidden, hidden);
  add_param(p, rng, "head.b_h2", 1, hidden, hidden);
  add_param(p, rng, "head.w_cls", hidden, kNumMapClasses + 1, hidden);
  add_param(p, rng, "head.b_cls", 1, kNumMapClasses + 1, hidden);
  add_param(p, rng, "head.w_pt", hidden, 2 * cfg.K_pts, hidden);
  add_param(p, rng, "head.b_pt", 1, 2 * cfg.K_pts, hidden);
}

Tensor bind(Tape& tape, const ModelParams& params, BoundParams* bound, const std::string& name,
            bool trainable) {
  Tensor t = tape.leaf(params.at(name), trainable);
  if (bound) bound->leaves.emplace_back(name, t);
  return t;
}

// y = x * W + 1 * b  (bias broadcast over rows via a constant ones column).
Tensor affine(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor ones = tape.constant(MatXd::Ones(x.rows(), 1));
  return add(tape, matmul(tape, x, w), matmul(tape, ones, b));
}

// Mean over rows: [M x C] -> [1 x C], as a constant-matrix product.
Tensor mean_rows(Tape& tape, const Tensor& x) {
  MatXd w = MatXd::Constant(1, x.rows(), 1.0 / static_cast<double>(x.rows()));
  return matmul(tape, tape.constant(w), x);
}

struct EncHead {
  Tensor f_high, f_cls, f_cls_full, f_point;
};

EncHead enc_head_forward(Tape& tape, const PipelineConfig& cfg, const BoundParams& bp,
                         const Tensor& fused) {
  Tensor h1 = tanh_op(tape, affine(tape, fused, bp.at("enc.w1"), bp.at("enc.b1")));
  Tensor f_high = affine(tape, h1, bp.at("enc.w2"), bp.at("enc.b2"));

  Tensor pool = mean_rows(tape, f_high);  // [1 x C]
  Tensor ones_q = tape.constant(MatXd::Ones(cfg.Q, 1));
  Tensor hq = add(tape, bp.at("head.queries"), matmul(tape, ones_q, pool));  // [Q x C]
  // Two nonlinear per-query layers: the moments -> polyline mapping (rotation
  // from covariance, direction disambiguation) is far from affine.
  Tensor h1q = tanh_op(tape, affine(tape, hq, bp.at("head.w_h1"), bp.at("head.b_h1")));
  Tensor h2q = tanh_op(tape, affine(tape, h1q, bp.at("head.w_h2"), bp.at("head.b_h2")));

  Tensor cls_full = affine(tape, h2q, bp.at("head.w_cls"), bp.at("head.b_cls"));  // [Q x 4]
  Tensor cls = slice_cols(tape, cls_full, 0, kNumMapClasses);                     // [Q x 3]

  Tensor pt_raw = tanh_op(tape, affine(tape, h2q, bp.at("head.w_pt"), bp.at("head.b_pt")));
  MatXd pt_scale(cfg.Q, 2 * cfg.K_pts);
  for (Index j = 0; j < 2 * cfg.K_pts; ++j) pt_scale.col(j).setConstant(j % 2 == 0 ? kRangeX : kRangeY);
  Tensor f_point = hadamard(tape, pt_raw, tape.constant(pt_scale));  // meters, inside range

  return {f_high, cls, cls_full, f_point};
}

}  // namespace

ModelParams init_teacher_params(const PipelineConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  const Index D = cfg.input_channels, C = cfg.C;
  add_param(p, rng, "cam.w", D, C, D);
  add_param(p, rng, "cam.b", 1, C, D);
  add_param(p, rng, "lidar.w", D, C, D);
  add_param(p, rng, "lidar.b", 1, C, D);
  add_param(p, rng, "fuse.w_a", C, C, 2 * C);
  add_param(p, rng, "fuse.w_b", C, C, 2 * C);
  add_param(p, rng, "fuse.b", 1, C, 2 * C);
  add_enc_head_params(p, rng, cfg, cfg.hidden_teacher);
  return p;
}

ModelParams init_student_params(const PipelineConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  const Index D = cfg.input_channels, C = cfg.C;
  // Branch 1: linear projection with position-wise sigmoid gating.
  add_param(p, rng, "sub1.w", D, C, D);
  add_param(p, rng, "sub1.w_gate", D, C, D);
  // Branch 2: per-cell soft pooling over input positions (attention-style
  // depth mixture), structurally distinct from branch 1.
  add_param(p, rng, "sub2.w_q", D, C, D);
  add_param(p, rng, "sub2.w_k", D, C, D);
  add_param(p, rng, "sub2.w_v", D, C, D);
  add_param(p, rng, "fuse.w_a", C, C, 2 * C);
  add_param(p, rng, "fuse.w_b", C, C, 2 * C);
  add_param(p, rng, "fuse.b", 1, C, 2 * C);
  add_enc_head_params(p, rng, cfg, cfg.hidden_student);
  return p;
}

TeacherOutputs teacher_forward(Tape& tape, const PipelineConfig& cfg, const ModelParams& params,
                               const MatXd& cam_input, const MatXd& lidar_input, bool trainable,
                               BoundParams* bound) {
  cfg.validate();
  if (cam_input.rows() != cfg.cells() || cam_input.cols() != cfg.input_channels ||
      lidar_input.rows() != cfg.cells() || lidar_input.cols() != cfg.input_channels)
    throw DimensionError("teacher_forward: input shape does not match config");

  BoundParams local;
  BoundParams& bp = bound ? *bound : local;
  for (const auto& [name, v] : params.items) bind(tape, params, &bp, name, trainable);

  Tensor xc = tape.constant(cam_input);
  Tensor xl = tape.constant(lidar_input);

  TeacherOutputs out;
  out.f_c_bev = tanh_op(tape, affine(tape, xc, bp.at("cam.w"), bp.at("cam.b")));
  out.f_l_bev = tanh_op(tape, affine(tape, xl, bp.at("lidar.w"), bp.at("lidar.b")));
  // Channel mixing of the concatenated branches: concat + linear written as a
  // sum of two projections.
  Tensor mix = add(tape, matmul(tape, out.f_c_bev, bp.at("fuse.w_a")),
                   matmul(tape, out.f_l_bev, bp.at("fuse.w_b")));
  Tensor ones = tape.constant(MatXd::Ones(cfg.cells(), 1));
  out.f_fused = tanh_op(tape, add(tape, mix, matmul(tape, ones, bp.at("fuse.b"))));

  EncHead eh = enc_head_forward(tape, cfg, bp, out.f_fused);
  out.f_high = eh.f_high;
  out.f_cls = eh.f_cls;
  out.f_cls_full = eh.f_cls_full;
  out.f_point = eh.f_point;
  return out;
}

std::pair<Tensor, Tensor> dual_bev_transform(Tape& tape, const PipelineConfig& cfg,
                                             const BoundParams& bp, const Tensor& cam) {
  // Branch 1: gated linear projection (no bias, so zero input maps to zero).
  Tensor lin = matmul(tape, cam, bp.at("sub1.w"));
  Tensor gate = sigmoid(tape, matmul(tape, cam, bp.at("sub1.w_gate")));
  Tensor f_sub1 = hadamard(tape, lin, gate);

  // Branch 2: each output cell soft-pools the value projection over all input
  // positions.
  Tensor q = matmul(tape, cam, bp.at("sub2.w_q"));
  Tensor k = matmul(tape, cam, bp.at("sub2.w_k"));
  Tensor scores = scale(tape, matmul(tape, q, transpose2d(tape, k)),
                        1.0 / std::sqrt(static_cast<double>(cfg.C)));
  Tensor weights = softmax_rows(tape, scores);
  Tensor f_sub2 = matmul(tape, weights, matmul(tape, cam, bp.at("sub2.w_v")));
  return {f_sub1, f_sub2};
}

StudentOutputs student_forward(Tape& tape, const PipelineConfig& cfg, const ModelParams& params,
                               const MatXd& cam_input, bool trainable, BoundParams* bound) {
  cfg.validate();
  if (cam_input.rows() != cfg.cells() || cam_input.cols() != cfg.input_channels)
    throw DimensionError("student_forward: input shape does not match config");

  BoundParams local;
  BoundParams& bp = bound ? *bound : local;
  for (const auto& [name, v] : params.items) bind(tape, params, &bp, name, trainable);

  Tensor xc = tape.constant(cam_input);

  StudentOutputs out;
  auto [f_sub1, f_sub2] = dual_bev_transform(tape, cfg, bp, xc);
  out.f_sub1 = f_sub1;
  out.f_sub2 = f_sub2;

  Tensor mix = add(tape, matmul(tape, out.f_sub1, bp.at("fuse.w_a")),
                   matmul(tape, out.f_sub2, bp.at("fuse.w_b")));
  Tensor ones = tape.constant(MatXd::Ones(cfg.cells(), 1));
  out.f_fused = tanh_op(tape, add(tape, mix, matmul(tape, ones, bp.at("fuse.b"))));

  EncHead eh = enc_head_forward(tape, cfg, bp, out.f_fused);
  out.f_high = eh.f_high;
  out.f_cls = eh.f_cls;
  out.f_cls_full = eh.f_cls_full;
  out.f_point = eh.f_point;
  return out;
}

namespace {

std::vector<Index> patch_index_map(const PipelineConfig& cfg) {
  const Index H = cfg.H, W = cfg.W, C = cfg.C, P = cfg.P;
  std::vector<Index> idx;
  idx.reserve(static_cast<std::size_t>(H * W * C));
  for (Index gy = 0; gy < H / P; ++gy)
    for (Index gx = 0; gx < W / P; ++gx)
      for (Index py = 0; py < P; ++py)
        for (Index px = 0; px < P; ++px)
          for (Index c = 0; c < C; ++c)
            idx.push_back(((gy * P + py) * W + (gx * P + px)) * C + c);
  return idx;
}

}  // namespace

Tensor patchify(Tape& tape, const Tensor& f, const PipelineConfig& cfg) {
  cfg.validate();
  if (f.rank() != 2 || f.rows() != cfg.cells() || f.cols() != cfg.C)
    throw DimensionError("patchify: feature shape " + shape_str(f.shape()) +
                         " does not match config");
  return gather(tape, f, patch_index_map(cfg), {cfg.patches(), cfg.patch_dim()});
}

Tensor unpatchify(Tape& tape, const Tensor& p, const PipelineConfig& cfg) {
  cfg.validate();
  if (p.rank() != 2 || p.rows() != cfg.patches() || p.cols() != cfg.patch_dim())
    throw DimensionError("unpatchify: patch shape " + shape_str(p.shape()) +
                         " does not match config");
  const auto fwd = patch_index_map(cfg);
  std::vector<Index> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) inv[static_cast<std::size_t>(fwd[i])] = static_cast<Index>(i);
  return gather(tape, p, inv, {cfg.cells(), cfg.C});
}

std::vector<MapElement> decode_predictions(const PipelineConfig& cfg, const Tensor& f_cls_full,
                                           const Tensor& f_point, double score_floor) {
  std::vector<MapElement> out;
  const auto logits = f_cls_full.matrix();
  const auto pts = f_point.matrix();
  for (Index q = 0; q < cfg.Q; ++q) {
    Eigen::RowVectorXd p = logits.row(q);
    p = (p.array() - p.maxCoeff()).exp();
    p /= p.sum();
    Index best = 0;
    for (Index c = 1; c < kNumMapClasses; ++c)
      if (p[c] > p[best]) best = c;
    const double score = p[best];
    if (score < score_floor) continue;
    MapElement e;
    e.class_id = static_cast<MapClass>(best);
    e.score = score;
    e.points.resize(cfg.K_pts, 2);
    for (Index k = 0; k < cfg.K_pts; ++k) {
      e.points(k, 0) = pts(q, 2 * k);
      e.points(k, 1) = pts(q, 2 * k + 1);
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace mapdistill
