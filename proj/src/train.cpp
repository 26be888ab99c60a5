#include "mapdistill/train.hpp"

#include <chrono>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace mapdistill {

void TrainConfig::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
    throw ConfigError("config: lambdas must be >= 0");
  if (lr0 <= 0.0) throw ConfigError("config: lr0 must be > 0");
  if (batch < 1) throw ConfigError("config: batch must be >= 1");
  if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (train_scenes < 1 || eval_scenes < 1) throw ConfigError("config: scene counts must be >= 1");
  if (phase != "teacher" && phase != "student" && phase != "both")
    throw ConfigError("config: phase must be teacher|student|both");
  if (min_per_class < 0 || max_per_class < min_per_class)
    throw ConfigError("config: bad per-class element range");
  pipeline().validate();
}

namespace {

template <typename T>
T parse_value(const std::string& v);

template <>
double parse_value<double>(const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: bad numeric value '" + v + "'");
}

template <>
int parse_value<int>(const std::string& v) {
  try {
    std::size_t pos = 0;
    const int i = std::stoi(v, &pos);
    if (pos == v.size()) return i;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: bad integer value '" + v + "'");
}

template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto u = std::stoull(v, &pos);
    if (pos == v.size()) return u;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: bad integer value '" + v + "'");
}

template <>
bool parse_value<bool>(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean value '" + v + "'");
}

template <>
std::string parse_value<std::string>(const std::string& v) {
  return v;
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

// Single source of truth for key <-> field mapping.
#define MD_CONFIG_FIELDS(X)                  \
  X(double, lambda1)                         \
  X(double, lambda2)                         \
  X(double, lambda3)                         \
  X(bool, use_relation)                      \
  X(bool, use_feature)                       \
  X(bool, use_head)                          \
  X(bool, cross_modal_relation)              \
  X(double, lr0)                             \
  X(double, decay_factor)                    \
  X(int, decay_milestone)                    \
  X(int, batch)                              \
  X(int, epochs)                             \
  X(std::uint64_t, seed)                     \
  X(double, weight_decay)                    \
  X(double, beta1)                           \
  X(double, beta2)                           \
  X(double, eps)                             \
  X(int, train_scenes)                       \
  X(int, eval_scenes)                        \
  X(std::uint64_t, train_data_seed)          \
  X(std::uint64_t, eval_data_seed)           \
  X(int, eval_every)                         \
  X(int, H)                                  \
  X(int, W)                                  \
  X(int, C)                                  \
  X(int, P)                                  \
  X(int, Q)                                  \
  X(int, K_pts)                              \
  X(int, hidden_teacher)                     \
  X(int, hidden_student)                     \
  X(double, cam_noise)                       \
  X(double, lidar_noise)                     \
  X(int, min_per_class)                      \
  X(int, max_per_class)                      \
  X(double, w_cls)                           \
  X(double, w_point)                         \
  X(double, w_dir)                           \
  X(double, focal_gamma)                     \
  X(double, focal_alpha)                     \
  X(std::string, phase)                      \
  X(std::string, teacher_checkpoint)

void TrainConfig::set(const std::string& key, const std::string& value) {
#define MD_SET_FIELD(type, name)      \
  if (key == #name) {                 \
    name = parse_value<type>(value);  \
    return;                           \
  }
  MD_CONFIG_FIELDS(MD_SET_FIELD)
#undef MD_SET_FIELD
  throw ConfigError("config: unknown key '" + key + "'");
}

std::string TrainConfig::canonical() const {
  std::ostringstream os;
#define MD_DUMP_FIELD(type, name) dump_one(os, #name, name);
  auto dump_one = [](std::ostringstream& o, const char* k, const auto& v) {
    using V = std::decay_t<decltype(v)>;
    o << k << " = ";
    if constexpr (std::is_same_v<V, bool>)
      o << bool_str(v);
    else if constexpr (std::is_same_v<V, double>)
      o << format_double(v);
    else
      o << v;
    o << "\n";
  };
  MD_CONFIG_FIELDS(MD_DUMP_FIELD)
#undef MD_DUMP_FIELD
  return os.str();
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  TrainConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

PipelineConfig TrainConfig::pipeline() const {
  PipelineConfig p;
  p.H = H;
  p.W = W;
  p.C = C;
  p.P = P;
  p.Q = Q;
  p.K_pts = K_pts;
  p.hidden_teacher = hidden_teacher;
  p.hidden_student = hidden_student;
  p.input_channels = SceneConfig::input_channels();
  return p;
}

SceneConfig TrainConfig::scene() const {
  SceneConfig s;
  s.H = H;
  s.W = W;
  s.min_per_class = min_per_class;
  s.max_per_class = max_per_class;
  s.cam_noise = cam_noise;
  s.lidar_noise = lidar_noise;
  return s;
}

DistillWeights TrainConfig::distill() const {
  DistillWeights d;
  d.lambda1 = lambda1;
  d.lambda2 = lambda2;
  d.lambda3 = lambda3;
  d.use_relation = use_relation;
  d.use_feature = use_feature;
  d.use_head = use_head;
  d.cross_modal_relation = cross_modal_relation;
  return d;
}

MapLossWeights TrainConfig::map_weights() const { return {w_cls, w_point, w_dir}; }

FocalParams TrainConfig::focal() const { return {focal_gamma, focal_alpha}; }

AdamWConfig TrainConfig::adamw(double lr) const { return {lr, weight_decay, beta1, beta2, eps}; }

std::vector<int> TrainConfig::milestones() const {
  if (decay_milestone >= 0) return {decay_milestone};
  return {2 * epochs / 3};
}

namespace {

// Collects dLoss/dParam in ModelParams order after backward().
std::vector<MatXd> collect_grads(const ModelParams& params, const BoundParams& bound) {
  std::vector<MatXd> grads;
  grads.reserve(params.items.size());
  for (const auto& [name, p] : params.items) {
    const Tensor& leaf = bound.at(name);
    grads.push_back(Eigen::Map<const MatXd>(leaf.grad().data(), p.rows(), p.cols()));
  }
  return grads;
}

void accumulate(std::vector<MatXd>& acc, const std::vector<MatXd>& grads) {
  if (acc.empty()) {
    acc = grads;
    return;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += grads[i];
}

LossBreakdown& operator+=(LossBreakdown& a, const LossBreakdown& b) {
  a.l_map += b.l_map;
  a.l_relation += b.l_relation;
  a.l_low += b.l_low;
  a.l_high += b.l_high;
  a.l_feature += b.l_feature;
  a.l_cls += b.l_cls;
  a.l_point += b.l_point;
  a.l_head += b.l_head;
  a.total += b.total;
  return a;
}

LossBreakdown scaled(LossBreakdown a, double s) {
  a.l_map *= s;
  a.l_relation *= s;
  a.l_low *= s;
  a.l_high *= s;
  a.l_feature *= s;
  a.l_cls *= s;
  a.l_point *= s;
  a.l_head *= s;
  a.total *= s;
  return a;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(fnv1a(&epoch, sizeof(epoch), fnv1a(&seed, sizeof(seed), fnv1a("shuffle"))));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

struct Phase {
  bool teacher;  // true: optimize the teacher on map loss only
};

RunRecord run_phase(const TrainConfig& cfg, Phase phase, const ModelParams* frozen_teacher,
                    ModelParams& params) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineConfig pc = cfg.pipeline();
  const auto scenes = synth_generate_scenes(cfg.train_data_seed, cfg.train_scenes, cfg.scene());

  const std::uint64_t teacher_hash_before = frozen_teacher ? frozen_teacher->hash() : 0;

  RunRecord record;
  record.config_hash = cfg.hash();
  AdamWState opt_state;

  // The teacher is frozen during the student phase and every distillation
  // term detaches its tensors, so its per-scene outputs are constants; compute
  // them once instead of re-running the teacher forward every epoch.
  struct TeacherCache {
    MatXd f_c_bev, f_l_bev, f_fused, f_high, f_cls, f_point;
  };
  std::vector<TeacherCache> tcache;
  if (!phase.teacher) {
    tcache.reserve(scenes.size());
    for (const auto& scene : scenes) {
      Tape tape;
      TeacherOutputs o =
          teacher_forward(tape, pc, *frozen_teacher, scene.inputs.cam, scene.inputs.lidar, false);
      tcache.push_back({MatXd(o.f_c_bev.matrix()), MatXd(o.f_l_bev.matrix()),
                        MatXd(o.f_fused.matrix()), MatXd(o.f_high.matrix()),
                        MatXd(o.f_cls.matrix()), MatXd(o.f_point.matrix())});
    }
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.lr0, cfg.milestones(), cfg.decay_factor);
    const auto order = epoch_order(scenes.size(), cfg.seed, epoch);
    LossBreakdown epoch_sum;
    std::size_t cursor = 0;
    int steps = 0;
    while (cursor < order.size()) {
      const std::size_t bsz = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), order.size() - cursor);
      std::vector<MatXd> grad_acc;
      LossBreakdown batch_sum;
      for (std::size_t b = 0; b < bsz; ++b) {
        const Scene& scene = scenes[order[cursor + b]];
        Tape tape;
        BoundParams bound;
        LossBreakdown values;
        Tensor loss;
        if (phase.teacher) {
          TeacherOutputs out = teacher_forward(tape, pc, params, scene.inputs.cam,
                                               scene.inputs.lidar, true, &bound);
          loss = map_loss(tape, pc, out.f_cls_full, out.f_point, scene.sample, cfg.map_weights(),
                          cfg.focal());
          values.l_map = loss.scalar();
          values.total = values.l_map;
        } else {
          const TeacherCache& tc = tcache[order[cursor + b]];
          TeacherOutputs t_out;
          t_out.f_c_bev = tape.constant(tc.f_c_bev);
          t_out.f_l_bev = tape.constant(tc.f_l_bev);
          t_out.f_fused = tape.constant(tc.f_fused);
          t_out.f_high = tape.constant(tc.f_high);
          t_out.f_cls = tape.constant(tc.f_cls);
          t_out.f_point = tape.constant(tc.f_point);
          StudentOutputs s_out = student_forward(tape, pc, params, scene.inputs.cam, true, &bound);
          TotalLoss tl = total_loss(tape, pc, t_out, s_out, scene.sample, cfg.distill(),
                                    cfg.map_weights(), cfg.focal());
          loss = tl.total;
          values = tl.values;
        }
        if (!std::isfinite(loss.scalar()))
          throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                             " on " + scene.sample.sample_id);
        tape.backward(loss);
        accumulate(grad_acc, collect_grads(params, bound));
        batch_sum += values;
      }
      for (auto& g : grad_acc) g /= static_cast<double>(bsz);
      adamw_step(params, grad_acc, opt_state, cfg.adamw(lr));
      epoch_sum += batch_sum;
      ++steps;
      cursor += bsz;
    }
    (void)steps;
    EpochStats stats;
    stats.mean = scaled(epoch_sum, 1.0 / static_cast<double>(scenes.size()));
    stats.lr = lr;
    record.epochs.push_back(stats);

    const bool last = epoch + 1 == cfg.epochs;
    if (last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0)) {
      record.evals.emplace_back(epoch, evaluate_model(cfg, params, phase.teacher));
    }
  }

  if (frozen_teacher && frozen_teacher->hash() != teacher_hash_before)
    throw NumericError("frozen-teacher invariant violated: teacher parameters changed");

  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return record;
}

}  // namespace

RunRecord train_teacher(const TrainConfig& cfg, ModelParams& teacher_out) {
  Rng rng(fnv1a("teacher-init", fnv1a(&cfg.seed, sizeof(cfg.seed))));
  teacher_out = init_teacher_params(cfg.pipeline(), rng);
  return run_phase(cfg, {true}, nullptr, teacher_out);
}

RunRecord train_student(const TrainConfig& cfg, const ModelParams& teacher, ModelParams& student_out) {
  Rng rng(fnv1a("student-init", fnv1a(&cfg.seed, sizeof(cfg.seed))));
  student_out = init_student_params(cfg.pipeline(), rng);
  return run_phase(cfg, {false}, &teacher, student_out);
}

EvalReport evaluate_model(const TrainConfig& cfg, const ModelParams& params, bool is_teacher) {
  const PipelineConfig pc = cfg.pipeline();
  const auto scenes = synth_generate_scenes(cfg.eval_data_seed, cfg.eval_scenes, cfg.scene());
  std::vector<MapSample> gts;
  std::vector<PredictionSet> preds;
  for (const auto& scene : scenes) {
    gts.push_back(scene.sample);
    Tape tape;
    PredictionSet p;
    p.sample_id = scene.sample.sample_id;
    if (is_teacher) {
      TeacherOutputs out = teacher_forward(tape, pc, params, scene.inputs.cam, scene.inputs.lidar, false);
      p.elements = decode_predictions(pc, out.f_cls_full, out.f_point);
    } else {
      StudentOutputs out = student_forward(tape, pc, params, scene.inputs.cam, false);
      p.elements = decode_predictions(pc, out.f_cls_full, out.f_point);
    }
    preds.push_back(std::move(p));
  }
  EvalConfig ec;
  return mean_ap(preds, gts, ec);
}

void write_metrics_csv(const std::string& path, const RunRecord& record) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "epoch,l_map,l_relation,l_low,l_high,l_feature,l_cls,l_point,l_head,total,lr\n";
  for (std::size_t e = 0; e < record.epochs.size(); ++e) {
    const auto& s = record.epochs[e];
    os << e << "," << format_double(s.mean.l_map) << "," << format_double(s.mean.l_relation) << ","
       << format_double(s.mean.l_low) << "," << format_double(s.mean.l_high) << ","
       << format_double(s.mean.l_feature) << "," << format_double(s.mean.l_cls) << ","
       << format_double(s.mean.l_point) << "," << format_double(s.mean.l_head) << ","
       << format_double(s.mean.total) << "," << format_double(s.lr) << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

std::vector<AblationRow> ablation_suite(const TrainConfig& base, const ModelParams& teacher,
                                        int threads) {
  struct RowSpec {
    const char* name;
    bool rel, feat, head;
  };
  static constexpr RowSpec kRows[] = {
      {"baseline", false, false, false}, {"a", true, false, false}, {"b", false, true, false},
      {"c", false, false, true},         {"d", true, true, false},  {"e", false, true, true},
      {"f", true, false, true},          {"g", true, true, true},
  };

  std::vector<AblationRow> rows(std::size(kRows));
  std::vector<std::thread> pool;
  std::size_t next = 0;
  std::mutex mu;
  std::exception_ptr first_error;

  auto worker = [&]() {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= std::size(kRows) || first_error) return;
        i = next++;
      }
      try {
        TrainConfig cfg = base;
        cfg.phase = "student";
        cfg.use_relation = kRows[i].rel;
        cfg.use_feature = kRows[i].feat;
        cfg.use_head = kRows[i].head;
        ModelParams student;
        RunRecord rec = train_student(cfg, teacher, student);
        rows[i] = {kRows[i].name, rec.evals.back().second};
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(std::size(kRows))));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "setting,AP_ped,AP_div,AP_bou,mAP\n";
  for (const auto& r : rows)
    os << r.setting << "," << format_double(r.report.class_ap[0]) << ","
       << format_double(r.report.class_ap[1]) << "," << format_double(r.report.class_ap[2]) << ","
       << format_double(r.report.map) << "\n";
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace mapdistill
