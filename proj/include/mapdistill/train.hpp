#pragma once

#include "mapdistill/eval.hpp"
#include "mapdistill/losses.hpp"
#include "mapdistill/optim.hpp"
#include "mapdistill/scene.hpp"

namespace mapdistill {

// Flat key-value training configuration. Every field has a config-file key;
// unknown keys are rejected.
struct TrainConfig {
  // distillation weights + ablation switches
  double lambda1 = 0.3;
  double lambda2 = 0.6;
  double lambda3 = 0.9;
  bool use_relation = true;
  bool use_feature = true;
  bool use_head = true;
  bool cross_modal_relation = true;

  // optimizer / schedule
  double lr0 = 4e-3;
  double decay_factor = 0.1;
  int decay_milestone = -1;  // -1: 2/3 of epochs
  int batch = 8;
  int epochs = 30;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // data
  int train_scenes = 256;
  int eval_scenes = 64;
  std::uint64_t train_data_seed = 10000;
  std::uint64_t eval_data_seed = 500000;
  int eval_every = 10;

  // model dims
  int H = 8, W = 8, C = 16, P = 2, Q = 12, K_pts = 20;
  int hidden_teacher = 32;
  int hidden_student = 32;

  // synthetic scene knobs
  double cam_noise = 0.5;
  double lidar_noise = 0.05;
  int min_per_class = 1;
  int max_per_class = 4;

  // base map loss sub-weights
  double w_cls = 1.0;
  double w_point = 1.0;
  double w_dir = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;

  // phase: "teacher", "student", or "both"
  std::string phase = "both";
  std::string teacher_checkpoint;

  void validate() const;
  void set(const std::string& key, const std::string& value);  // rejects unknown keys
  std::string canonical() const;                               // deterministic key=value dump
  std::uint64_t hash() const { return fnv1a(canonical()); }

  PipelineConfig pipeline() const;
  SceneConfig scene() const;
  DistillWeights distill() const;
  MapLossWeights map_weights() const;
  FocalParams focal() const;
  AdamWConfig adamw(double lr) const;
  std::vector<int> milestones() const;
};

TrainConfig load_train_config(const std::string& path);

struct EpochStats {
  LossBreakdown mean;
  double lr = 0.0;
};

struct RunRecord {
  std::vector<EpochStats> epochs;
  std::vector<std::pair<int, EvalReport>> evals;  // (epoch, report)
  double wall_seconds = 0.0;
  std::uint64_t config_hash = 0;
};

// Phase 1: teacher pre-training on the base map loss only.
RunRecord train_teacher(const TrainConfig& cfg, ModelParams& teacher_out);

// Phase 2: student distillation against a frozen teacher. Asserts the teacher
// hash is unchanged afterwards.
RunRecord train_student(const TrainConfig& cfg, const ModelParams& teacher, ModelParams& student_out);

// Evaluates a trained model on the held-out synthetic set.
EvalReport evaluate_model(const TrainConfig& cfg, const ModelParams& params, bool is_teacher);

void write_metrics_csv(const std::string& path, const RunRecord& record);

struct AblationRow {
  std::string setting;  // baseline, a..g
  EvalReport report;
};

// Table-2-style suite: eight switch combinations, same teacher, same seed.
// Rows run on worker threads; per-run determinism is unaffected.
std::vector<AblationRow> ablation_suite(const TrainConfig& base, const ModelParams& teacher,
                                        int threads = 4);

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

}  // namespace mapdistill
