#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mapdistill/audit.hpp"
#include "mapdistill/checkpoint.hpp"
#include "mapdistill/train.hpp"

namespace fs = std::filesystem;
using namespace mapdistill;

namespace {

struct CommonArgs {
  std::string config;
  std::string out = ".";
  std::vector<std::string> sets;
  std::int64_t seed = -1;
  bool quiet = false;
};

void add_common(CLI::App* app, CommonArgs& a, bool with_config = true) {
  if (with_config) app->add_option("--config", a.config, "Training config file (key=value lines)");
  app->add_option("--out", a.out, "Output directory");
  app->add_option("--set", a.sets, "Config override KEY=VALUE (repeatable)");
  app->add_option("--seed", a.seed, "Seed override");
  app->add_flag("--quiet", a.quiet, "Suppress progress output");
}

TrainConfig make_config(const CommonArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_train_config(a.config);
  for (const auto& kv : a.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "': expected KEY=VALUE");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  cfg.validate();
  return cfg;
}

void ensure_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void note(const CommonArgs& a, const std::string& msg) {
  if (!a.quiet) std::cout << msg << "\n";
}

int cmd_synth_data(const CommonArgs& a, int count) {
  ensure_out(a.out);
  TrainConfig cfg = make_config(a);
  const std::uint64_t seed = a.seed >= 0 ? static_cast<std::uint64_t>(a.seed) : cfg.train_data_seed;
  std::vector<Scene> scenes = synth_generate_scenes(seed, count, cfg.scene());
  std::vector<MapSample> samples;
  samples.reserve(scenes.size());
  for (const Scene& s : scenes) samples.push_back(s.sample);
  const std::string path = join(a.out, "dataset.jsonl");
  save_dataset(path, samples);
  note(a, "wrote " + std::to_string(samples.size()) + " samples to " + path);
  return 0;
}

void write_predictions_for(const TrainConfig& cfg, const ModelParams& params, bool is_teacher,
                           const std::string& path) {
  const PipelineConfig pc = cfg.pipeline();
  std::vector<Scene> scenes = synth_generate_scenes(cfg.eval_data_seed, cfg.eval_scenes, cfg.scene());
  std::vector<PredictionSet> preds;
  preds.reserve(scenes.size());
  for (const Scene& s : scenes) {
    Tape tape;
    Tensor cls, pts;
    if (is_teacher) {
      TeacherOutputs o = teacher_forward(tape, pc, params, s.inputs.cam, s.inputs.lidar, false);
      cls = o.f_cls_full;
      pts = o.f_point;
    } else {
      StudentOutputs o = student_forward(tape, pc, params, s.inputs.cam, false);
      cls = o.f_cls_full;
      pts = o.f_point;
    }
    preds.push_back({s.sample.sample_id, decode_predictions(pc, cls, pts)});
  }
  save_predictions(path, preds);
}

int cmd_train(const CommonArgs& a) {
  ensure_out(a.out);
  TrainConfig cfg = make_config(a);

  ModelParams teacher;
  if (cfg.phase == "teacher" || cfg.phase == "both") {
    note(a, "training teacher (" + std::to_string(cfg.epochs) + " epochs)");
    RunRecord rec = train_teacher(cfg, teacher);
    save_checkpoint(join(a.out, "teacher.ckpt"), teacher);
    write_metrics_csv(join(a.out, "metrics_teacher.csv"), rec);
    if (!rec.evals.empty())
      write_eval_csv(join(a.out, "eval_teacher.csv"), rec.evals.back().second);
    write_predictions_for(cfg, teacher, true, join(a.out, "predictions_teacher.jsonl"));
    if (!rec.evals.empty()) note(a, "teacher " + eval_summary_json(rec.evals.back().second));
  } else {
    if (cfg.teacher_checkpoint.empty())
      throw ConfigError("phase=student requires teacher_checkpoint");
    teacher = load_checkpoint(cfg.teacher_checkpoint);
  }

  if (cfg.phase == "student" || cfg.phase == "both") {
    note(a, "training student (" + std::to_string(cfg.epochs) + " epochs)");
    ModelParams student;
    RunRecord rec = train_student(cfg, teacher, student);
    save_checkpoint(join(a.out, "student.ckpt"), student);
    write_metrics_csv(join(a.out, "metrics_student.csv"), rec);
    if (!rec.evals.empty())
      write_eval_csv(join(a.out, "eval_student.csv"), rec.evals.back().second);
    write_predictions_for(cfg, student, false, join(a.out, "predictions_student.jsonl"));
    if (!rec.evals.empty()) note(a, "student " + eval_summary_json(rec.evals.back().second));
  }
  return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& preds_path, const std::string& gt_path) {
  ensure_out(a.out);
  std::vector<PredictionSet> preds = load_predictions(preds_path);
  std::vector<MapSample> gts = load_dataset(gt_path);
  EvalReport report = mean_ap(preds, gts, EvalConfig{});
  write_eval_csv(join(a.out, "eval.csv"), report);
  std::cout << eval_summary_json(report) << "\n";
  return 0;
}

int cmd_ablate(const CommonArgs& a, int threads) {
  ensure_out(a.out);
  TrainConfig cfg = make_config(a);
  ModelParams teacher;
  if (!cfg.teacher_checkpoint.empty()) {
    teacher = load_checkpoint(cfg.teacher_checkpoint);
  } else {
    note(a, "training shared teacher");
    train_teacher(cfg, teacher);
    save_checkpoint(join(a.out, "teacher.ckpt"), teacher);
  }
  note(a, "running 8 ablation rows on " + std::to_string(threads) + " threads");
  std::vector<AblationRow> rows = ablation_suite(cfg, teacher, threads);
  write_ablation_csv(join(a.out, "ablation.csv"), rows);
  for (const AblationRow& r : rows) note(a, r.setting + " " + eval_summary_json(r.report));
  return 0;
}

int cmd_grad_check(const CommonArgs& a) {
  ensure_out(a.out);
  AuditConfig cfg;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  std::vector<AuditResult> results = gradient_audit(cfg);
  std::ofstream out(join(a.out, "grad_check.txt"));
  if (!out) throw IoError("cannot open " + join(a.out, "grad_check.txt"));
  bool all_pass = true;
  for (const AuditResult& r : results) {
    char line[256];
    std::snprintf(line, sizeof line, "%-24s instances=%d max_rel_error=%.3e %s", r.name.c_str(),
                  r.instances, r.max_rel_error, r.pass ? "PASS" : "FAIL");
    out << line << "\n";
    if (!a.quiet) std::cout << line << "\n";
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) throw NumericError("gradient audit failed; see grad_check.txt");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mapdistill: toy cross-modal map-construction distillation"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, eval_args, ablate_args, grad_args;
  int synth_count = 256;
  std::string eval_preds, eval_gt;
  int ablate_threads = 4;

  CLI::App* synth = app.add_subcommand("synth-data", "Generate a synthetic map dataset");
  add_common(synth, synth_args);
  synth->add_option("--count", synth_count, "Number of samples");

  CLI::App* train = app.add_subcommand("train", "Train teacher and/or student");
  add_common(train, train_args);

  CLI::App* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  add_common(eval_cmd, eval_args, /*with_config=*/false);
  eval_cmd->add_option("--preds", eval_preds, "Predictions file (JSON lines)")->required();
  eval_cmd->add_option("--gt", eval_gt, "Ground-truth dataset file (JSON lines)")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "Run the eight-row loss ablation suite");
  add_common(ablate, ablate_args);
  ablate->add_option("--threads", ablate_threads, "Worker threads");

  CLI::App* grad = app.add_subcommand("grad-check", "Finite-difference audit of all gradients");
  add_common(grad, grad_args, /*with_config=*/false);

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth_data(synth_args, synth_count);
    if (train->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, eval_preds, eval_gt);
    if (ablate->parsed()) return cmd_ablate(ablate_args, ablate_threads);
    if (grad->parsed()) return cmd_grad_check(grad_args);
    return 1;
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: numeric: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
