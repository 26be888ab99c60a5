#pragma once

#include <map>
#include <string>

#include "mapdistill/map_types.hpp"
#include "mapdistill/tensor.hpp"

namespace mapdistill {

struct PipelineConfig {
  Index H = 8;
  Index W = 8;
  Index C = 16;       // BEV channels (teacher and student must match)
  Index P = 2;        // patch size in cells
  Index Q = 12;       // element queries
  Index K_pts = 20;   // points per element
  Index hidden_teacher = 32;
  Index hidden_student = 32;
  Index input_channels = 42;  // matches SceneConfig::input_channels()

  Index cells() const { return H * W; }
  Index patches() const;         // N = HW / P^2
  Index patch_dim() const { return P * P * C; }
  double d_k() const { return static_cast<double>(patch_dim()); }

  void validate() const;  // P | H, P | W, positive dims
};

// Named parameter tensors with a fixed iteration order.
struct ModelParams {
  std::vector<std::pair<std::string, MatXd>> items;

  MatXd& at(const std::string& name);
  const MatXd& at(const std::string& name) const;
  bool has(const std::string& name) const;
  Index total_size() const;
  std::uint64_t hash() const;
};

// Tape leaves for the current forward pass, keyed like ModelParams. After
// backward(), grads are read from these leaves.
struct BoundParams {
  std::vector<std::pair<std::string, Tensor>> leaves;
  const Tensor& at(const std::string& name) const;
};

struct TeacherOutputs {
  Tensor f_c_bev, f_l_bev;     // [HW x C]
  Tensor f_fused, f_high;      // [HW x C]
  Tensor f_cls;                // [Q x 3] element class logits
  Tensor f_cls_full;           // [Q x 4] incl. the no-object logit (map loss)
  Tensor f_point;              // [Q x 2*K_pts] meters, (x,y) interleaved
};

struct StudentOutputs {
  Tensor f_sub1, f_sub2;       // [HW x C]
  Tensor f_fused, f_high;
  Tensor f_cls;                // [Q x 3]
  Tensor f_cls_full;           // [Q x 4]
  Tensor f_point;              // [Q x 2*K_pts]
};

ModelParams init_teacher_params(const PipelineConfig& cfg, Rng& rng);
ModelParams init_student_params(const PipelineConfig& cfg, Rng& rng);

TeacherOutputs teacher_forward(Tape& tape, const PipelineConfig& cfg, const ModelParams& params,
                               const MatXd& cam_input, const MatXd& lidar_input, bool trainable,
                               BoundParams* bound = nullptr);

StudentOutputs student_forward(Tape& tape, const PipelineConfig& cfg, const ModelParams& params,
                               const MatXd& cam_input, bool trainable, BoundParams* bound = nullptr);

// The student's two camera-to-BEV branches; exposed for heterogeneity tests.
std::pair<Tensor, Tensor> dual_bev_transform(Tape& tape, const PipelineConfig& cfg,
                                             const BoundParams& bound, const Tensor& cam);

// [HW x C] BEV feature -> [N x P^2*C] patch sequence (row-major patch grid);
// exact inverses.
Tensor patchify(Tape& tape, const Tensor& f, const PipelineConfig& cfg);
Tensor unpatchify(Tape& tape, const Tensor& p, const PipelineConfig& cfg);

// Decodes head outputs into scored map elements (class = argmax of the three
// element logits under the 4-way softmax, score = that probability).
std::vector<MapElement> decode_predictions(const PipelineConfig& cfg, const Tensor& f_cls_full,
                                           const Tensor& f_point, double score_floor = 0.0);

}  // namespace mapdistill
