#include "mapdistill/optim.hpp"

namespace mapdistill {

void adamw_step(ModelParams& params, const std::vector<MatXd>& grads, AdamWState& state,
                const AdamWConfig& cfg) {
  const std::size_t n = params.items.size();
  if (grads.size() != n) throw DimensionError("adamw_step: gradient count mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (grads[i].rows() != params.items[i].second.rows() || grads[i].cols() != params.items[i].second.cols())
      throw DimensionError("adamw_step: gradient shape mismatch for " + params.items[i].first);
    if (!grads[i].allFinite())
      throw NumericError("adamw_step: non-finite gradient for " + params.items[i].first);
  }
  if (state.m.empty()) {
    for (const auto& [name, p] : params.items) {
      state.m.push_back(MatXd::Zero(p.rows(), p.cols()));
      state.v.push_back(MatXd::Zero(p.rows(), p.cols()));
    }
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    MatXd& p = params.items[i].second;
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i].cwiseProduct(grads[i]);
    const MatXd m_hat = state.m[i] / bc1;
    const MatXd v_hat = state.v[i] / bc2;
    p -= cfg.lr * cfg.weight_decay * p;  // decoupled decay
    p.array() -= cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
  }
}

double lr_schedule(int epoch, double lr0, const std::vector<int>& milestones, double factor) {
  if (epoch < 0) throw ConfigError("lr_schedule: epoch must be >= 0");
  double lr = lr0;
  for (int m : milestones)
    if (epoch >= m) lr *= factor;
  return lr;
}

}  // namespace mapdistill
