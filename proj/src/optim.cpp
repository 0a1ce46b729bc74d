#include "memlora/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace memlora {

double lr_at(const AdamWConfig& cfg, long step) {
  const long warmup = std::max(1L, static_cast<long>(std::ceil(cfg.warmup_fraction * cfg.total_steps)));
  if (step <= warmup) return cfg.lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= cfg.total_steps) return 0.0;
  return cfg.lr * static_cast<double>(cfg.total_steps - step) / static_cast<double>(cfg.total_steps - warmup);
}

double clip_global_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params)
    if (p.has_grad()) sq += p.grad().squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params)
      if (p.has_grad()) const_cast<Matrix&>(p.grad()) *= s;
  }
  return norm;
}

void adamw_step(std::vector<Tensor>& params, AdamWState& state, const AdamWConfig& cfg, long step) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.push_back(Matrix::Zero(p.rows(), p.cols()));
      state.v.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  for (const auto& p : params)
    if (p.has_grad() && !p.grad().allFinite())
      throw std::runtime_error("adamw_step: non-finite gradient at step " + std::to_string(step));

  const double lr = lr_at(cfg, step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    const Matrix& g = params[i].grad();
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i].array() + (1.0 - cfg.beta2) * g.array().square();
    Matrix mhat = state.m[i] / bc1;
    Matrix vhat = state.v[i] / bc2;
    params[i].value().array() -=
        lr * (mhat.array() / (vhat.array().sqrt() + cfg.eps) + cfg.weight_decay * params[i].value().array());
  }
}

}  // namespace memlora
