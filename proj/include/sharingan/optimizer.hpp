#pragma once

#include <cmath>

#include "sharingan/nn.hpp"

namespace sharingan {

// Linear warmup to base_lr, then cosine annealing with warm restarts: cycle i
// has length T_0 * T_mult^i; within a cycle of length T,
// lr(t) = lr_min + (base_lr - lr_min) * (1 + cos(pi t / T)) / 2.
struct LrSchedule {
  double base_lr = 3e-5;
  double lr_min = 1e-6;
  int64_t warmup_steps = 200;
  int64_t restart_period = 1000;  // T_0
  double restart_mult = 2.0;      // T_mult

  double at(int64_t step) const {
    if (step < 0) throw std::invalid_argument("lr_schedule: negative step");
    if (warmup_steps > 0 && step < warmup_steps) return base_lr * static_cast<double>(step) / warmup_steps;
    int64_t t = step - warmup_steps;
    double period = static_cast<double>(restart_period);
    while (t >= static_cast<int64_t>(period)) {
      t -= static_cast<int64_t>(period);
      period *= restart_mult;
    }
    const double cosine = 0.5 * (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(t) / period));
    return lr_min + (base_lr - lr_min) * cosine;
  }
};

// Decoupled weight decay, applied before the bias-corrected Adam update.
template <typename S>
struct AdamWT {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.01;
  int64_t step_count = 0;
  std::vector<std::vector<S>> m, v;

  void init(const NamedParams<S>& params) {
    m.clear();
    v.clear();
    for (const auto& [name, p] : params) {
      (void)name;
      m.emplace_back(static_cast<size_t>(p.numel()), S(0));
      v.emplace_back(static_cast<size_t>(p.numel()), S(0));
    }
    step_count = 0;
  }

  void step(NamedParams<S>& params, double lr) {
    if (m.size() != params.size()) throw std::runtime_error("adamw: optimizer state not initialized");
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      TensorT<S>& p = params[pi].second;
      const auto& g = p.grad();
      auto& mi = m[pi];
      auto& vi = v[pi];
      S* w = p.data();
      const S decay = S(1) - static_cast<S>(lr * weight_decay);
      for (size_t i = 0; i < mi.size(); ++i) {
        w[i] *= decay;
        const double gi = g[i];
        mi[i] = static_cast<S>(beta1 * mi[i] + (1.0 - beta1) * gi);
        vi[i] = static_cast<S>(beta2 * vi[i] + (1.0 - beta2) * gi * gi);
        const double mhat = mi[i] / bc1;
        const double vhat = vi[i] / bc2;
        w[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
};

using AdamW = AdamWT<float>;

// Scales all gradients so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <typename S>
double clip_global_grad_norm(NamedParams<S>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : params) {
    (void)name;
    for (const S g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const S scale = static_cast<S>(max_norm / norm);
    for (auto& [name, p] : params) {
      (void)name;
      for (S& g : p.grad()) g *= scale;
    }
  }
  return norm;
}

}  // namespace sharingan
