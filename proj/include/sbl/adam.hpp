#pragma once

#include <cmath>
#include <vector>

#include "sbl/errors.hpp"
#include "sbl/param.hpp"

namespace sbl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. One moment pair per parameter, in store order.
class Adam {
 public:
  Adam(ParamStore& store, AdamConfig cfg = {}) : store_(&store), cfg_(cfg) {
    if (cfg_.lr <= 0.0) throw ContractError("adam: lr must be positive");
    for (Param& p : store) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // Applies one update from the gradients currently held in the params.
  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t pi = 0; pi < store_->size(); ++pi) {
      Param& p = store_->at(pi);
      if (static_cast<int64_t>(m_[pi].size()) != p.size())
        throw ContractError("adam: state/param size mismatch for " + p.name);
      for (int64_t i = 0; i < p.size(); ++i) {
        double g = p.grad[i];
        m_[pi][i] = cfg_.beta1 * m_[pi][i] + (1.0 - cfg_.beta1) * g;
        v_[pi][i] = cfg_.beta2 * v_[pi][i] + (1.0 - cfg_.beta2) * g * g;
        double mhat = m_[pi][i] / bc1;
        double vhat = v_[pi][i] / bc2;
        p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  // Rescales gradients so their global L2 norm is at most `max_norm`.
  double clip_global_norm(double max_norm) {
    double sq = 0.0;
    for (Param& p : *store_)
      for (double g : p.grad) sq += g * g;
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
      double f = max_norm / norm;
      for (Param& p : *store_)
        for (double& g : p.grad) g *= f;
    }
    return norm;
  }

  // Moment access for checkpointing.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(int64_t t) { t_ = t; }

 private:
  ParamStore* store_;
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace sbl
