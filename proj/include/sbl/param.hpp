#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include "sbl/rng.hpp"
#include "sbl/shape.hpp"

namespace sbl {

// A trainable array living outside any tape. Tapes bind leaves to params and
// gradients are accumulated back here (explicitly, so batched map-then-sum
// stays deterministic).
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class ParamStore {
 public:
  Param& add(const std::string& name, const Shape& shape) {
    check_shape_valid(shape, "param");
    params_.push_back(Param{name, shape, std::vector<double>(numel(shape), 0.0),
                            std::vector<double>(numel(shape), 0.0)});
    return params_.back();
  }

  // Weight-matrix initialization: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
  Param& add_uniform(const std::string& name, const Shape& shape, int64_t fan_in, Rng& rng) {
    Param& p = add(name, shape);
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : p.value) v = rng.uniform(-bound, bound);
    return p;
  }

  Param& add_zeros(const std::string& name, const Shape& shape) { return add(name, shape); }

  Param& add_ones(const std::string& name, const Shape& shape) {
    Param& p = add(name, shape);
    std::fill(p.value.begin(), p.value.end(), 1.0);
    return p;
  }

  void zero_grad() {
    for (Param& p : params_) p.zero_grad();
  }

  size_t size() const { return params_.size(); }
  Param& at(size_t i) { return params_[i]; }
  const Param& at(size_t i) const { return params_[i]; }

  Param* find(const std::string& name) {
    for (Param& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Param> params_;  // deque: stable addresses for bound tapes
};

}  // namespace sbl
