#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "colpro/tensor.hpp"

namespace colpro {

struct AdamWConfig {
  Real lr = 0.05;
  Real beta1 = 0.9;
  Real beta2 = 0.95;
  Real eps = 1e-8;
  Real weight_decay = 0.15;
};

/// Decoupled-weight-decay Adam with bias correction. Zero-initialized
/// moments; a NaN/Inf gradient aborts with the parameter's name.
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg);

  void step();
  void zero_grad();
  std::int64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Moments {
    Mat m, v;
  };
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<Moments> state_;
  AdamWConfig cfg_;
  std::int64_t t_ = 0;
};

}  // namespace colpro
