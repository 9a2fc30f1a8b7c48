#include "colpro/optimizer.hpp"

#include <cmath>

#include "colpro/errors.hpp"

namespace colpro {

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params,
             AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0)) throw ConfigError("AdamW: lr must be > 0");
  if (cfg_.weight_decay < 0) throw ConfigError("AdamW: weight_decay < 0");
  if (!(cfg_.beta1 >= 0 && cfg_.beta1 < 1 && cfg_.beta2 >= 0 &&
        cfg_.beta2 < 1))
    throw ConfigError("AdamW: betas must lie in [0, 1)");
  state_.reserve(params_.size());
  for (const auto& [name, p] : params_)
    state_.push_back({Mat::Zero(p.rows(), p.cols()),
                      Mat::Zero(p.rows(), p.cols())});
}

void AdamW::step() {
  ++t_;
  const Real bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<Real>(t_));
  const Real bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<Real>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& [name, p] = params_[i];
    const Mat& g = p.grad();
    if (!g.allFinite())
      throw NumericError("AdamW: non-finite gradient for parameter '" + name +
                         "'");
    Moments& st = state_[i];
    st.m = cfg_.beta1 * st.m + (1.0 - cfg_.beta1) * g;
    st.v = cfg_.beta2 * st.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const Mat m_hat = st.m / bc1;
    const Mat v_hat = st.v / bc2;
    Mat& value = p.mutable_value();
    value.array() -= cfg_.lr * (m_hat.array() /
                                    (v_hat.array().sqrt() + cfg_.eps) +
                                cfg_.weight_decay * value.array());
  }
}

void AdamW::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

}  // namespace colpro
