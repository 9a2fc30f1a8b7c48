#pragma once

#include <vector>

#include "colpro/rng.hpp"
#include "colpro/tensor.hpp"
#include "oracles.hpp"

namespace testutil {

inline colpro::Tensor random_tensor(const colpro::Shape& shape,
                                    colpro::Rng& rng, double lo = -1.0,
                                    double hi = 1.0,
                                    bool requires_grad = false) {
  colpro::Tensor t = colpro::Tensor::zeros(shape, requires_grad);
  for (colpro::Index i = 0; i < t.rows(); ++i)
    for (colpro::Index j = 0; j < t.cols(); ++j)
      t.mutable_value()(i, j) = rng.uniform(lo, hi);
  return t;
}

inline oracle::Grid to_grid(const colpro::Tensor& t) {
  oracle::Grid g(static_cast<std::size_t>(t.rows()),
                 std::vector<double>(static_cast<std::size_t>(t.cols())));
  for (colpro::Index i = 0; i < t.rows(); ++i)
    for (colpro::Index j = 0; j < t.cols(); ++j)
      g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          t.value()(i, j);
  return g;
}

inline double max_abs_diff(const colpro::Mat& a, const oracle::Grid& b) {
  double m = 0;
  for (colpro::Index i = 0; i < a.rows(); ++i)
    for (colpro::Index j = 0; j < a.cols(); ++j)
      m = std::max(m, std::abs(a(i, j) -
                               b[static_cast<std::size_t>(i)]
                                [static_cast<std::size_t>(j)]));
  return m;
}

inline double max_abs_diff(const colpro::Mat& a, const colpro::Mat& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// Heads start zeroed (uniform); tests that need informative head outputs
// fill them with small random values first.
template <typename ModelT>
void randomize_heads(ModelT& model, colpro::Rng& rng, double scale = 0.1) {
  for (auto& [name, t] : model.heads.named_params())
    for (colpro::Index i = 0; i < t.rows(); ++i)
      for (colpro::Index j = 0; j < t.cols(); ++j)
        t.mutable_value()(i, j) = rng.uniform(-scale, scale);
}

}  // namespace testutil
