#pragma once

#include <vector>

#include "colpro/tensor.hpp"

namespace colpro {

// Differentiable free functions over Tensor. Each op computes its value
// eagerly and, when recording is active, appends one backward closure to the
// current Tape. Reduction loop order is fixed so identical seeds replay
// bit-identically.

/// Matrix product a[m x k] * b[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real c);

/// a[r x c] + bias[c] broadcast over rows.
Tensor add_row_broadcast(const Tensor& a, const Tensor& bias);
/// n copies of a length-c vector stacked into an n x c matrix.
Tensor repeat_rows(const Tensor& v, Index n);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, Index begin, Index count);
Tensor slice_cols(const Tensor& a, Index begin, Index count);
/// Gathers rows by index (embedding lookup / feature selection). Repeated
/// indices accumulate gradient additively.
Tensor select_rows(const Tensor& a, const std::vector<int>& rows);

/// Row-wise softmax over the last axis, max-subtracted for stability.
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

/// -log softmax(logits)[target] for a single logit vector.
Tensor cross_entropy(const Tensor& logits, int target);
/// Mean of per-row -log softmax(row)[target[row]].
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets);

Tensor sum(const Tensor& a);
Tensor mean_all(const Tensor& a);
/// Column means: [r x c] -> [c].
Tensor mean_rows(const Tensor& a);

/// Per-row x * gain / sqrt(mean(x^2) + eps).
Tensor rms_norm_rows(const Tensor& x, const Tensor& gain, Real eps = 1e-6);
Tensor silu(const Tensor& x);

Tensor dot(const Tensor& a, const Tensor& b);
/// Cosine of two vectors; caller guarantees nonzero norms.
Tensor cosine_sim(const Tensor& a, const Tensor& b);

Tensor stack_scalars(const std::vector<Tensor>& scalars);
Tensor logsumexp(const Tensor& v);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) {
  return hadamard(a, b);
}
inline Tensor operator*(Real c, const Tensor& a) { return scale(a, c); }
inline Tensor operator*(const Tensor& a, Real c) { return scale(a, c); }

}  // namespace colpro
