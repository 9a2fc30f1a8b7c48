#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "colpro/dense.hpp"

namespace colpro {

/// Tensor shape: {} scalar, {n} vector, {r, c} matrix. Storage is always a
/// row-major matrix (scalars 1x1, vectors 1xn) so every op lowers to Eigen.
using Shape = std::vector<Index>;

/// Reference-counted dense tensor with an optional gradient buffer.
///
/// Values are immutable once an op has produced them, except that the
/// gradient-check harness may nudge leaf values through mutable_value().
/// Gradients accumulate additively during the backward sweep; leaves created
/// with requires_grad start with a zeroed gradient so unreached leaves read
/// as zero rather than absent.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, Real v, bool requires_grad = false);
  static Tensor scalar(Real v, bool requires_grad = false);
  static Tensor from_matrix(Mat m, bool requires_grad = false);
  static Tensor vector(std::vector<Real> v, bool requires_grad = false);
  /// Shape-checked construction from flat row-major values.
  static Tensor from_values(const Shape& shape, const std::vector<Real>& v,
                            bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  Index rows() const { return n_->value.rows(); }
  Index cols() const { return n_->value.cols(); }
  Index numel() const { return n_->value.size(); }
  bool is_scalar() const { return n_->shape.empty(); }
  std::string shape_str() const;

  const Mat& value() const { return n_->value; }
  /// For initialization and the finite-difference harness only.
  Mat& mutable_value() { return n_->value; }
  Real scalar_value() const;

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b);
  /// Handle sharing the same value buffer but cut out of the autograd graph.
  Tensor detached() const;

  const Mat& grad() const;
  void zero_grad();
  void accumulate_grad(const Eigen::Ref<const Mat>& g);
  void accumulate_grad_block(Index r0, Index c0,
                             const Eigen::Ref<const Mat>& g);
  /// Mutable gradient buffer (allocated and zeroed on first use). Backward
  /// closures and the optimizer accumulate through this.
  Mat& grad_buffer();

  /// Identity of the underlying buffer (used by tests and the audit).
  const void* id() const { return n_.get(); }

 private:
  struct Node {
    Mat value;
    Mat grad;  // empty until first touched
    Shape shape;
    bool requires_grad = false;
  };

  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
  void ensure_grad();

  std::shared_ptr<Node> n_;
};

/// Per-forward-pass record of backward closures. Ops append; backward() runs
/// them once in reverse and clears the tape. Recording happens only while a
/// Tape is active on the current thread and gradients are globally enabled,
/// so distinct tapes on distinct threads never share state.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::function<void()> backward_fn);
  std::size_t size() const { return records_.size(); }

  /// Seeds d(loss)/d(loss)=1 and sweeps the tape in reverse, once per node.
  /// Returns the number of records visited; the tape is cleared afterwards
  /// (single-use, matching the per-forward-pass lifetime).
  std::size_t backward(const Tensor& loss);

  void clear() { records_.clear(); }

 private:
  std::vector<std::function<void()>> records_;
  Tape* previous_ = nullptr;
};

/// RAII gradient off-switch: ops executed in scope never extend the tape and
/// produce requires_grad=false results.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

/// True when the op should leave a record: gradients enabled, a tape is
/// active, and at least one participating tensor requires grad.
bool should_record(std::initializer_list<const Tensor*> inputs);

}  // namespace colpro
