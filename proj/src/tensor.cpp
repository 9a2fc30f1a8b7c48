#include "colpro/tensor.hpp"

#include <sstream>

#include "colpro/errors.hpp"

namespace colpro {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local int g_no_grad_depth = 0;

std::pair<Index, Index> storage_dims(const Shape& shape) {
  if (shape.empty()) return {1, 1};
  if (shape.size() == 1) return {1, shape[0]};
  if (shape.size() == 2) return {shape[0], shape[1]};
  throw DimensionError("tensor rank > 2 is not supported");
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  auto [r, c] = storage_dims(shape);
  if (r < 0 || c < 0) throw DimensionError("negative dimension");
  n->value = Mat::Zero(r, c);
  n->shape = shape;
  Tensor t(std::move(n));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::full(const Shape& shape, Real v, bool requires_grad) {
  Tensor t = zeros(shape, false);
  t.n_->value.setConstant(v);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(Real v, bool requires_grad) {
  return full({}, v, requires_grad);
}

Tensor Tensor::from_matrix(Mat m, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = {m.rows(), m.cols()};
  n->value = std::move(m);
  Tensor t(std::move(n));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::vector(std::vector<Real> v, bool requires_grad) {
  return from_values({static_cast<Index>(v.size())}, v, requires_grad);
}

Tensor Tensor::from_values(const Shape& shape, const std::vector<Real>& v,
                           bool requires_grad) {
  Tensor t = zeros(shape, false);
  if (static_cast<Index>(v.size()) != t.numel())
    throw DimensionError("value count " + std::to_string(v.size()) +
                         " does not match shape " + t.shape_str());
  Index k = 0;
  for (Index i = 0; i < t.rows(); ++i)
    for (Index j = 0; j < t.cols(); ++j) t.n_->value(i, j) = v[k++];
  t.set_requires_grad(requires_grad);
  return t;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < n_->shape.size(); ++i) {
    if (i) os << "x";
    os << n_->shape[i];
  }
  os << "]";
  return os.str();
}

Real Tensor::scalar_value() const {
  if (numel() != 1)
    throw ContractError("scalar_value() on non-scalar tensor " + shape_str());
  return n_->value(0, 0);
}

void Tensor::set_requires_grad(bool b) {
  n_->requires_grad = b;
  if (b) ensure_grad();
}

Tensor Tensor::detached() const {
  auto n = std::make_shared<Node>();
  n->value = n_->value;  // Eigen copy; cheap at these sizes and keeps the
                         // frozen view insulated from later grad bookkeeping
  n->shape = n_->shape;
  n->requires_grad = false;
  return Tensor(std::move(n));
}

const Mat& Tensor::grad() const {
  const_cast<Tensor*>(this)->ensure_grad();
  return n_->grad;
}

void Tensor::zero_grad() {
  ensure_grad();
  n_->grad.setZero();
}

void Tensor::accumulate_grad(const Eigen::Ref<const Mat>& g) {
  if (g.rows() != rows() || g.cols() != cols())
    throw DimensionError("gradient shape mismatch for tensor " + shape_str());
  ensure_grad();
  n_->grad += g;
}

void Tensor::accumulate_grad_block(Index r0, Index c0,
                                   const Eigen::Ref<const Mat>& g) {
  ensure_grad();
  n_->grad.block(r0, c0, g.rows(), g.cols()) += g;
}

Mat& Tensor::grad_buffer() {
  ensure_grad();
  return n_->grad;
}

void Tensor::ensure_grad() {
  if (n_->grad.size() == 0)
    n_->grad = Mat::Zero(n_->value.rows(), n_->value.cols());
}

Tape::Tape() {
  previous_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward_fn) {
  records_.push_back(std::move(backward_fn));
}

std::size_t Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got " +
                        (loss.defined() ? loss.shape_str() : "undefined"));
  if (records_.empty())
    throw ContractError("backward on an empty tape (nothing was recorded)");
  const_cast<Tensor&>(loss).accumulate_grad(Mat::Ones(1, 1));
  std::size_t visited = 0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    (*it)();
    ++visited;
  }
  clear();
  return visited;
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_enabled() { return g_no_grad_depth == 0; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled() || Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

}  // namespace colpro
