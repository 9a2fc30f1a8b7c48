#include "colpro/ops.hpp"

#include <cmath>

#include "colpro/errors.hpp"

namespace colpro {

namespace {

void check_rank2_compatible(const Tensor& a, const Tensor& b,
                            const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(what) + ": shape mismatch " +
                         a.shape_str() + " vs " + b.shape_str());
}

Shape matmul_shape(const Tensor& a, const Tensor& b) {
  if (a.shape().size() == 1) return {b.cols()};
  return {a.rows(), b.cols()};
}

Mat softmax_rows_value(const Mat& x) {
  Mat y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Real m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

Mat log_softmax_rows_value(const Mat& x) {
  Mat y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Real m = x.row(i).maxCoeff();
    const Real lse = m + std::log((x.row(i).array() - m).exp().sum());
    y.row(i) = x.row(i).array() - lse;
  }
  return y;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ, " + a.shape_str() +
                         " x " + b.shape_str());
  Tensor out = Tensor::zeros(matmul_shape(a, b));
  out.mutable_value().noalias() = a.value() * b.value();
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc]() mutable {
      const Mat& g = oc.grad();
      if (ac.requires_grad())
        ac.grad_buffer().noalias() += g * bc.value().transpose();
      if (bc.requires_grad())
        bc.grad_buffer().noalias() += ac.value().transpose() * g;
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out = Tensor::from_matrix(a.value().transpose());
  if (should_record({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record(
        [ac, oc]() mutable { ac.accumulate_grad(oc.grad().transpose()); });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_rank2_compatible(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  out.mutable_value() = a.value() + b.value();
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc]() mutable {
      if (ac.requires_grad()) ac.accumulate_grad(oc.grad());
      if (bc.requires_grad()) bc.accumulate_grad(oc.grad());
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_rank2_compatible(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  out.mutable_value() = a.value() - b.value();
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc]() mutable {
      if (ac.requires_grad()) ac.accumulate_grad(oc.grad());
      if (bc.requires_grad()) bc.accumulate_grad(-oc.grad());
    });
  }
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_rank2_compatible(a, b, "hadamard");
  Tensor out = Tensor::zeros(a.shape());
  out.mutable_value() = a.value().cwiseProduct(b.value());
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc]() mutable {
      if (ac.requires_grad())
        ac.accumulate_grad(oc.grad().cwiseProduct(bc.value()));
      if (bc.requires_grad())
        bc.accumulate_grad(oc.grad().cwiseProduct(ac.value()));
    });
  }
  return out;
}

Tensor scale(const Tensor& a, Real c) {
  Tensor out = Tensor::zeros(a.shape());
  out.mutable_value() = a.value() * c;
  if (should_record({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record(
        [ac, oc, c]() mutable { ac.accumulate_grad(c * oc.grad()); });
  }
  return out;
}

Tensor add_row_broadcast(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw DimensionError("add_row_broadcast: bias " + bias.shape_str() +
                         " does not match row width of " + a.shape_str());
  Tensor out = Tensor::from_matrix(a.value().rowwise() + bias.value().row(0));
  if (should_record({&a, &bias})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = bias, oc = out;
    Tape::active()->record([ac, bc, oc]() mutable {
      if (ac.requires_grad()) ac.accumulate_grad(oc.grad());
      if (bc.requires_grad()) bc.accumulate_grad(oc.grad().colwise().sum());
    });
  }
  return out;
}

Tensor repeat_rows(const Tensor& v, Index n) {
  if (v.rows() != 1)
    throw DimensionError("repeat_rows expects a vector, got " + v.shape_str());
  Mat m(n, v.cols());
  m.rowwise() = v.value().row(0);
  Tensor out = Tensor::from_matrix(std::move(m));
  if (should_record({&v})) {
    out.set_requires_grad(true);
    Tensor vc = v, oc = out;
    Tape::active()->record([vc, oc]() mutable {
      vc.accumulate_grad(oc.grad().colwise().sum());
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of zero parts");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const Tensor& p : parts) {
    if (p.cols() != cols)
      throw DimensionError("concat_rows: column mismatch " + p.shape_str());
    rows += p.rows();
  }
  Mat m(rows, cols);
  Index at = 0;
  for (const Tensor& p : parts) {
    m.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  Tensor out = Tensor::from_matrix(std::move(m));
  bool rec = false;
  for (const Tensor& p : parts) rec = rec || should_record({&p});
  if (rec) {
    out.set_requires_grad(true);
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    Tape::active()->record([pc, oc]() mutable {
      Index at = 0;
      for (Tensor& p : pc) {
        if (p.requires_grad())
          p.accumulate_grad(oc.grad().middleRows(at, p.rows()));
        at += p.rows();
      }
    });
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  return concat_rows(std::vector<Tensor>{a, b});
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols of zero parts");
  Index cols = 0;
  const Index rows = parts.front().rows();
  for (const Tensor& p : parts) {
    if (p.rows() != rows)
      throw DimensionError("concat_cols: row mismatch " + p.shape_str());
    cols += p.cols();
  }
  Mat m(rows, cols);
  Index at = 0;
  for (const Tensor& p : parts) {
    m.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  Tensor out = Tensor::from_matrix(std::move(m));
  bool rec = false;
  for (const Tensor& p : parts) rec = rec || should_record({&p});
  if (rec) {
    out.set_requires_grad(true);
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    Tape::active()->record([pc, oc]() mutable {
      Index at = 0;
      for (Tensor& p : pc) {
        if (p.requires_grad())
          p.accumulate_grad(oc.grad().middleCols(at, p.cols()));
        at += p.cols();
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows())
    throw DimensionError("slice_rows out of range for " + a.shape_str());
  Tensor out = Tensor::from_matrix(a.value().middleRows(begin, count));
  if (should_record({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record([ac, oc, begin]() mutable {
      ac.accumulate_grad_block(begin, 0, oc.grad());
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols())
    throw DimensionError("slice_cols out of range for " + a.shape_str());
  Tensor out = Tensor::from_matrix(a.value().middleCols(begin, count));
  if (should_record({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record([ac, oc, begin]() mutable {
      ac.accumulate_grad_block(0, begin, oc.grad());
    });
  }
  return out;
}

Tensor select_rows(const Tensor& a, const std::vector<int>& rows) {
  Mat m(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows())
      throw IndexError("select_rows: row " + std::to_string(rows[i]) +
                       " out of range for " + a.shape_str());
    m.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  Tensor out = Tensor::from_matrix(std::move(m));
  if (should_record({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    std::vector<int> idx = rows;
    Tape::active()->record([ac, oc, idx]() mutable {
      const Mat& g = oc.grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        ac.accumulate_grad_block(idx[i], 0, g.row(static_cast<Index>(i)));
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.cols() == 0)
    throw DimensionError("softmax over an empty axis, shape " + x.shape_str());
  Tensor out = Tensor::zeros(x.shape());
  out.mutable_value() = softmax_rows_value(x.value());
  if (should_record({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc]() mutable {
      const Mat& y = oc.value();
      const Mat& g = oc.grad();
      Mat dx(y.rows(), y.cols());
      for (Index i = 0; i < y.rows(); ++i) {
        const Real dotv = g.row(i).dot(y.row(i));
        dx.row(i) = y.row(i).cwiseProduct((g.row(i).array() - dotv).matrix());
      }
      xc.accumulate_grad(dx);
    });
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& x) {
  if (x.cols() == 0)
    throw DimensionError("log_softmax over an empty axis, shape " +
                         x.shape_str());
  Tensor out = Tensor::zeros(x.shape());
  out.mutable_value() = log_softmax_rows_value(x.value());
  if (should_record({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc]() mutable {
      const Mat& y = oc.value();
      const Mat& g = oc.grad();
      Mat dx(y.rows(), y.cols());
      for (Index i = 0; i < y.rows(); ++i) {
        const Real gs = g.row(i).sum();
        dx.row(i) = g.row(i) - gs * y.row(i).array().exp().matrix();
      }
      xc.accumulate_grad(dx);
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, int target) {
  if (logits.rows() != 1)
    throw DimensionError("cross_entropy expects a logit vector, got " +
                         logits.shape_str());
  if (target < 0 || target >= logits.cols())
    throw IndexError("cross_entropy target " + std::to_string(target) +
                     " out of range [0, " + std::to_string(logits.cols()) +
                     ")");
  return cross_entropy_rows(logits, {target});
}

Tensor cross_entropy_rows(const Tensor& logits,
                          const std::vector<int>& targets) {
  if (static_cast<Index>(targets.size()) != logits.rows())
    throw DimensionError("cross_entropy_rows: " +
                         std::to_string(targets.size()) + " targets for " +
                         logits.shape_str());
  if (logits.rows() == 0) throw ContractError("cross_entropy_rows: no rows");
  for (int t : targets)
    if (t < 0 || t >= logits.cols())
      throw IndexError("cross_entropy target " + std::to_string(t) +
                       " out of range [0, " + std::to_string(logits.cols()) +
                       ")");
  const Mat lsm = log_softmax_rows_value(logits.value());
  Real loss = 0;
  for (Index i = 0; i < lsm.rows(); ++i) loss -= lsm(i, targets[i]);
  loss /= static_cast<Real>(lsm.rows());
  Tensor out = Tensor::scalar(loss);
  if (should_record({&logits})) {
    out.set_requires_grad(true);
    Tensor lc = logits, oc = out;
    std::vector<int> tc = targets;
    Tape::active()->record([lc, oc, tc, lsm]() mutable {
      const Real g = oc.grad()(0, 0) / static_cast<Real>(lsm.rows());
      Mat dx = lsm.array().exp();
      for (Index i = 0; i < dx.rows(); ++i) dx(i, tc[i]) -= 1.0;
      lc.accumulate_grad(g * dx);
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::scalar(a.value().sum());
  if (should_record({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record([ac, oc]() mutable {
      ac.accumulate_grad(
          Mat::Constant(ac.rows(), ac.cols(), oc.grad()(0, 0)));
    });
  }
  return out;
}

Tensor mean_all(const Tensor& a) {
  const Real n = static_cast<Real>(a.numel());
  Tensor out = Tensor::scalar(a.value().sum() / n);
  if (should_record({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record([ac, oc, n]() mutable {
      ac.accumulate_grad(
          Mat::Constant(ac.rows(), ac.cols(), oc.grad()(0, 0) / n));
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw ContractError("mean_rows of an empty matrix");
  const Real r = static_cast<Real>(a.rows());
  Tensor out = Tensor::zeros({a.cols()});
  out.mutable_value() = a.value().colwise().sum() / r;
  if (should_record({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record([ac, oc, r]() mutable {
      Mat dx(ac.rows(), ac.cols());
      dx.rowwise() = oc.grad().row(0) / r;
      ac.accumulate_grad(dx);
    });
  }
  return out;
}

Tensor rms_norm_rows(const Tensor& x, const Tensor& gain, Real eps) {
  if (gain.rows() != 1 || gain.cols() != x.cols())
    throw DimensionError("rms_norm_rows: gain " + gain.shape_str() +
                         " does not match " + x.shape_str());
  const Index r = x.rows(), c = x.cols();
  Mat y(r, c);
  std::vector<Real> inv_rms(static_cast<std::size_t>(r));
  for (Index i = 0; i < r; ++i) {
    const Real ms = x.value().row(i).squaredNorm() / static_cast<Real>(c);
    const Real s = 1.0 / std::sqrt(ms + eps);
    inv_rms[static_cast<std::size_t>(i)] = s;
    y.row(i) = x.value().row(i).cwiseProduct(gain.value().row(0)) * s;
  }
  Tensor out = Tensor::from_matrix(std::move(y));
  if (should_record({&x, &gain})) {
    out.set_requires_grad(true);
    Tensor xc = x, gc = gain, oc = out;
    Tape::active()->record([xc, gc, oc, inv_rms]() mutable {
      const Mat& g = oc.grad();
      const Index rr = xc.rows(), cc = xc.cols();
      if (xc.requires_grad()) {
        Mat dx(rr, cc);
        for (Index i = 0; i < rr; ++i) {
          const Real s = inv_rms[static_cast<std::size_t>(i)];
          const RowVec gw =
              g.row(i).cwiseProduct(gc.value().row(0));  // dy * gain
          const Real proj = gw.dot(xc.value().row(i));
          dx.row(i) =
              s * gw - (s * s * s * proj / static_cast<Real>(cc)) *
                           xc.value().row(i);
        }
        xc.accumulate_grad(dx);
      }
      if (gc.requires_grad()) {
        RowVec dg = RowVec::Zero(cc);
        for (Index i = 0; i < rr; ++i)
          dg += inv_rms[static_cast<std::size_t>(i)] *
                g.row(i).cwiseProduct(xc.value().row(i));
        gc.accumulate_grad(dg);
      }
    });
  }
  return out;
}

Tensor silu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const Mat sig = (1.0 + (-x.value().array()).exp()).inverse().matrix();
  out.mutable_value() = x.value().cwiseProduct(sig);
  if (should_record({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc, sig]() mutable {
      const Mat d = (sig.array() *
                     (1.0 + xc.value().array() * (1.0 - sig.array())))
                        .matrix();
      xc.accumulate_grad(oc.grad().cwiseProduct(d));
    });
  }
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols())
    throw DimensionError("dot: incompatible vectors " + a.shape_str() +
                         " vs " + b.shape_str());
  Tensor out = Tensor::scalar(a.value().row(0).dot(b.value().row(0)));
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc]() mutable {
      const Real g = oc.grad()(0, 0);
      if (ac.requires_grad()) ac.accumulate_grad(g * bc.value());
      if (bc.requires_grad()) bc.accumulate_grad(g * ac.value());
    });
  }
  return out;
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
  if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols())
    throw DimensionError("cosine_sim: incompatible vectors " + a.shape_str() +
                         " vs " + b.shape_str());
  const Real na = a.value().row(0).norm();
  const Real nb = b.value().row(0).norm();
  if (na == 0.0 || nb == 0.0)
    throw NumericError("cosine_sim of a zero vector");
  const Real c = a.value().row(0).dot(b.value().row(0)) / (na * nb);
  Tensor out = Tensor::scalar(c);
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc, na, nb, c]() mutable {
      const Real g = oc.grad()(0, 0);
      if (ac.requires_grad())
        ac.accumulate_grad(g * (bc.value() / (na * nb) -
                                (c / (na * na)) * ac.value()));
      if (bc.requires_grad())
        bc.accumulate_grad(g * (ac.value() / (na * nb) -
                                (c / (nb * nb)) * bc.value()));
    });
  }
  return out;
}

Tensor stack_scalars(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw ContractError("stack_scalars of zero inputs");
  Tensor out = Tensor::zeros({static_cast<Index>(scalars.size())});
  bool rec = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].numel() != 1)
      throw DimensionError("stack_scalars: input " + std::to_string(i) +
                           " is not scalar");
    out.mutable_value()(0, static_cast<Index>(i)) =
        scalars[i].value()(0, 0);
    rec = rec || should_record({&scalars[i]});
  }
  if (rec) {
    out.set_requires_grad(true);
    std::vector<Tensor> sc = scalars;
    Tensor oc = out;
    Tape::active()->record([sc, oc]() mutable {
      const Mat& g = oc.grad();
      for (std::size_t i = 0; i < sc.size(); ++i)
        if (sc[i].requires_grad())
          sc[i].accumulate_grad(
              Mat::Constant(1, 1, g(0, static_cast<Index>(i))));
    });
  }
  return out;
}

Tensor logsumexp(const Tensor& v) {
  if (v.rows() != 1 || v.cols() == 0)
    throw DimensionError("logsumexp expects a nonempty vector, got " +
                         v.shape_str());
  const Real m = v.value().row(0).maxCoeff();
  const Real lse =
      m + std::log((v.value().row(0).array() - m).exp().sum());
  Tensor out = Tensor::scalar(lse);
  if (should_record({&v})) {
    out.set_requires_grad(true);
    Tensor vc = v, oc = out;
    Tape::active()->record([vc, oc, lse]() mutable {
      const Real g = oc.grad()(0, 0);
      vc.accumulate_grad(g *
                         (vc.value().array() - lse).exp().matrix());
    });
  }
  return out;
}

}  // namespace colpro
