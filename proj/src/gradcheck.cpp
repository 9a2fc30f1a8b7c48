#include "colpro/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "colpro/errors.hpp"

namespace colpro {

namespace {

Real eval_untaped(const std::function<Tensor()>& f) {
  NoGradGuard guard;
  return f().scalar_value();
}

}  // namespace

GradCheckReport check_gradients(const std::function<Tensor()>& f,
                                std::vector<Tensor> params,
                                const GradCheckOptions& opts) {
  if (opts.epsilon <= 0) throw ContractError("check_gradients: epsilon <= 0");
  if (params.empty()) throw ContractError("check_gradients: no parameters");

  const Real probe0 = eval_untaped(f);
  const Real probe1 = eval_untaped(f);
  if (!(probe0 == probe1))
    throw OracleError(
        "check_gradients: f is not deterministic, repeated evaluations "
        "differ");

  // Analytic gradients from one taped pass.
  for (Tensor& p : params) p.zero_grad();
  {
    Tape tape;
    Tensor loss = f();
    tape.backward(loss);
  }

  // Enumerate candidate coordinates.
  struct Coord {
    std::size_t param;
    Index row, col;
  };
  std::vector<Coord> all;
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    for (Index i = 0; i < params[pi].rows(); ++i)
      for (Index j = 0; j < params[pi].cols(); ++j) all.push_back({pi, i, j});

  std::vector<Coord> picked;
  if (opts.sample_coords == 0 || opts.sample_coords >= all.size()) {
    picked = all;
  } else {
    Rng rng(opts.seed ^ 0x67C6697351FF4AEAULL);
    std::vector<std::size_t> idx(all.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    idx.resize(opts.sample_coords);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) picked.push_back(all[i]);
  }

  GradCheckReport report;
  Real rel_sum = 0;
  std::size_t passing = 0;
  for (const Coord& c : picked) {
    Mat& buf = params[c.param].mutable_value();
    const Real saved = buf(c.row, c.col);
    buf(c.row, c.col) = saved + opts.epsilon;
    const Real up = eval_untaped(f);
    buf(c.row, c.col) = saved - opts.epsilon;
    const Real down = eval_untaped(f);
    buf(c.row, c.col) = saved;

    const Real numeric = (up - down) / (2.0 * opts.epsilon);
    const Real analytic = params[c.param].grad()(c.row, c.col);
    const Real abs_err = std::abs(analytic - numeric);
    const Real denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
    const Real rel_err = abs_err / denom;

    report.coords.push_back({c.param, c.row, c.col, analytic, numeric,
                             abs_err, rel_err});
    report.max_rel_err = std::max(report.max_rel_err, rel_err);
    report.max_abs_err = std::max(report.max_abs_err, abs_err);
    rel_sum += rel_err;
    if (rel_err < opts.tolerance) ++passing;
  }
  report.mean_rel_err = rel_sum / static_cast<Real>(picked.size());
  report.pass_fraction =
      static_cast<Real>(passing) / static_cast<Real>(picked.size());
  report.passed = report.pass_fraction >= opts.required_fraction;
  return report;
}

}  // namespace colpro
