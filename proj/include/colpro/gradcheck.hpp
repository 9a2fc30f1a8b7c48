#pragma once

#include <functional>
#include <vector>

#include "colpro/rng.hpp"
#include "colpro/tensor.hpp"

namespace colpro {

struct GradCheckCoordinate {
  std::size_t param;  // index into the params vector
  Index row, col;
  Real analytic;
  Real numeric;
  Real abs_err;
  Real rel_err;
};

struct GradCheckReport {
  std::vector<GradCheckCoordinate> coords;
  Real max_rel_err = 0;
  Real mean_rel_err = 0;
  Real max_abs_err = 0;
  /// Fraction of sampled coordinates with rel_err below the tolerance.
  Real pass_fraction = 0;
  bool passed = false;
};

struct GradCheckOptions {
  Real epsilon = 1e-5;
  Real tolerance = 1e-4;
  /// Coordinates sampled across all parameters; 0 means every coordinate.
  std::size_t sample_coords = 0;
  /// Minimum passing fraction for the overall verdict.
  Real required_fraction = 1.0;
  std::uint64_t seed = 0;
};

/// Central-difference oracle for a scalar-valued function of the given
/// parameters. The analytic gradient comes from one taped backward pass; the
/// numeric one from (f(p+eps e) - f(p-eps e)) / 2 eps per sampled coordinate.
/// f is evaluated untaped for the numeric probes and must be deterministic;
/// two equal-value evaluations are required up front, else the oracle is
/// invalid and an OracleError is thrown.
GradCheckReport check_gradients(const std::function<Tensor()>& f,
                                std::vector<Tensor> params,
                                const GradCheckOptions& opts = {});

}  // namespace colpro
