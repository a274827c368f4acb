#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wavegnn/autodiff.hpp"
#include "wavegnn/params.hpp"

namespace wavegnn {

/// Builds a scalar loss on the given tape from the given parameters.
using LossBuilder = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckEntry {
  std::string name;
  std::size_t scalars = 0;
  /// Largest relative error among scalars whose gradient magnitude is at
  /// least floor / tol_rel, where the relative test alone decides.
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  std::size_t checked_scalars = 0;
  bool passed = true;
};

inline constexpr double kGradCheckAbsFloor = 1e-8;

/// Compares tape gradients with central differences for every trainable
/// scalar. A scalar passes when |analytic - numeric| <= 1e-8 or the
/// relative error is at most `tol_rel`. Throws DeterminismError when two
/// evaluations at the same point disagree.
GradCheckReport finite_diff_check(const LossBuilder& loss, ParamStore params,
                                  double epsilon = 1e-6, double tol_rel = 1e-4);

}  // namespace wavegnn
