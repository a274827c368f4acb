#include "wavegnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "wavegnn/errors.hpp"

namespace wavegnn {

namespace {

double evaluate(const LossBuilder& loss, const ParamStore& params) {
  Tape tape;
  return loss(tape, params).value().item();
}

}  // namespace

GradCheckReport finite_diff_check(const LossBuilder& loss, ParamStore params,
                                  double epsilon, double tol_rel) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-4)) {
    throw ContractError("finite-difference epsilon must lie in [1e-7, 1e-4]");
  }
  const double first = evaluate(loss, params);
  const double second = evaluate(loss, params);
  if (std::memcmp(&first, &second, sizeof(double)) != 0) {
    throw DeterminismError("loss differs between two evaluations at the same parameters");
  }

  Tape tape;
  Var out = loss(tape, params);
  tape.reverse_sweep(out);
  const GradientSet analytic = tape.parameter_gradients(params);

  GradCheckReport report;
  for (std::size_t index = 0; index < params.size(); ++index) {
    const Parameter& p = params.entry(index);
    if (!p.trainable) continue;
    GradCheckEntry entry;
    entry.name = p.name;
    entry.scalars = p.value.numel();
    auto values = params.values(index);
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + epsilon;
      const double up = evaluate(loss, params);
      values[k] = saved - epsilon;
      const double down = evaluate(loss, params);
      values[k] = saved;

      const double numeric = (up - down) / (2.0 * epsilon);
      const double exact = analytic[index][k];
      const double abs_err = std::abs(numeric - exact);
      const double magnitude = std::max(std::abs(numeric), std::abs(exact));
      const double rel = magnitude > 0.0 ? abs_err / magnitude : 0.0;
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      // Below this magnitude the absolute floor can excuse a large relative error.
      if (magnitude >= kGradCheckAbsFloor / tol_rel) {
        entry.max_rel_error = std::max(entry.max_rel_error, rel);
      }
      if (abs_err > kGradCheckAbsFloor && rel > tol_rel) entry.passed = false;
    }
    report.checked_scalars += entry.scalars;
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace wavegnn
