// SPDX-License-Identifier: Apache-2.0
#include "locatt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "locatt/error.hpp"

namespace locatt {
namespace {

double eval_loss(const std::function<Tensor(Tape&)>& loss_fn) {
  Tape tape;
  const double v = loss_fn(tape).value();
  if (!std::isfinite(v)) throw eval_error("grad_check: loss is not finite");
  return v;
}

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

}  // namespace

GradCheckReport grad_check(std::span<const std::pair<std::string, Tensor>> params,
                           const std::function<Tensor(Tape&)>& loss_fn, double h) {
  for (const auto& [name, p] : params) Tensor(p).clear_grad();

  Tape tape;
  Tensor loss = loss_fn(tape);
  if (!std::isfinite(loss.value())) throw eval_error("grad_check: loss is not finite");
  tape.backward(loss);

  GradCheckReport report;
  for (const auto& [name, p] : params) {
    std::vector<double> analytic(p.size(), 0.0);
    if (p.has_grad()) analytic = p.grad();

    GradCheckEntry entry;
    entry.name = name;
    Tensor param = p;
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double orig = param.data()[i];
      param.data()[i] = orig + h;
      const double f_plus = eval_loss(loss_fn);
      param.data()[i] = orig - h;
      const double f_minus = eval_loss(loss_fn);
      param.data()[i] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double err = rel_err(analytic[i], numeric);
      if (i == 0 || err > entry.max_rel_err) {
        entry.max_rel_err = err;
        entry.analytic = analytic[i];
        entry.numeric = numeric;
        entry.index = i;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.params.push_back(std::move(entry));
  }
  return report;
}

}  // namespace locatt
