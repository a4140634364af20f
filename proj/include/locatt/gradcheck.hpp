// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "locatt/tensor.hpp"

namespace locatt {

// Worst element of one parameter in a finite-difference comparison.
struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t index = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> params;
  double max_rel_err = 0.0;

  bool all_within(double tol) const {
    for (const auto& p : params)
      if (!(p.max_rel_err < tol)) return false;
    return true;
  }
};

// Compares the tape gradient of loss_fn against central differences,
// element by element, for every listed parameter. loss_fn must build
// its graph on the tape it is handed and return a single-element loss.
// Relative error is |a - n| / max(|a|, |n|, 1e-8). A non-finite loss
// value throws eval_error.
GradCheckReport grad_check(std::span<const std::pair<std::string, Tensor>> params,
                           const std::function<Tensor(Tape&)>& loss_fn, double h = 1e-5);

}  // namespace locatt
