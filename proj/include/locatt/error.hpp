// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace locatt {

// Shape disagreement between operands. Messages name both shapes.
struct dim_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Softmax row with every position masked out.
struct mask_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad model, task, or strategy configuration.
struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An operation precondition does not hold at call time.
struct contract_error : std::logic_error {
  using std::logic_error::logic_error;
};

// Invalid user-supplied data (token ids, sequence lengths).
struct input_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Training failure: divergence or a non-finite gradient.
struct train_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A checked function evaluation produced a non-finite value.
struct eval_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace locatt
