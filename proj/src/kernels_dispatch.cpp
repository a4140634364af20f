// SPDX-License-Identifier: Apache-2.0
#include "locatt/kernels.hpp"

#include <cstdlib>
#include <string>

#include "locatt/error.hpp"

namespace locatt::kernels {
namespace {

const Ops* resolve(std::string_view name) {
  if (name == "scalar") return &scalar();
  if (name == "avx2") {
    const Ops* ops = avx2();
    if (!ops) throw config_error("avx2 kernels requested but unsupported on this CPU");
    return ops;
  }
  if (name == "auto") {
    const Ops* ops = avx2();
    return ops ? ops : &scalar();
  }
  throw config_error("unknown kernel implementation '" + std::string(name) +
                     "', expected scalar, avx2, or auto");
}

const Ops*& current() {
  static const Ops* ops = [] {
    const char* env = std::getenv("LOCATT_KERNELS");
    return resolve(env && *env ? env : "auto");
  }();
  return ops;
}

}  // namespace

const Ops& active() { return *current(); }

void select(std::string_view name) { current() = resolve(name); }

}  // namespace locatt::kernels
