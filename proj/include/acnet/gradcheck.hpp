#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "acnet/tensor.hpp"

namespace acnet {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::int64_t worst_coord = -1;
  std::int64_t coords_checked = 0;
  bool pass = false;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Check at most this many coordinates; <= 0 means all. Above the limit a
  // seeded random subset is drawn.
  std::int64_t max_coords = 0;
  std::uint64_t seed = 0;
};

// Compares the analytic gradient of sum(fn(x)) with central finite
// differences, coordinate by coordinate. fn must read x through the handle
// it is given (its data is perturbed in place and restored) and must be a
// pure function of x's values.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& fn, Tensor x,
                           const GradCheckOptions& opt = {});

std::string to_string(const GradCheckReport& r);

}  // namespace acnet
