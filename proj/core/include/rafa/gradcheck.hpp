#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rafa/tensor.hpp"

namespace rafa {

struct GradCheckOptions {
  double eps = 1e-6;
  double tolerance = 1e-4;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor),
  // so entries with vanishing gradient are compared in absolute terms.
  double relative_floor = 1e-3;
};

struct GradCheckEntry {
  std::string name;
  std::size_t size = 0;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  bool passed() const;
  double max_relative_error() const;
  std::vector<std::string> failing() const;
};

/// Compares reverse-mode gradients of the scalar `loss_fn()` against central
/// differences, one parameter element at a time. `loss_fn` must be
/// deterministic. Parameter values are restored before returning; their grad
/// buffers hold the analytic gradient afterwards.
GradCheckReport gradient_check(const std::function<Tensor()>& loss_fn,
                               std::span<NamedTensor> params,
                               const GradCheckOptions& options = {});

}  // namespace rafa
