// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "proctrack/tensor.hpp"

namespace proctrack {

// Evaluates a scalar loss at `point`. When `grads` is non-null the callee also
// fills one gradient tensor per point entry (typically by running a tape).
using DiffFn = std::function<double(const std::vector<Tensor>& point, std::vector<Tensor>* grads)>;

struct GradCheckOptions {
  double h = 1e-5;        // central-difference step
  double rel_tol = 1e-4;  // relative-error threshold
  double abs_tol = 1e-6;  // absolute fallback when both gradients are near zero
};

struct GradCheckReport {
  bool pass = true;
  int checked = 0;
  double max_rel_err = 0.0;       // over elements that passed the abs fallback
  std::string worst_location;     // "tensor 1 elem 3"
  std::vector<std::string> failures;

  std::string to_string() const;
};

// Central finite differences against analytic gradients, element by element.
// Non-finite loss or gradient values fail with the offending location.
GradCheckReport gradcheck(const DiffFn& f, std::vector<Tensor> point,
                          const GradCheckOptions& opt = {});

}  // namespace proctrack
