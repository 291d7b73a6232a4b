// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite differences against analytic gradients, one parameter
// group at a time.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rqsep/tensor.hpp"

namespace rqsep::testing {

struct GroupCheck {
  std::string name;
  int probes = 0;
  double relative_error = 0.0;  // ||fd - analytic|| / max(||fd||, ||analytic||, floor)
  double analytic_norm = 0.0;
};

struct GradcheckOptions {
  double step = 1e-5;
  int probes_per_group = 4;
  double floor = 1e-8;
  std::uint64_t seed = 1;
};

/// `loss` re-evaluates the objective at the current parameter values;
/// `analytic` must already hold the gradients (a snapshot is taken first).
std::vector<GroupCheck> gradcheck(const std::vector<ParamRef>& params, const std::function<double()>& loss,
                                  const GradcheckOptions& options = {});

double worst(const std::vector<GroupCheck>& checks);

}  // namespace rqsep::testing
