#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mata/core/param_store.hpp"

namespace mata::core {

// Per-store Adam state: first/second moment estimates keyed by parameter
// name, plus the shared update counter t (increments once per adam_step).
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments;
};

// In-place Adam update. grads must align with params by name and shape;
// a missing gradient is a contract error, a shape mismatch a dimension error.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, double lr);

}  // namespace mata::core
