#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mata/core/tensor.hpp"

namespace mata::core {

// Named parameter collection; std::map keeps iteration deterministic (sorted
// by name), which checkpointing and Adam rely on.
using ParamStore = std::map<std::string, Tensor>;

inline const Tensor& param(const ParamStore& s, const std::string& name) {
  auto it = s.find(name);
  if (it == s.end()) throw ContractError("parameter not found: " + name);
  return it->second;
}

// uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) from a stream keyed by the
// parameter name, so initial values depend only on (seed, name, shape) and
// not on which other parameters exist in the run.
inline Tensor& add_param(ParamStore& s, const std::string& name, Shape shape,
                         std::size_t fan_in, std::uint64_t seed) {
  Rng rng = derive_rng(seed, name);
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  return s[name] = Tensor::uniform(std::move(shape), -bound, bound, rng);
}

inline Tensor& add_zero_param(ParamStore& s, const std::string& name, Shape shape) {
  return s[name] = Tensor::zeros(std::move(shape));
}

}  // namespace mata::core
