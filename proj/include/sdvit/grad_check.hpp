#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sdvit/tensor.hpp"

namespace sdvit {

using ScalarFn = std::function<Tensor(const std::vector<Tensor>& inputs)>;

// Compares backward() against central differences for every element of
// every input. Returns max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// The inputs are perturbed in place and restored afterwards; f must read them
// through the handles it is given (or through aliases of them).
float grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, float eps);

// grad_check along `directions` random directions: each round checks the
// scalar t -> f(inputs + t * d) at t = 0 and the worst round is returned.
// In f32 this stays meaningful for functions whose per-element gradients
// pass through zero, where per-element relative error is rounding noise.
float directional_grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, float eps,
                             std::size_t directions, std::uint64_t seed);

}  // namespace sdvit
