#pragma once

#include <concepts>

#include "fdt2/errors.hpp"
#include "fdt2/tensor.hpp"

namespace fdt2 {

// Central-difference gradient of a scalar function at x:
//   g_i = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps)
template <std::invocable<const Tensor&> F>
Tensor finite_diff_grad(F&& f, const Tensor& x, Real eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    Tensor probe = x;
    Tensor grad = zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Real saved = probe[i];
        probe[i] = saved + eps;
        const Real up = f(static_cast<const Tensor&>(probe));
        probe[i] = saved - eps;
        const Real down = f(static_cast<const Tensor&>(probe));
        probe[i] = saved;
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

}  // namespace fdt2
