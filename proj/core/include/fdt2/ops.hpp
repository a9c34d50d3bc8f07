#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fdt2/tensor.hpp"

namespace fdt2 {

// Matrix products over rank-2 tensors. Accumulation is in double and the
// loop order is fixed, so results are bit-reproducible.
Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// a^T * b without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

void add_inplace(Tensor& dst, const Tensor& src);
void scale_inplace(Tensor& t, Real s);
// Adds a 1 x n bias row to every row of an m x n matrix.
void add_row_bias(Tensor& t, const Tensor& bias);
// Column sums of an m x n matrix as a 1 x n row.
Tensor column_sums(const Tensor& t);

Tensor softmax_rows(const Tensor& s);

// GELU, tanh approximation:
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
inline constexpr Real kGeluSqrt2OverPi = 0.7978845608028654;
inline constexpr Real kGeluCubic = 0.044715;
Real gelu(Real x);
Real gelu_grad(Real x);
Real sigmoid(Real x);

Tensor vstack(const Tensor& top, const Tensor& bottom);
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& t, std::size_t begin, std::size_t end);
void set_cols(Tensor& dst, std::size_t begin, const Tensor& src);
void set_rows(Tensor& dst, std::size_t begin, const Tensor& src);

Real dot(std::span<const Real> a, std::span<const Real> b);
Real l2_norm(std::span<const Real> a);
// Cosine similarity; 1 when both vectors are zero, 0 when exactly one is.
Real cosine(std::span<const Real> a, std::span<const Real> b);

// ---------------------------------------------------------------------------
// Layer normalization with learned gain and bias (both 1 x d).

inline constexpr Real kLayerNormEps = 1e-5;

struct LayerNormTape {
    Tensor normalized;             // (x - mean) / std
    std::vector<Real> inv_std;     // per row
};

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  LayerNormTape* tape = nullptr);
// Returns dx; accumulates into dgain / dbias.
Tensor layer_norm_backward(const Tensor& dy, const Tensor& gain, const LayerNormTape& tape,
                           Tensor& dgain, Tensor& dbias);

// ---------------------------------------------------------------------------
// Two-layer perceptron: gelu(x w1 + b1) w2 + b2.

struct MlpWeights {
    Tensor w1, b1, w2, b2;
};

struct MlpTape {
    Tensor input;
    Tensor pre_activation;
    Tensor activation;
};

Tensor mlp_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                   const Tensor& b2);
Tensor mlp_forward(const Tensor& x, const MlpWeights& w, MlpTape* tape = nullptr);
// Returns dx; accumulates parameter gradients into grad.
Tensor mlp_backward(const Tensor& dy, const MlpWeights& w, const MlpTape& tape, MlpWeights& grad);

}  // namespace fdt2
