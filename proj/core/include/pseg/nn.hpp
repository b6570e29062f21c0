#pragma once

// Row-wise dense building blocks shared by the encoder and decoder. Matrices
// are rank-2 tensors; weights use the (out_features, in_features) layout.

#include "pseg/tensor.hpp"

namespace pseg::nn {

/// y = x W^T + b. `bias` may be a null tensor.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// C = A B^T for A (n, k) and B (m, k).
Tensor matmul_nt(const Tensor& a, const Tensor& b);

/// C = A B for A (n, k) and B (k, m).
Tensor matmul(const Tensor& a, const Tensor& b);

/// Normalizes every row over its last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);

void gelu_inplace(Tensor& x);
void relu_inplace(Tensor& x);
void add_inplace(Tensor& x, const Tensor& y);
Tensor add(const Tensor& x, const Tensor& y);

}  // namespace pseg::nn
