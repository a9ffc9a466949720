#pragma once

#include "memf/tensor.hpp"

namespace memf::kern {

// Raw tensor kernels shared by the autodiff tape and the plain inference
// paths. Both sides must route through these so that a model's training-time
// forward and its inference forward agree bit-for-bit.

/// W [m x k] * x [k] + b [m].
Tensor affine_vec(const Tensor& W, const Tensor& b, const Tensor& x);
/// X [T x k] * W^T [k x m] + broadcast b -> [T x m].
Tensor affine_rows(const Tensor& X, const Tensor& W, const Tensor& b);
Tensor matmul(const Tensor& A, const Tensor& B);     // [m x k] * [k x n]
Tensor matmul_nt(const Tensor& A, const Tensor& B);  // A * B^T
Tensor matmul_tn(const Tensor& A, const Tensor& B);  // A^T * B

void add_inplace(Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

Tensor tanh(const Tensor& a);
Tensor gelu(const Tensor& a);
double gelu_deriv(double x);

/// Stabilized softmax with temperature: whole tensor for rank 1, per row for
/// rank 2.
Tensor softmax(const Tensor& a, double tau = 1.0);
/// Per-row layer norm; for rank-1 input normalizes the whole vector.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor weighted_rowsum(const Tensor& X, const Tensor& w);
double sse(const Tensor& a, const Tensor& b);
double l2_dist(const Tensor& a, const Tensor& b);

/// (x - mean) / max(std, floor), population std over the whole tensor.
Tensor standardize(const Tensor& x, double sigma_floor = 1e-8);

} // namespace memf::kern
