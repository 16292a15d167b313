#pragma once

#include <cstddef>

namespace toxspan {
namespace nn {

// Building blocks for the character tagger, all over raw double buffers in
// row-major layout. Forward functions take separate output storage; the
// backward functions accumulate (+=) into parameter gradients and write
// input gradients, matching how a per-sentence backward pass composes.

inline constexpr double kLayerNormEpsilon = 1e-8;

// y[m x n] = x[m x k] * w[k x n] + b[n]
void linear_forward(const double* x, const double* w, const double* b,
                    double* y, std::size_t m, std::size_t k, std::size_t n);

// Given dy[m x n]: dw += x^T dy, db += column sums of dy, dx = dy w^T.
// dx may be null when the input gradient is not needed.
void linear_backward(const double* x, const double* w, const double* dy,
                     double* dw, double* db, double* dx,
                     std::size_t m, std::size_t k, std::size_t n);

void relu_forward(const double* x, double* y, std::size_t n);
// dx = dy where x > 0 else 0 (computed from the forward input).
void relu_backward(const double* x, const double* dy, double* dx, std::size_t n);

double sigmoid(double x);

// Row-wise softmax over x[m x n] with max subtraction.
void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n);

// Backward through row-wise softmax: dx = y * (dy - sum(dy * y)) per row.
void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           std::size_t m, std::size_t n);

// Per-row layer norm over x[m x n]: xhat = (x - mean) / sqrt(var + eps),
// y = xhat * gamma + beta. Stores xhat and the inverse stddev for backward.
void layer_norm_forward(const double* x, const double* gamma, const double* beta,
                        double* y, double* xhat, double* inv_std,
                        std::size_t m, std::size_t n);

void layer_norm_backward(const double* xhat, const double* inv_std,
                         const double* gamma, const double* dy,
                         double* dgamma, double* dbeta, double* dx,
                         std::size_t m, std::size_t n);

}  // namespace nn
}  // namespace toxspan
