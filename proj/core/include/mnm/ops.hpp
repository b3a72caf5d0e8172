#pragma once

// Forward kernels and their vector-Jacobian products. Every function here is
// pure; the tape in autodiff.hpp composes them into reverse-mode gradients.

#include <cstddef>
#include <vector>

#include "mnm/matrix.hpp"

namespace mnm {

enum class Activation { ReLU, GELU };

inline constexpr double kLayerNormEpsilon = 1e-5;

Matrix matmul(const Matrix& a, const Matrix& b);
/// Returns dA = dY·Bᵀ.
Matrix matmul_grad_lhs(const Matrix& dy, const Matrix& b);
/// Returns dB = Aᵀ·dY.
Matrix matmul_grad_rhs(const Matrix& a, const Matrix& dy);

Matrix transpose(const Matrix& a);

/// Per-row standardization followed by gamma/beta (both 1×cols).
Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                  double epsilon = kLayerNormEpsilon);

struct LayerNormGrads {
  Matrix dx;
  Matrix dgamma;
  Matrix dbeta;
};
LayerNormGrads layer_norm_backward(const Matrix& x, const Matrix& gamma, const Matrix& dy,
                                   double epsilon = kLayerNormEpsilon);

double activate(double x, Activation kind);
double activate_derivative(double x, Activation kind);
Matrix activation(const Matrix& x, Activation kind);
Matrix activation_backward(const Matrix& x, const Matrix& dy, Activation kind);

/// Softmax over the valid entries of z; invalid entries come out exactly 0.
std::vector<double> masked_softmax(std::span<const double> z, const MaskBits& mask);

/// Row-wise masked softmax. Rows whose row_mask bit is false are all-zero.
Matrix masked_softmax_rows(const Matrix& z, const MaskBits& row_mask, const MaskBits& col_mask);
Matrix masked_softmax_rows_backward(const Matrix& y, const Matrix& dy);

struct MaxPoolResult {
  Matrix value;                    // 1×cols
  std::vector<std::size_t> argmax;  // winning row per column
};

/// Column-wise maximum over valid rows; ties go to the first valid row.
MaxPoolResult masked_max_pool(const Matrix& x, const MaskBits& mask);
Matrix masked_max_pool_backward(const std::vector<std::size_t>& argmax, const Matrix& dy,
                                std::size_t rows);

}  // namespace mnm
