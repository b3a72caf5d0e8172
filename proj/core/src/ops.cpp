#include "mnm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mnm/errors.hpp"

namespace mnm {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.shape_string() + " by " +
                         b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.cols();
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_grad_lhs(const Matrix& dy, const Matrix& b) {
  // dA(i,k) = sum_j dY(i,j) B(k,j)
  Matrix out(dy.rows(), b.rows());
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    const double* d = dy.row(i).data();
    for (std::size_t k = 0; k < b.rows(); ++k) {
      const double* brow = b.row(k).data();
      double acc = 0.0;
      for (std::size_t j = 0; j < b.cols(); ++j) acc += d[j] * brow[j];
      out(i, k) = acc;
    }
  }
  return out;
}

Matrix matmul_grad_rhs(const Matrix& a, const Matrix& dy) {
  // dB(k,j) = sum_i A(i,k) dY(i,j)
  Matrix out(a.cols(), dy.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* d = dy.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      double* o = out.row(k).data();
      for (std::size_t j = 0; j < dy.cols(); ++j) o[j] += aik * d[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

namespace {

void check_norm_shapes(const Matrix& x, const Matrix& gamma, const Matrix& beta) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols() || !gamma.same_shape(beta)) {
    throw DimensionError("layer_norm: x " + x.shape_string() + " with gamma " +
                         gamma.shape_string() + " and beta " + beta.shape_string());
  }
}

}  // namespace

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double epsilon) {
  check_norm_shapes(x, gamma, beta);
  if (!(epsilon > 0.0)) throw ConfigError("layer_norm: epsilon must be positive");
  const std::size_t d = x.cols();
  Matrix out(x.rows(), d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t c = 0; c < d; ++c)
      out(r, c) = gamma[c] * ((row[c] - mean) * inv) + beta[c];
  }
  return out;
}

LayerNormGrads layer_norm_backward(const Matrix& x, const Matrix& gamma, const Matrix& dy,
                                   double epsilon) {
  const std::size_t d = x.cols();
  const double n = static_cast<double>(d);
  LayerNormGrads g{Matrix(x.rows(), d), Matrix(1, d), Matrix(1, d)};
  std::vector<double> xhat(d);
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + epsilon);
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      xhat[c] = (row[c] - mean) * inv;
      dxhat[c] = dy(r, c) * gamma[c];
      sum_dxhat += dxhat[c];
      sum_dxhat_xhat += dxhat[c] * xhat[c];
      g.dgamma[c] += dy(r, c) * xhat[c];
      g.dbeta[c] += dy(r, c);
    }
    for (std::size_t c = 0; c < d; ++c)
      g.dx(r, c) = inv / n * (n * dxhat[c] - sum_dxhat - xhat[c] * sum_dxhat_xhat);
  }
  return g;
}

double activate(double x, Activation kind) {
  switch (kind) {
    case Activation::ReLU:
      return x > 0.0 ? x : 0.0;
    case Activation::GELU:
      return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
  }
  return x;
}

double activate_derivative(double x, Activation kind) {
  switch (kind) {
    case Activation::ReLU:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::GELU: {
      const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + x * pdf;
    }
  }
  return 1.0;
}

Matrix activation(const Matrix& x, Activation kind) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = activate(x[i], kind);
  return out;
}

Matrix activation_backward(const Matrix& x, const Matrix& dy, Activation kind) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = dy[i] * activate_derivative(x[i], kind);
  return out;
}

namespace {

void softmax_into(std::span<const double> z, const MaskBits& mask, std::span<double> out) {
  double max_valid = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (mask[i]) {
      max_valid = std::max(max_valid, z[i]);
      any = true;
    }
  }
  if (!any) throw EmptySetError("masked_softmax: no valid entries");
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = mask[i] ? std::exp(z[i] - max_valid) : 0.0;
    total += out[i];
  }
  for (double& v : out) v /= total;
}

}  // namespace

std::vector<double> masked_softmax(std::span<const double> z, const MaskBits& mask) {
  if (mask.size() != z.size()) {
    throw DimensionError("masked_softmax: " + std::to_string(z.size()) + " logits with mask of " +
                         std::to_string(mask.size()));
  }
  std::vector<double> out(z.size());
  softmax_into(z, mask, out);
  return out;
}

Matrix masked_softmax_rows(const Matrix& z, const MaskBits& row_mask, const MaskBits& col_mask) {
  if (row_mask.size() != z.rows() || col_mask.size() != z.cols()) {
    throw DimensionError("masked_softmax_rows: scores " + z.shape_string() + " with masks " +
                         std::to_string(row_mask.size()) + "/" + std::to_string(col_mask.size()));
  }
  Matrix out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (!row_mask[r]) continue;
    softmax_into(z.row(r), col_mask, out.row(r));
  }
  return out;
}

Matrix masked_softmax_rows_backward(const Matrix& y, const Matrix& dy) {
  Matrix dz(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) dot += dy(r, c) * y(r, c);
    for (std::size_t c = 0; c < y.cols(); ++c) dz(r, c) = y(r, c) * (dy(r, c) - dot);
  }
  return dz;
}

MaxPoolResult masked_max_pool(const Matrix& x, const MaskBits& mask) {
  if (mask.size() != x.rows()) {
    throw DimensionError("masked_max_pool: " + x.shape_string() + " with mask of " +
                         std::to_string(mask.size()));
  }
  MaxPoolResult res{Matrix(1, x.cols()), std::vector<std::size_t>(x.cols(), 0)};
  bool first = true;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (!mask[r]) continue;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (first || x(r, c) > res.value[c]) {
        res.value[c] = x(r, c);
        res.argmax[c] = r;
      }
    }
    first = false;
  }
  if (first) throw EmptySetError("masked_max_pool: no valid rows");
  return res;
}

Matrix masked_max_pool_backward(const std::vector<std::size_t>& argmax, const Matrix& dy,
                                std::size_t rows) {
  Matrix dx(rows, dy.cols());
  for (std::size_t c = 0; c < dy.cols(); ++c) dx(argmax[c], c) += dy[c];
  return dx;
}

}  // namespace mnm
