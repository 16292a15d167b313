#include "toxspan/nn_ops.hpp"

#include <algorithm>
#include <cmath>

namespace toxspan {
namespace nn {

void linear_forward(const double* x, const double* w, const double* b,
                    double* y, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* yi = y + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      yi[j] = b[j];
    }
    const double* xi = x + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      double xv = xi[p];
      const double* wp = w + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        yi[j] += xv * wp[j];
      }
    }
  }
}

void linear_backward(const double* x, const double* w, const double* dy,
                     double* dw, double* db, double* dx,
                     std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* dyi = dy + i * n;
    const double* xi = x + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      db[j] += dyi[j];
    }
    for (std::size_t p = 0; p < k; ++p) {
      double xv = xi[p];
      double* dwp = dw + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        dwp[j] += xv * dyi[j];
      }
    }
    if (dx != nullptr) {
      double* dxi = dx + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double* wp = w + p * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          acc += dyi[j] * wp[j];
        }
        dxi[p] = acc;
      }
    }
  }
}

void relu_forward(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
}

void relu_backward(const double* x, const double* dy, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  }
}

double sigmoid(double x) {
  return 1.0 / (1.0 + std::exp(-x));
}

void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x + i * n;
    double* yi = y + i * n;
    double mx = xi[0];
    for (std::size_t j = 1; j < n; ++j) {
      mx = std::max(mx, xi[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      yi[j] /= sum;
    }
  }
}

void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* yi = y + i * n;
    const double* dyi = dy + i * n;
    double* dxi = dx + i * n;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dot += dyi[j] * yi[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      dxi[j] = yi[j] * (dyi[j] - dot);
    }
  }
}

void layer_norm_forward(const double* x, const double* gamma, const double* beta,
                        double* y, double* xhat, double* inv_std,
                        std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      mean += xi[j];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double d = xi[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double is = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    inv_std[i] = is;
    double* xh = xhat + i * n;
    double* yi = y + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      xh[j] = (xi[j] - mean) * is;
      yi[j] = xh[j] * gamma[j] + beta[j];
    }
  }
}

void layer_norm_backward(const double* xhat, const double* inv_std,
                         const double* gamma, const double* dy,
                         double* dgamma, double* dbeta, double* dx,
                         std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* xh = xhat + i * n;
    const double* dyi = dy + i * n;
    double* dxi = dx + i * n;
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double dxhat = dyi[j] * gamma[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xh[j];
      dgamma[j] += dyi[j] * xh[j];
      dbeta[j] += dyi[j];
    }
    double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      double dxhat = dyi[j] * gamma[j];
      dxi[j] = inv_std[i] *
               (dxhat - inv_n * sum_dxhat - xh[j] * inv_n * sum_dxhat_xhat);
    }
  }
}

}  // namespace nn
}  // namespace toxspan
