#pragma once

#include <cmath>
#include <cstddef>

#include "vista/exec.hpp"

// Data-parallel kernels behind the encoder stacks. Each kernel has a
// serial reference implementation (namespace kernels::serial) and an
// OpenMP driver that applies the identical per-row routine, so parallel
// and serial results are bitwise equal. Reductions accumulate in double.

namespace vista::kernels {

namespace detail {

// Y[i,:] = X[i,:] * W + b   (W is k×n row-major, b may be null)
template <typename S>
inline void linear_row(const S* x, const S* w, const S* b, S* y, int k, int n) {
    for (int j = 0; j < n; ++j) y[j] = b ? b[j] : S(0);
    for (int t = 0; t < k; ++t) {
        const S xv = x[t];
        if (xv == S(0)) continue;
        const S* wrow = w + static_cast<size_t>(t) * n;
        for (int j = 0; j < n; ++j) y[j] += xv * wrow[j];
    }
}

// dX[i,:] = dY[i,:] * W^T
template <typename S>
inline void linear_row_dinput(const S* dy, const S* w, S* dx, int k, int n) {
    for (int t = 0; t < k; ++t) {
        const S* wrow = w + static_cast<size_t>(t) * n;
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += static_cast<double>(dy[j]) * wrow[j];
        dx[t] = static_cast<S>(acc);
    }
}

template <typename S>
inline void layernorm_row(const S* x, const S* g, const S* b, S* y, int d,
                          S* mean_out, S* rstd_out, double eps) {
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += x[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
        double c = x[j] - mu;
        var += c * c;
    }
    var /= d;
    double rstd = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j)
        y[j] = static_cast<S>((x[j] - mu) * rstd) * g[j] + b[j];
    *mean_out = static_cast<S>(mu);
    *rstd_out = static_cast<S>(rstd);
}

template <typename S>
inline void layernorm_row_dinput(const S* x, const S* g, S mean, S rstd,
                                 const S* dy, S* dx, int d) {
    // xhat = (x - mean) * rstd, y = g*xhat + b
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (int j = 0; j < d; ++j) {
        double xhat = (static_cast<double>(x[j]) - mean) * rstd;
        double dxhat = static_cast<double>(dy[j]) * g[j];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
    }
    for (int j = 0; j < d; ++j) {
        double xhat = (static_cast<double>(x[j]) - mean) * rstd;
        double dxhat = static_cast<double>(dy[j]) * g[j];
        dx[j] = static_cast<S>(
            rstd * (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d));
    }
}

template <typename S>
inline void softmax_row(const S* x, S* y, int n) {
    double mx = static_cast<double>(x[0]);
    for (int j = 1; j < n; ++j) mx = std::max(mx, static_cast<double>(x[j]));
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        double e = std::exp(static_cast<double>(x[j]) - mx);
        y[j] = static_cast<S>(e);
        sum += e;
    }
    double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) y[j] = static_cast<S>(static_cast<double>(y[j]) * inv);
}

template <typename S>
inline S gelu_one(S x) {
    // tanh approximation
    const double c = 0.7978845608028654;  // sqrt(2/pi)
    double xd = x;
    double t = std::tanh(c * (xd + 0.044715 * xd * xd * xd));
    return static_cast<S>(0.5 * xd * (1.0 + t));
}

template <typename S>
inline S gelu_grad_one(S x) {
    const double c = 0.7978845608028654;
    double xd = x;
    double u = c * (xd + 0.044715 * xd * xd * xd);
    double t = std::tanh(u);
    double du = c * (1.0 + 3.0 * 0.044715 * xd * xd);
    return static_cast<S>(0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du);
}

}  // namespace detail

namespace serial {

template <typename S>
void linear_forward(const S* x, const S* w, const S* b, S* y, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        detail::linear_row(x + static_cast<size_t>(i) * k, w, b,
                           y + static_cast<size_t>(i) * n, k, n);
}

template <typename S>
void linear_backward_input(const S* dy, const S* w, S* dx, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        detail::linear_row_dinput(dy + static_cast<size_t>(i) * n, w,
                                  dx + static_cast<size_t>(i) * k, k, n);
}

template <typename S>
void layernorm_forward(const S* x, const S* g, const S* b, S* y, S* mean, S* rstd,
                       int m, int d, double eps = 1e-5) {
    for (int i = 0; i < m; ++i)
        detail::layernorm_row(x + static_cast<size_t>(i) * d, g, b,
                              y + static_cast<size_t>(i) * d, d, mean + i, rstd + i, eps);
}

template <typename S>
void layernorm_backward_input(const S* x, const S* g, const S* mean, const S* rstd,
                              const S* dy, S* dx, int m, int d) {
    for (int i = 0; i < m; ++i)
        detail::layernorm_row_dinput(x + static_cast<size_t>(i) * d, g, mean[i], rstd[i],
                                     dy + static_cast<size_t>(i) * d,
                                     dx + static_cast<size_t>(i) * d, d);
}

template <typename S>
void softmax_rows(const S* x, S* y, int m, int n) {
    for (int i = 0; i < m; ++i)
        detail::softmax_row(x + static_cast<size_t>(i) * n, y + static_cast<size_t>(i) * n, n);
}

template <typename S>
void gelu_forward(const S* x, S* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = detail::gelu_one(x[i]);
}

template <typename S>
void gelu_backward(const S* x, const S* dy, S* dx, size_t n) {
    for (size_t i = 0; i < n; ++i) dx[i] = dy[i] * detail::gelu_grad_one(x[i]);
}

}  // namespace serial

// OpenMP drivers. Rows are independent, so results match serial bitwise.

template <typename S>
void linear_forward(const S* x, const S* w, const S* b, S* y, int m, int k, int n) {
    if (!exec::parallel_enabled() || m < 8) {
        serial::linear_forward(x, w, b, y, m, k, n);
        return;
    }
#pragma omp parallel for num_threads(exec::threads()) schedule(static)
    for (int i = 0; i < m; ++i)
        detail::linear_row(x + static_cast<size_t>(i) * k, w, b,
                           y + static_cast<size_t>(i) * n, k, n);
}

template <typename S>
void linear_backward_input(const S* dy, const S* w, S* dx, int m, int k, int n) {
    if (!exec::parallel_enabled() || m < 8) {
        serial::linear_backward_input(dy, w, dx, m, k, n);
        return;
    }
#pragma omp parallel for num_threads(exec::threads()) schedule(static)
    for (int i = 0; i < m; ++i)
        detail::linear_row_dinput(dy + static_cast<size_t>(i) * n, w,
                                  dx + static_cast<size_t>(i) * k, k, n);
}

// dW += X^T * dY, db += column sums of dY. Fixed i-order accumulation in
// double; kept serial so gradient reduction order is deterministic.
template <typename S>
void linear_backward_params(const S* x, const S* dy, S* dw, S* db, int m, int k, int n) {
    for (int t = 0; t < k; ++t) {
        S* dwrow = dw + static_cast<size_t>(t) * n;
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i)
                acc += static_cast<double>(x[static_cast<size_t>(i) * k + t]) *
                       dy[static_cast<size_t>(i) * n + j];
            dwrow[j] += static_cast<S>(acc);
        }
    }
    if (db) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += dy[static_cast<size_t>(i) * n + j];
            db[j] += static_cast<S>(acc);
        }
    }
}

template <typename S>
void layernorm_forward(const S* x, const S* g, const S* b, S* y, S* mean, S* rstd,
                       int m, int d, double eps = 1e-5) {
    serial::layernorm_forward(x, g, b, y, mean, rstd, m, d, eps);
}

template <typename S>
void layernorm_backward_input(const S* x, const S* g, const S* mean, const S* rstd,
                              const S* dy, S* dx, int m, int d) {
    serial::layernorm_backward_input(x, g, mean, rstd, dy, dx, m, d);
}

// dg += sum_i dy*xhat, db += sum_i dy. Serial fixed-order reduction.
template <typename S>
void layernorm_backward_params(const S* x, const S* mean, const S* rstd, const S* dy,
                               S* dg, S* db, int m, int d) {
    for (int j = 0; j < d; ++j) {
        double ag = 0.0, ab = 0.0;
        for (int i = 0; i < m; ++i) {
            const size_t off = static_cast<size_t>(i) * d + j;
            double xhat = (static_cast<double>(x[off]) - mean[i]) * rstd[i];
            ag += static_cast<double>(dy[off]) * xhat;
            ab += dy[off];
        }
        dg[j] += static_cast<S>(ag);
        db[j] += static_cast<S>(ab);
    }
}

template <typename S>
void softmax_rows(const S* x, S* y, int m, int n) {
    serial::softmax_rows(x, y, m, n);
}

template <typename S>
void gelu_forward(const S* x, S* y, size_t n) {
    serial::gelu_forward(x, y, n);
}

template <typename S>
void gelu_backward(const S* x, const S* dy, S* dx, size_t n) {
    serial::gelu_backward(x, dy, dx, n);
}

// Unit L2 normalization of one vector; returns the pre-normalization norm.
template <typename S>
double l2_normalize(const S* x, S* y, int d) {
    double nrm = 0.0;
    for (int j = 0; j < d; ++j) nrm += static_cast<double>(x[j]) * x[j];
    nrm = std::sqrt(nrm);
    if (nrm > 0.0) {
        double inv = 1.0 / nrm;
        for (int j = 0; j < d; ++j) y[j] = static_cast<S>(x[j] * inv);
    } else {
        for (int j = 0; j < d; ++j) y[j] = S(0);
    }
    return nrm;
}

// Backward of e = x / ||x||: dx = (de - e (e·de)) / ||x||.
template <typename S>
void l2_normalize_backward(const S* e, double norm, const S* de, S* dx, int d) {
    double dot = 0.0;
    for (int j = 0; j < d; ++j) dot += static_cast<double>(e[j]) * de[j];
    double inv = 1.0 / norm;
    for (int j = 0; j < d; ++j)
        dx[j] = static_cast<S>((static_cast<double>(de[j]) - e[j] * dot) * inv);
}

template <typename S>
double dot(const S* a, const S* b, int d) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += static_cast<double>(a[j]) * b[j];
    return acc;
}

}  // namespace vista::kernels
