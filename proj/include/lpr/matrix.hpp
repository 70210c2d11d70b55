#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lpr/errors.hpp"

namespace lpr {

// Dense row-major matrix of doubles. The only numeric container in this
// library; layer weights, activations, preconditioners and gradients are all
// plain Matrix values.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }
};

inline Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

inline bool same_shape(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols;
}

inline bool is_finite(const Matrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw shape_error("matmul: inner dimensions differ, " + a.shape_str() + " * " + b.shape_str());
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        double* crow = &c.data[i * c.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    if (!same_shape(a, b))
        throw shape_error("add: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    Matrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
    return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    if (!same_shape(a, b))
        throw shape_error("sub: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    Matrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
    return c;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (double& v : c.data) v *= s;
    return c;
}

// y += s * x, in place.
inline void axpy(Matrix& y, double s, const Matrix& x) {
    if (!same_shape(y, x))
        throw shape_error("axpy: shapes differ, " + y.shape_str() + " vs " + x.shape_str());
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += s * x.data[i];
}

inline double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

inline double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::abs(v));
    return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!same_shape(a, b))
        throw shape_error("max_abs_diff: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

// sqrt(tr(a^T p a)) for square p with p.rows == a.rows. Reduces to the
// Frobenius norm when p is the identity.
inline double p_norm(const Matrix& a, const Matrix& p) {
    if (p.rows != p.cols)
        throw shape_error("p_norm: p must be square, got " + p.shape_str());
    if (p.rows != a.rows)
        throw shape_error("p_norm: p is " + p.shape_str() + " but a is " + a.shape_str());
    const Matrix pa = matmul(p, a);
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * pa.data[i];
    return std::sqrt(std::max(0.0, s));
}

namespace detail {

// Lower Cholesky factor of a symmetric positive definite matrix.
// Throws not_positive_definite_error on a non-positive pivot.
inline Matrix cholesky(const Matrix& p) {
    const std::size_t n = p.rows;
    Matrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = p(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0)
                    throw not_positive_definite_error(
                        "cholesky: non-positive pivot " + std::to_string(s) + " at index " + std::to_string(i));
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

}  // namespace detail

// Inverse of a symmetric positive definite matrix via Cholesky factorization.
// The input must be square and symmetric to 1e-10 relative tolerance.
inline Matrix spd_inverse(const Matrix& p) {
    if (p.rows != p.cols)
        throw shape_error("spd_inverse: matrix must be square, got " + p.shape_str());
    const std::size_t n = p.rows;
    double asym = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) asym = std::max(asym, std::abs(p(i, j) - p(j, i)));
    if (asym > 1e-10 * std::max(1.0, max_abs(p)))
        throw input_error("spd_inverse: matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");

    const Matrix l = detail::cholesky(p);

    // Solve L y = e_c forward, then L^T x = y backward, one column at a time.
    Matrix inv(n, n);
    std::vector<double> y(n);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = (i == c) ? 1.0 : 0.0;
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
            y[i] = s / l(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * inv(k, c);
            inv(ii, c) = s / l(ii, ii);
        }
    }
    if (!is_finite(inv))
        throw numeric_error("spd_inverse: non-finite entries in result");
    return inv;
}

}  // namespace lpr
