#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "xview/error.hpp"

namespace xview {

// Row-major dense matrix of doubles. The single value carrier for batches,
// parameters and gradients.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // length rows*cols

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c) {
        if (r <= 0 || c <= 0) throw dimension_error("matrix dimensions must be positive");
        data.assign(static_cast<size_t>(r) * c, fill);
    }

    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    bool is_scalar() const { return rows == 1 && cols == 1; }
    double scalar() const {
        if (!is_scalar()) throw contract_error("matrix is not 1x1");
        return data[0];
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Matrix full(int r, int c, double v) { return Matrix(r, c, v); }
};

inline void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b))
        throw dimension_error(std::string(what) + ": shape mismatch " + std::to_string(a.rows) + "x" +
                              std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                              std::to_string(b.cols));
}

// c = a * b, naive triple loop with a fixed accumulation order.
inline Matrix matmul_values(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw dimension_error("matmul: inner dimensions disagree (" + std::to_string(a.cols) + " vs " +
                              std::to_string(b.rows) + ")");
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * a.cols];
        double* crow = &c.data[static_cast<size_t>(i) * b.cols];
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline Matrix transpose_values(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

// acc += m (used by gradient accumulation).
inline void add_into(Matrix& acc, const Matrix& m) {
    check_same_shape(acc, m, "add_into");
    for (size_t i = 0; i < acc.size(); ++i) acc.data[i] += m.data[i];
}

// acc += s * m
inline void axpy_into(Matrix& acc, double s, const Matrix& m) {
    check_same_shape(acc, m, "axpy_into");
    for (size_t i = 0; i < acc.size(); ++i) acc.data[i] += s * m.data[i];
}

inline bool all_finite(const Matrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "max_abs_diff");
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a.data[i] - b.data[i]));
    return d;
}

}  // namespace xview
