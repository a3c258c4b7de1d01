#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mdpkit/scalar.hpp"

namespace mdpkit {

/// Minimal dense matrix, row-major. Shared by both scalar modes.
template <class T>
class Matrix {
public:
    Matrix() : rows_(0), cols_(0) {}
    Matrix(std::size_t rows, std::size_t cols, T init = T(0))
        : rows_(rows), cols_(cols), data_(rows * cols, init) {}

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
        return m;
    }

private:
    std::size_t rows_, cols_;
    std::vector<T> data_;
};

/// Gaussian elimination with scalar-appropriate pivoting: largest
/// magnitude in float mode, first nonzero in exact mode. Throws on a
/// (numerically) singular system.
template <class T>
std::vector<T> solve_dense(Matrix<T> a, std::vector<T> b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.size() != n) throw std::invalid_argument("solve_dense: shape mismatch");
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        if constexpr (scalar_traits<T>::exact) {
            while (pivot < n && a(pivot, col) == T(0)) ++pivot;
            if (pivot == n) throw std::runtime_error("solve_dense: singular matrix");
        } else {
            for (std::size_t r = col + 1; r < n; ++r)
                if (abs_value(a(r, col)) > abs_value(a(pivot, col))) pivot = r;
            if (a(pivot, col) == T(0)) throw std::runtime_error("solve_dense: singular matrix");
        }
        if (pivot != col) {
            for (std::size_t c = col; c < n; ++c) std::swap(a(pivot, c), a(col, c));
            std::swap(b[pivot], b[col]);
        }
        const T inv_piv = T(1) / a(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            if (a(r, col) == T(0)) continue;
            const T factor = a(r, col) * inv_piv;
            a(r, col) = T(0);
            for (std::size_t c = col + 1; c < n; ++c) a(r, c) -= factor * a(col, c);
            b[r] -= factor * b[col];
        }
    }
    std::vector<T> x(n, T(0));
    for (std::size_t ri = n; ri-- > 0;) {
        T acc = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) acc -= a(ri, c) * x[c];
        x[ri] = acc / a(ri, ri);
    }
    return x;
}

/// Residual vector b - A x, infinity norm.
template <class T>
T residual_inf(const Matrix<T>& a, const std::vector<T>& x, const std::vector<T>& b) {
    T worst(0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        T acc = b[r];
        for (std::size_t c = 0; c < a.cols(); ++c) acc -= a(r, c) * x[c];
        if (abs_value(acc) > worst) worst = abs_value(acc);
    }
    return worst;
}

/// Solve with iterative refinement in float mode until the residual is
/// at or below `target` (or refinement stalls). Exact mode solves once.
template <class T>
std::vector<T> solve_refined(const Matrix<T>& a, const std::vector<T>& b, double target = 1e-12) {
    std::vector<T> x = solve_dense(a, b);
    if constexpr (!scalar_traits<T>::exact) {
        for (int pass = 0; pass < 4; ++pass) {
            const T res = residual_inf(a, x, b);
            if (to_double(res) <= target) break;
            std::vector<T> r(b.size());
            for (std::size_t i = 0; i < b.size(); ++i) {
                T acc = b[i];
                for (std::size_t c = 0; c < a.cols(); ++c) acc -= a(i, c) * x[c];
                r[i] = acc;
            }
            const std::vector<T> dx = solve_dense(a, r);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += dx[i];
        }
    }
    return x;
}

}  // namespace mdpkit
