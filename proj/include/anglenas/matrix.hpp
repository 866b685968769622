#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "anglenas/errors.hpp"

namespace anglenas {

// Dense row-major matrix of doubles. Everything in the engine is small
// enough that a flat vector plus explicit loops beats pulling in a BLAS.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Matrix& o) const = default;
};

// Y = X * W^T, X: [n x in], W: [out x in], Y: [n x out].
inline void matmul_nt(const Matrix& x, const Matrix& w, Matrix& y) {
    if (x.cols != w.cols) throw ShapeMismatch("matmul_nt: inner dimensions differ");
    y = Matrix(x.rows, w.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xi = &x.data[i * x.cols];
        for (std::size_t o = 0; o < w.rows; ++o) {
            const double* wo = &w.data[o * w.cols];
            double acc = 0.0;
            for (std::size_t k = 0; k < x.cols; ++k) acc += xi[k] * wo[k];
            y(i, o) = acc;
        }
    }
}

// dW += dY^T * X, dY: [n x out], X: [n x in], dW: [out x in].
inline void accumulate_weight_grad(const Matrix& dy, const Matrix& x, Matrix& dw) {
    if (dy.rows != x.rows) throw ShapeMismatch("accumulate_weight_grad: batch sizes differ");
    if (dw.rows != dy.cols || dw.cols != x.cols)
        throw ShapeMismatch("accumulate_weight_grad: gradient shape");
    for (std::size_t i = 0; i < dy.rows; ++i) {
        const double* dyi = &dy.data[i * dy.cols];
        const double* xi = &x.data[i * x.cols];
        for (std::size_t o = 0; o < dy.cols; ++o) {
            double* dwo = &dw.data[o * dw.cols];
            const double g = dyi[o];
            for (std::size_t k = 0; k < x.cols; ++k) dwo[k] += g * xi[k];
        }
    }
}

// dX += dY * W, dY: [n x out], W: [out x in], dX: [n x in].
inline void accumulate_input_grad(const Matrix& dy, const Matrix& w, Matrix& dx) {
    if (dy.cols != w.rows) throw ShapeMismatch("accumulate_input_grad: inner dimensions differ");
    if (dx.rows != dy.rows || dx.cols != w.cols)
        throw ShapeMismatch("accumulate_input_grad: output shape");
    for (std::size_t i = 0; i < dy.rows; ++i) {
        const double* dyi = &dy.data[i * dy.cols];
        double* dxi = &dx.data[i * dx.cols];
        for (std::size_t o = 0; o < dy.cols; ++o) {
            const double* wo = &w.data[o * w.cols];
            const double g = dyi[o];
            for (std::size_t k = 0; k < w.cols; ++k) dxi[k] += g * wo[k];
        }
    }
}

inline void add_inplace(Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("add_inplace: shapes differ");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

} // namespace anglenas
