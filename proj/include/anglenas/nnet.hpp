#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "anglenas/errors.hpp"
#include "anglenas/matrix.hpp"

namespace anglenas {

enum class ParamRole { operator_weight, norm_scale, norm_shift, auxiliary };

struct ParamTensor {
    Matrix value;
    Matrix grad;
    Matrix velocity; // momentum buffer
    ParamRole role = ParamRole::auxiliary;

    ParamTensor() = default;
    ParamTensor(Matrix v, ParamRole r)
        : value(std::move(v)), grad(value.rows, value.cols), velocity(value.rows, value.cols),
          role(r) {}

    void zero_grad() { grad.fill(0.0); }
};

struct NormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit NormState(std::size_t dim = 0)
        : running_mean(dim, 0.0), running_var(dim, 1.0) {}
};

enum class RunMode { train, eval };

// Momentum SGD on a single tensor: v = mu * v + g; w -= lr * v. Weight
// sharing means callers invoke this only for tensors the current child
// touched.
inline void sgd_step(ParamTensor& p, double lr, double mu) {
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
        p.velocity.data[i] = mu * p.velocity.data[i] + p.grad.data[i];
        p.value.data[i] -= lr * p.velocity.data[i];
    }
    if (!p.value.all_finite()) throw NumericalOverflow("parameter became non-finite after update");
}

// --- batch normalization ----------------------------------------------------

// Per-feature batch statistics (population variance). Cached values feed the
// backward pass.
struct NormCache {
    std::vector<double> mean;
    std::vector<double> inv_std;
    Matrix normalized; // x_hat
};

inline void batch_moments(const Matrix& x, std::vector<double>& mean, std::vector<double>& var) {
    const std::size_t n = x.rows, d = x.cols;
    mean.assign(d, 0.0);
    var.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
    for (std::size_t j = 0; j < d; ++j) mean[j] /= double(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double dlt = x(i, j) - mean[j];
            var[j] += dlt * dlt;
        }
    for (std::size_t j = 0; j < d; ++j) var[j] /= double(n);
}

// Train mode normalizes with the batch moments and folds them into the
// running statistics; eval mode uses the running statistics unchanged.
inline Matrix norm_forward(const Matrix& x, const ParamTensor& scale, const ParamTensor& shift,
                           NormState& state, RunMode mode, NormCache* cache) {
    const std::size_t n = x.rows, d = x.cols;
    if (state.running_mean.size() != d) throw ShapeMismatch("norm_forward: feature count");
    std::vector<double> mean, var;
    if (mode == RunMode::train) {
        batch_moments(x, mean, var);
        for (std::size_t j = 0; j < d; ++j) {
            state.running_mean[j] =
                (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mean[j];
            state.running_var[j] =
                (1.0 - state.momentum) * state.running_var[j] + state.momentum * var[j];
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }
    Matrix out(n, d);
    Matrix xhat(n, d);
    std::vector<double> inv_std(d);
    for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (x(i, j) - mean[j]) * inv_std[j];
            xhat(i, j) = h;
            out(i, j) = scale.value(0, j) * h + shift.value(0, j);
        }
    if (cache) {
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
        cache->normalized = std::move(xhat);
    }
    return out;
}

// Backward through train-mode normalization (batch statistics participate in
// the gradient). Accumulates into scale/shift grads, returns dX.
inline Matrix norm_backward(const Matrix& dy, const NormCache& cache, const ParamTensor& scale,
                            ParamTensor& scale_grad_into, ParamTensor& shift_grad_into) {
    const std::size_t n = dy.rows, d = dy.cols;
    Matrix dx(n, d);
    for (std::size_t j = 0; j < d; ++j) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum_dy += dy(i, j);
            sum_dy_xhat += dy(i, j) * cache.normalized(i, j);
        }
        shift_grad_into.grad(0, j) += sum_dy;
        scale_grad_into.grad(0, j) += sum_dy_xhat;
        const double g = scale.value(0, j);
        for (std::size_t i = 0; i < n; ++i) {
            const double dxhat = dy(i, j) * g;
            dx(i, j) = cache.inv_std[j] / double(n) *
                       (double(n) * dxhat - sum_dy * g -
                        cache.normalized(i, j) * sum_dy_xhat * g);
        }
    }
    return dx;
}

// --- activations and pooling -------------------------------------------------

inline Matrix tanh_forward(const Matrix& x) {
    Matrix y = x;
    for (auto& v : y.data) v = std::tanh(v);
    return y;
}

inline Matrix tanh_backward(const Matrix& dy, const Matrix& y) {
    Matrix dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= 1.0 - y.data[i] * y.data[i];
    return dx;
}

// Fixed averaging map with k*k taps of weight 1/k^2 over a circular window
// of the feature vector.
inline Matrix pool_forward(const Matrix& x, std::size_t k) {
    const std::size_t n = x.rows, d = x.cols, taps = k * k;
    const double w = 1.0 / double(taps);
    Matrix y(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < taps; ++t) acc += x(i, (j + t) % d);
            y(i, j) = acc * w;
        }
    return y;
}

inline Matrix pool_backward(const Matrix& dy, std::size_t k) {
    const std::size_t n = dy.rows, d = dy.cols, taps = k * k;
    const double w = 1.0 / double(taps);
    Matrix dx(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double g = dy(i, j) * w;
            for (std::size_t t = 0; t < taps; ++t) dx(i, (j + t) % d) += g;
        }
    return dx;
}

// --- softmax cross entropy ----------------------------------------------------

struct LossResult {
    double loss = 0.0;
    Matrix probs;
    std::size_t correct = 0;
};

inline LossResult softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    const std::size_t n = logits.rows, c = logits.cols;
    if (labels.size() != n) throw ShapeMismatch("softmax_cross_entropy: label count");
    LossResult r;
    r.probs = Matrix(n, c);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(logits(i, j) - mx);
        std::size_t argmax = 0;
        for (std::size_t j = 0; j < c; ++j) {
            r.probs(i, j) = std::exp(logits(i, j) - mx) / z;
            if (logits(i, j) > logits(i, argmax)) argmax = j;
        }
        if (int(argmax) == labels[i]) ++r.correct;
        total -= std::log(std::max(r.probs(i, std::size_t(labels[i])), 1e-300));
    }
    r.loss = total / double(n);
    if (!std::isfinite(r.loss)) throw NumericalOverflow("loss became non-finite");
    return r;
}

// dLogits for the mean cross-entropy loss: (p - onehot) / n.
inline Matrix softmax_cross_entropy_backward(const LossResult& r, const std::vector<int>& labels) {
    Matrix d = r.probs;
    const double inv_n = 1.0 / double(d.rows);
    for (std::size_t i = 0; i < d.rows; ++i) {
        d(i, std::size_t(labels[i])) -= 1.0;
        for (std::size_t j = 0; j < d.cols; ++j) d(i, j) *= inv_n;
    }
    return d;
}

} // namespace anglenas
