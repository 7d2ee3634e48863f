// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_NN_HPP
#define NBVSIM_NN_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "nbvsim/geom.hpp"

namespace nbvsim {

// Adam over a flat parameter vector. Deterministic: no internal randomness.
class Adam {
public:
    Adam(std::size_t n, double lr = 5e-4, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::vector<double>& theta, const std::vector<double>& grad) {
        ++t_;
        double c1 = 1.0 - std::pow(b1_, t_);
        double c2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
            theta[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
        }
    }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

// y = W x + b, W row-major [out x in].
inline void denseForward(const double* W, const double* b, const double* x,
                         double* y, std::size_t out, std::size_t in) {
    for (std::size_t o = 0; o < out; ++o) {
        double acc = b[o];
        const double* row = W + o * in;
        for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// Accumulates dW, db, dx from dy.
inline void denseBackward(const double* W, const double* x, const double* dy,
                          double* dW, double* db, double* dx, std::size_t out,
                          std::size_t in) {
    if (dx)
        for (std::size_t i = 0; i < in; ++i) dx[i] = 0.0;
    for (std::size_t o = 0; o < out; ++o) {
        const double* row = W + o * in;
        double g = dy[o];
        db[o] += g;
        double* dRow = dW + o * in;
        for (std::size_t i = 0; i < in; ++i) {
            dRow[i] += g * x[i];
            if (dx) dx[i] += g * row[i];
        }
    }
}

inline void reluInplace(double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] < 0.0) x[i] = 0.0;
}

// dx = dy masked by pre-activation sign (pass the post-relu activations).
inline void reluBackward(const double* act, double* d, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (act[i] <= 0.0) d[i] = 0.0;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline void initUniform(std::vector<double>& theta, std::size_t offset, std::size_t count,
                        std::size_t fanIn, Rng& rng) {
    double bound = 1.0 / std::sqrt(double(fanIn));
    for (std::size_t i = 0; i < count; ++i)
        theta[offset + i] = rng.uniform(-bound, bound);
}

}  // namespace nbvsim

#endif
