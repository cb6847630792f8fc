#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "crossprop/activations.hpp"
#include "crossprop/errors.hpp"
#include "crossprop/matrix.hpp"

namespace crossprop {

// Shape of a single-hidden-layer learner: inputs -> hidden -> outputs.
// outputs == 1 for scalar-target problems.
struct NetShape {
    std::size_t inputs = 1;
    std::size_t hidden = 1;
    std::size_t outputs = 1;

    void validate() const {
        if (inputs < 1 || hidden < 1 || outputs < 1)
            throw InvalidInput("NetShape: all of inputs, hidden, outputs must be >= 1");
    }
};

// One forward evaluation: hidden pre-activations, hidden activations, and
// the output estimate (length 1 for scalar heads, length k for softmax).
struct ForwardPass {
    Vector preact;
    Vector phi;
    Vector y;
};

// delta = target - prediction, per output unit. Both loss types use this
// orientation so every optimizer consumes the same signal.
struct ErrorSignal {
    Vector delta;
};

namespace detail {

inline void require_inputs_match(std::size_t xs, const Matrix& u) {
    if (xs != u.rows())
        throw InvalidInput("hidden_activations: input length " + std::to_string(xs) +
                           " does not match weight rows " + std::to_string(u.rows()));
}

}  // namespace detail

// z_j = sum_i x_i u_ij for an inputs x hidden weight matrix.
inline Vector hidden_preactivations(std::span<const double> x, const Matrix& u) {
    detail::require_inputs_match(x.size(), u);
    Vector z(u.cols(), 0.0);
    for (std::size_t i = 0; i < u.rows(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const auto row = u.row(i);
        for (std::size_t j = 0; j < u.cols(); ++j) z[j] += xi * row[j];
    }
    return z;
}

// phi_j = kind(sum_i x_i u_ij).
inline Vector hidden_activations(std::span<const double> x, const Matrix& u, ActivationKind kind) {
    Vector phi = hidden_preactivations(x, u);
    for (double& v : phi) v = activate(kind, v);
    return phi;
}

// Scalar head: y = sum_j phi_j w_j.
inline double predict_scalar(std::span<const double> phi, std::span<const double> w) {
    if (phi.size() != w.size())
        throw InvalidInput("predict_scalar: phi length " + std::to_string(phi.size()) +
                           " does not match weight length " + std::to_string(w.size()));
    return dot(phi, w);
}

// Softmax with max-subtraction for overflow safety.
inline Vector softmax(std::span<const double> z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    Vector y(z.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
        y[c] = std::exp(z[c] - zmax);
        sum += y[c];
    }
    for (double& v : y) v /= sum;
    return y;
}

// Output logits z = W^T phi for a hidden x outputs weight matrix.
inline Vector output_logits(std::span<const double> phi, const Matrix& w) {
    if (phi.size() != w.rows())
        throw InvalidInput("output_logits: phi length " + std::to_string(phi.size()) +
                           " does not match weight rows " + std::to_string(w.rows()));
    Vector z(w.cols(), 0.0);
    for (std::size_t j = 0; j < w.rows(); ++j) {
        const double pj = phi[j];
        if (pj == 0.0) continue;
        const auto row = w.row(j);
        for (std::size_t c = 0; c < w.cols(); ++c) z[c] += pj * row[c];
    }
    return z;
}

inline Vector predict_softmax(std::span<const double> phi, const Matrix& w) {
    return softmax(output_logits(phi, w));
}

// Cross-entropy -log y_c computed from logits via log-sum-exp, so it stays
// finite and exact even when some softmax entries underflow.
inline double cross_entropy_from_logits(std::span<const double> z, std::size_t target_class) {
    if (target_class >= z.size())
        throw InvalidInput("cross_entropy_from_logits: class " + std::to_string(target_class) +
                           " out of range for " + std::to_string(z.size()) + " logits");
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    return std::log(sum) - (z[target_class] - zmax);
}

inline bool is_one_hot(std::span<const double> v) {
    std::size_t ones = 0;
    for (double x : v) {
        if (x == 1.0)
            ++ones;
        else if (x != 0.0)
            return false;
    }
    return ones == 1;
}

inline std::size_t one_hot_index(std::span<const double> v) {
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] == 1.0) return i;
    throw InvalidInput("one_hot_index: no unit entry");
}

inline ErrorSignal error_scalar(double y_star, double y) {
    if (!std::isfinite(y_star) || !std::isfinite(y))
        throw InvalidInput("error_scalar: non-finite input");
    return ErrorSignal{Vector{y_star - y}};
}

// delta_k = target_k - y_k for a one-hot target against a probability vector.
inline ErrorSignal error_softmax(std::span<const double> target_onehot, std::span<const double> y) {
    if (target_onehot.size() != y.size())
        throw InvalidInput("error_softmax: target length " + std::to_string(target_onehot.size()) +
                           " does not match prediction length " + std::to_string(y.size()));
    if (!is_one_hot(target_onehot))
        throw InvalidInput("error_softmax: target is not one-hot");
    ErrorSignal e;
    e.delta.resize(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) e.delta[k] = target_onehot[k] - y[k];
    return e;
}

inline ForwardPass forward_scalar(std::span<const double> x, const Matrix& u,
                                  std::span<const double> w, ActivationKind kind) {
    ForwardPass fp;
    fp.preact = hidden_preactivations(x, u);
    fp.phi.resize(fp.preact.size());
    for (std::size_t j = 0; j < fp.preact.size(); ++j) fp.phi[j] = activate(kind, fp.preact[j]);
    fp.y = Vector{predict_scalar(fp.phi, w)};
    return fp;
}

inline ForwardPass forward_softmax(std::span<const double> x, const Matrix& u, const Matrix& w,
                                   ActivationKind kind) {
    ForwardPass fp;
    fp.preact = hidden_preactivations(x, u);
    fp.phi.resize(fp.preact.size());
    for (std::size_t j = 0; j < fp.preact.size(); ++j) fp.phi[j] = activate(kind, fp.preact[j]);
    fp.y = predict_softmax(fp.phi, w);
    return fp;
}

}  // namespace crossprop
