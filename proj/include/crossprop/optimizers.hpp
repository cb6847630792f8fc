#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "crossprop/activations.hpp"
#include "crossprop/errors.hpp"
#include "crossprop/matrix.hpp"
#include "crossprop/network.hpp"
#include "crossprop/rng.hpp"

namespace crossprop {

enum class Loss { Squared, CrossEntropy };

inline std::string_view loss_name(Loss loss) {
    return loss == Loss::Squared ? "squared" : "cross_entropy";
}

inline Loss loss_from_name(std::string_view name) {
    if (name == "squared") return Loss::Squared;
    if (name == "cross_entropy" || name == "cross-entropy") return Loss::CrossEntropy;
    throw ConfigError("unknown loss '" + std::string(name) +
                      "' (expected squared or cross_entropy)");
}

// Result of one step: delta = target - prediction per output unit, and the
// instantaneous error recorded for learning curves (sum of squared deltas,
// or cross-entropy in nats).
struct StepOutcome {
    Vector delta;
    double error = 0.0;
};

// Seeded uniform init on [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline Matrix init_weights(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(rows, cols);
    for (double& v : w.values()) v = dist(rng);
    return w;
}

namespace detail {

inline void require_finite_state(std::span<const double> u, std::span<const double> w,
                                 std::span<const double> h, const char* who) {
    if (all_finite(u) && all_finite(w) && all_finite(h)) return;
    throw DivergenceError(std::string(who) + ": non-finite parameter after step");
}

inline void require_eta(double eta) {
    if (!(eta >= 0.0 && eta <= 1.0))
        throw InvalidInput("eta must lie in [0, 1], got " + std::to_string(eta));
}

// alpha = 0 is permitted as a degenerate frozen learner; negative rejected.
inline void require_alpha(double alpha) {
    if (!(alpha >= 0.0)) throw InvalidInput("alpha must be >= 0, got " + std::to_string(alpha));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Crossprop, scalar output. The incoming weights carry a per-(input, hidden)
// memory trace h_ij approximating dw_j/du_ij.
// ---------------------------------------------------------------------------

struct CrosspropState {
    Matrix u;  // inputs x hidden
    Vector w;  // hidden
    Matrix h;  // inputs x hidden, zero-initialized
    double alpha = 0.0005;
    double eta = 0.0;
};

inline CrosspropState make_crossprop_state(const NetShape& shape, double alpha, double eta,
                                           std::uint64_t seed) {
    shape.validate();
    if (shape.outputs != 1)
        throw InvalidInput("crossprop state requires a single output unit");
    detail::require_alpha(alpha);
    detail::require_eta(eta);
    Rng rng = make_rng(seed, "learner/init");
    CrosspropState s;
    s.u = init_weights(shape.inputs, shape.hidden, shape.inputs, rng);
    Matrix w0 = init_weights(shape.hidden, 1, shape.hidden, rng);
    s.w.assign(w0.values().begin(), w0.values().end());
    s.h = Matrix(shape.inputs, shape.hidden, 0.0);
    s.alpha = alpha;
    s.eta = eta;
    return s;
}

// One online update. Every right-hand side reads time-t values only:
//   u_ij += a d [(1-eta) phi_j h_ij + eta w_j dphi_j/du_ij]
//   h_ij  = h_ij (1 - a (1-eta) phi_j^2) + a (d - eta w_j phi_j) dphi_j/du_ij
//   w_j  += a d phi_j
inline StepOutcome crossprop_step(CrosspropState& state, std::span<const double> x, double y_star,
                                  ActivationKind kind) {
    const std::size_t n = state.u.cols();
    detail::require_eta(state.eta);
    const Vector phi = hidden_activations(x, state.u, kind);
    const double y = predict_scalar(phi, state.w);
    const double delta = y_star - y;
    const double a = state.alpha;
    const double eta = state.eta;

    Vector slope(n), decay(n), hcoef(n);
    for (std::size_t j = 0; j < n; ++j) {
        slope[j] = activation_slope(kind, phi[j]);
        decay[j] = 1.0 - a * (1.0 - eta) * phi[j] * phi[j];
        hcoef[j] = a * (delta - eta * state.w[j] * phi[j]);
    }

    // u and h updates are element-local and never read each other's new
    // values, so committing in place with per-element temporaries is exact.
    for (std::size_t i = 0; i < state.u.rows(); ++i) {
        const double xi = x[i];
        auto urow = state.u.row(i);
        auto hrow = state.h.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double dphi = slope[j] * xi;
            const double unew =
                urow[j] + a * delta * ((1.0 - eta) * phi[j] * hrow[j] + eta * state.w[j] * dphi);
            const double hnew = hrow[j] * decay[j] + hcoef[j] * dphi;
            urow[j] = unew;
            hrow[j] = hnew;
        }
    }
    for (std::size_t j = 0; j < n; ++j) state.w[j] += a * delta * phi[j];

    detail::require_finite_state(state.u.values(), state.w, state.h.values(), "crossprop_step");
    return StepOutcome{Vector{delta}, delta * delta};
}

// ---------------------------------------------------------------------------
// Crossprop-approx, softmax multi-output. Traces live per (hidden, output)
// pair and accumulate the error each hidden unit receives through its
// outgoing weights; the h recursion carries no dphi/du factor.
// ---------------------------------------------------------------------------

struct CrosspropApproxState {
    Matrix u;  // inputs x hidden
    Matrix w;  // hidden x outputs
    Matrix h;  // hidden x outputs, zero-initialized
    double alpha = 0.0005;
    double eta = 0.0;
};

inline CrosspropApproxState make_crossprop_approx_state(const NetShape& shape, double alpha,
                                                        double eta, std::uint64_t seed) {
    shape.validate();
    detail::require_alpha(alpha);
    detail::require_eta(eta);
    Rng rng = make_rng(seed, "learner/init");
    CrosspropApproxState s;
    s.u = init_weights(shape.inputs, shape.hidden, shape.inputs, rng);
    s.w = init_weights(shape.hidden, shape.outputs, shape.hidden, rng);
    s.h = Matrix(shape.hidden, shape.outputs, 0.0);
    s.alpha = alpha;
    s.eta = eta;
    return s;
}

//   u_ij += a [sum_k d_k ((1-eta) phi_j h_jk + eta w_jk)] dphi_j/du_ij
//   h_jk  = h_jk (1 - a (1-eta) phi_j^2) + a (d_k - eta w_jk phi_j)
//   w_jk += a d_k phi_j
inline StepOutcome crossprop_approx_step(CrosspropApproxState& state, std::span<const double> x,
                                         std::span<const double> target_onehot,
                                         ActivationKind kind) {
    const std::size_t n = state.u.cols();
    const std::size_t k = state.w.cols();
    detail::require_eta(state.eta);
    const Vector phi = hidden_activations(x, state.u, kind);
    const Vector z = output_logits(phi, state.w);
    const Vector y = softmax(z);
    const ErrorSignal err = error_softmax(target_onehot, y);
    const double a = state.alpha;
    const double eta = state.eta;

    // Per-hidden-unit accumulation over outputs, from time-t values.
    Vector summed(n, 0.0), slope(n), decay(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto wrow = state.w.row(j);
        const auto hrow = state.h.row(j);
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            s += err.delta[c] * ((1.0 - eta) * phi[j] * hrow[c] + eta * wrow[c]);
        summed[j] = s;
        slope[j] = activation_slope(kind, phi[j]);
        decay[j] = 1.0 - a * (1.0 - eta) * phi[j] * phi[j];
    }

    for (std::size_t i = 0; i < state.u.rows(); ++i) {
        const double xi = x[i];
        auto urow = state.u.row(i);
        for (std::size_t j = 0; j < n; ++j) urow[j] += a * summed[j] * slope[j] * xi;
    }
    for (std::size_t j = 0; j < n; ++j) {
        auto hrow = state.h.row(j);
        auto wrow = state.w.row(j);
        for (std::size_t c = 0; c < k; ++c) {
            hrow[c] = hrow[c] * decay[j] + a * (err.delta[c] - eta * wrow[c] * phi[j]);
            wrow[c] += a * err.delta[c] * phi[j];
        }
    }

    detail::require_finite_state(state.u.values(), state.w.values(), state.h.values(),
                                 "crossprop_approx_step");
    return StepOutcome{err.delta, cross_entropy_from_logits(z, one_hot_index(target_onehot))};
}

// ---------------------------------------------------------------------------
// Baselines: plain two-layer SGD and its momentum / RMSProp / ADAM variants,
// all sharing the same raw gradients behind one step interface.
// ---------------------------------------------------------------------------

enum class BaselineRule { Sgd, Momentum, RmsProp, Adam };

struct BaselineHyper {
    double momentum = 0.9;
    double rho = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct BaselineState {
    Matrix u;  // inputs x hidden
    Matrix w;  // hidden x outputs
    double alpha = 0.0005;
    BaselineRule rule = BaselineRule::Sgd;
    BaselineHyper hyper;

    Matrix u_vel, w_vel;        // momentum velocity
    Matrix u_sq, w_sq;          // RMSProp squared-gradient average
    Matrix u_m1, w_m1;          // ADAM first moment
    Matrix u_m2, w_m2;          // ADAM second moment
    std::uint64_t step_count = 0;
};

inline BaselineState make_baseline_state(const NetShape& shape, double alpha, BaselineRule rule,
                                         std::uint64_t seed, BaselineHyper hyper = {}) {
    shape.validate();
    detail::require_alpha(alpha);
    if (!(hyper.momentum >= 0.0 && hyper.momentum < 1.0))
        throw InvalidInput("momentum must lie in [0, 1)");
    if (!(hyper.rho > 0.0 && hyper.rho < 1.0)) throw InvalidInput("rho must lie in (0, 1)");
    if (!(hyper.beta1 > 0.0 && hyper.beta1 < 1.0 && hyper.beta2 > 0.0 && hyper.beta2 < 1.0))
        throw InvalidInput("beta1 and beta2 must lie in (0, 1)");
    if (!(hyper.epsilon > 0.0)) throw InvalidInput("epsilon must be > 0");

    Rng rng = make_rng(seed, "learner/init");
    BaselineState s;
    s.u = init_weights(shape.inputs, shape.hidden, shape.inputs, rng);
    s.w = init_weights(shape.hidden, shape.outputs, shape.hidden, rng);
    s.alpha = alpha;
    s.rule = rule;
    s.hyper = hyper;
    switch (rule) {
        case BaselineRule::Sgd: break;
        case BaselineRule::Momentum:
            s.u_vel = Matrix(shape.inputs, shape.hidden);
            s.w_vel = Matrix(shape.hidden, shape.outputs);
            break;
        case BaselineRule::RmsProp:
            s.u_sq = Matrix(shape.inputs, shape.hidden);
            s.w_sq = Matrix(shape.hidden, shape.outputs);
            break;
        case BaselineRule::Adam:
            s.u_m1 = Matrix(shape.inputs, shape.hidden);
            s.w_m1 = Matrix(shape.hidden, shape.outputs);
            s.u_m2 = Matrix(shape.inputs, shape.hidden);
            s.w_m2 = Matrix(shape.hidden, shape.outputs);
            break;
    }
    return s;
}

// Descent direction (negative loss gradient) for both layers. For the
// squared loss the head is linear and L = 1/2 sum_k (t_k - y_k)^2; for
// cross-entropy the head is softmax and L = -sum_k t_k log y_k. Both give
//   dW descent = d_k phi_j,   dU descent = (sum_k d_k w_jk) dphi_j/du_ij
// with d = target - prediction.
struct Gradients {
    Matrix u;
    Matrix w;
};

inline Gradients two_layer_gradients(const Matrix& u, const Matrix& w, std::span<const double> x,
                                     std::span<const double> target, ActivationKind kind,
                                     Loss loss, StepOutcome* outcome = nullptr) {
    if (target.size() != w.cols())
        throw InvalidInput("two_layer_gradients: target length " + std::to_string(target.size()) +
                           " does not match output count " + std::to_string(w.cols()));
    const std::size_t n = u.cols();
    const std::size_t k = w.cols();
    const Vector phi = hidden_activations(x, u, kind);
    const Vector z = output_logits(phi, w);
    Vector delta(k);
    double error = 0.0;
    if (loss == Loss::Squared) {
        for (std::size_t c = 0; c < k; ++c) {
            delta[c] = target[c] - z[c];
            error += delta[c] * delta[c];
        }
    } else {
        const Vector y = softmax(z);
        const ErrorSignal err = error_softmax(target, y);
        delta = err.delta;
        error = cross_entropy_from_logits(z, one_hot_index(target));
    }

    Gradients g;
    g.w = Matrix(n, k);
    for (std::size_t j = 0; j < n; ++j) {
        auto grow = g.w.row(j);
        for (std::size_t c = 0; c < k; ++c) grow[c] = delta[c] * phi[j];
    }
    Vector backsig(n);
    for (std::size_t j = 0; j < n; ++j)
        backsig[j] = dot(delta, w.row(j)) * activation_slope(kind, phi[j]);
    g.u = Matrix(u.rows(), n);
    for (std::size_t i = 0; i < u.rows(); ++i) {
        const double xi = x[i];
        auto grow = g.u.row(i);
        for (std::size_t j = 0; j < n; ++j) grow[j] = backsig[j] * xi;
    }
    if (outcome) *outcome = StepOutcome{std::move(delta), error};
    return g;
}

// Loss value matching the gradients above; used by finite-difference checks.
inline double loss_value(const Matrix& u, const Matrix& w, std::span<const double> x,
                         std::span<const double> target, ActivationKind kind, Loss loss) {
    const Vector phi = hidden_activations(x, u, kind);
    const Vector z = output_logits(phi, w);
    if (loss == Loss::Squared) {
        double sum = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) {
            const double d = target[c] - z[c];
            sum += d * d;
        }
        return 0.5 * sum;
    }
    return cross_entropy_from_logits(z, one_hot_index(target));
}

namespace detail {

inline void apply_rule(BaselineState& s, Matrix& param, const Matrix& grad, Matrix& vel,
                       Matrix& sq, Matrix& m1, Matrix& m2) {
    const double a = s.alpha;
    auto p = param.values();
    auto g = grad.values();
    switch (s.rule) {
        case BaselineRule::Sgd:
            for (std::size_t i = 0; i < p.size(); ++i) p[i] += a * g[i];
            break;
        case BaselineRule::Momentum: {
            auto v = vel.values();
            const double mu = s.hyper.momentum;
            for (std::size_t i = 0; i < p.size(); ++i) {
                v[i] = mu * v[i] + a * g[i];
                p[i] += v[i];
            }
            break;
        }
        case BaselineRule::RmsProp: {
            auto q = sq.values();
            const double rho = s.hyper.rho;
            const double eps = s.hyper.epsilon;
            for (std::size_t i = 0; i < p.size(); ++i) {
                q[i] = rho * q[i] + (1.0 - rho) * g[i] * g[i];
                p[i] += a * g[i] / (std::sqrt(q[i]) + eps);
            }
            break;
        }
        case BaselineRule::Adam: {
            auto m = m1.values();
            auto v = m2.values();
            const double b1 = s.hyper.beta1;
            const double b2 = s.hyper.beta2;
            const double eps = s.hyper.epsilon;
            const double t = static_cast<double>(s.step_count);
            const double c1 = 1.0 - std::pow(b1, t);
            const double c2 = 1.0 - std::pow(b2, t);
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] += a * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            }
            break;
        }
    }
}

}  // namespace detail

// One step of the selected baseline. Raw gradients are identical across
// rules; only the accumulator transform differs. Both layers update from
// time-t gradients computed before any commit.
inline StepOutcome baseline_step(BaselineState& state, std::span<const double> x,
                                 std::span<const double> target, ActivationKind kind, Loss loss) {
    StepOutcome out;
    Gradients g = two_layer_gradients(state.u, state.w, x, target, kind, loss, &out);
    if (state.rule == BaselineRule::Adam) ++state.step_count;
    detail::apply_rule(state, state.u, g.u, state.u_vel, state.u_sq, state.u_m1, state.u_m2);
    detail::apply_rule(state, state.w, g.w, state.w_vel, state.w_sq, state.w_m1, state.w_m2);
    if (!all_finite(state.u) || !all_finite(state.w))
        throw DivergenceError("baseline_step: non-finite parameter after step");
    return out;
}

}  // namespace crossprop
