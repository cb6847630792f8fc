#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>

#include "crossprop/matrix.hpp"
#include "crossprop/network.hpp"
#include "crossprop/optimizers.hpp"
#include "crossprop/rng.hpp"

namespace crossprop {

// Relative-or-absolute hybrid: behaves like relative error for gradients of
// magnitude > 1 and like absolute error below, so near-zero true gradients
// do not blow the ratio up.
inline double gradient_mismatch(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

// Central finite difference of f over each parameter in `params`.
inline Vector finite_difference_gradient(const std::function<double()>& f,
                                         std::span<double> params, double epsilon) {
    Vector grad(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        const double saved = params[p];
        params[p] = saved + epsilon;
        const double plus = f();
        params[p] = saved - epsilon;
        const double minus = f();
        params[p] = saved;
        grad[p] = (plus - minus) / (2.0 * epsilon);
    }
    return grad;
}

// Compares the raw gradients the baseline steps apply against central
// finite differences of the loss over every parameter of a random seeded
// two-layer network. Returns the worst mismatch. `corruption` is a test
// hook that perturbs one analytic entry to verify the failure path.
inline double grad_check(const NetShape& shape, ActivationKind kind, Loss loss, double epsilon,
                         std::uint64_t seed, double corruption = 0.0) {
    shape.validate();
    Rng rng = make_rng(seed, "gradcheck");
    Matrix u = init_weights(shape.inputs, shape.hidden, shape.inputs, rng);
    Matrix w = init_weights(shape.hidden, shape.outputs, shape.hidden, rng);

    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Vector x(shape.inputs);
    for (double& v : x) v = unit(rng);
    Vector target(shape.outputs, 0.0);
    if (loss == Loss::Squared) {
        for (double& v : target) v = unit(rng);
    } else {
        std::uniform_int_distribution<std::size_t> cls(0, shape.outputs - 1);
        target[cls(rng)] = 1.0;
    }

    Gradients g = two_layer_gradients(u, w, x, target, kind, loss);
    g.u(0, 0) += corruption;
    const auto eval = [&] { return loss_value(u, w, x, target, kind, loss); };

    double worst = 0.0;
    const Vector fd_u = finite_difference_gradient(eval, u.values(), epsilon);
    for (std::size_t p = 0; p < fd_u.size(); ++p)
        worst = std::max(worst, gradient_mismatch(-g.u.values()[p], fd_u[p]));
    const Vector fd_w = finite_difference_gradient(eval, w.values(), epsilon);
    for (std::size_t p = 0; p < fd_w.size(); ++p)
        worst = std::max(worst, gradient_mismatch(-g.w.values()[p], fd_w[p]));
    return worst;
}

}  // namespace crossprop
