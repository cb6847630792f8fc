#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "crossprop/errors.hpp"

namespace crossprop {

enum class ActivationKind { Tanh, Logistic };

inline double activate(ActivationKind kind, double preact) {
    switch (kind) {
        case ActivationKind::Tanh: return std::tanh(preact);
        case ActivationKind::Logistic: return 1.0 / (1.0 + std::exp(-preact));
    }
    throw InvalidInput("unknown activation kind");
}

// dphi/dz expressed through the activation value itself:
// tanh -> 1 - phi^2, logistic -> phi (1 - phi).
inline double activation_slope(ActivationKind kind, double phi) {
    switch (kind) {
        case ActivationKind::Tanh: return 1.0 - phi * phi;
        case ActivationKind::Logistic: return phi * (1.0 - phi);
    }
    throw InvalidInput("unknown activation kind");
}

// Closed form for d(phi_j)/d(u_ij) given the unit's activation phi_j and the
// input component x_i feeding the weight.
inline double activation_derivative(ActivationKind kind, double phi, double x) {
    return activation_slope(kind, phi) * x;
}

inline std::string_view activation_name(ActivationKind kind) {
    return kind == ActivationKind::Tanh ? "tanh" : "logistic";
}

inline ActivationKind activation_from_name(std::string_view name) {
    if (name == "tanh") return ActivationKind::Tanh;
    if (name == "logistic" || name == "sigmoid") return ActivationKind::Logistic;
    throw ConfigError("unknown activation '" + std::string(name) + "' (expected tanh or logistic)");
}

}  // namespace crossprop
