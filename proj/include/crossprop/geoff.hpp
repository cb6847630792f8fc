#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "crossprop/errors.hpp"
#include "crossprop/matrix.hpp"
#include "crossprop/rng.hpp"

#include <nlohmann/json.hpp>

namespace crossprop {

// A frozen random target network of linear threshold units. Binary inputs
// map through sign weights U* to n* LTUs whose outputs combine linearly
// via W* in {-1, 0, +1} into a noisy scalar target.
struct GeoffTarget {
    std::size_t m = 0;       // input count
    std::size_t n_star = 0;  // LTU count
    double beta = 0.6;       // sparsity threshold parameter, in (0, 1)
    Matrix u_star;           // m x n*, entries exactly -1 or +1
    Vector w_star;           // n*, entries exactly -1, 0 or +1
    Vector theta;            // n*, LTU thresholds derived from U* columns
    std::uint64_t seed = 0;  // construction seed, kept for audits
};

// Threshold convention: theta_j = beta * m - S_j where S_j counts the -1
// input weights of unit j. Isolated here so the rule can be swapped in one
// place if a different convention is ever needed.
inline double ltu_threshold(double beta, std::size_t m, std::size_t negatives) {
    return beta * static_cast<double>(m) - static_cast<double>(negatives);
}

inline GeoffTarget generate_target(std::size_t m, std::size_t n_star, double beta,
                                   std::uint64_t seed) {
    if (m < 1 || n_star < 1) throw InvalidInput("generate_target: m and n* must be >= 1");
    if (!(beta > 0.0 && beta < 1.0))
        throw InvalidInput("generate_target: beta must lie in (0, 1), got " +
                           std::to_string(beta));
    Rng rng = make_rng(seed, "geoff/target");
    std::uniform_int_distribution<int> sign(0, 1);
    std::uniform_int_distribution<int> ternary(0, 2);

    GeoffTarget t;
    t.m = m;
    t.n_star = n_star;
    t.beta = beta;
    t.seed = seed;
    t.u_star = Matrix(m, n_star);
    for (double& v : t.u_star.values()) v = sign(rng) == 0 ? -1.0 : 1.0;
    t.w_star.resize(n_star);
    for (double& v : t.w_star) v = static_cast<double>(ternary(rng) - 1);
    t.theta.resize(n_star);
    for (std::size_t j = 0; j < n_star; ++j) {
        std::size_t negatives = 0;
        for (std::size_t i = 0; i < m; ++i)
            if (t.u_star(i, j) < 0.0) ++negatives;
        t.theta[j] = ltu_threshold(beta, m, negatives);
    }
    return t;
}

// phi*_j = 1 if sum_i x_i u*_ij >= theta_j else 0. Fires at exactly the
// threshold.
inline Vector ltu_features(const GeoffTarget& target, std::span<const double> x) {
    if (x.size() != target.m)
        throw InvalidInput("ltu_features: input length " + std::to_string(x.size()) +
                           " does not match target m " + std::to_string(target.m));
    Vector phi(target.n_star, 0.0);
    for (std::size_t i = 0; i < target.m; ++i) {
        if (x[i] == 0.0) continue;
        const auto row = target.u_star.row(i);
        for (std::size_t j = 0; j < target.n_star; ++j) phi[j] += row[j];
    }
    for (std::size_t j = 0; j < target.n_star; ++j)
        phi[j] = phi[j] >= target.theta[j] ? 1.0 : 0.0;
    return phi;
}

struct LabeledExample {
    Vector x;       // entries exactly 0 or 1
    double y_star;  // noisy scalar target
};

// Example stream with separate generators for input sampling and target
// noise, both derived from one seed. noise_stddev = 0 is a test hook that
// suppresses the noise term entirely.
struct GeoffStream {
    Rng input;
    Rng noise;
    double noise_stddev = 1.0;

    explicit GeoffStream(std::uint64_t seed, double noise_sd = 1.0)
        : input(make_rng(seed, "geoff/input")),
          noise(make_rng(seed, "geoff/noise")),
          noise_stddev(noise_sd) {}
};

inline LabeledExample sample_example(const GeoffTarget& target, GeoffStream& stream) {
    std::uniform_int_distribution<int> bit(0, 1);
    LabeledExample ex;
    ex.x.resize(target.m);
    for (double& v : ex.x) v = static_cast<double>(bit(stream.input));
    const Vector phi = ltu_features(target, ex.x);
    ex.y_star = dot(phi, target.w_star);
    if (stream.noise_stddev > 0.0) {
        std::normal_distribution<double> gauss(0.0, stream.noise_stddev);
        ex.y_star += gauss(stream.noise);
    }
    return ex;
}

// Regenerates floor(fraction * n*) distinct outgoing weights, drawn i.i.d.
// uniform over {-1, 0, +1}; a redrawn entry may repeat its old value. U*,
// beta and theta are untouched. `touched` reports the selected indices.
inline GeoffTarget mutate_task(const GeoffTarget& target, double fraction, Rng& rng,
                               std::vector<std::size_t>* touched = nullptr) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw InvalidInput("mutate_task: fraction must lie in (0, 1], got " +
                           std::to_string(fraction));
    const std::size_t count =
        static_cast<std::size_t>(fraction * static_cast<double>(target.n_star));
    std::vector<std::size_t> indices(target.n_star);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `count` slots become the selection.
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, indices.size() - 1);
        std::swap(indices[i], indices[pick(rng)]);
    }
    GeoffTarget next = target;
    std::uniform_int_distribution<int> ternary(0, 2);
    for (std::size_t i = 0; i < count; ++i)
        next.w_star[indices[i]] = static_cast<double>(ternary(rng) - 1);
    if (touched) touched->assign(indices.begin(), indices.begin() + static_cast<long>(count));
    return next;
}

// JSON layout for reproducibility audits: m, n_star, beta, u_star rows,
// w_star, seed. Thresholds are derived on load.
inline nlohmann::json to_json(const GeoffTarget& target) {
    nlohmann::json j;
    j["m"] = target.m;
    j["n_star"] = target.n_star;
    j["beta"] = target.beta;
    j["seed"] = target.seed;
    auto& rows = j["u_star"] = nlohmann::json::array();
    for (std::size_t i = 0; i < target.m; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t jj = 0; jj < target.n_star; ++jj)
            row.push_back(static_cast<int>(target.u_star(i, jj)));
        rows.push_back(std::move(row));
    }
    auto& w = j["w_star"] = nlohmann::json::array();
    for (double v : target.w_star) w.push_back(static_cast<int>(v));
    return j;
}

inline GeoffTarget target_from_json(const nlohmann::json& j) {
    GeoffTarget t;
    t.m = j.at("m").get<std::size_t>();
    t.n_star = j.at("n_star").get<std::size_t>();
    t.beta = j.at("beta").get<double>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.u_star = Matrix(t.m, t.n_star);
    const auto& rows = j.at("u_star");
    if (rows.size() != t.m) throw ParseError("u_star row count mismatch", 0);
    for (std::size_t i = 0; i < t.m; ++i) {
        const auto& row = rows.at(i);
        if (row.size() != t.n_star) throw ParseError("u_star column count mismatch", 0);
        for (std::size_t jj = 0; jj < t.n_star; ++jj)
            t.u_star(i, jj) = static_cast<double>(row.at(jj).get<int>());
    }
    const auto& w = j.at("w_star");
    if (w.size() != t.n_star) throw ParseError("w_star length mismatch", 0);
    t.w_star.resize(t.n_star);
    for (std::size_t jj = 0; jj < t.n_star; ++jj)
        t.w_star[jj] = static_cast<double>(w.at(jj).get<int>());
    t.theta.resize(t.n_star);
    for (std::size_t jj = 0; jj < t.n_star; ++jj) {
        std::size_t negatives = 0;
        for (std::size_t i = 0; i < t.m; ++i)
            if (t.u_star(i, jj) < 0.0) ++negatives;
        t.theta[jj] = ltu_threshold(t.beta, t.m, negatives);
    }
    return t;
}

}  // namespace crossprop
