#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "crossprop/config.hpp"
#include "crossprop/errors.hpp"
#include "crossprop/geoff.hpp"
#include "crossprop/idx.hpp"
#include "crossprop/metrics.hpp"
#include "crossprop/optimizers.hpp"

namespace crossprop {

enum class Problem { Geoff, Mnist };

inline std::string_view problem_name(Problem p) {
    return p == Problem::Geoff ? "geoff" : "mnist";
}

inline Problem problem_from_name(std::string_view name) {
    if (name == "geoff") return Problem::Geoff;
    if (name == "mnist") return Problem::Mnist;
    throw ConfigError("unknown problem '" + std::string(name) + "' (expected geoff or mnist)");
}

enum class OptimizerKind { Crossprop, CrosspropApprox, Backprop, Momentum, RmsProp, Adam };

inline std::string_view optimizer_name(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::Crossprop: return "crossprop";
        case OptimizerKind::CrosspropApprox: return "crossprop_approx";
        case OptimizerKind::Backprop: return "backprop";
        case OptimizerKind::Momentum: return "momentum";
        case OptimizerKind::RmsProp: return "rmsprop";
        case OptimizerKind::Adam: return "adam";
    }
    throw ConfigError("unknown optimizer kind");
}

inline OptimizerKind optimizer_from_name(std::string_view name) {
    if (name == "crossprop") return OptimizerKind::Crossprop;
    if (name == "crossprop_approx" || name == "crossprop-approx")
        return OptimizerKind::CrosspropApprox;
    if (name == "backprop") return OptimizerKind::Backprop;
    if (name == "momentum") return OptimizerKind::Momentum;
    if (name == "rmsprop") return OptimizerKind::RmsProp;
    if (name == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

// One experiment: one problem, one optimizer, a task schedule, and the
// seeds to repeat it over. The learner trains strictly online, one example
// at a time, and never receives a task-boundary signal.
struct ExperimentConfig {
    Problem problem = Problem::Geoff;
    OptimizerKind optimizer = OptimizerKind::Crossprop;
    double eta = 0.0;
    double alpha = 0.0005;
    std::size_t inputs = 20;
    std::size_t hidden = 500;
    std::size_t outputs = 1;
    ActivationKind activation = ActivationKind::Tanh;
    std::vector<std::size_t> schedule = {5000, 5000, 5000};  // examples per task
    std::vector<std::uint64_t> seeds = {0};
    double mutation_fraction = 0.5;  // geoff; 0 means tasks share the target
    std::size_t geoff_features = 1000;
    double geoff_beta = 0.6;
    double noise_stddev = 1.0;
    std::vector<long> label_shifts = {0, 1, 2};  // mnist, one per task
    std::size_t bin_width = 100;
    std::size_t stride = 1;
    bool shuffle = true;  // mnist example order within a task
    BaselineHyper hyper;

    NetShape shape() const { return NetShape{inputs, hidden, outputs}; }
    Loss loss() const {
        return problem == Problem::Geoff ? Loss::Squared : Loss::CrossEntropy;
    }

    void validate() const {
        if (schedule.empty()) throw ConfigError("schedule must list at least one task");
        if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
        if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
        if (inputs < 1 || hidden < 1 || outputs < 1)
            throw ConfigError("inputs, hidden and outputs must all be >= 1");
        if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
        if (bin_width < 1) throw ConfigError("bin_width must be >= 1");
        if (stride < 1) throw ConfigError("stride must be >= 1");
        if (problem == Problem::Geoff) {
            if (outputs != 1) throw ConfigError("geoff is a scalar-target problem: outputs = 1");
            if (optimizer == OptimizerKind::CrosspropApprox)
                throw ConfigError(
                    "crossprop_approx drives a softmax head and is not defined for the "
                    "scalar geoff problem; use crossprop");
            if (!(mutation_fraction >= 0.0 && mutation_fraction <= 1.0))
                throw ConfigError("mutation_fraction must lie in [0, 1]");
            if (!(geoff_beta > 0.0 && geoff_beta < 1.0))
                throw ConfigError("geoff_beta must lie in (0, 1)");
            if (geoff_features < 1) throw ConfigError("geoff_features must be >= 1");
            if (noise_stddev < 0.0) throw ConfigError("noise_stddev must be >= 0");
        } else {
            if (inputs != kMnistPixels)
                throw ConfigError("mnist requires inputs = 784");
            if (outputs != 10) throw ConfigError("mnist requires outputs = 10");
            if (label_shifts.size() != schedule.size())
                throw ConfigError("label_shifts must list one shift per scheduled task");
        }
    }
};

struct MnistData {
    ImageSet images;
    LabelSet labels;
};

// Uniform one-example step interface over every optimizer. Crossprop with a
// multi-output softmax head is served by the crossprop-approx traces.
class Learner {
  public:
    Learner(OptimizerKind kind, const NetShape& shape, ActivationKind activation, Loss loss,
            double alpha, double eta, const BaselineHyper& hyper, std::uint64_t seed)
        : kind_(kind), activation_(activation), loss_(loss) {
        switch (kind) {
            case OptimizerKind::Crossprop:
                if (shape.outputs == 1 && loss == Loss::Squared) {
                    state_ = make_crossprop_state(shape, alpha, eta, seed);
                } else {
                    state_ = make_crossprop_approx_state(shape, alpha, eta, seed);
                }
                break;
            case OptimizerKind::CrosspropApprox:
                if (loss != Loss::CrossEntropy)
                    throw ConfigError("crossprop_approx requires a softmax/cross-entropy head");
                state_ = make_crossprop_approx_state(shape, alpha, eta, seed);
                break;
            case OptimizerKind::Backprop:
                state_ = make_baseline_state(shape, alpha, BaselineRule::Sgd, seed, hyper);
                break;
            case OptimizerKind::Momentum:
                state_ = make_baseline_state(shape, alpha, BaselineRule::Momentum, seed, hyper);
                break;
            case OptimizerKind::RmsProp:
                state_ = make_baseline_state(shape, alpha, BaselineRule::RmsProp, seed, hyper);
                break;
            case OptimizerKind::Adam:
                state_ = make_baseline_state(shape, alpha, BaselineRule::Adam, seed, hyper);
                break;
        }
    }

    // target holds the scalar y* for squared loss or a one-hot vector for
    // cross-entropy. Returns the instantaneous error on the example.
    double step(std::span<const double> x, std::span<const double> target) {
        if (auto* s = std::get_if<CrosspropState>(&state_))
            return crossprop_step(*s, x, target[0], activation_).error;
        if (auto* s = std::get_if<CrosspropApproxState>(&state_))
            return crossprop_approx_step(*s, x, target, activation_).error;
        return baseline_step(std::get<BaselineState>(state_), x, target, activation_, loss_).error;
    }

    std::span<const double> incoming_values() const {
        return std::visit([](const auto& s) { return s.u.values(); }, state_);
    }

    std::span<const double> outgoing_values() const {
        if (const auto* s = std::get_if<CrosspropState>(&state_))
            return {s->w.data(), s->w.size()};
        if (const auto* s = std::get_if<CrosspropApproxState>(&state_)) return s->w.values();
        return std::get<BaselineState>(state_).w.values();
    }

    const Matrix& incoming() const {
        return std::visit([](const auto& s) -> const Matrix& { return s.u; }, state_);
    }

    Vector hidden(std::span<const double> x) const {
        return hidden_activations(x, incoming(), activation_);
    }

    ActivationKind activation() const { return activation_; }
    OptimizerKind kind() const { return kind_; }

  private:
    OptimizerKind kind_;
    ActivationKind activation_;
    Loss loss_;
    std::variant<CrosspropState, CrosspropApproxState, BaselineState> state_;
};

inline Learner make_learner(const ExperimentConfig& config, std::uint64_t seed) {
    return Learner(config.optimizer, config.shape(), config.activation, config.loss(),
                   config.alpha, config.eta, config.hyper, seed);
}

struct RunResult {
    std::vector<MetricsRow> rows;
    RunSummary summary;
};

namespace detail {

inline std::vector<std::size_t> task_order(std::size_t count, std::uint64_t run_seed,
                                           std::size_t task_index, bool shuffle) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        Rng rng = make_rng(run_seed, "mnist/order", task_index);
        std::shuffle(order.begin(), order.end(), rng);
    }
    return order;
}

}  // namespace detail

// Runs one seed through the full task schedule. The learner persists across
// task boundaries with no reset and no boundary signal; drift is measured
// against initialization. On divergence the partial metrics are kept and
// the summary is flagged. `keep_learner` optionally receives the trained
// learner for feature export.
inline RunResult run_single_seed(const ExperimentConfig& config, std::uint64_t seed,
                                 const MnistData* data = nullptr,
                                 std::optional<Learner>* keep_learner = nullptr) {
    config.validate();
    if (config.problem == Problem::Mnist) {
        if (!data) throw InvalidInput("run_single_seed: mnist requires loaded data");
        if (data->images.count != data->labels.count)
            throw ParseError("image count " + std::to_string(data->images.count) +
                                 " does not match label count " +
                                 std::to_string(data->labels.count),
                             0);
        if (data->images.count == 0) throw ParseError("empty mnist dataset", 0);
    }

    const auto t0 = std::chrono::steady_clock::now();
    Learner learner = make_learner(config, seed);
    const Vector u0(learner.incoming_values().begin(), learner.incoming_values().end());
    const Vector w0(learner.outgoing_values().begin(), learner.outgoing_values().end());

    RunResult result;
    result.summary.seed = seed;
    result.summary.bin_width = config.bin_width;
    const std::size_t total =
        std::accumulate(config.schedule.begin(), config.schedule.end(), std::size_t{0});
    result.rows.reserve(total);
    Vector errors;
    errors.reserve(total);

    std::optional<GeoffTarget> target;
    std::optional<GeoffStream> stream;
    std::optional<Rng> mutate_rng;
    if (config.problem == Problem::Geoff) {
        target = generate_target(config.inputs, config.geoff_features, config.geoff_beta, seed);
        stream.emplace(seed, config.noise_stddev);
        mutate_rng = make_rng(seed, "geoff/mutate");
    }

    Vector onehot(config.outputs, 0.0);
    std::uint64_t global = 0;
    bool stopped = false;
    for (std::size_t task = 0; task < config.schedule.size() && !stopped; ++task) {
        if (config.problem == Problem::Geoff && task > 0 && config.mutation_fraction > 0.0)
            target = mutate_task(*target, config.mutation_fraction, *mutate_rng);
        std::vector<std::size_t> order;
        if (config.problem == Problem::Mnist)
            order = detail::task_order(data->images.count, seed, task, config.shuffle);

        for (std::size_t i = 0; i < config.schedule[task]; ++i) {
            std::span<const double> x;
            std::span<const double> tgt;
            LabeledExample ex;
            if (config.problem == Problem::Geoff) {
                ex = sample_example(*target, *stream);
                x = ex.x;
                tgt = {&ex.y_star, 1};
            } else {
                const std::size_t idx = order[i % order.size()];
                x = data->images.pixels.row(idx);
                std::fill(onehot.begin(), onehot.end(), 0.0);
                onehot[shift_one_label(data->labels.labels[idx], config.label_shifts[task])] = 1.0;
                tgt = onehot;
            }

            MetricsRow row;
            row.seed = seed;
            row.example = global;
            row.task = static_cast<int>(task);
            row.u_drift = drift_norm(learner.incoming_values(), u0);
            row.w_drift = drift_norm(learner.outgoing_values(), w0);
            try {
                row.error = learner.step(x, tgt);
            } catch (DivergenceError& e) {
                result.summary.diverged = true;
                result.summary.diverged_at = static_cast<long>(global);
                stopped = true;
                break;
            }
            result.rows.push_back(row);
            errors.push_back(row.error);
            ++global;
        }
    }

    result.summary.total_examples = global;
    result.summary.bin_mean_error =
        errors.empty() ? Vector{} : bin_means(errors, config.bin_width);
    result.summary.final_u_drift = drift_norm(learner.incoming_values(), u0);
    result.summary.final_w_drift = drift_norm(learner.outgoing_values(), w0);
    result.summary.duration_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (keep_learner) keep_learner->emplace(std::move(learner));
    return result;
}

// Runs every configured seed, optionally across a bounded pool of worker
// threads. Results are ordered by seed position, so the output bytes never
// depend on the degree of parallelism.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& config,
                                             const MnistData* data = nullptr,
                                             std::size_t parallel = 1) {
    config.validate();
    const std::size_t n = config.seeds.size();
    std::vector<RunResult> results(n);
    std::vector<std::exception_ptr> failures(n);
    const std::size_t workers = std::max<std::size_t>(1, std::min(parallel, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i)
            results[i] = run_single_seed(config, config.seeds[i], data);
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t wi = 0; wi < workers; ++wi) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    results[i] = run_single_seed(config, config.seeds[i], data);
                } catch (...) {
                    failures[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& f : failures)
        if (f) std::rethrow_exception(f);
    return results;
}

// Hidden-layer activation matrix (examples x hidden) for feature audits and
// external embedding tools.
inline Matrix export_features(const Matrix& incoming, ActivationKind kind,
                              const std::vector<Vector>& examples) {
    Matrix out(examples.size(), incoming.cols());
    for (std::size_t r = 0; r < examples.size(); ++r) {
        const Vector phi = hidden_activations(examples[r], incoming, kind);
        auto row = out.row(r);
        std::copy(phi.begin(), phi.end(), row.begin());
    }
    return out;
}

inline Matrix export_features(const Learner& learner, const std::vector<Vector>& examples) {
    return export_features(learner.incoming(), learner.activation(), examples);
}

inline std::string render_features_csv(const Matrix& features) {
    std::string out;
    for (std::size_t r = 0; r < features.rows(); ++r) {
        const auto row = features.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out += ',';
            out += format_number(row[c]);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config schema: the single source of truth for config-file keys, their
// defaults (desk-scale and full paper protocol), and the template emitted
// by gen-config. Flags, files and defaults all resolve through these keys.
// ---------------------------------------------------------------------------

enum class ConfigScope { Shared, GeoffOnly, MnistOnly };

struct ConfigKey {
    const char* key;
    const char* geoff_default;
    const char* mnist_default;
    const char* geoff_paper;  // paper-protocol preset values
    const char* mnist_paper;
    ConfigScope scope;
    const char* comment;
};

inline std::span<const ConfigKey> config_schema() {
    static const ConfigKey keys[] = {
        {"problem", "geoff", "mnist", "geoff", "mnist", ConfigScope::Shared,
         "Problem family: geoff or mnist."},
        {"optimizers", "crossprop,backprop,momentum,rmsprop,adam",
         "crossprop_approx,backprop,momentum,rmsprop,adam",
         "crossprop,backprop,momentum,rmsprop,adam",
         "crossprop_approx,backprop,momentum,rmsprop,adam", ConfigScope::Shared,
         "Comma list of optimizers to run, each over every seed."},
        {"eta", "0", "0", "0", "0", ConfigScope::Shared,
         "Crossprop mixing factor in [0, 1]: 0 = pure meta-gradient, 1 = backprop."},
        {"alpha", "0.0005", "0.0005", "0.0005", "0.0005", ConfigScope::Shared,
         "Constant step size shared by every optimizer."},
        {"inputs", "20", "784", "20", "784", ConfigScope::Shared, "Learner input units (m)."},
        {"hidden", "100", "128", "500", "1024", ConfigScope::Shared, "Learner hidden units (n)."},
        {"outputs", "1", "10", "1", "10", ConfigScope::Shared,
         "Learner output units (k): 1 for geoff, 10 for mnist."},
        {"activation", "tanh", "tanh", "tanh", "tanh", ConfigScope::Shared,
         "Hidden activation: tanh or logistic."},
        {"schedule", "1000,1000,1000", "2000,2000,2000", "5000,5000,5000",
         "60000,60000,60000", ConfigScope::Shared,
         "Examples per task, in order; task ids follow the list positions."},
        {"seeds", "0,1,2", "0", "0,1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18,19,20,21,22,23,"
                                 "24,25,26,27,28,29",
         "0", ConfigScope::Shared, "Comma list of run seeds; one independent run per seed."},
        {"bin_width", "100", "100", "100", "100", ConfigScope::Shared,
         "Learning-curve bin width, in examples."},
        {"stride", "1", "1", "1", "1", ConfigScope::Shared,
         "Write every stride-th metrics row (metrics are computed every example)."},
        {"mutation_fraction", "0.5", "", "0.5", "", ConfigScope::GeoffOnly,
         "Fraction of outgoing target weights regenerated at each task switch; 0 keeps the "
         "target fixed."},
        {"geoff_features", "500", "", "1000", "", ConfigScope::GeoffOnly,
         "LTU count n* of the target network."},
        {"geoff_beta", "0.6", "", "0.6", "", ConfigScope::GeoffOnly,
         "Sparsity threshold parameter of the target network, in (0, 1)."},
        {"noise_stddev", "1", "", "1", "", ConfigScope::GeoffOnly,
         "Stddev of the Gaussian target noise; 0 disables noise."},
        {"label_shifts", "", "0,1,2", "", "0,1,2", ConfigScope::MnistOnly,
         "Label shift per task, applied mod 10; one entry per scheduled task."},
        {"shuffle", "", "true", "", "true", ConfigScope::MnistOnly,
         "Seeded per-task shuffle of the example order (false = sequential pass)."},
    };
    return keys;
}

inline bool key_applies(const ConfigKey& k, Problem problem) {
    if (k.scope == ConfigScope::GeoffOnly) return problem == Problem::Geoff;
    if (k.scope == ConfigScope::MnistOnly) return problem == Problem::Mnist;
    return true;
}

inline KeyValues default_config_keys(Problem problem, bool paper_preset = false) {
    KeyValues kv;
    for (const auto& k : config_schema()) {
        if (!key_applies(k, problem)) continue;
        const char* v = problem == Problem::Geoff ? (paper_preset ? k.geoff_paper : k.geoff_default)
                                                  : (paper_preset ? k.mnist_paper : k.mnist_default);
        kv[k.key] = v;
    }
    return kv;
}

inline void check_known_keys(const KeyValues& kv, Problem problem) {
    for (const auto& [key, value] : kv) {
        bool known = false;
        for (const auto& k : config_schema())
            if (key == k.key && key_applies(k, problem)) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("unknown config key '" + key + "' for problem '" +
                              std::string(problem_name(problem)) + "'");
    }
}

// Builds the harness config from resolved key-values. The optimizer list is
// returned separately; ExperimentConfig carries one optimizer at a time.
inline ExperimentConfig config_from_keys(const KeyValues& kv,
                                         std::vector<OptimizerKind>* optimizers_out = nullptr) {
    const auto get = [&](const char* key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw ConfigError(std::string("missing config key '") + key + "'");
        return it->second;
    };
    ExperimentConfig c;
    c.problem = problem_from_name(get("problem"));
    check_known_keys(kv, c.problem);

    std::vector<OptimizerKind> optimizers;
    for (const auto& name : split_list(get("optimizers")))
        optimizers.push_back(optimizer_from_name(name));
    if (optimizers.empty()) throw ConfigError("optimizers must list at least one optimizer");

    c.eta = to_double(get("eta"), "eta");
    c.alpha = to_double(get("alpha"), "alpha");
    c.inputs = to_u64(get("inputs"), "inputs");
    c.hidden = to_u64(get("hidden"), "hidden");
    c.outputs = to_u64(get("outputs"), "outputs");
    c.activation = activation_from_name(get("activation"));
    c.schedule.clear();
    for (const auto& s : split_list(get("schedule")))
        c.schedule.push_back(to_u64(s, "schedule"));
    c.seeds.clear();
    for (const auto& s : split_list(get("seeds"))) c.seeds.push_back(to_u64(s, "seeds"));
    c.bin_width = to_u64(get("bin_width"), "bin_width");
    c.stride = to_u64(get("stride"), "stride");
    if (c.problem == Problem::Geoff) {
        c.mutation_fraction = to_double(get("mutation_fraction"), "mutation_fraction");
        c.geoff_features = to_u64(get("geoff_features"), "geoff_features");
        c.geoff_beta = to_double(get("geoff_beta"), "geoff_beta");
        c.noise_stddev = to_double(get("noise_stddev"), "noise_stddev");
    } else {
        c.label_shifts.clear();
        for (const auto& s : split_list(get("label_shifts")))
            c.label_shifts.push_back(to_long(s, "label_shifts"));
        c.shuffle = to_bool(get("shuffle"), "shuffle");
    }

    c.optimizer = optimizers.front();
    ExperimentConfig probe = c;
    for (OptimizerKind opt : optimizers) {
        probe.optimizer = opt;
        probe.validate();
    }
    if (optimizers_out) *optimizers_out = std::move(optimizers);
    return c;
}

inline std::string render_config_template(Problem problem, bool paper_preset = false) {
    std::string out = "# ";
    out += problem_name(problem);
    out += paper_preset ? " experiment, full paper protocol\n" : " experiment, desk scale\n";
    out += "# One 'key = value' per line; '#' starts a comment; lists are comma-separated.\n\n";
    for (const auto& k : config_schema()) {
        if (!key_applies(k, problem)) continue;
        const char* v = problem == Problem::Geoff ? (paper_preset ? k.geoff_paper : k.geoff_default)
                                                  : (paper_preset ? k.mnist_paper : k.mnist_default);
        out += "# ";
        out += k.comment;
        out += '\n';
        out += k.key;
        out += " = ";
        out += v;
        out += "\n\n";
    }
    return out;
}

}  // namespace crossprop
