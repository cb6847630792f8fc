#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crossprop/experiment.hpp"
#include "crossprop/gradcheck.hpp"
#include "crossprop/version.hpp"

namespace fs = std::filesystem;
using namespace crossprop;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;
constexpr double kGradCheckTolerance = 1e-6;
constexpr std::size_t kGradCheckMaxDim = 64;

std::string default_out_dir() {
    if (const char* env = std::getenv("CROSSPROP_OUT_DIR"); env && *env) return env;
    return "results";
}

std::string kebab(std::string key) {
    for (char& c : key)
        if (c == '_') c = '-';
    return key;
}

// Per-key flag holders: flags override config-file keys one-for-one, and
// the config file overrides built-in defaults.
struct RunOptions {
    std::string config_path;
    std::string out_dir = default_out_dir();
    std::size_t parallel = 1;
    std::string images_path;  // mnist
    std::string labels_path;  // mnist
    std::map<std::string, std::string> flag_values;
    std::map<std::string, CLI::Option*> flag_options;
};

void add_key_flags(CLI::App* cmd, Problem problem, RunOptions& opts) {
    for (const auto& k : config_schema()) {
        if (!key_applies(k, problem)) continue;
        if (std::string_view(k.key) == "problem") continue;  // fixed by the subcommand
        const char* def =
            problem == Problem::Geoff ? k.geoff_default : k.mnist_default;
        std::string help = std::string(k.comment) + " [config key: " + k.key +
                           "; default: " + def + "]";
        opts.flag_options[k.key] =
            cmd->add_option("--" + kebab(k.key), opts.flag_values[k.key], help);
    }
}

KeyValues resolve_keys(Problem problem, const RunOptions& opts) {
    KeyValues merged = default_config_keys(problem);
    if (!opts.config_path.empty()) {
        const KeyValues file = load_config_file(opts.config_path);
        if (const auto it = file.find("problem");
            it != file.end() && it->second != problem_name(problem))
            throw ConfigError("config file declares problem '" + it->second +
                              "' but this subcommand runs '" +
                              std::string(problem_name(problem)) + "'");
        check_known_keys(file, problem);
        for (const auto& [key, value] : file) merged[key] = value;
    }
    for (const auto& [key, option] : opts.flag_options)
        if (option->count() > 0) merged[key] = opts.flag_values.at(key);
    merged["problem"] = problem_name(problem);
    return merged;
}

struct InvocationResult {
    bool any_diverged = false;
    nlohmann::json runs = nlohmann::json::array();
    std::vector<std::string> outputs;
};

void execute_optimizer(const ExperimentConfig& config, OptimizerKind opt, const MnistData* data,
                       std::size_t parallel, const fs::path& out_dir, InvocationResult& inv) {
    ExperimentConfig c = config;
    c.optimizer = opt;
    const std::string label(optimizer_name(opt));
    const std::vector<RunResult> results = run_experiment(c, data, parallel);

    std::vector<RunSummary> summaries;
    summaries.reserve(results.size());
    for (const auto& r : results) {
        const std::string name = label + "_seed" + std::to_string(r.summary.seed) + ".csv";
        atomic_write_file(out_dir / name, render_metrics_csv(r.rows, c.stride));
        inv.outputs.push_back(name);
        summaries.push_back(r.summary);

        nlohmann::json run;
        run["optimizer"] = label;
        run["seed"] = r.summary.seed;
        run["total_examples"] = r.summary.total_examples;
        run["final_u_drift"] = r.summary.final_u_drift;
        run["final_w_drift"] = r.summary.final_w_drift;
        run["diverged"] = r.summary.diverged;
        run["diverged_at"] = r.summary.diverged_at;
        run["duration_ms"] = r.summary.duration_ms;
        inv.runs.push_back(std::move(run));

        if (r.summary.diverged) {
            inv.any_diverged = true;
            std::cerr << label << " seed " << r.summary.seed << ": diverged at example "
                      << r.summary.diverged_at << "; partial metrics kept\n";
        }
    }

    const bool complete =
        std::none_of(summaries.begin(), summaries.end(), [](const auto& s) { return s.diverged; });
    if (complete && !summaries.front().bin_mean_error.empty()) {
        const AggregateCurve agg = aggregate_runs(summaries);
        const std::string name = label + "_agg.csv";
        atomic_write_file(out_dir / name, render_aggregate_csv(agg));
        inv.outputs.push_back(name);
        std::cout << label << ": " << summaries.size() << " seed(s), final bin mean error "
                  << format_number(agg.mean.back()) << "\n";
    } else if (complete) {
        std::cout << label << ": " << summaries.size() << " seed(s), no examples\n";
    }
}

int run_problem(Problem problem, const RunOptions& opts) {
    const KeyValues merged = resolve_keys(problem, opts);
    std::vector<OptimizerKind> optimizers;
    const ExperimentConfig config = config_from_keys(merged, &optimizers);

    MnistData data;
    const MnistData* data_ptr = nullptr;
    if (problem == Problem::Mnist) {
        if (opts.images_path.empty() || opts.labels_path.empty())
            throw ConfigError("run-mnist requires --images and --labels IDX files");
        data.images = load_idx_images(opts.images_path);
        data.labels = load_idx_labels(opts.labels_path);
        if (data.images.count != data.labels.count)
            throw ParseError("image count " + std::to_string(data.images.count) +
                                 " does not match label count " +
                                 std::to_string(data.labels.count),
                             0);
        data_ptr = &data;
    }

    const fs::path out_dir(opts.out_dir);
    fs::create_directories(out_dir);

    InvocationResult inv;
    for (OptimizerKind opt : optimizers)
        execute_optimizer(config, opt, data_ptr, opts.parallel, out_dir, inv);

    nlohmann::json meta;
    meta["version"] = std::string(kVersion);
    meta["command"] = problem == Problem::Geoff ? "run-geoff" : "run-mnist";
    meta["config"] = merged;
    meta["parallel"] = opts.parallel;
    meta["runs"] = inv.runs;
    meta["outputs"] = inv.outputs;
    atomic_write_file(out_dir / "metadata.json", meta.dump(2) + "\n");

    if (inv.any_diverged) {
        std::cerr << "one or more runs diverged\n";
        return kExitDivergence;
    }
    std::cout << "wrote " << inv.outputs.size() + 1 << " files to " << out_dir.string() << "\n";
    return kExitOk;
}

struct GradCheckOptions {
    std::size_t inputs = 0;  // 0 = random in [1, 8] per trial
    std::size_t hidden = 0;
    std::size_t outputs = 0;
    std::string activation = "both";
    std::string loss = "both";
    std::size_t trials = 20;
    double epsilon = 1e-5;
    std::uint64_t seed = 7;
    double corrupt = 0.0;
};

int run_grad_check(const GradCheckOptions& opts) {
    if (opts.inputs > kGradCheckMaxDim || opts.hidden > kGradCheckMaxDim ||
        opts.outputs > kGradCheckMaxDim)
        throw ConfigError("grad-check shapes are capped at " + std::to_string(kGradCheckMaxDim));
    if (opts.trials == 0) {
        std::cout << "grad-check: no trials requested, vacuously passing\n";
        return kExitOk;
    }
    std::vector<ActivationKind> kinds;
    if (opts.activation == "both")
        kinds = {ActivationKind::Tanh, ActivationKind::Logistic};
    else
        kinds = {activation_from_name(opts.activation)};
    std::vector<Loss> losses;
    if (opts.loss == "both")
        losses = {Loss::Squared, Loss::CrossEntropy};
    else
        losses = {loss_from_name(opts.loss)};

    Rng shape_rng = make_rng(opts.seed, "gradcheck/shapes");
    std::uniform_int_distribution<std::size_t> dim(1, 8);
    double worst = 0.0;
    for (std::size_t t = 0; t < opts.trials; ++t) {
        NetShape shape{opts.inputs ? opts.inputs : dim(shape_rng),
                       opts.hidden ? opts.hidden : dim(shape_rng),
                       opts.outputs ? opts.outputs : dim(shape_rng)};
        double trial_worst = 0.0;
        for (ActivationKind kind : kinds)
            for (Loss loss : losses)
                trial_worst = std::max(
                    trial_worst, grad_check(shape, kind, loss, opts.epsilon,
                                            derive_stream(opts.seed, "gradcheck/trial", t),
                                            opts.corrupt));
        worst = std::max(worst, trial_worst);
        std::cout << "trial " << t << ": shape " << shape.inputs << "-" << shape.hidden << "-"
                  << shape.outputs << " max mismatch " << format_number(trial_worst) << "\n";
    }
    const bool ok = worst <= kGradCheckTolerance;
    std::cout << "grad-check: " << (ok ? "PASS" : "FAIL") << " (worst " << format_number(worst)
              << (ok ? " <= " : " > ") << format_number(kGradCheckTolerance) << ")\n";
    return ok ? kExitOk : 1;
}

struct ExportOptions {
    RunOptions run;
    std::string optimizer;
    std::string out_file = "features.csv";
    std::size_t samples = 2500;
};

int run_export_features(Problem problem, const ExportOptions& opts) {
    const KeyValues merged = resolve_keys(problem, opts.run);
    std::vector<OptimizerKind> optimizers;
    ExperimentConfig config = config_from_keys(merged, &optimizers);
    config.optimizer = opts.optimizer.empty() ? optimizers.front()
                                              : optimizer_from_name(opts.optimizer);
    config.validate();

    MnistData data;
    const MnistData* data_ptr = nullptr;
    if (problem == Problem::Mnist) {
        if (opts.run.images_path.empty() || opts.run.labels_path.empty())
            throw ConfigError("export-features on mnist requires --images and --labels");
        data.images = load_idx_images(opts.run.images_path);
        data.labels = load_idx_labels(opts.run.labels_path);
        data_ptr = &data;
    }

    const std::uint64_t seed = config.seeds.front();
    std::optional<Learner> learner;
    const RunResult result = run_single_seed(config, seed, data_ptr, &learner);
    if (result.summary.diverged) {
        std::cerr << "training run diverged at example " << result.summary.diverged_at << "\n";
        return kExitDivergence;
    }

    std::vector<Vector> examples;
    examples.reserve(opts.samples);
    if (problem == Problem::Geoff) {
        Rng rng = make_rng(seed, "export/sample");
        std::uniform_int_distribution<int> bit(0, 1);
        for (std::size_t i = 0; i < opts.samples; ++i) {
            Vector x(config.inputs);
            for (double& v : x) v = static_cast<double>(bit(rng));
            examples.push_back(std::move(x));
        }
    } else {
        Rng rng = make_rng(seed, "export/sample");
        std::uniform_int_distribution<std::size_t> pick(0, data.images.count - 1);
        for (std::size_t i = 0; i < opts.samples; ++i) {
            const auto row = data.images.pixels.row(pick(rng));
            examples.emplace_back(row.begin(), row.end());
        }
    }

    const Matrix features = export_features(*learner, examples);
    atomic_write_file(opts.out_file, render_features_csv(features));
    std::cout << "wrote " << features.rows() << "x" << features.cols() << " activations to "
              << opts.out_file << "\n";
    return kExitOk;
}

struct GenConfigOptions {
    std::string problem = "geoff";
    std::string preset = "default";
    std::string out_file = "-";
};

int run_gen_config(const GenConfigOptions& opts) {
    if (opts.preset != "default" && opts.preset != "paper")
        throw ConfigError("unknown preset '" + opts.preset + "' (expected default or paper)");
    const std::string text =
        render_config_template(problem_from_name(opts.problem), opts.preset == "paper");
    if (opts.out_file == "-") {
        std::cout << text;
    } else {
        atomic_write_file(opts.out_file, text);
        std::cout << "wrote " << opts.out_file << "\n";
    }
    return kExitOk;
}

void add_run_common(CLI::App* cmd, RunOptions& opts) {
    cmd->add_option("-c,--config", opts.config_path, "Config file (flat key = value text)")
        ->check(CLI::ExistingFile);
    cmd->add_option("-o,--out", opts.out_dir,
                    "Output directory [default: $CROSSPROP_OUT_DIR or ./results]");
    cmd->add_option("--parallel", opts.parallel,
                    "Max concurrent seed runs; outputs are identical for any value [default: 1]")
        ->check(CLI::Range(std::size_t{1}, std::size_t{64}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online-learning lab: crossprop and baseline optimizers on "
                 "single-hidden-layer networks"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    RunOptions geoff_opts;
    CLI::App* geoff_cmd = app.add_subcommand(
        "run-geoff", "Run the continual feature-finding protocol on a synthetic LTU target");
    add_run_common(geoff_cmd, geoff_opts);
    add_key_flags(geoff_cmd, Problem::Geoff, geoff_opts);

    RunOptions mnist_opts;
    CLI::App* mnist_cmd =
        app.add_subcommand("run-mnist", "Run the label-shift continual protocol on MNIST");
    add_run_common(mnist_cmd, mnist_opts);
    mnist_cmd->add_option("--images", mnist_opts.images_path, "IDX image file (magic 2051)")
        ->check(CLI::ExistingFile);
    mnist_cmd->add_option("--labels", mnist_opts.labels_path, "IDX label file (magic 2049)")
        ->check(CLI::ExistingFile);
    add_key_flags(mnist_cmd, Problem::Mnist, mnist_opts);

    GradCheckOptions gc_opts;
    CLI::App* gc_cmd = app.add_subcommand(
        "grad-check", "Compare analytic gradients against central finite differences");
    gc_cmd->add_option("--inputs", gc_opts.inputs, "Input units; 0 = random in [1, 8] per trial");
    gc_cmd->add_option("--hidden", gc_opts.hidden, "Hidden units; 0 = random in [1, 8] per trial");
    gc_cmd->add_option("--outputs", gc_opts.outputs,
                       "Output units; 0 = random in [1, 8] per trial");
    gc_cmd->add_option("--activation", gc_opts.activation, "tanh, logistic or both [both]");
    gc_cmd->add_option("--loss", gc_opts.loss, "squared, cross_entropy or both [both]");
    gc_cmd->add_option("--trials", gc_opts.trials, "Number of random trials [20]");
    gc_cmd->add_option("--epsilon", gc_opts.epsilon, "Finite-difference step [1e-5]");
    gc_cmd->add_option("--seed", gc_opts.seed, "Base seed [7]");
    gc_cmd->add_option("--corrupt", gc_opts.corrupt)->group("");  // failure-path test hook

    ExportOptions ex_opts;
    std::string ex_problem = "geoff";
    CLI::App* ex_cmd = app.add_subcommand(
        "export-features", "Train one run and export hidden activations as CSV");
    ex_cmd->add_option("--problem", ex_problem, "geoff or mnist [geoff]");
    add_run_common(ex_cmd, ex_opts.run);
    ex_cmd->add_option("--optimizer", ex_opts.optimizer,
                       "Optimizer to train with [first of the config's optimizer list]");
    ex_cmd->add_option("--samples", ex_opts.samples, "Examples to export [2500]");
    ex_cmd->add_option("--features-out", ex_opts.out_file, "Output CSV path [features.csv]");
    ex_cmd->add_option("--images", ex_opts.run.images_path, "IDX image file (mnist)")
        ->check(CLI::ExistingFile);
    ex_cmd->add_option("--labels", ex_opts.run.labels_path, "IDX label file (mnist)")
        ->check(CLI::ExistingFile);

    GenConfigOptions gen_opts;
    CLI::App* gen_cmd =
        app.add_subcommand("gen-config", "Emit a config template with every key documented");
    gen_cmd->add_option("--problem", gen_opts.problem, "geoff or mnist [geoff]");
    gen_cmd->add_option("--preset", gen_opts.preset, "default (desk scale) or paper [default]");
    gen_cmd->add_option("-o,--out", gen_opts.out_file, "Output path, '-' for stdout [-]");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*geoff_cmd) return run_problem(Problem::Geoff, geoff_opts);
        if (*mnist_cmd) return run_problem(Problem::Mnist, mnist_opts);
        if (*gc_cmd) return run_grad_check(gc_opts);
        if (*ex_cmd) {
            const Problem p = problem_from_name(ex_problem);
            return run_export_features(p, ex_opts);
        }
        if (*gen_cmd) return run_gen_config(gen_opts);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
