#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "crossprop/experiment.hpp"
#include "crossprop/gradcheck.hpp"
#include "../support/oracles.hpp"

using namespace crossprop;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_geoff_config() {
    ExperimentConfig c;
    c.problem = Problem::Geoff;
    c.optimizer = OptimizerKind::Crossprop;
    c.alpha = 0.01;
    c.eta = 0.0;
    c.inputs = 6;
    c.hidden = 8;
    c.outputs = 1;
    c.schedule = {60, 60};
    c.seeds = {0, 1};
    c.mutation_fraction = 0.5;
    c.geoff_features = 30;
    c.geoff_beta = 0.6;
    c.bin_width = 20;
    return c;
}

}  // namespace

TEST_CASE("drift_norm identities") {
    Matrix a(2, 2);
    a(0, 0) = 1.0;
    a(0, 1) = -2.0;
    a(1, 0) = 0.5;
    a(1, 1) = 3.0;
    REQUIRE(drift_norm(a, a) == 0.0);

    Matrix b = a;
    for (double& v : b.values()) v += 3.0;
    REQUIRE(drift_norm(b, a) == 6.0);

    // Permutation invariance of the elementwise sum.
    Matrix c(2, 2), c0(2, 2);
    c(0, 0) = 4.0;
    c(0, 1) = 1.0;
    c(1, 0) = -1.0;
    c(1, 1) = 2.0;
    Matrix p(2, 2), p0(2, 2);
    p(0, 0) = 2.0;
    p(0, 1) = -1.0;
    p(1, 0) = 1.0;
    p(1, 1) = 4.0;
    REQUIRE(drift_norm(c, c0) == drift_norm(p, p0));

    Matrix wrong(2, 3);
    REQUIRE_THROWS_AS(drift_norm(a, wrong), InvalidInput);
}

TEST_CASE("bin_means covers a trailing partial bin") {
    const Vector errors{1.0, 3.0, 5.0, 7.0, 4.0};
    const Vector bins = bin_means(errors, 2);
    REQUIRE(bins.size() == 3);
    REQUIRE(bins[0] == 2.0);
    REQUIRE(bins[1] == 6.0);
    REQUIRE(bins[2] == 4.0);
}

TEST_CASE("aggregate_runs means and standard errors") {
    const auto summary = [](Vector bins) {
        RunSummary s;
        s.bin_width = 100;
        s.bin_mean_error = std::move(bins);
        return s;
    };

    SECTION("single run: mean is the run, stderr 0") {
        const std::vector<RunSummary> one{summary({2.0, 4.0})};
        const AggregateCurve agg = aggregate_runs(one);
        REQUIRE(agg.mean == Vector{2.0, 4.0});
        REQUIRE(agg.stderr_by_bin == Vector{0.0, 0.0});
    }
    SECTION("identical runs: zero variance") {
        const std::vector<RunSummary> two{summary({1.5, 2.5}), summary({1.5, 2.5})};
        const AggregateCurve agg = aggregate_runs(two);
        REQUIRE(agg.mean == Vector{1.5, 2.5});
        REQUIRE(agg.stderr_by_bin[0] == 0.0);
        REQUIRE(agg.stderr_by_bin[1] == 0.0);
    }
    SECTION("constant curves at 1, 2, 3") {
        const std::vector<RunSummary> three{summary({1.0}), summary({2.0}), summary({3.0})};
        const AggregateCurve agg = aggregate_runs(three);
        REQUIRE(agg.mean[0] == 2.0);
        REQUIRE(std::abs(agg.stderr_by_bin[0] - 0.577350269189625764509148780502) < 1e-12);
    }
    SECTION("mixed bin structures rejected") {
        std::vector<RunSummary> bad{summary({1.0, 2.0}), summary({1.0})};
        REQUIRE_THROWS_AS(aggregate_runs(bad), InvalidInput);
        std::vector<RunSummary> widths{summary({1.0}), summary({1.0})};
        widths[1].bin_width = 50;
        REQUIRE_THROWS_AS(aggregate_runs(widths), InvalidInput);
    }
    SECTION("no runs rejected") {
        REQUIRE_THROWS_AS(aggregate_runs(std::vector<RunSummary>{}), InvalidInput);
    }
}

TEST_CASE("run_single_seed on an empty schedule") {
    ExperimentConfig c = tiny_geoff_config();
    c.schedule = {0};
    const RunResult r = run_single_seed(c, 3);
    REQUIRE(r.rows.empty());
    REQUIRE(r.summary.total_examples == 0);
    REQUIRE(r.summary.bin_mean_error.empty());
    REQUIRE(r.summary.final_u_drift == 0.0);
    REQUIRE(r.summary.final_w_drift == 0.0);
    REQUIRE_FALSE(r.summary.diverged);
}

TEST_CASE("alpha = 0 freezes every drift at exactly zero") {
    for (OptimizerKind opt : {OptimizerKind::Crossprop, OptimizerKind::Backprop,
                              OptimizerKind::Momentum, OptimizerKind::RmsProp,
                              OptimizerKind::Adam}) {
        ExperimentConfig c = tiny_geoff_config();
        c.optimizer = opt;
        c.alpha = 0.0;
        c.seeds = {5};
        const RunResult r = run_single_seed(c, 5);
        REQUIRE(r.rows.size() == 120);
        for (const auto& row : r.rows) {
            REQUIRE(row.u_drift == 0.0);
            REQUIRE(row.w_drift == 0.0);
        }
        REQUIRE(r.summary.final_u_drift == 0.0);
        REQUIRE(r.summary.final_w_drift == 0.0);
    }
}

TEST_CASE("drift starts at exactly zero for every optimizer") {
    for (OptimizerKind opt : {OptimizerKind::Crossprop, OptimizerKind::Backprop,
                              OptimizerKind::Momentum, OptimizerKind::RmsProp,
                              OptimizerKind::Adam}) {
        ExperimentConfig c = tiny_geoff_config();
        c.optimizer = opt;
        c.schedule = {5};
        const RunResult r = run_single_seed(c, 9);
        REQUIRE(r.rows.size() == 5);
        REQUIRE(r.rows[0].u_drift == 0.0);
        REQUIRE(r.rows[0].w_drift == 0.0);
        REQUIRE(r.rows[1].u_drift >= 0.0);
        // After one update the outgoing weights have moved.
        REQUIRE(r.rows[1].w_drift > 0.0);
    }
}

TEST_CASE("runs are deterministic and parallelism does not change results") {
    ExperimentConfig c = tiny_geoff_config();
    c.seeds = {0, 1, 2, 3};
    const auto serial = run_experiment(c);
    const auto again = run_experiment(c);
    const auto parallel = run_experiment(c, nullptr, 4);

    REQUIRE(serial.size() == 4);
    for (std::size_t i = 0; i < serial.size(); ++i) {
        REQUIRE(render_metrics_csv(serial[i].rows) == render_metrics_csv(again[i].rows));
        REQUIRE(render_metrics_csv(serial[i].rows) == render_metrics_csv(parallel[i].rows));
        REQUIRE(serial[i].summary.final_u_drift == parallel[i].summary.final_u_drift);
    }
}

TEST_CASE("task boundaries carry no signal into the learner") {
    // With mutation disabled, splitting one task into two changes only the
    // task labels; errors and drifts are identical row for row.
    ExperimentConfig split = tiny_geoff_config();
    split.mutation_fraction = 0.0;
    split.schedule = {60, 60};
    split.seeds = {7};
    ExperimentConfig merged = split;
    merged.schedule = {120};

    const RunResult a = run_single_seed(split, 7);
    const RunResult b = run_single_seed(merged, 7);
    REQUIRE(a.rows.size() == b.rows.size());
    bool task_labels_differ = false;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        REQUIRE(a.rows[i].error == b.rows[i].error);
        REQUIRE(a.rows[i].u_drift == b.rows[i].u_drift);
        REQUIRE(a.rows[i].w_drift == b.rows[i].w_drift);
        if (a.rows[i].task != b.rows[i].task) task_labels_differ = true;
    }
    REQUIRE(task_labels_differ);
}

TEST_CASE("geoff task switches mutate the target stream") {
    ExperimentConfig c = tiny_geoff_config();
    c.seeds = {11};
    c.schedule = {40, 40};
    c.mutation_fraction = 0.5;
    const RunResult r = run_single_seed(c, 11);
    REQUIRE(r.rows.size() == 80);
    REQUIRE(r.rows[39].task == 0);
    REQUIRE(r.rows[40].task == 1);
}

TEST_CASE("mnist runs apply per-task label shifts") {
    const auto data = oracle::make_synthetic_mnist(40, 99);
    MnistData mnist{data.images, data.labels};

    ExperimentConfig c;
    c.problem = Problem::Mnist;
    c.optimizer = OptimizerKind::CrosspropApprox;
    c.alpha = 0.001;
    c.inputs = 784;
    c.hidden = 8;
    c.outputs = 10;
    c.schedule = {30, 30};
    c.label_shifts = {0, 1};
    c.seeds = {1};
    c.bin_width = 10;
    c.shuffle = true;

    const RunResult r = run_single_seed(c, 1, &mnist);
    REQUIRE(r.rows.size() == 60);
    REQUIRE_FALSE(r.summary.diverged);
    REQUIRE(r.summary.bin_mean_error.size() == 6);

    // Sequential order without shuffle revisits examples in file order.
    c.shuffle = false;
    const RunResult seq = run_single_seed(c, 1, &mnist);
    REQUIRE(seq.rows.size() == 60);
}

TEST_CASE("config validation catches inconsistent setups") {
    ExperimentConfig c = tiny_geoff_config();
    c.optimizer = OptimizerKind::CrosspropApprox;
    REQUIRE_THROWS_AS(c.validate(), ConfigError);

    c = tiny_geoff_config();
    c.schedule.clear();
    REQUIRE_THROWS_AS(c.validate(), ConfigError);

    c = tiny_geoff_config();
    c.outputs = 3;
    REQUIRE_THROWS_AS(c.validate(), ConfigError);

    ExperimentConfig m;
    m.problem = Problem::Mnist;
    m.optimizer = OptimizerKind::Backprop;
    m.inputs = 784;
    m.outputs = 10;
    m.schedule = {10, 10};
    m.label_shifts = {0};
    REQUIRE_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("config text parsing and key resolution") {
    std::istringstream text(
        "# comment line\n"
        "problem = geoff\n"
        "optimizers = crossprop, backprop\n"
        "eta = 0.5\n"
        "alpha = 0.001  # trailing comment\n"
        "inputs = 4\n"
        "hidden = 6\n"
        "outputs = 1\n"
        "activation = logistic\n"
        "schedule = 10,20\n"
        "seeds = 3,4\n"
        "bin_width = 5\n"
        "stride = 2\n"
        "mutation_fraction = 0.25\n"
        "geoff_features = 12\n"
        "geoff_beta = 0.4\n"
        "noise_stddev = 0\n");
    const KeyValues kv = parse_config_text(text);
    std::vector<OptimizerKind> optimizers;
    const ExperimentConfig c = config_from_keys(kv, &optimizers);
    REQUIRE(optimizers ==
            std::vector<OptimizerKind>{OptimizerKind::Crossprop, OptimizerKind::Backprop});
    REQUIRE(c.eta == 0.5);
    REQUIRE(c.alpha == 0.001);
    REQUIRE(c.activation == ActivationKind::Logistic);
    REQUIRE(c.schedule == std::vector<std::size_t>{10, 20});
    REQUIRE(c.seeds == std::vector<std::uint64_t>{3, 4});
    REQUIRE(c.stride == 2);
    REQUIRE(c.noise_stddev == 0.0);
}

TEST_CASE("config parser rejects malformed text") {
    std::istringstream dup("alpha = 1\nalpha = 2\n");
    REQUIRE_THROWS_AS(parse_config_text(dup), ConfigError);

    std::istringstream noeq("alpha 1\n");
    REQUIRE_THROWS_AS(parse_config_text(noeq), ConfigError);

    KeyValues kv = default_config_keys(Problem::Geoff);
    kv["bogus_key"] = "1";
    REQUIRE_THROWS_AS(config_from_keys(kv), ConfigError);

    kv = default_config_keys(Problem::Geoff);
    kv["alpha"] = "fast";
    REQUIRE_THROWS_AS(config_from_keys(kv), ConfigError);

    kv = default_config_keys(Problem::Geoff);
    kv["optimizers"] = "levenberg";
    REQUIRE_THROWS_AS(config_from_keys(kv), ConfigError);
}

TEST_CASE("config template lists every applicable key") {
    for (Problem p : {Problem::Geoff, Problem::Mnist}) {
        const std::string text = render_config_template(p);
        std::istringstream in(text);
        const KeyValues kv = parse_config_text(in);
        for (const auto& k : config_schema())
            if (key_applies(k, p)) REQUIRE(kv.count(k.key) == 1);
        // The template must itself be a valid config.
        REQUIRE_NOTHROW(config_from_keys(kv));
        const std::string paper = render_config_template(p, true);
        std::istringstream pin(paper);
        REQUIRE_NOTHROW(config_from_keys(parse_config_text(pin)));
    }
}

TEST_CASE("grad_check stays within tolerance over random shapes") {
    Rng rng = make_rng(12, "shapes");
    std::uniform_int_distribution<std::size_t> dim(1, 8);
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        const NetShape shape{dim(rng), dim(rng), dim(rng)};
        for (ActivationKind kind : {ActivationKind::Tanh, ActivationKind::Logistic})
            for (Loss loss : {Loss::Squared, Loss::CrossEntropy})
                REQUIRE(grad_check(shape, kind, loss, 1e-5, trial) <= 1e-6);
    }
}

TEST_CASE("grad_check flags a corrupted derivative") {
    REQUIRE(grad_check(NetShape{4, 3, 2}, ActivationKind::Tanh, Loss::Squared, 1e-5, 1,
                       1e-3) > 1e-6);
}

TEST_CASE("finite differences are exact on a linear-activation network") {
    // With a linear hidden unit the squared loss is quadratic in each
    // parameter, so the central difference equals the true gradient up to
    // roundoff.
    Matrix u(2, 2);
    u(0, 0) = 0.3;
    u(0, 1) = -0.2;
    u(1, 0) = 0.5;
    u(1, 1) = 0.1;
    Vector w{0.7, -0.4};
    const Vector x{0.9, -1.3};
    const double target = 0.6;

    const auto loss = [&] {
        double y = 0.0;
        for (std::size_t j = 0; j < 2; ++j) {
            double z = 0.0;
            for (std::size_t i = 0; i < 2; ++i) z += x[i] * u(i, j);
            y += z * w[j];  // linear activation stub
        }
        const double d = target - y;
        return 0.5 * d * d;
    };

    // Analytic gradients of the quadratic.
    double y = 0.0;
    Vector z(2, 0.0);
    for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t i = 0; i < 2; ++i) z[j] += x[i] * u(i, j);
        y += z[j] * w[j];
    }
    const double d = target - y;

    const Vector fd_u = finite_difference_gradient(loss, u.values(), 1e-5);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            REQUIRE(oracle::mismatch(fd_u[i * 2 + j], -d * w[j] * x[i]) < 1e-9);
    const Vector fd_w = finite_difference_gradient(loss, {w.data(), 2}, 1e-5);
    for (std::size_t j = 0; j < 2; ++j) REQUIRE(oracle::mismatch(fd_w[j], -d * z[j]) < 1e-9);
}

TEST_CASE("export_features basics") {
    SECTION("zero weights give all-zero tanh activations") {
        const Matrix u(5, 4, 0.0);
        const Matrix features =
            export_features(u, ActivationKind::Tanh, {Vector{1.0, 0.0, 1.0, 1.0, 0.0}});
        REQUIRE(features.rows() == 1);
        REQUIRE(features.cols() == 4);
        for (double v : features.values()) REQUIRE(v == 0.0);
    }
    SECTION("a single example row equals hidden_activations") {
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> dr(-1.0, 1.0);
        Matrix u(3, 5);
        for (double& v : u.values()) v = dr(rng);
        const Vector x{0.5, -0.25, 1.0};
        const Matrix features = export_features(u, ActivationKind::Logistic, {x});
        const Vector phi = hidden_activations(x, u, ActivationKind::Logistic);
        for (std::size_t j = 0; j < 5; ++j) REQUIRE(features(0, j) == phi[j]);
    }
    SECTION("2500 sampled examples export as 2500 x hidden") {
        ExperimentConfig c = tiny_geoff_config();
        c.schedule = {50};
        std::optional<Learner> learner;
        run_single_seed(c, 2, nullptr, &learner);
        REQUIRE(learner.has_value());
        Rng rng = make_rng(2, "export/sample");
        std::uniform_int_distribution<int> bit(0, 1);
        std::vector<Vector> examples;
        for (int i = 0; i < 2500; ++i) {
            Vector x(c.inputs);
            for (double& v : x) v = static_cast<double>(bit(rng));
            examples.push_back(std::move(x));
        }
        const Matrix features = export_features(*learner, examples);
        REQUIRE(features.rows() == 2500);
        REQUIRE(features.cols() == c.hidden);
    }
}

TEST_CASE("metrics CSV rendering and stride") {
    std::vector<MetricsRow> rows;
    for (std::uint64_t i = 0; i < 6; ++i)
        rows.push_back({7, i, static_cast<int>(i / 3), 0.5 * static_cast<double>(i),
                        static_cast<double>(i), 0.25});
    const std::string full = render_metrics_csv(rows);
    REQUIRE(full.starts_with("seed,example,task,error,u_drift,w_drift\n"));
    REQUIRE(std::count(full.begin(), full.end(), '\n') == 7);

    const std::string strided = render_metrics_csv(rows, 3);
    REQUIRE(std::count(strided.begin(), strided.end(), '\n') == 3);
    REQUIRE(strided.find("7,0,0,0,0,0.25\n") != std::string::npos);
    REQUIRE(strided.find("7,3,1,1.5,3,0.25\n") != std::string::npos);
}

TEST_CASE("atomic writes leave no partial files behind") {
    const fs::path dir = fs::temp_directory_path() / "crossprop_atomic_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    atomic_write_file(dir / "ok.csv", "a,b\n1,2\n");
    REQUIRE(fs::exists(dir / "ok.csv"));
    REQUIRE_FALSE(fs::exists(dir / "ok.csv.tmp"));

    // A target whose parent is a file cannot be created.
    const fs::path blocker = dir / "blocker";
    atomic_write_file(blocker, "x");
    REQUIRE_THROWS(atomic_write_file(blocker / "sub.csv", "x"));
    fs::remove_all(dir);
}

TEST_CASE("harness divergence is flagged with partial metrics retained") {
    ExperimentConfig c = tiny_geoff_config();
    c.optimizer = OptimizerKind::Backprop;
    c.alpha = 1e200;  // guaranteed blowup
    c.schedule = {50};
    c.seeds = {1};
    const RunResult r = run_single_seed(c, 1);
    REQUIRE(r.summary.diverged);
    REQUIRE(r.summary.diverged_at >= 0);
    REQUIRE(r.rows.size() == static_cast<std::size_t>(r.summary.diverged_at));
}
