#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "crossprop/errors.hpp"
#include "crossprop/matrix.hpp"

namespace crossprop {

// One record per training example. `error` is the instantaneous loss on the
// example (computed before the update); the drift columns are the l2 norms
// of (weights - initial weights) as they stood when the example arrived,
// i.e. after `example` updates. Both are therefore exactly 0 at example 0.
struct MetricsRow {
    std::uint64_t seed = 0;
    std::uint64_t example = 0;
    int task = 0;
    double error = 0.0;
    double u_drift = 0.0;
    double w_drift = 0.0;
};

struct RunSummary {
    std::uint64_t seed = 0;
    std::size_t bin_width = 100;
    std::size_t total_examples = 0;
    Vector bin_mean_error;  // ceil(total / bin_width) entries
    double final_u_drift = 0.0;
    double final_w_drift = 0.0;
    bool diverged = false;
    long diverged_at = -1;
    double duration_ms = 0.0;
};

// l2 (Frobenius) norm between current weights and their initial values.
inline double drift_norm(const Matrix& current, const Matrix& initial) {
    if (!current.same_shape(initial))
        throw InvalidInput("drift_norm: shape mismatch");
    return norm_diff(current.values(), initial.values());
}

inline double drift_norm(std::span<const double> current, std::span<const double> initial) {
    return norm_diff(current, initial);
}

// Mean error over consecutive bins; the final bin may be partial.
inline Vector bin_means(std::span<const double> errors, std::size_t width) {
    if (width < 1) throw InvalidInput("bin_means: width must be >= 1");
    const std::size_t bins = (errors.size() + width - 1) / width;
    Vector means(bins, 0.0);
    for (std::size_t b = 0; b < bins; ++b) {
        const std::size_t lo = b * width;
        const std::size_t hi = std::min(lo + width, errors.size());
        double sum = 0.0;
        for (std::size_t i = lo; i < hi; ++i) sum += errors[i];
        means[b] = sum / static_cast<double>(hi - lo);
    }
    return means;
}

struct AggregateCurve {
    std::size_t bin_width = 100;
    Vector mean;
    Vector stderr_by_bin;
};

// Elementwise mean and standard error (sample stddev / sqrt(n)) across
// seeds. A single run has standard error 0 by definition.
inline AggregateCurve aggregate_runs(std::span<const RunSummary> summaries) {
    if (summaries.empty()) throw InvalidInput("aggregate_runs: no runs");
    const std::size_t bins = summaries.front().bin_mean_error.size();
    const std::size_t width = summaries.front().bin_width;
    for (const auto& s : summaries)
        if (s.bin_mean_error.size() != bins || s.bin_width != width)
            throw InvalidInput("aggregate_runs: mixed bin structures");

    AggregateCurve out;
    out.bin_width = width;
    out.mean.assign(bins, 0.0);
    out.stderr_by_bin.assign(bins, 0.0);
    const double n = static_cast<double>(summaries.size());
    for (std::size_t b = 0; b < bins; ++b) {
        double sum = 0.0;
        for (const auto& s : summaries) sum += s.bin_mean_error[b];
        out.mean[b] = sum / n;
    }
    if (summaries.size() > 1) {
        for (std::size_t b = 0; b < bins; ++b) {
            double ss = 0.0;
            for (const auto& s : summaries) {
                const double d = s.bin_mean_error[b] - out.mean[b];
                ss += d * d;
            }
            out.stderr_by_bin[b] = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
        }
    }
    return out;
}

// Shortest round-trip decimal rendering, so output bytes are deterministic.
inline std::string format_number(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline std::string format_number(std::uint64_t v) {
    char buf[24];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

// Write-then-rename so a failed run never leaves a partial file behind.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& contents) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ParseError("cannot open '" + tmp.string() + "' for writing", 0);
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw ParseError("failed writing '" + tmp.string() + "'", 0);
    }
    fs::rename(tmp, path);
}

inline std::string render_metrics_csv(std::span<const MetricsRow> rows, std::size_t stride = 1) {
    if (stride < 1) throw InvalidInput("render_metrics_csv: stride must be >= 1");
    std::string out = "seed,example,task,error,u_drift,w_drift\n";
    for (const auto& r : rows) {
        if (r.example % stride != 0) continue;
        out += format_number(r.seed);
        out += ',';
        out += format_number(r.example);
        out += ',';
        out += std::to_string(r.task);
        out += ',';
        out += format_number(r.error);
        out += ',';
        out += format_number(r.u_drift);
        out += ',';
        out += format_number(r.w_drift);
        out += '\n';
    }
    return out;
}

inline std::string render_aggregate_csv(const AggregateCurve& agg) {
    std::string out = "bin,mean_error,stderr\n";
    for (std::size_t b = 0; b < agg.mean.size(); ++b) {
        out += format_number(static_cast<std::uint64_t>(b));
        out += ',';
        out += format_number(agg.mean[b]);
        out += ',';
        out += format_number(agg.stderr_by_bin[b]);
        out += '\n';
    }
    return out;
}

}  // namespace crossprop
