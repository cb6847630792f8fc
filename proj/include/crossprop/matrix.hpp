#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "crossprop/errors.hpp"

namespace crossprop {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Small and value-semantic; all the
// shapes in this library are tiny enough that nothing fancier is needed.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw InvalidInput("dot: length mismatch " + std::to_string(a.size()) +
                           " vs " + std::to_string(b.size()));
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.values()); }

// l2 norm of the elementwise difference (Frobenius norm for matrices).
inline double norm_diff(std::span<const double> current, std::span<const double> initial) {
    if (current.size() != initial.size())
        throw InvalidInput("norm_diff: length mismatch " + std::to_string(current.size()) +
                           " vs " + std::to_string(initial.size()));
    double sum = 0.0;
    for (std::size_t i = 0; i < current.size(); ++i) {
        const double d = current[i] - initial[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

}  // namespace crossprop
