#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace causim::num {

/// Thrown when a caller violates a documented precondition (shape, arity, domain).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Thrown for arguments outside a function's mathematical domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractViolation(message);
}

/// Dense row-major matrix of doubles with a fixed shape.
///
/// Public constructors that take caller data reject NaN/Inf unless the caller
/// passes `allow_nonfinite` (used for missing-value sentinels in raw tables).
class Tensor {
public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        if (!std::isfinite(fill)) throw ContractViolation("Tensor: non-finite fill value");
    }

    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values, bool allow_nonfinite = false)
        : rows_(rows), cols_(cols), data_(std::move(values)) {
        require(data_.size() == rows_ * cols_, "Tensor: value count does not match shape");
        if (!allow_nonfinite) check_finite();
    }

    Tensor(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            require(r.size() == cols_, "Tensor: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
        check_finite();
    }

    static Tensor scalar(double v) { return Tensor(1, 1, v); }

    static Tensor identity(std::size_t n) {
        Tensor t(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    /// Internal fast path: builds a tensor from op output without the finiteness scan.
    static Tensor unchecked(std::size_t rows, std::size_t cols, std::vector<double> values) {
        Tensor t;
        t.rows_ = rows;
        t.cols_ = cols;
        t.data_ = std::move(values);
        return t;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool is_scalar() const noexcept { return rows_ == 1 && cols_ == 1; }
    [[nodiscard]] bool same_shape(const Tensor& o) const noexcept {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] double item() const {
        require(is_scalar(), "Tensor::item on non-scalar tensor");
        return data_[0];
    }

    [[nodiscard]] std::span<double> values() noexcept { return data_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return data_; }
    [[nodiscard]] double* data() noexcept { return data_.data(); }
    [[nodiscard]] const double* data() const noexcept { return data_.data(); }

    [[nodiscard]] std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }
    [[nodiscard]] std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

    [[nodiscard]] Tensor reshaped(std::size_t rows, std::size_t cols) const {
        require(rows * cols == size(), "Tensor::reshaped: element count mismatch");
        return unchecked(rows, cols, data_);
    }

    [[nodiscard]] Tensor transposed() const {
        Tensor t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    [[nodiscard]] double sum() const {
        double s = 0.0;
        for (double v : data_) s += v;
        return s;
    }

    [[nodiscard]] bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        require(same_shape(o), "Tensor +=: shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    bool operator==(const Tensor& o) const = default;

private:
    void check_finite() const {
        if (!all_finite()) throw ContractViolation("Tensor: non-finite value at creation");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline std::string shape_str(const Tensor& t) {
    return "(" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")";
}

}  // namespace causim::num
