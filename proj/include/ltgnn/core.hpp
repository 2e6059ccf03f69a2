#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ltgnn {

using node_id = std::int32_t;
using offset_t = std::int64_t;

/// Thrown when a caller breaks a documented precondition.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

/// Dense row-major matrix. Rows are the unit of access everywhere
/// (embedding tables, gradients, histories).
template <class T>
class RowMatrix {
public:
    RowMatrix() = default;
    RowMatrix(offset_t rows, offset_t cols, T fill = T(0))
        : rows_(rows), cols_(cols),
          data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
        if (rows < 0 || cols < 0) {
            throw ContractViolation("RowMatrix: negative shape");
        }
    }

    offset_t rows() const { return rows_; }
    offset_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    T* row(offset_t r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
    const T* row(offset_t r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }
    std::span<T> row_span(offset_t r) { return {row(r), static_cast<std::size_t>(cols_)}; }
    std::span<const T> row_span(offset_t r) const { return {row(r), static_cast<std::size_t>(cols_)}; }

    T& operator()(offset_t r, offset_t c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    T operator()(offset_t r, offset_t c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    bool row_finite(offset_t r) const {
        const T* p = row(r);
        for (offset_t c = 0; c < cols_; ++c) {
            if (!std::isfinite(static_cast<double>(p[c]))) return false;
        }
        return true;
    }

    template <class U>
    RowMatrix<U> cast() const {
        RowMatrix<U> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) {
            out.data()[i] = static_cast<U>(data_[i]);
        }
        return out;
    }

private:
    offset_t rows_ = 0;
    offset_t cols_ = 0;
    std::vector<T> data_;
};

template <class T>
double frobenius_norm(const RowMatrix<T>& m) {
    double s = 0.0;
    for (T v : m.data()) s += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(s);
}

template <class T>
double frobenius_distance(const RowMatrix<T>& a, const RowMatrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ContractViolation("frobenius_distance: shape mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

inline double dot(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace ltgnn
