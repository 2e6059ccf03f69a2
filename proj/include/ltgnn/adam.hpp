#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ltgnn/core.hpp"

namespace ltgnn {

class TrainingAbort : public std::runtime_error {
public:
    explicit TrainingAbort(const std::string& what) : std::runtime_error(what) {}
};

/// Lazy sparse Adam: moments and bias-correction counters advance only for
/// rows that received a gradient, so a step costs O(n_B d) rather than
/// O((n+m) d). Weight decay is folded into the gradient (L2 form).
template <class T>
class SparseAdam {
public:
    SparseAdam() = default;
    SparseAdam(offset_t rows, offset_t dim, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8)
        : m_(rows, dim), v_(rows, dim), step_count_(rows, 0),
          beta1_(static_cast<T>(beta1)), beta2_(static_cast<T>(beta2)),
          eps_(static_cast<T>(eps)) {}

    /// grads holds one row per entry of rows, in the same order.
    void step(const std::vector<node_id>& rows, const RowMatrix<T>& grads,
              RowMatrix<T>& params, double lr, double weight_decay) {
        const offset_t d = params.cols();
        const T wd = static_cast<T>(weight_decay);
        for (std::size_t t = 0; t < rows.size(); ++t) {
            if (!grads.row_finite(static_cast<offset_t>(t))) {
                throw TrainingAbort("non-finite gradient for row " + std::to_string(rows[t]));
            }
            const node_id r = rows[t];
            const std::int64_t step = ++step_count_[r];
            const T bc1 = static_cast<T>(1.0 - std::pow(static_cast<double>(beta1_), step));
            const T bc2 = static_cast<T>(1.0 - std::pow(static_cast<double>(beta2_), step));
            const T* g_in = grads.row(static_cast<offset_t>(t));
            T* p = params.row(r);
            T* m = m_.row(r);
            T* v = v_.row(r);
            for (offset_t c = 0; c < d; ++c) {
                const T g = g_in[c] + wd * p[c];
                m[c] = beta1_ * m[c] + (T(1) - beta1_) * g;
                v[c] = beta2_ * v[c] + (T(1) - beta2_) * g * g;
                const T m_hat = m[c] / bc1;
                const T v_hat = v[c] / bc2;
                p[c] -= static_cast<T>(lr) * m_hat / (std::sqrt(v_hat) + eps_);
            }
            if (!params.row_finite(r)) {
                throw TrainingAbort("embedding row " + std::to_string(r) +
                                    " became non-finite after the update");
            }
        }
    }

    std::int64_t row_steps(node_id r) const { return step_count_[r]; }
    const RowMatrix<T>& first_moment() const { return m_; }
    const RowMatrix<T>& second_moment() const { return v_; }

private:
    RowMatrix<T> m_;
    RowMatrix<T> v_;
    std::vector<std::int64_t> step_count_;
    T beta1_ = T(0.9);
    T beta2_ = T(0.999);
    T eps_ = T(1e-8);
};

} // namespace ltgnn
