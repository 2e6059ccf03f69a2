#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "ltgnn/core.hpp"

namespace ltgnn {

/// Sparse matrix in CSR form. Column indices are sorted ascending within
/// each row; every kernel accumulates in that order so results are
/// reproducible run to run.
template <class T>
struct CsrMatrix {
    offset_t n_rows = 0;
    offset_t n_cols = 0;
    std::vector<offset_t> row_ptr;   // size n_rows + 1
    std::vector<node_id> col_idx;    // size nnz
    std::vector<T> values;           // size nnz

    offset_t nnz() const { return static_cast<offset_t>(col_idx.size()); }
    offset_t row_nnz(offset_t r) const { return row_ptr[r + 1] - row_ptr[r]; }
    std::span<const node_id> row_cols(offset_t r) const {
        return {col_idx.data() + row_ptr[r], static_cast<std::size_t>(row_nnz(r))};
    }
    std::span<const T> row_vals(offset_t r) const {
        return {values.data() + row_ptr[r], static_cast<std::size_t>(row_nnz(r))};
    }
};

/// y[r] = sum_e A[r,e] * x[col(e)] for one row, accumulated left to right.
template <class T>
void csr_row_gather(const CsrMatrix<T>& a, offset_t r, const RowMatrix<T>& x, T* out) {
    const offset_t d = x.cols();
    for (offset_t c = 0; c < d; ++c) out[c] = T(0);
    const offset_t lo = a.row_ptr[r], hi = a.row_ptr[r + 1];
    for (offset_t e = lo; e < hi; ++e) {
        const T v = a.values[e];
        const T* xr = x.row(a.col_idx[e]);
        for (offset_t c = 0; c < d; ++c) out[c] += v * xr[c];
    }
}

template <class T>
void spmm_into(const CsrMatrix<T>& a, const RowMatrix<T>& x, RowMatrix<T>& y) {
    if (a.n_cols != x.rows()) throw ContractViolation("spmm: dimension mismatch");
    if (y.rows() != a.n_rows || y.cols() != x.cols()) {
        y = RowMatrix<T>(a.n_rows, x.cols());
    }
    for (offset_t r = 0; r < a.n_rows; ++r) {
        csr_row_gather(a, r, x, y.row(r));
    }
}

template <class T>
RowMatrix<T> spmm(const CsrMatrix<T>& a, const RowMatrix<T>& x) {
    RowMatrix<T> y(a.n_rows, x.cols());
    spmm_into(a, x, y);
    return y;
}

/// y += alpha * A^T x, fanned out entry by entry in row-major order of A.
template <class T>
void csr_transpose_apply_add(const CsrMatrix<T>& a, const RowMatrix<T>& x,
                             T alpha, RowMatrix<T>& y) {
    if (a.n_rows != x.rows() || y.rows() != a.n_cols || y.cols() != x.cols()) {
        throw ContractViolation("csr_transpose_apply_add: dimension mismatch");
    }
    const offset_t d = x.cols();
    for (offset_t r = 0; r < a.n_rows; ++r) {
        const T* xr = x.row(r);
        const offset_t lo = a.row_ptr[r], hi = a.row_ptr[r + 1];
        for (offset_t e = lo; e < hi; ++e) {
            const T v = alpha * a.values[e];
            T* yr = y.row(a.col_idx[e]);
            for (offset_t c = 0; c < d; ++c) yr[c] += v * xr[c];
        }
    }
}

} // namespace ltgnn
