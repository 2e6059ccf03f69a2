#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ltgnn/core.hpp"
#include "ltgnn/csr.hpp"
#include "ltgnn/graph.hpp"
#include "ltgnn/sampler.hpp"

namespace ltgnn {

/// Variance-reduction mode of the single-layer propagation.
enum class VrMode { Ns, Fvr, Bvr, Bivr, ClassicVr, Full };

inline std::string to_string(VrMode m) {
    switch (m) {
        case VrMode::Ns: return "ns";
        case VrMode::Fvr: return "fvr";
        case VrMode::Bvr: return "bvr";
        case VrMode::Bivr: return "bivr";
        case VrMode::ClassicVr: return "classic";
        case VrMode::Full: return "full";
    }
    return "?";
}

struct PropagationConfig {
    double alpha = 0.45;      // teleport factor in (0, 1]
    int layers = 1;           // L >= 1
    offset_t sample_size = 10;
    VrMode vr_mode = VrMode::Fvr;

    void validate() const {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractViolation("alpha must be in (0,1]");
        if (layers < 1) throw ContractViolation("layers must be >= 1");
        if (sample_size < 1) throw ContractViolation("sample_size must be >= 1");
    }
};

/// Multiply-add counter for the aggregation kernels; the per-epoch total is
/// the quantity that should scale as O(|E| D d).
struct OpCounters {
    std::uint64_t agg_madds = 0;
};

namespace detail {

inline void count_madds(OpCounters* c, std::uint64_t nnz, offset_t d) {
    if (c) c->agg_madds += nnz * static_cast<std::uint64_t>(d);
}

} // namespace detail

/// Exact aggregation (Ã X) restricted to the given rows.
template <class T>
void exact_rows_into(const CsrMatrix<T>& na, const std::vector<node_id>& rows,
                     const RowMatrix<T>& x, RowMatrix<T>& out, OpCounters* counters = nullptr) {
    const offset_t d = x.cols();
    if (out.rows() != static_cast<offset_t>(rows.size()) || out.cols() != d) {
        out = RowMatrix<T>(static_cast<offset_t>(rows.size()), d);
    }
    std::uint64_t nnz = 0;
    for (std::size_t t = 0; t < rows.size(); ++t) {
        csr_row_gather(na, rows[t], x, out.row(static_cast<offset_t>(t)));
        nnz += static_cast<std::uint64_t>(na.row_nnz(rows[t]));
    }
    detail::count_madds(counters, nnz, d);
}

/// E_0 = E_in; E_{l+1} = (1-alpha) Ã E_l + alpha E_in. Returns E_L.
template <class T>
RowMatrix<T> appnp_iterate(const InteractionGraph<T>& g, const RowMatrix<T>& e_in,
                           double alpha, int layers, OpCounters* counters = nullptr) {
    if (layers < 0) throw ContractViolation("layers must be >= 0");
    RowMatrix<T> e = e_in;
    RowMatrix<T> agg;
    const T a = static_cast<T>(alpha);
    const T b = static_cast<T>(1.0 - alpha);
    for (int l = 0; l < layers; ++l) {
        spmm_into(g.norm_adjacency, e, agg);
        detail::count_madds(counters, static_cast<std::uint64_t>(g.norm_adjacency.nnz()), e.cols());
        for (std::size_t i = 0; i < e.data().size(); ++i) {
            e.data()[i] = b * agg.data()[i] + a * e_in.data()[i];
        }
    }
    return e;
}

/// E_{l+1} = Ã E_l; returns the layer average (1/(L+1)) sum_{l=0..L} E_l.
template <class T>
RowMatrix<T> lightgcn_propagate(const InteractionGraph<T>& g, const RowMatrix<T>& e_in,
                                int layers, OpCounters* counters = nullptr) {
    if (layers < 1) throw ContractViolation("layers must be >= 1");
    RowMatrix<T> cur = e_in;
    RowMatrix<T> acc = e_in;
    RowMatrix<T> next;
    for (int l = 0; l < layers; ++l) {
        spmm_into(g.norm_adjacency, cur, next);
        detail::count_madds(counters, static_cast<std::uint64_t>(g.norm_adjacency.nnz()), cur.cols());
        std::swap(cur, next);
        for (std::size_t i = 0; i < acc.data().size(); ++i) acc.data()[i] += cur.data()[i];
    }
    const T scale = static_cast<T>(1.0 / (layers + 1));
    for (T& v : acc.data()) v *= scale;
    return acc;
}

class SizeGuardError : public std::runtime_error {
public:
    explicit SizeGuardError(offset_t n)
        : std::runtime_error("ppnp_exact: graph has " + std::to_string(n) +
                             " nodes, beyond the 10000-node dense-solve guard; "
                             "use appnp_iterate instead") {}
};

constexpr offset_t kPpnpDenseGuard = 10000;

/// Factors (I - (1-alpha) Ã) once so repeated solves against fresh inputs
/// (the relative-error probe) cost only back-substitution.
class PpnpSolver {
public:
    template <class T>
    PpnpSolver(const InteractionGraph<T>& g, double alpha) : alpha_(alpha) {
        const offset_t n = g.num_nodes();
        if (n > kPpnpDenseGuard) throw SizeGuardError(n);
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
        const auto& na = g.norm_adjacency;
        for (offset_t r = 0; r < n; ++r) {
            for (offset_t e = na.row_ptr[r]; e < na.row_ptr[r + 1]; ++e) {
                m(r, na.col_idx[e]) -= (1.0 - alpha) * static_cast<double>(na.values[e]);
            }
        }
        lu_.compute(m);
    }

    double alpha() const { return alpha_; }

    template <class T>
    RowMatrix<double> solve(const RowMatrix<T>& e_in) const {
        const offset_t n = e_in.rows(), d = e_in.cols();
        Eigen::MatrixXd rhs(n, d);
        for (offset_t r = 0; r < n; ++r) {
            for (offset_t c = 0; c < d; ++c) rhs(r, c) = alpha_ * static_cast<double>(e_in(r, c));
        }
        Eigen::MatrixXd sol = lu_.solve(rhs);
        RowMatrix<double> out(n, d);
        for (offset_t r = 0; r < n; ++r) {
            for (offset_t c = 0; c < d; ++c) out(r, c) = sol(r, c);
        }
        return out;
    }

private:
    double alpha_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

/// alpha (I - (1-alpha) Ã)^{-1} E_in by direct dense solve (64-bit internally).
template <class T>
RowMatrix<T> ppnp_exact(const InteractionGraph<T>& g, const RowMatrix<T>& e_in, double alpha) {
    PpnpSolver solver(g, alpha);
    return solver.solve(e_in).template cast<T>();
}

/// Full-aggregation snapshots taken at each epoch boundary: the historical
/// matrices and their exact aggregations, for embeddings and gradients.
template <class T>
struct VrMemory {
    RowMatrix<T> m_in;
    RowMatrix<T> m_ag;
    RowMatrix<T> m_in_grad;
    RowMatrix<T> m_ag_grad;
    std::int64_t epoch_stamp = -1;
};

/// Snapshot the two histories and aggregate them once: one SpMM pair per
/// epoch, O(|E| d).
template <class T>
void refresh_memory(const InteractionGraph<T>& g, const RowMatrix<T>& e_out_hist,
                    const RowMatrix<T>& grad_in_hist, VrMemory<T>& memory,
                    OpCounters* counters = nullptr) {
    memory.m_in = e_out_hist;
    spmm_into(g.norm_adjacency, memory.m_in, memory.m_ag);
    memory.m_in_grad = grad_in_hist;
    spmm_into(g.norm_adjacency, memory.m_in_grad, memory.m_ag_grad);
    detail::count_madds(counters, 2 * static_cast<std::uint64_t>(g.norm_adjacency.nnz()),
                        e_out_hist.cols());
    ++memory.epoch_stamp;
}

/// Classic variance-reduced aggregation: Â (X - hist) + (Ã hist) on target
/// rows, with the full aggregation of the history recomputed on every call.
/// This is the quadratic-per-epoch baseline.
template <class T>
RowMatrix<T> classic_vr_aggregate(const InteractionGraph<T>& g, const SampledAdjacency<T>& a_hat,
                                  const RowMatrix<T>& x, const RowMatrix<T>& history,
                                  OpCounters* counters = nullptr) {
    RowMatrix<T> out;
    a_hat.apply_diff(x, history, out);
    detail::count_madds(counters, static_cast<std::uint64_t>(a_hat.nnz()), x.cols());
    RowMatrix<T> full = spmm(g.norm_adjacency, history);
    detail::count_madds(counters, static_cast<std::uint64_t>(g.norm_adjacency.nnz()), x.cols());
    for (std::size_t t = 0; t < a_hat.targets.size(); ++t) {
        T* o = out.row(static_cast<offset_t>(t));
        const T* f = full.row(a_hat.targets[t]);
        for (offset_t c = 0; c < x.cols(); ++c) o[c] += f[c];
    }
    return out;
}

namespace detail {

template <class T>
void check_memory_stamp(const VrMemory<T>& memory, std::int64_t expected_epoch) {
    if (memory.epoch_stamp != expected_epoch) {
        throw ContractViolation(
            "variance-reduction memory is stale (stamp " + std::to_string(memory.epoch_stamp) +
            ", epoch " + std::to_string(expected_epoch) + "); call refresh_memory first");
    }
}

/// The sampled estimate of (Ã hist) on target rows, per vr mode.
template <class T>
RowMatrix<T> aggregate_history(const InteractionGraph<T>& g, const SampledAdjacency<T>& a_hat,
                               const RowMatrix<T>& hist, const RowMatrix<T>& mem_in,
                               const RowMatrix<T>& mem_ag, bool variance_reduced, VrMode mode,
                               OpCounters* counters) {
    RowMatrix<T> x_hat;
    if (mode == VrMode::Full) {
        exact_rows_into(g.norm_adjacency, a_hat.targets, hist, x_hat, counters);
        return x_hat;
    }
    if (mode == VrMode::ClassicVr) {
        return classic_vr_aggregate(g, a_hat, hist, mem_in, counters);
    }
    if (variance_reduced) {
        a_hat.apply_diff(hist, mem_in, x_hat);
        detail::count_madds(counters, static_cast<std::uint64_t>(a_hat.nnz()), hist.cols());
        for (std::size_t t = 0; t < a_hat.targets.size(); ++t) {
            T* o = x_hat.row(static_cast<offset_t>(t));
            const T* ma = mem_ag.row(a_hat.targets[t]);
            for (offset_t c = 0; c < hist.cols(); ++c) o[c] += ma[c];
        }
    } else {
        a_hat.apply(hist, x_hat);
        detail::count_madds(counters, static_cast<std::uint64_t>(a_hat.nnz()), hist.cols());
    }
    return x_hat;
}

} // namespace detail

/// Single-layer forward: (1-alpha) * estimate(Ã E_out_hist) + alpha * E_in
/// on target rows. The estimate uses the epoch memories when the mode
/// reduces forward variance.
template <class T>
RowMatrix<T> evr_forward(const InteractionGraph<T>& g, const RowMatrix<T>& e_out_hist,
                         const VrMemory<T>& memory, const SampledAdjacency<T>& a_hat,
                         const RowMatrix<T>& e_in, double alpha, VrMode mode,
                         std::int64_t epoch, OpCounters* counters = nullptr) {
    const bool vr = (mode == VrMode::Fvr || mode == VrMode::Bivr);
    if (vr || mode == VrMode::ClassicVr) detail::check_memory_stamp(memory, epoch);
    RowMatrix<T> out = detail::aggregate_history(g, a_hat, e_out_hist, memory.m_in,
                                                 memory.m_ag, vr, mode, counters);
    const T a = static_cast<T>(alpha);
    const T b = static_cast<T>(1.0 - alpha);
    for (std::size_t t = 0; t < a_hat.targets.size(); ++t) {
        T* o = out.row(static_cast<offset_t>(t));
        const T* ein = e_in.row(a_hat.targets[t]);
        for (offset_t c = 0; c < e_in.cols(); ++c) o[c] = b * o[c] + a * ein[c];
    }
    return out;
}

/// Single-layer backward: (1-alpha) * estimate(Ã grad_in_hist) + alpha *
/// grad_out on target rows. grad_out holds the loss gradient at the output
/// layer for the targets, in target order.
template <class T>
RowMatrix<T> evr_backward(const InteractionGraph<T>& g, const RowMatrix<T>& grad_in_hist,
                          const VrMemory<T>& memory, const SampledAdjacency<T>& a_hat,
                          const RowMatrix<T>& grad_out, double alpha, VrMode mode,
                          std::int64_t epoch, OpCounters* counters = nullptr) {
    const bool vr = (mode == VrMode::Bvr || mode == VrMode::Bivr);
    if (vr || mode == VrMode::ClassicVr) detail::check_memory_stamp(memory, epoch);
    RowMatrix<T> out = detail::aggregate_history(g, a_hat, grad_in_hist, memory.m_in_grad,
                                                 memory.m_ag_grad, vr, mode, counters);
    const T a = static_cast<T>(alpha);
    const T b = static_cast<T>(1.0 - alpha);
    for (std::size_t t = 0; t < a_hat.targets.size(); ++t) {
        T* o = out.row(static_cast<offset_t>(t));
        const T* go = grad_out.row(static_cast<offset_t>(t));
        for (offset_t c = 0; c < grad_out.cols(); ++c) o[c] = b * o[c] + a * go[c];
    }
    return out;
}

} // namespace ltgnn
