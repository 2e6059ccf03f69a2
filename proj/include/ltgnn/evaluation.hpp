#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "ltgnn/core.hpp"
#include "ltgnn/dataset.hpp"
#include "ltgnn/graph.hpp"
#include "ltgnn/propagation.hpp"

namespace ltgnn {

/// One training-epoch record. NaN marks fields that were not computed that
/// epoch (metrics off-cadence, probe disabled).
struct EvalReport {
    std::int64_t epoch = 0;
    double loss = std::numeric_limits<double>::quiet_NaN();
    double recall = std::numeric_limits<double>::quiet_NaN();
    double ndcg = std::numeric_limits<double>::quiet_NaN();
    int k = 20;
    double epoch_seconds = 0.0;
    double sampling_seconds = 0.0;
    double training_seconds = 0.0;
    double memory_refresh_seconds = 0.0;
    double rel_error = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t agg_madds = 0;
};

inline int env_thread_count() {
    if (const char* s = std::getenv("LTGNN_THREADS")) {
        const int n = std::atoi(s);
        if (n >= 1) return n;
    }
    return 1;
}

/// Top-k item ids by inner-product score, training positives excluded.
/// Ties break toward the smaller item id so rankings are reproducible.
template <class T>
std::vector<node_id> rank_items(std::span<const T> user_emb, const RowMatrix<T>& emb,
                                offset_t item_rows_begin, node_id n_items,
                                std::span<const node_id> exclude_sorted, node_id k) {
    std::vector<std::pair<double, node_id>> scored;
    scored.reserve(n_items);
    for (node_id i = 0; i < n_items; ++i) {
        if (std::binary_search(exclude_sorted.begin(), exclude_sorted.end(), i)) continue;
        scored.emplace_back(dot(user_emb, emb.row_span(item_rows_begin + i)), i);
    }
    const auto better = [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    const std::size_t take = std::min<std::size_t>(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), better);
    std::vector<node_id> out(take);
    for (std::size_t r = 0; r < take; ++r) out[r] = scored[r].second;
    return out;
}

/// Recall and binary-relevance NDCG for one user. IDCG normalizes over
/// min(k, |test|) ideal hits.
inline std::pair<double, double> user_recall_ndcg(std::span<const node_id> ranked,
                                                  std::span<const node_id> test_sorted,
                                                  node_id k) {
    if (test_sorted.empty()) return {0.0, 0.0};
    double hits = 0.0, dcg = 0.0;
    const std::size_t depth = std::min<std::size_t>(k, ranked.size());
    for (std::size_t pos = 0; pos < depth; ++pos) {
        if (std::binary_search(test_sorted.begin(), test_sorted.end(), ranked[pos])) {
            hits += 1.0;
            dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
        }
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min<std::size_t>(k, test_sorted.size());
    for (std::size_t pos = 0; pos < ideal; ++pos) {
        idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
    }
    return {hits / static_cast<double>(test_sorted.size()), dcg / idcg};
}

/// Averages over the supplied users; users with no test items are excluded
/// from the denominator.
inline std::pair<double, double> recall_ndcg(const std::vector<std::vector<node_id>>& ranked,
                                             const std::vector<std::vector<node_id>>& test_items,
                                             node_id k) {
    double recall_sum = 0.0, ndcg_sum = 0.0;
    std::size_t users = 0;
    for (std::size_t u = 0; u < ranked.size(); ++u) {
        if (test_items[u].empty()) continue;
        auto [r, n] = user_recall_ndcg(ranked[u], test_items[u], k);
        recall_sum += r;
        ndcg_sum += n;
        ++users;
    }
    if (users == 0) return {0.0, 0.0};
    return {recall_sum / static_cast<double>(users), ndcg_sum / static_cast<double>(users)};
}

struct RankingMetrics {
    double recall = 0.0;
    double ndcg = 0.0;
    std::size_t users = 0;
};

/// Full ranking over all items for every test user. Parallel across users
/// (LTGNN_THREADS); per-user results are reduced in user order so the
/// average does not depend on the thread count.
template <class T>
RankingMetrics evaluate_embeddings(const RowMatrix<T>& emb, const InteractionGraph<T>& graph,
                                   const std::vector<std::vector<node_id>>& test_items,
                                   node_id k) {
    const node_id n = graph.n_users;
    std::vector<node_id> eval_users;
    for (node_id u = 0; u < n; ++u) {
        if (!test_items[u].empty()) eval_users.push_back(u);
    }
    std::vector<double> recall(eval_users.size(), 0.0), ndcg(eval_users.size(), 0.0);

    const auto eval_range = [&](std::size_t lo, std::size_t hi) {
        std::vector<node_id> exclude;
        for (std::size_t e = lo; e < hi; ++e) {
            const node_id u = eval_users[e];
            auto pos = graph.user_items(u);
            exclude.resize(pos.size());
            for (std::size_t p = 0; p < pos.size(); ++p) {
                exclude[p] = static_cast<node_id>(pos[p] - n);
            }
            auto ranked = rank_items<T>(emb.row_span(u), emb, n, graph.n_items, exclude, k);
            auto [r, nd] = user_recall_ndcg(ranked, test_items[u], k);
            recall[e] = r;
            ndcg[e] = nd;
        }
    };

    const int threads = std::min<int>(env_thread_count(), static_cast<int>(eval_users.size()) ? static_cast<int>(eval_users.size()) : 1);
    if (threads <= 1) {
        eval_range(0, eval_users.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (eval_users.size() + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const std::size_t lo = t * chunk;
            const std::size_t hi = std::min(eval_users.size(), lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(eval_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    RankingMetrics out;
    out.users = eval_users.size();
    if (out.users == 0) return out;
    out.recall = std::accumulate(recall.begin(), recall.end(), 0.0) / static_cast<double>(out.users);
    out.ndcg = std::accumulate(ndcg.begin(), ndcg.end(), 0.0) / static_cast<double>(out.users);
    return out;
}

enum class ProbeScope { AllNodes, Rows };

/// ||E_out - E_ppnp||_F / ||E_ppnp||_F against the cached exact solver.
template <class T>
double ppnp_relative_error(const PpnpSolver& solver, const RowMatrix<T>& e_out,
                           const RowMatrix<T>& e_in, ProbeScope scope = ProbeScope::AllNodes,
                           const std::vector<node_id>* rows = nullptr) {
    RowMatrix<double> exact = solver.solve(e_in);
    double num = 0.0, den = 0.0;
    const auto add_row = [&](offset_t r) {
        const T* o = e_out.row(r);
        const double* x = exact.row(r);
        for (offset_t c = 0; c < e_out.cols(); ++c) {
            const double d = static_cast<double>(o[c]) - x[c];
            num += d * d;
            den += x[c] * x[c];
        }
    };
    if (scope == ProbeScope::Rows && rows != nullptr) {
        for (node_id r : *rows) add_row(r);
    } else {
        for (offset_t r = 0; r < e_out.rows(); ++r) add_row(r);
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num) / std::sqrt(den);
}

} // namespace ltgnn
