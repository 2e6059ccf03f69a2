#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "ltgnn/core.hpp"
#include "ltgnn/graph.hpp"
#include "ltgnn/rng.hpp"

namespace ltgnn {

constexpr std::uint64_t kNegativeTag = 0x4e4547; // "NEG"
constexpr std::uint64_t kNeighborTag = 0x4e4252; // "NBR"

struct BprTriplet {
    node_id user;     // global node id (< n_users)
    node_id pos_item; // global node id
    node_id neg_item; // global node id
};

/// One training batch: B triplets plus the deduplicated target-node set.
struct BprBatch {
    std::vector<BprTriplet> triplets;
    std::vector<node_id> targets; // sorted ascending, |targets| <= 3B
    std::size_t skipped = 0;      // users with no admissible negative
};

inline void collect_targets(BprBatch& b) {
    b.targets.clear();
    b.targets.reserve(b.triplets.size() * 3);
    for (const auto& t : b.triplets) {
        b.targets.push_back(t.user);
        b.targets.push_back(t.pos_item);
        b.targets.push_back(t.neg_item);
    }
    std::sort(b.targets.begin(), b.targets.end());
    b.targets.erase(std::unique(b.targets.begin(), b.targets.end()), b.targets.end());
}

/// Iterates one epoch of interactions as a shuffled permutation of R+,
/// handed out in batches of B. The shuffle stream is keyed by (seed, epoch)
/// so batch sequences are reproducible.
class EpochSampler {
public:
    template <class T>
    EpochSampler(const InteractionGraph<T>& g, std::size_t batch_size, std::uint64_t seed)
        : batch_size_(batch_size), seed_(seed) {
        order_.resize(g.edges.size());
        edges_ = &g.edges;
        if (batch_size_ == 0) throw ContractViolation("batch_size must be >= 1");
        if (batch_size_ > order_.size()) {
            clamped_ = true;
            batch_size_ = order_.size();
        }
    }

    bool clamped() const { return clamped_; }
    std::size_t batch_size() const { return batch_size_; }
    std::size_t batches_per_epoch() const {
        return (order_.size() + batch_size_ - 1) / batch_size_;
    }

    void begin_epoch(std::uint64_t epoch) {
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        auto rng = make_stream(seed_, epoch, 0, kShuffleTag);
        fisher_yates_shuffle(order_, rng);
        cursor_ = 0;
    }

    bool next_batch(std::vector<std::pair<node_id, node_id>>& out) {
        out.clear();
        if (cursor_ >= order_.size()) return false;
        const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
        out.reserve(end - cursor_);
        for (std::size_t i = cursor_; i < end; ++i) {
            out.push_back((*edges_)[order_[i]]);
        }
        cursor_ = end;
        return true;
    }

    static constexpr std::uint64_t kShuffleTag = 0x5351;

private:
    std::size_t batch_size_;
    std::uint64_t seed_;
    bool clamped_ = false;
    const std::vector<std::pair<node_id, node_id>>* edges_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

/// For each observed (u, i), draws one j uniform over the items u has not
/// interacted with. Rejection against the user's sorted positives, with an
/// exact-enumeration fallback for near-saturated users.
template <class T>
BprBatch sample_negatives(const InteractionGraph<T>& g,
                          const std::vector<std::pair<node_id, node_id>>& pairs,
                          std::mt19937_64& rng) {
    BprBatch batch;
    batch.triplets.reserve(pairs.size());
    const node_id m = g.n_items;
    for (auto [u, i] : pairs) {
        auto positives = g.user_items(u); // sorted global ids
        if (static_cast<node_id>(positives.size()) >= m) {
            ++batch.skipped;
            continue;
        }
        node_id j = -1;
        for (int attempt = 0; attempt < 32; ++attempt) {
            const node_id cand = static_cast<node_id>(
                g.n_users + uniform_below(rng, static_cast<std::uint64_t>(m)));
            if (!std::binary_search(positives.begin(), positives.end(), cand)) {
                j = cand;
                break;
            }
        }
        if (j < 0) {
            // Exact uniform draw over the complement.
            const std::uint64_t free_count =
                static_cast<std::uint64_t>(m) - positives.size();
            std::uint64_t k = uniform_below(rng, free_count);
            node_id cand = g.n_users;
            std::size_t p = 0;
            for (;; ++cand) {
                if (p < positives.size() && positives[p] == cand) {
                    ++p;
                    continue;
                }
                if (k == 0) break;
                --k;
            }
            j = cand;
        }
        batch.triplets.push_back({u, i, j});
    }
    collect_targets(batch);
    return batch;
}

/// Random adjacency over the batch targets: per target row, up to D columns
/// drawn without replacement from the closed neighborhood, entries scaled by
/// |closed nbhd| / |drawn| times the exact normalized weight. Rows for
/// non-target nodes are absent.
template <class T>
struct SampledAdjacency {
    std::vector<node_id> targets;  // sorted ascending
    std::vector<offset_t> row_ptr; // size targets.size() + 1
    std::vector<node_id> col_idx;  // global node ids, sorted within a row
    std::vector<T> values;

    offset_t nnz() const { return static_cast<offset_t>(col_idx.size()); }

    /// out[t] = sum_e v * x[col]
    void apply(const RowMatrix<T>& x, RowMatrix<T>& out) const {
        const offset_t d = x.cols();
        if (out.rows() != static_cast<offset_t>(targets.size()) || out.cols() != d) {
            out = RowMatrix<T>(static_cast<offset_t>(targets.size()), d);
        }
        for (std::size_t t = 0; t < targets.size(); ++t) {
            T* o = out.row(static_cast<offset_t>(t));
            for (offset_t c = 0; c < d; ++c) o[c] = T(0);
            for (offset_t e = row_ptr[t]; e < row_ptr[t + 1]; ++e) {
                const T v = values[e];
                const T* xr = x.row(col_idx[e]);
                for (offset_t c = 0; c < d; ++c) o[c] += v * xr[c];
            }
        }
    }

    /// out[col] += scale * v * x[t], fanned out in row-major entry order.
    void apply_transpose_add(const RowMatrix<T>& x, T scale, RowMatrix<T>& out) const {
        const offset_t d = x.cols();
        for (std::size_t t = 0; t < targets.size(); ++t) {
            const T* xr = x.row(static_cast<offset_t>(t));
            for (offset_t e = row_ptr[t]; e < row_ptr[t + 1]; ++e) {
                const T v = scale * values[e];
                T* o = out.row(col_idx[e]);
                for (offset_t c = 0; c < d; ++c) o[c] += v * xr[c];
            }
        }
    }

    /// out[t] = sum_e v * (x[col] - y[col])
    void apply_diff(const RowMatrix<T>& x, const RowMatrix<T>& y, RowMatrix<T>& out) const {
        const offset_t d = x.cols();
        if (out.rows() != static_cast<offset_t>(targets.size()) || out.cols() != d) {
            out = RowMatrix<T>(static_cast<offset_t>(targets.size()), d);
        }
        for (std::size_t t = 0; t < targets.size(); ++t) {
            T* o = out.row(static_cast<offset_t>(t));
            for (offset_t c = 0; c < d; ++c) o[c] = T(0);
            for (offset_t e = row_ptr[t]; e < row_ptr[t + 1]; ++e) {
                const T v = values[e];
                const T* xr = x.row(col_idx[e]);
                const T* yr = y.row(col_idx[e]);
                for (offset_t c = 0; c < d; ++c) o[c] += v * (xr[c] - yr[c]);
            }
        }
    }
};

/// Draws the per-row neighbor samples from the rows of Ã, whose columns are
/// exactly the closed neighborhoods. When a closed neighborhood has at most
/// D members the full row is taken and the scale factor is 1, keeping the
/// estimator exact for low-degree nodes.
template <class T>
SampledAdjacency<T> sample_neighbors(const InteractionGraph<T>& g,
                                     const std::vector<node_id>& targets,
                                     offset_t sample_size, std::mt19937_64& rng) {
    if (sample_size < 1) throw ContractViolation("sample_size must be >= 1");
    SampledAdjacency<T> a;
    a.targets = targets;
    a.row_ptr.assign(targets.size() + 1, 0);
    a.col_idx.reserve(targets.size() * static_cast<std::size_t>(sample_size));
    a.values.reserve(targets.size() * static_cast<std::size_t>(sample_size));

    std::vector<std::uint32_t> picks;
    const auto& na = g.norm_adjacency;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const offset_t r = targets[t];
        const offset_t lo = na.row_ptr[r];
        const offset_t closed = na.row_ptr[r + 1] - lo;
        if (closed <= sample_size) {
            for (offset_t e = lo; e < lo + closed; ++e) {
                a.col_idx.push_back(na.col_idx[e]);
                a.values.push_back(na.values[e]);
            }
        } else {
            sample_distinct(rng, static_cast<std::uint64_t>(closed),
                            static_cast<std::uint64_t>(sample_size), picks);
            const T scale = static_cast<T>(static_cast<double>(closed) /
                                           static_cast<double>(sample_size));
            for (std::uint32_t p : picks) {
                a.col_idx.push_back(na.col_idx[lo + p]);
                a.values.push_back(scale * na.values[lo + p]);
            }
        }
        a.row_ptr[t + 1] = static_cast<offset_t>(a.col_idx.size());
    }
    return a;
}

} // namespace ltgnn
