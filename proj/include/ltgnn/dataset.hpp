#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ltgnn/core.hpp"
#include "ltgnn/graph.hpp"
#include "ltgnn/rng.hpp"

namespace ltgnn {

/// Training graph plus held-out positives for ranking evaluation. The id
/// space is the union of the train and test splits, remapped jointly when
/// either split has gaps.
template <class T>
struct Dataset {
    InteractionGraph<T> graph;
    std::vector<std::vector<node_id>> test_items; // per user, item-local, sorted
    LoadReport report;

    std::size_t evaluable_users() const {
        std::size_t n = 0;
        for (const auto& v : test_items) n += !v.empty();
        return n;
    }
};

namespace detail {

inline std::vector<std::pair<node_id, node_id>> parse_raw_pairs(const std::string& path,
                                                                InteractionFormat format) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::pair<node_id, node_id>> raw;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv(line);
        std::vector<std::string_view> toks;
        std::size_t pos = 0;
        while (pos < sv.size()) {
            while (pos < sv.size() && (sv[pos] == ' ' || sv[pos] == '\t' || sv[pos] == '\r' || sv[pos] == ',')) ++pos;
            std::size_t start = pos;
            while (pos < sv.size() && sv[pos] != ' ' && sv[pos] != '\t' && sv[pos] != '\r' && sv[pos] != ',') ++pos;
            if (pos > start) toks.push_back(sv.substr(start, pos - start));
        }
        if (toks.empty()) continue;
        if (format == InteractionFormat::AdjacencyList) {
            const node_id u = parse_id(toks[0], path, line_no);
            for (std::size_t i = 1; i < toks.size(); ++i) {
                raw.emplace_back(u, parse_id(toks[i], path, line_no));
            }
        } else {
            if (toks.size() != 2) throw ParseError(path, line_no, "expected 'user item' pair");
            raw.emplace_back(parse_id(toks[0], path, line_no), parse_id(toks[1], path, line_no));
        }
    }
    return raw;
}

} // namespace detail

/// Loads `train.txt` (and `test.txt` when present) from a directory, or a
/// single interaction file. Train and test share one id space.
template <class T>
Dataset<T> load_dataset(const std::string& path,
                        InteractionFormat format = InteractionFormat::AdjacencyList) {
    namespace fs = std::filesystem;
    std::string train_path = path;
    std::string test_path;
    if (fs::is_directory(path)) {
        train_path = (fs::path(path) / "train.txt").string();
        const auto maybe_test = fs::path(path) / "test.txt";
        if (fs::exists(maybe_test)) test_path = maybe_test.string();
    }

    auto train_raw = detail::parse_raw_pairs(train_path, format);
    if (train_raw.empty()) throw EmptyDatasetError(train_path);
    std::vector<std::pair<node_id, node_id>> test_raw;
    if (!test_path.empty()) test_raw = detail::parse_raw_pairs(test_path, format);

    // Joint compaction over the union so both splits agree on ids.
    std::vector<node_id> users, items;
    users.reserve(train_raw.size() + test_raw.size());
    items.reserve(train_raw.size() + test_raw.size());
    for (auto [u, i] : train_raw) { users.push_back(u); items.push_back(i); }
    for (auto [u, i] : test_raw) { users.push_back(u); items.push_back(i); }

    Dataset<T> ds;
    EdgeList el;
    const bool gap_u = detail::compact_ids(users, el.n_users);
    const bool gap_i = detail::compact_ids(items, el.n_items);
    el.report.remapped_users = gap_u;
    el.report.remapped_items = gap_i;
    if (gap_u) el.report.warnings.push_back("user id space has gaps; ids were remapped to a dense range");
    if (gap_i) el.report.warnings.push_back("item id space has gaps; ids were remapped to a dense range");

    el.pairs.reserve(train_raw.size());
    for (std::size_t e = 0; e < train_raw.size(); ++e) {
        el.pairs.emplace_back(users[e], items[e]);
    }
    std::sort(el.pairs.begin(), el.pairs.end());
    const auto last = std::unique(el.pairs.begin(), el.pairs.end());
    el.report.duplicate_edges = static_cast<std::size_t>(el.pairs.end() - last);
    el.pairs.erase(last, el.pairs.end());

    ds.graph = InteractionGraph<T>::from_edges(el);
    ds.report = el.report;

    ds.test_items.assign(el.n_users, {});
    std::size_t overlap = 0;
    for (std::size_t e = 0; e < test_raw.size(); ++e) {
        const node_id u = users[train_raw.size() + e];
        const node_id i = items[train_raw.size() + e];
        auto positives = ds.graph.user_items(u);
        const node_id global_item = static_cast<node_id>(i + el.n_users);
        if (std::binary_search(positives.begin(), positives.end(), global_item)) {
            ++overlap;
            continue;
        }
        ds.test_items[u].push_back(i);
    }
    for (auto& v : ds.test_items) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    if (overlap > 0) {
        ds.report.warnings.push_back(std::to_string(overlap) +
                                     " test interactions also present in train were dropped");
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

class InfeasibleSynthesis : public std::runtime_error {
public:
    explicit InfeasibleSynthesis(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::uint64_t pair_key(node_id u, node_id i, node_id n_items) {
    return static_cast<std::uint64_t>(u) * static_cast<std::uint64_t>(n_items) +
           static_cast<std::uint64_t>(i);
}

} // namespace detail

/// Uniform random distinct user-item pairs; every user receives at least
/// one edge.
inline std::vector<std::pair<node_id, node_id>> synth_uniform(node_id n_users, node_id n_items,
                                                              std::size_t n_edges,
                                                              std::uint64_t seed) {
    const std::uint64_t capacity =
        static_cast<std::uint64_t>(n_users) * static_cast<std::uint64_t>(n_items);
    if (n_users < 1 || n_items < 1 || n_edges > capacity) {
        throw InfeasibleSynthesis("requested edges exceed users*items");
    }
    if (n_edges < static_cast<std::size_t>(n_users)) {
        throw InfeasibleSynthesis("need at least one edge per user");
    }
    auto rng = make_stream(seed, 0, 0, 0x53594e); // "SYN"
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(n_edges * 2);
    std::vector<std::pair<node_id, node_id>> edges;
    edges.reserve(n_edges);
    for (node_id u = 0; u < n_users; ++u) {
        const node_id i = static_cast<node_id>(uniform_below(rng, n_items));
        seen.insert(detail::pair_key(u, i, n_items));
        edges.emplace_back(u, i);
    }
    int misses = 0;
    while (edges.size() < n_edges) {
        const node_id u = static_cast<node_id>(uniform_below(rng, n_users));
        const node_id i = static_cast<node_id>(uniform_below(rng, n_items));
        if (seen.insert(detail::pair_key(u, i, n_items)).second) {
            edges.emplace_back(u, i);
            misses = 0;
        } else if (++misses > 200) {
            // Dense regime: enumerate the free slots and draw exactly.
            std::vector<std::uint64_t> free_slots;
            for (std::uint64_t k = 0; k < capacity; ++k) {
                if (!seen.count(k)) free_slots.push_back(k);
            }
            fisher_yates_shuffle(free_slots, rng);
            for (std::size_t e = 0; edges.size() < n_edges; ++e) {
                const std::uint64_t k = free_slots[e];
                edges.emplace_back(static_cast<node_id>(k / n_items),
                                   static_cast<node_id>(k % n_items));
            }
            break;
        }
    }
    return edges;
}

/// Block-structured interactions: users and items are assigned round-robin
/// to clusters and most edges stay within a cluster. Gives learnable
/// collaborative structure for training-sanity experiments.
inline std::vector<std::pair<node_id, node_id>> synth_clustered(node_id n_users, node_id n_items,
                                                                std::size_t n_edges, int clusters,
                                                                double in_cluster_prob,
                                                                std::uint64_t seed) {
    if (clusters < 1 || clusters > n_items) {
        throw InfeasibleSynthesis("cluster count must be in [1, n_items]");
    }
    const std::uint64_t capacity =
        static_cast<std::uint64_t>(n_users) * static_cast<std::uint64_t>(n_items);
    if (n_edges > capacity || n_edges < static_cast<std::size_t>(n_users)) {
        throw InfeasibleSynthesis("infeasible edge count");
    }
    auto rng = make_stream(seed, 1, 0, 0x53594e);
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(n_edges * 2);
    std::vector<std::pair<node_id, node_id>> edges;
    edges.reserve(n_edges);
    const auto draw_item = [&](node_id u) {
        const int cu = static_cast<int>(u % clusters);
        if (uniform_unit(rng) < in_cluster_prob) {
            const node_id per = n_items / clusters + ((n_items % clusters) > cu ? 1 : 0);
            const node_id slot = static_cast<node_id>(uniform_below(rng, per));
            return static_cast<node_id>(slot * clusters + cu);
        }
        return static_cast<node_id>(uniform_below(rng, n_items));
    };
    for (node_id u = 0; u < n_users; ++u) {
        node_id i;
        do {
            i = draw_item(u);
        } while (!seen.insert(detail::pair_key(u, i, n_items)).second);
        edges.emplace_back(u, i);
    }
    std::size_t stall = 0;
    while (edges.size() < n_edges) {
        const node_id u = static_cast<node_id>(uniform_below(rng, n_users));
        const node_id i = draw_item(u);
        if (seen.insert(detail::pair_key(u, i, n_items)).second) {
            edges.emplace_back(u, i);
            stall = 0;
        } else if (++stall > 100 * n_edges) {
            throw InfeasibleSynthesis("clustered generator stalled; lower density or in-cluster probability");
        }
    }
    return edges;
}

/// Per-user random holdout. Users keep at least one training interaction;
/// users with a single interaction contribute no test items.
inline void holdout_split(const std::vector<std::pair<node_id, node_id>>& edges, double fraction,
                          std::uint64_t seed, std::vector<std::pair<node_id, node_id>>& train,
                          std::vector<std::pair<node_id, node_id>>& test) {
    if (!(fraction >= 0.0 && fraction < 1.0)) {
        throw ContractViolation("holdout fraction must be in [0, 1)");
    }
    train.clear();
    test.clear();
    std::vector<std::vector<node_id>> per_user;
    for (auto [u, i] : edges) {
        if (static_cast<std::size_t>(u) >= per_user.size()) per_user.resize(u + 1);
        per_user[static_cast<std::size_t>(u)].push_back(i);
    }
    for (std::size_t u = 0; u < per_user.size(); ++u) {
        auto& items = per_user[u];
        auto rng = make_stream(seed, u, 0, 0x484f4c44); // "HOLD"
        fisher_yates_shuffle(items, rng);
        std::size_t n_test = static_cast<std::size_t>(fraction * static_cast<double>(items.size()));
        if (n_test >= items.size()) n_test = items.size() - 1;
        for (std::size_t e = 0; e < items.size(); ++e) {
            auto& sink = (e < n_test) ? test : train;
            sink.emplace_back(static_cast<node_id>(u), items[e]);
        }
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
}

inline void write_adjacency_list(const std::string& path,
                                 const std::vector<std::pair<node_id, node_id>>& pairs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    std::vector<std::pair<node_id, node_id>> sorted = pairs;
    std::sort(sorted.begin(), sorted.end());
    std::size_t e = 0;
    while (e < sorted.size()) {
        const node_id u = sorted[e].first;
        out << u;
        while (e < sorted.size() && sorted[e].first == u) {
            out << ' ' << sorted[e].second;
            ++e;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

} // namespace ltgnn
