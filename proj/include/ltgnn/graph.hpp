#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ltgnn/core.hpp"
#include "ltgnn/csr.hpp"

namespace ltgnn {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what) {}
};

class EmptyDatasetError : public std::runtime_error {
public:
    explicit EmptyDatasetError(const std::string& path)
        : std::runtime_error("empty dataset: " + path) {}
};

struct LoadReport {
    bool remapped_users = false;
    bool remapped_items = false;
    std::size_t duplicate_edges = 0;
    std::vector<std::string> warnings;
};

enum class InteractionFormat { AdjacencyList, PairsCsv };

/// Parsed interactions with contiguous local ids: users in [0, n_users),
/// items in [0, n_items). Deduplicated and sorted.
struct EdgeList {
    node_id n_users = 0;
    node_id n_items = 0;
    std::vector<std::pair<node_id, node_id>> pairs; // (user, item-local)
    LoadReport report;
};

namespace detail {

inline node_id parse_id(std::string_view tok, const std::string& path, std::size_t line_no) {
    node_id v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size() || v < 0) {
        throw ParseError(path, line_no, "expected non-negative integer, got '" + std::string(tok) + "'");
    }
    return v;
}

/// Compacts raw ids to [0, count). Returns the remap and whether it was
/// non-trivial (gaps in the observed id range).
inline bool compact_ids(std::vector<node_id>& ids_of_pairs, node_id& count) {
    std::vector<node_id> sorted = ids_of_pairs;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    count = static_cast<node_id>(sorted.size());
    const bool gaps = !sorted.empty() && sorted.back() != count - 1;
    if (gaps) {
        for (node_id& id : ids_of_pairs) {
            id = static_cast<node_id>(
                std::lower_bound(sorted.begin(), sorted.end(), id) - sorted.begin());
        }
    }
    return gaps;
}

inline void finalize_edges(EdgeList& out, std::vector<std::pair<node_id, node_id>>&& raw,
                           const std::string& path) {
    if (raw.empty()) throw EmptyDatasetError(path);

    std::vector<node_id> users(raw.size()), items(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        users[i] = raw[i].first;
        items[i] = raw[i].second;
    }
    out.report.remapped_users = compact_ids(users, out.n_users);
    out.report.remapped_items = compact_ids(items, out.n_items);
    if (out.report.remapped_users) {
        out.report.warnings.push_back("user id space has gaps; ids were remapped to a dense range");
    }
    if (out.report.remapped_items) {
        out.report.warnings.push_back("item id space has gaps; ids were remapped to a dense range");
    }

    out.pairs.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out.pairs[i] = {users[i], items[i]};
    }
    std::sort(out.pairs.begin(), out.pairs.end());
    const auto last = std::unique(out.pairs.begin(), out.pairs.end());
    out.report.duplicate_edges = static_cast<std::size_t>(out.pairs.end() - last);
    out.pairs.erase(last, out.pairs.end());
    if (out.report.duplicate_edges > 0) {
        out.report.warnings.push_back(std::to_string(out.report.duplicate_edges) +
                                      " duplicate interactions dropped");
    }
}

} // namespace detail

/// Adjacency-list format: each line is a user id followed by the ids of its
/// items. The pair-per-line format is `user item` on every line.
inline EdgeList load_interactions(const std::string& path,
                                  InteractionFormat format = InteractionFormat::AdjacencyList) {
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
            const node_id u = detail::parse_id(toks[0], path, line_no);
            for (std::size_t i = 1; i < toks.size(); ++i) {
                raw.emplace_back(u, detail::parse_id(toks[i], path, line_no));
            }
        } else {
            if (toks.size() != 2) {
                throw ParseError(path, line_no, "expected 'user item' pair");
            }
            raw.emplace_back(detail::parse_id(toks[0], path, line_no),
                             detail::parse_id(toks[1], path, line_no));
        }
    }

    EdgeList out;
    detail::finalize_edges(out, std::move(raw), path);
    return out;
}

/// Bipartite interaction graph over n_users + n_items nodes. Items occupy
/// the global id range [n_users, n_users + n_items). Immutable once built.
template <class T>
struct InteractionGraph {
    node_id n_users = 0;
    node_id n_items = 0;
    std::vector<std::pair<node_id, node_id>> edges; // (user, global item id)
    CsrMatrix<T> adjacency;       // symmetric, no self-loops, unit values
    std::vector<offset_t> degrees; // per node, excluding self-loop
    CsrMatrix<T> norm_adjacency;  // (D+I)^{-1/2} (A+I) (D+I)^{-1/2}

    offset_t num_nodes() const { return static_cast<offset_t>(n_users) + n_items; }
    offset_t num_interactions() const { return static_cast<offset_t>(edges.size()); }

    /// Sorted global item neighbors of a user (its training positives).
    std::span<const node_id> user_items(node_id u) const { return adjacency.row_cols(u); }

    static InteractionGraph from_edges(const EdgeList& el);
};

template <class T>
InteractionGraph<T> InteractionGraph<T>::from_edges(const EdgeList& el) {
    InteractionGraph<T> g;
    g.n_users = el.n_users;
    g.n_items = el.n_items;
    const offset_t n = g.num_nodes();
    if (n >= (offset_t(1) << 31)) {
        throw ContractViolation("graph exceeds 32-bit node index range");
    }

    g.edges.reserve(el.pairs.size());
    for (auto [u, i] : el.pairs) {
        if (u < 0 || u >= g.n_users || i < 0 || i >= g.n_items) {
            throw ContractViolation("edge endpoint out of range");
        }
        g.edges.emplace_back(u, static_cast<node_id>(i + g.n_users));
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());

    // Symmetric adjacency: user rows hold item neighbors and vice versa.
    g.degrees.assign(n, 0);
    for (auto [u, v] : g.edges) {
        ++g.degrees[u];
        ++g.degrees[v];
    }
    auto& a = g.adjacency;
    a.n_rows = a.n_cols = n;
    a.row_ptr.assign(n + 1, 0);
    for (offset_t r = 0; r < n; ++r) a.row_ptr[r + 1] = a.row_ptr[r] + g.degrees[r];
    a.col_idx.resize(a.row_ptr[n]);
    a.values.assign(a.row_ptr[n], T(1));
    {
        std::vector<offset_t> fill(a.row_ptr.begin(), a.row_ptr.end() - 1);
        // edges are sorted by (user, item), so both directions land sorted.
        for (auto [u, v] : g.edges) a.col_idx[fill[u]++] = v;
        for (auto [u, v] : g.edges) a.col_idx[fill[v]++] = u;
    }

    // Ã rows: closed neighborhood, self-loop merged into sorted position.
    std::vector<double> inv_sqrt(n);
    for (offset_t r = 0; r < n; ++r) {
        inv_sqrt[r] = 1.0 / std::sqrt(static_cast<double>(g.degrees[r] + 1));
    }
    auto& na = g.norm_adjacency;
    na.n_rows = na.n_cols = n;
    na.row_ptr.assign(n + 1, 0);
    for (offset_t r = 0; r < n; ++r) na.row_ptr[r + 1] = na.row_ptr[r] + g.degrees[r] + 1;
    na.col_idx.resize(na.row_ptr[n]);
    na.values.resize(na.row_ptr[n]);
    for (offset_t r = 0; r < n; ++r) {
        auto cols = a.row_cols(r);
        offset_t w = na.row_ptr[r];
        bool placed = false;
        for (node_id c : cols) {
            if (!placed && r < c) {
                na.col_idx[w] = static_cast<node_id>(r);
                na.values[w] = static_cast<T>(1.0 / static_cast<double>(g.degrees[r] + 1));
                ++w;
                placed = true;
            }
            na.col_idx[w] = c;
            na.values[w] = static_cast<T>(inv_sqrt[r] * inv_sqrt[c]);
            ++w;
        }
        if (!placed) {
            na.col_idx[w] = static_cast<node_id>(r);
            na.values[w] = static_cast<T>(1.0 / static_cast<double>(g.degrees[r] + 1));
        }
    }
    return g;
}

template <class T>
RowMatrix<T> normalized_adjacency_dense(const InteractionGraph<T>& g) {
    const offset_t n = g.num_nodes();
    RowMatrix<T> m(n, n);
    for (offset_t r = 0; r < n; ++r) {
        auto cols = g.norm_adjacency.row_cols(r);
        auto vals = g.norm_adjacency.row_vals(r);
        for (std::size_t e = 0; e < cols.size(); ++e) m(r, cols[e]) = vals[e];
    }
    return m;
}

// ---------------------------------------------------------------------------
// Binary cache. Layout: magic "LTGN", version u32, n_users u64, n_items u64,
// nnz u64, row_ptr as u64[n+1], col_idx as u32[nnz]. Little-endian.
// ---------------------------------------------------------------------------

namespace detail {

template <class V>
void write_pod(std::ofstream& out, const V& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
void read_pod(std::ifstream& in, V& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
}

} // namespace detail

template <class T>
void save_graph_cache(const InteractionGraph<T>& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write("LTGN", 4);
    detail::write_pod(out, std::uint32_t{1});
    detail::write_pod(out, static_cast<std::uint64_t>(g.n_users));
    detail::write_pod(out, static_cast<std::uint64_t>(g.n_items));
    detail::write_pod(out, static_cast<std::uint64_t>(g.adjacency.nnz()));
    for (offset_t p : g.adjacency.row_ptr) detail::write_pod(out, static_cast<std::uint64_t>(p));
    for (node_id c : g.adjacency.col_idx) detail::write_pod(out, static_cast<std::uint32_t>(c));
    if (!out) throw std::runtime_error("write failed: " + path);
}

template <class T>
InteractionGraph<T> load_graph_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "LTGN", 4) != 0) {
        throw std::runtime_error("not a graph cache file: " + path);
    }
    std::uint32_t version = 0;
    detail::read_pod(in, version);
    if (version != 1) throw std::runtime_error("unsupported cache version");
    std::uint64_t n_users = 0, n_items = 0, nnz = 0;
    detail::read_pod(in, n_users);
    detail::read_pod(in, n_items);
    detail::read_pod(in, nnz);
    std::vector<std::uint64_t> row_ptr(n_users + n_items + 1);
    in.read(reinterpret_cast<char*>(row_ptr.data()),
            static_cast<std::streamsize>(row_ptr.size() * sizeof(std::uint64_t)));
    std::vector<std::uint32_t> col_idx(nnz);
    in.read(reinterpret_cast<char*>(col_idx.data()),
            static_cast<std::streamsize>(col_idx.size() * sizeof(std::uint32_t)));
    if (!in) throw std::runtime_error("truncated cache file: " + path);

    // Rebuild from the user rows; degrees and Ã are recomputed so the cache
    // stays small and loads bit-identical to the original construction.
    EdgeList el;
    el.n_users = static_cast<node_id>(n_users);
    el.n_items = static_cast<node_id>(n_items);
    for (std::uint64_t u = 0; u < n_users; ++u) {
        for (std::uint64_t e = row_ptr[u]; e < row_ptr[u + 1]; ++e) {
            el.pairs.emplace_back(static_cast<node_id>(u),
                                  static_cast<node_id>(col_idx[e] - n_users));
        }
    }
    return InteractionGraph<T>::from_edges(el);
}

} // namespace ltgnn
