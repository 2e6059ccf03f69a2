#pragma once

#include <cstring>
#include <fstream>
#include <string>

#include "ltgnn/core.hpp"
#include "ltgnn/graph.hpp"
#include "ltgnn/propagation.hpp"
#include "ltgnn/rng.hpp"

namespace ltgnn {

enum class ModelFamily { Mf, LightGcn, Ltgnn };

inline std::string to_string(ModelFamily f) {
    switch (f) {
        case ModelFamily::Mf: return "mf";
        case ModelFamily::LightGcn: return "lightgcn";
        case ModelFamily::Ltgnn: return "ltgnn";
    }
    return "?";
}

/// LightGCN training-time aggregation strategy.
enum class LightGcnSampler { Full, Ns, ClassicVr };

struct ModelKind {
    ModelFamily family = ModelFamily::Ltgnn;
    int layers = 1;                                    // LightGCN / LTGNN L
    LightGcnSampler lgcn_sampler = LightGcnSampler::Full;
    PropagationConfig prop;                            // LTGNN settings
};

/// Trainable table plus the histories that the single-layer propagation
/// reuses across iterations. Users occupy rows [0, n), items [n, n+m).
template <class T>
struct EmbeddingState {
    RowMatrix<T> e_in;
    RowMatrix<T> e_out_hist;    // E_out from the previous iteration
    RowMatrix<T> grad_in_hist;  // dL/dE_in from the previous iteration
    std::int64_t iteration = 0; // k
    std::int64_t epoch = 0;
    offset_t dim = 0;

    void save_output_rows(const std::vector<node_id>& targets, const RowMatrix<T>& rows) {
        for (std::size_t t = 0; t < targets.size(); ++t) {
            std::memcpy(e_out_hist.row(targets[t]), rows.row(static_cast<offset_t>(t)),
                        sizeof(T) * static_cast<std::size_t>(dim));
        }
    }

    void save_grad_rows(const std::vector<node_id>& targets, const RowMatrix<T>& rows) {
        for (std::size_t t = 0; t < targets.size(); ++t) {
            std::memcpy(grad_in_hist.row(targets[t]), rows.row(static_cast<offset_t>(t)),
                        sizeof(T) * static_cast<std::size_t>(dim));
        }
    }
};

/// i.i.d. N(0, std^2) table. Cold start: the output history starts at the
/// initial table and the gradient history at zero, so the first forward
/// pass equals one exact propagation step and the first backward pass the
/// teleport term.
template <class T>
EmbeddingState<T> init_embeddings(node_id n_users, node_id n_items, offset_t dim,
                                  std::uint64_t seed, double std_dev = 0.1) {
    if (dim < 1) throw ContractViolation("dim must be >= 1");
    EmbeddingState<T> s;
    s.dim = dim;
    const offset_t n = static_cast<offset_t>(n_users) + n_items;
    s.e_in = RowMatrix<T>(n, dim);
    auto rng = make_stream(seed, 0, 0, 0x494e4954); // "INIT"
    NormalSampler normal(rng);
    for (T& v : s.e_in.data()) v = static_cast<T>(std_dev * normal());
    s.e_out_hist = s.e_in;
    s.grad_in_hist = RowMatrix<T>(n, dim);
    return s;
}

template <class T>
double score(std::span<const T> user_emb, std::span<const T> item_emb) {
    return dot(user_emb, item_emb);
}

enum class InferenceVariant { Appnp3, ReuseHistory };

/// Final embeddings used for prediction: a 3-layer APPNP pass over the
/// trained input table by default, or the stored forward history.
template <class T>
RowMatrix<T> infer_embeddings(const InteractionGraph<T>& g, const EmbeddingState<T>& state,
                              double alpha, InferenceVariant variant = InferenceVariant::Appnp3) {
    if (variant == InferenceVariant::ReuseHistory) return state.e_out_hist;
    return appnp_iterate(g, state.e_in, alpha, 3);
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "LTCK", version u32, family u32, layers i32, n u64,
// m u64, d u32, alpha f64, epoch i64, scalar width u32, then the raw
// little-endian input embedding table.
// ---------------------------------------------------------------------------

struct CheckpointHeader {
    ModelFamily family = ModelFamily::Ltgnn;
    int layers = 1;
    node_id n_users = 0;
    node_id n_items = 0;
    offset_t dim = 0;
    double alpha = 0.45;
    std::int64_t epoch = 0;
    std::uint32_t scalar_width = 4;
};

template <class T>
void save_checkpoint(const std::string& path, const CheckpointHeader& h, const RowMatrix<T>& e_in) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write("LTCK", 4);
    detail::write_pod(out, std::uint32_t{1});
    detail::write_pod(out, static_cast<std::uint32_t>(h.family));
    detail::write_pod(out, static_cast<std::int32_t>(h.layers));
    detail::write_pod(out, static_cast<std::uint64_t>(h.n_users));
    detail::write_pod(out, static_cast<std::uint64_t>(h.n_items));
    detail::write_pod(out, static_cast<std::uint32_t>(h.dim));
    detail::write_pod(out, h.alpha);
    detail::write_pod(out, h.epoch);
    detail::write_pod(out, std::uint32_t{sizeof(T)});
    out.write(reinterpret_cast<const char*>(e_in.data().data()),
              static_cast<std::streamsize>(e_in.data().size() * sizeof(T)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline CheckpointHeader read_checkpoint_header(std::ifstream& in, const std::string& path) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "LTCK", 4) != 0) {
        throw std::runtime_error("not a checkpoint file: " + path);
    }
    std::uint32_t version = 0;
    detail::read_pod(in, version);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    CheckpointHeader h;
    std::uint32_t family = 0, dim = 0;
    std::int32_t layers = 0;
    std::uint64_t n = 0, m = 0;
    detail::read_pod(in, family);
    detail::read_pod(in, layers);
    detail::read_pod(in, n);
    detail::read_pod(in, m);
    detail::read_pod(in, dim);
    detail::read_pod(in, h.alpha);
    detail::read_pod(in, h.epoch);
    detail::read_pod(in, h.scalar_width);
    h.family = static_cast<ModelFamily>(family);
    h.layers = layers;
    h.n_users = static_cast<node_id>(n);
    h.n_items = static_cast<node_id>(m);
    h.dim = dim;
    return h;
}

inline CheckpointHeader peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_checkpoint_header(in, path);
}

template <class T>
CheckpointHeader load_checkpoint(const std::string& path, RowMatrix<T>& e_in) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    CheckpointHeader h = read_checkpoint_header(in, path);
    const offset_t rows = static_cast<offset_t>(h.n_users) + h.n_items;
    e_in = RowMatrix<T>(rows, h.dim);
    if (h.scalar_width == sizeof(T)) {
        in.read(reinterpret_cast<char*>(e_in.data().data()),
                static_cast<std::streamsize>(e_in.data().size() * sizeof(T)));
    } else if (h.scalar_width == 4) {
        std::vector<float> buf(e_in.data().size());
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        for (std::size_t i = 0; i < buf.size(); ++i) e_in.data()[i] = static_cast<T>(buf[i]);
    } else if (h.scalar_width == 8) {
        std::vector<double> buf(e_in.data().size());
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(double)));
        for (std::size_t i = 0; i < buf.size(); ++i) e_in.data()[i] = static_cast<T>(buf[i]);
    } else {
        throw std::runtime_error("unsupported scalar width in checkpoint");
    }
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    return h;
}

} // namespace ltgnn
