#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "ltgnn/dataset.hpp"
#include "ltgnn/training.hpp"

namespace ltgnn {

struct BenchRow {
    std::string model;
    std::size_t edges = 0;
    double epoch_s = 0.0;
    double sample_s = 0.0;
    double train_s = 0.0;
    double refresh_s = 0.0;
};

struct BenchConfig {
    std::int64_t epochs = 2;
    std::size_t batch_size = 2048;
    offset_t sample_size = 10;
    offset_t dim = 64;
    std::uint64_t seed = 42;
    int lightgcn_layers = 3;
    // When zero, the node set grows with the edge count (fixed density,
    // average user degree 25). A fixed node set instead grows the density,
    // which keeps the memory working set constant and isolates the
    // per-edge cost scaling.
    node_id n_users = 0;
    node_id n_items = 0;
};

/// Per-epoch wall-clock of MF, LTGNN and full LightGCN on uniform random
/// bipartite graphs of growing size. The per-size graphs are regenerated
/// from the same seed.
template <class T = float>
std::vector<BenchRow> scaling_benchmark(const std::vector<std::size_t>& edge_sizes,
                                        const BenchConfig& bc = {}) {
    std::vector<BenchRow> rows;
    for (std::size_t edges : edge_sizes) {
        const node_id users = bc.n_users > 0
                                  ? bc.n_users
                                  : static_cast<node_id>(std::max<std::size_t>(edges / 25, 2));
        const node_id items = bc.n_items > 0
                                  ? bc.n_items
                                  : static_cast<node_id>(std::max<std::size_t>(edges / 50, 2));
        EdgeList el;
        el.n_users = users;
        el.n_items = items;
        el.pairs = synth_uniform(users, items, edges, bc.seed);
        std::sort(el.pairs.begin(), el.pairs.end());
        Dataset<T> ds;
        ds.graph = InteractionGraph<T>::from_edges(el);
        ds.test_items.assign(users, {});

        const auto run_one = [&](const std::string& name, const ModelKind& kind) {
            TrainConfig cfg;
            cfg.model = kind;
            cfg.epochs = bc.epochs + 1; // first epoch is warmup, not measured
            cfg.batch_size = bc.batch_size;
            cfg.dim = bc.dim;
            cfg.seed = bc.seed;
            cfg.eval_every = 0; // never evaluate inside the timing loop
            Trainer<T> trainer(ds, cfg);
            const auto reports = trainer.run();
            BenchRow row;
            row.model = name;
            row.edges = edges;
            // epoch_s is the minimum over measured epochs (robust against
            // interference); the stage columns are averages.
            row.epoch_s = 1e300;
            for (std::size_t e = 1; e < reports.size(); ++e) {
                const auto& r = reports[e];
                row.epoch_s = std::min(row.epoch_s, r.epoch_seconds);
                row.sample_s += r.sampling_seconds;
                row.train_s += r.training_seconds;
                row.refresh_s += r.memory_refresh_seconds;
            }
            const double denom = static_cast<double>(reports.size() - 1);
            row.sample_s /= denom;
            row.train_s /= denom;
            row.refresh_s /= denom;
            rows.push_back(row);
        };

        ModelKind mf;
        mf.family = ModelFamily::Mf;
        run_one("mf", mf);

        ModelKind ltgnn;
        ltgnn.family = ModelFamily::Ltgnn;
        ltgnn.prop.sample_size = bc.sample_size;
        run_one("ltgnn", ltgnn);

        ModelKind lgcn;
        lgcn.family = ModelFamily::LightGcn;
        lgcn.layers = bc.lightgcn_layers;
        lgcn.lgcn_sampler = LightGcnSampler::Full;
        run_one("lightgcn_full_l" + std::to_string(bc.lightgcn_layers), lgcn);
    }
    return rows;
}

inline void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "model,edges,epoch_s,sample_s,train_s,refresh_s\n";
    for (const auto& r : rows) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.6f,%.6f,%.6f,%.6f\n", r.model.c_str(), r.edges,
                      r.epoch_s, r.sample_s, r.train_s, r.refresh_s);
        out << buf;
    }
}

} // namespace ltgnn
