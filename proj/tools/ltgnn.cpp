#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ltgnn/benchmark.hpp"
#include "ltgnn/dataset.hpp"
#include "ltgnn/manifest.hpp"
#include "ltgnn/model.hpp"
#include "ltgnn/training.hpp"

namespace {

namespace fs = std::filesystem;
using namespace ltgnn;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct TrainFlags {
    std::string data;
    std::string model;
    int layers = 1;
    double alpha = 0.45;
    offset_t neighbors = 10;
    std::string vr = "fvr";
    offset_t dim = 64;
    std::size_t batch = 2048;
    double lr = 1e-3;
    double wd = 1e-4;
    std::int64_t epochs = 0;
    node_id eval_k = 20;
    std::int64_t eval_every = 5;
    std::uint64_t seed = 42;
    std::string out;
    std::string precision = "f32";
    std::string format = "adj";
    double init_std = 0.1;
    bool probe_ppnp = false;
    std::int64_t probe_every = 100;
    std::string inference = "appnp3";
};

VrMode parse_vr(const std::string& s) {
    if (s == "ns") return VrMode::Ns;
    if (s == "fvr") return VrMode::Fvr;
    if (s == "bvr") return VrMode::Bvr;
    if (s == "bivr") return VrMode::Bivr;
    if (s == "classic") return VrMode::ClassicVr;
    if (s == "full") return VrMode::Full;
    throw CLI::ValidationError("--vr", "unknown mode '" + s + "'");
}

InteractionFormat parse_format(const std::string& s) {
    return s == "pairs" ? InteractionFormat::PairsCsv : InteractionFormat::AdjacencyList;
}

template <class T>
int run_train(const TrainFlags& f, const TrainConfig& cfg) {
    Dataset<T> ds;
    try {
        ds = load_dataset<T>(f.data, parse_format(f.format));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    for (const auto& w : ds.report.warnings) std::cerr << "warning: " << w << "\n";

    fs::create_directories(f.out);
    std::string fingerprint_path = f.data;
    if (fs::is_directory(f.data)) fingerprint_path = (fs::path(f.data) / "train.txt").string();

    RunManifest manifest = RunManifest::create(
        cfg, f.data, static_cast<std::size_t>(ds.graph.num_interactions()),
        fnv1a_file(fingerprint_path), f.out, f.precision);
    manifest.write(f.out + "/manifest.json");

    const std::string metrics_path = f.out + "/metrics.csv";
    std::error_code ec;
    fs::remove(metrics_path, ec);
    MetricsWriter metrics(metrics_path, cfg.eval_k);

    Trainer<T> trainer(ds, cfg);
    trainer.set_report_sink([&](const EvalReport& r) {
        metrics.append(r);
        std::printf("epoch %lld  loss %.6f", static_cast<long long>(r.epoch), r.loss);
        if (!std::isnan(r.recall)) {
            std::printf("  recall@%d %.5f  ndcg@%d %.5f", r.k, r.recall, r.k, r.ndcg);
        }
        std::printf("  (%.2fs)\n", r.epoch_seconds);
        std::fflush(stdout);
    });
    try {
        trainer.run();
    } catch (const TrainingAbort& e) {
        std::cerr << "training aborted: " << e.what() << " (last checkpoint left intact)\n";
        return kExitRuntime;
    }
    for (const auto& w : trainer.warnings()) std::cerr << "warning: " << w << "\n";

    CheckpointHeader h;
    h.family = cfg.model.family;
    h.layers = cfg.model.layers;
    h.n_users = ds.graph.n_users;
    h.n_items = ds.graph.n_items;
    h.dim = cfg.dim;
    h.alpha = cfg.model.prop.alpha;
    h.epoch = cfg.epochs;
    save_checkpoint(f.out + "/checkpoint.bin", h, trainer.state().e_in);

    manifest.finish();
    manifest.write(f.out + "/manifest.json");
    return kExitOk;
}

int cmd_train(const TrainFlags& f, const CLI::App& sub) {
    TrainConfig cfg;
    if (f.model == "mf") {
        cfg.model.family = ModelFamily::Mf;
        for (const char* opt : {"--neighbors", "--vr", "--alpha", "--layers"}) {
            if (sub.count(opt) > 0) {
                std::cerr << "usage error: " << opt << " does not apply to --model mf\n";
                return kExitUsage;
            }
        }
    } else if (f.model == "lightgcn") {
        cfg.model.family = ModelFamily::LightGcn;
        cfg.model.layers = f.layers;
        if (sub.count("--alpha") > 0) {
            std::cerr << "usage error: --alpha does not apply to --model lightgcn\n";
            return kExitUsage;
        }
        const VrMode vr = parse_vr(f.vr);
        if (vr == VrMode::Full) {
            cfg.model.lgcn_sampler = LightGcnSampler::Full;
        } else if (vr == VrMode::Ns) {
            cfg.model.lgcn_sampler = LightGcnSampler::Ns;
        } else if (vr == VrMode::ClassicVr) {
            cfg.model.lgcn_sampler = LightGcnSampler::ClassicVr;
        } else {
            std::cerr << "usage error: --model lightgcn supports --vr {full|ns|classic}\n";
            return kExitUsage;
        }
        cfg.model.prop.sample_size = f.neighbors;
    } else {
        cfg.model.family = ModelFamily::Ltgnn;
        cfg.model.layers = f.layers;
        cfg.model.prop.alpha = f.alpha;
        cfg.model.prop.layers = f.layers;
        cfg.model.prop.sample_size = f.neighbors;
        cfg.model.prop.vr_mode = parse_vr(f.vr);
    }
    cfg.epochs = f.epochs;
    cfg.batch_size = f.batch;
    cfg.lr = f.lr;
    cfg.weight_decay = f.wd;
    cfg.dim = f.dim;
    cfg.init_std = f.init_std;
    cfg.seed = f.seed;
    cfg.eval_k = f.eval_k;
    cfg.eval_every = f.eval_every;
    cfg.probe_every = f.probe_ppnp ? f.probe_every : 0;
    cfg.inference =
        f.inference == "history" ? InferenceVariant::ReuseHistory : InferenceVariant::Appnp3;
    try {
        cfg.validate();
    } catch (const ContractViolation& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }
    if (f.precision == "f64") return run_train<double>(f, cfg);
    if (f.precision == "f32") return run_train<float>(f, cfg);
    std::cerr << "usage error: --precision must be f32 or f64\n";
    return kExitUsage;
}

template <class T>
int run_eval(const std::string& checkpoint, const std::string& data, node_id k,
             const std::string& format) {
    RowMatrix<T> e_in;
    CheckpointHeader h = load_checkpoint<T>(checkpoint, e_in);
    Dataset<T> ds = load_dataset<T>(data, parse_format(format));
    if (ds.graph.n_users != h.n_users || ds.graph.n_items != h.n_items) {
        std::cerr << "error: checkpoint shape (" << h.n_users << "x" << h.n_items
                  << ") does not match dataset (" << ds.graph.n_users << "x" << ds.graph.n_items
                  << ")\n";
        return kExitRuntime;
    }
    RowMatrix<T> emb;
    switch (h.family) {
        case ModelFamily::Mf: emb = e_in; break;
        case ModelFamily::LightGcn: emb = lightgcn_propagate(ds.graph, e_in, h.layers); break;
        case ModelFamily::Ltgnn: emb = appnp_iterate(ds.graph, e_in, h.alpha, 3); break;
    }
    const RankingMetrics m = evaluate_embeddings(emb, ds.graph, ds.test_items, k);
    nlohmann::json j;
    j["recall@" + std::to_string(k)] = m.recall;
    j["ndcg@" + std::to_string(k)] = m.ndcg;
    j["k"] = k;
    j["users"] = m.users;
    std::cout << j.dump() << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"linear-time GNN collaborative filtering engine"};
    app.require_subcommand(1);

    TrainFlags tf;
    auto* train = app.add_subcommand("train", "train a model and write run artifacts");
    train->add_option("--data", tf.data, "dataset file or directory with train.txt/test.txt")
        ->required();
    train->add_option("--model", tf.model)->check(CLI::IsMember({"mf", "lightgcn", "ltgnn"}))
        ->required();
    train->add_option("--layers", tf.layers);
    train->add_option("--alpha", tf.alpha);
    train->add_option("--neighbors", tf.neighbors);
    train->add_option("--vr", tf.vr)->check(CLI::IsMember({"ns", "fvr", "bvr", "bivr", "classic", "full"}));
    train->add_option("--dim", tf.dim);
    train->add_option("--batch", tf.batch);
    train->add_option("--lr", tf.lr);
    train->add_option("--wd", tf.wd);
    train->add_option("--epochs", tf.epochs)->required();
    train->add_option("--eval-k", tf.eval_k);
    train->add_option("--eval-every", tf.eval_every);
    train->add_option("--seed", tf.seed);
    train->add_option("--out", tf.out, "run directory")->required();
    train->add_option("--precision", tf.precision)->check(CLI::IsMember({"f32", "f64"}));
    train->add_option("--format", tf.format)->check(CLI::IsMember({"adj", "pairs"}));
    train->add_option("--init-std", tf.init_std);
    train->add_flag("--probe-ppnp", tf.probe_ppnp, "track the PPNP fixed-point relative error");
    train->add_option("--probe-every", tf.probe_every, "probe cadence in iterations");
    train->add_option("--inference", tf.inference,
                      "ltgnn evaluation embeddings: fresh 3-layer propagation or the stored "
                      "forward history")
        ->check(CLI::IsMember({"appnp3", "history"}));

    std::string ev_checkpoint, ev_data, ev_format = "adj";
    node_id ev_k = 20;
    auto* eval = app.add_subcommand("eval", "rank and score a trained checkpoint");
    eval->add_option("--checkpoint", ev_checkpoint)->required();
    eval->add_option("--data", ev_data)->required();
    eval->add_option("--k", ev_k);
    eval->add_option("--format", ev_format)->check(CLI::IsMember({"adj", "pairs"}));

    node_id sy_users = 0, sy_items = 0;
    std::size_t sy_edges = 0;
    std::uint64_t sy_seed = 42;
    std::string sy_out, sy_test_out;
    int sy_clusters = 0;
    double sy_in_cluster = 0.9, sy_holdout = 0.0;
    auto* synth = app.add_subcommand("synth", "generate a synthetic interaction file");
    synth->add_option("--users", sy_users)->required();
    synth->add_option("--items", sy_items)->required();
    synth->add_option("--edges", sy_edges)->required();
    synth->add_option("--seed", sy_seed);
    synth->add_option("--out", sy_out)->required();
    synth->add_option("--clusters", sy_clusters, "block-structured interactions");
    synth->add_option("--in-cluster-prob", sy_in_cluster);
    synth->add_option("--holdout", sy_holdout, "per-user test fraction");
    synth->add_option("--test-out", sy_test_out);

    std::string be_sizes = "100000,200000,400000", be_out = "bench.csv";
    BenchConfig bc;
    auto* bench = app.add_subcommand("bench", "runtime scaling across synthetic graph sizes");
    bench->add_option("--sizes", be_sizes, "comma-separated edge counts");
    bench->add_option("--out", be_out);
    bench->add_option("--epochs", bc.epochs);
    bench->add_option("--batch", bc.batch_size);
    bench->add_option("--neighbors", bc.sample_size);
    bench->add_option("--dim", bc.dim);
    bench->add_option("--seed", bc.seed);
    bench->add_option("--users", bc.n_users, "fixed user count (0 scales with edges)");
    bench->add_option("--items", bc.n_items, "fixed item count (0 scales with edges)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (train->parsed()) return cmd_train(tf, *train);
        if (eval->parsed()) {
            if (ev_k < 1) {
                std::cerr << "usage error: --k must be >= 1\n";
                return kExitUsage;
            }
            if (peek_checkpoint(ev_checkpoint).scalar_width == 8) {
                return run_eval<double>(ev_checkpoint, ev_data, ev_k, ev_format);
            }
            return run_eval<float>(ev_checkpoint, ev_data, ev_k, ev_format);
        }
        if (synth->parsed()) {
            std::vector<std::pair<node_id, node_id>> edges;
            try {
                edges = sy_clusters > 0
                            ? synth_clustered(sy_users, sy_items, sy_edges, sy_clusters,
                                              sy_in_cluster, sy_seed)
                            : synth_uniform(sy_users, sy_items, sy_edges, sy_seed);
            } catch (const InfeasibleSynthesis& e) {
                std::cerr << "usage error: " << e.what() << "\n";
                return kExitUsage;
            }
            if (sy_holdout > 0.0) {
                if (sy_test_out.empty()) {
                    std::cerr << "usage error: --holdout requires --test-out\n";
                    return kExitUsage;
                }
                std::vector<std::pair<node_id, node_id>> tr, te;
                holdout_split(edges, sy_holdout, sy_seed, tr, te);
                write_adjacency_list(sy_out, tr);
                write_adjacency_list(sy_test_out, te);
            } else {
                write_adjacency_list(sy_out, edges);
            }
            return kExitOk;
        }
        if (bench->parsed()) {
            std::vector<std::size_t> sizes;
            std::size_t pos = 0;
            while (pos < be_sizes.size()) {
                std::size_t next = be_sizes.find(',', pos);
                if (next == std::string::npos) next = be_sizes.size();
                sizes.push_back(std::stoull(be_sizes.substr(pos, next - pos)));
                pos = next + 1;
            }
            const auto rows = scaling_benchmark<float>(sizes, bc);
            write_bench_csv(be_out, rows);
            for (const auto& r : rows) {
                std::printf("%-18s |E|=%-8zu epoch %.3fs (sample %.3fs train %.3fs refresh %.3fs)\n",
                            r.model.c_str(), r.edges, r.epoch_s, r.sample_s, r.train_s,
                            r.refresh_s);
            }
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
