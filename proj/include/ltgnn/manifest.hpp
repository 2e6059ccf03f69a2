#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>

#include <json.hpp>

#include "ltgnn/evaluation.hpp"
#include "ltgnn/model.hpp"
#include "ltgnn/training.hpp"

namespace ltgnn {

inline std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    return h;
}

inline std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

/// Everything needed to reproduce a run: the full configuration, the
/// dataset fingerprint, and where the artifacts were written.
struct RunManifest {
    nlohmann::json j;

    static RunManifest create(const TrainConfig& cfg, const std::string& data_path,
                              std::size_t edge_count, std::uint64_t data_hash,
                              const std::string& out_dir, const std::string& precision) {
        RunManifest m;
        m.j["config"] = {
            {"model", to_string(cfg.model.family)},
            {"layers", cfg.model.layers},
            {"alpha", cfg.model.prop.alpha},
            {"neighbors", cfg.model.prop.sample_size},
            {"vr", to_string(cfg.model.prop.vr_mode)},
            {"dim", cfg.dim},
            {"batch", cfg.batch_size},
            {"lr", cfg.lr},
            {"wd", cfg.weight_decay},
            {"epochs", cfg.epochs},
            {"eval_k", cfg.eval_k},
            {"eval_every", cfg.eval_every},
            {"probe_every", cfg.probe_every},
            {"init_std", cfg.init_std},
            {"precision", precision},
        };
        m.j["seed"] = cfg.seed;
        m.j["dataset"] = {
            {"path", data_path},
            {"edges", edge_count},
            {"fnv1a", data_hash},
        };
        m.j["artifacts"] = {
            {"checkpoint", out_dir + "/checkpoint.bin"},
            {"metrics", out_dir + "/metrics.csv"},
        };
        m.j["started"] = iso8601_now();
        return m;
    }

    void finish() { j["finished"] = iso8601_now(); }

    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path);
        out << j.dump(2) << '\n';
    }
};

/// Appends one CSV row per epoch and flushes immediately, so a crashed run
/// keeps every completed epoch.
class MetricsWriter {
public:
    MetricsWriter(const std::string& path, node_id k) : out_(path, std::ios::app) {
        if (!out_) throw std::runtime_error("cannot write " + path);
        out_.seekp(0, std::ios::end);
        if (out_.tellp() == 0) {
            out_ << "epoch,loss,recall@" << k << ",ndcg@" << k
                 << ",epoch_seconds,sampling_seconds,training_seconds,"
                    "memory_refresh_seconds,ppnp_rel_error\n";
            out_.flush();
        }
    }

    void append(const EvalReport& r) {
        char buf[512];
        std::snprintf(buf, sizeof(buf), "%lld,%.10g,", static_cast<long long>(r.epoch), r.loss);
        out_ << buf;
        write_optional(r.recall);
        out_ << ',';
        write_optional(r.ndcg);
        std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f,%.6f,", r.epoch_seconds,
                      r.sampling_seconds, r.training_seconds, r.memory_refresh_seconds);
        out_ << buf;
        write_optional(r.rel_error);
        out_ << '\n';
        out_.flush();
    }

private:
    void write_optional(double v) {
        if (std::isnan(v)) return;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        out_ << buf;
    }

    std::ofstream out_;
};

} // namespace ltgnn
