#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "ltgnn/adam.hpp"
#include "ltgnn/core.hpp"
#include "ltgnn/dataset.hpp"
#include "ltgnn/evaluation.hpp"
#include "ltgnn/model.hpp"
#include "ltgnn/propagation.hpp"
#include "ltgnn/sampler.hpp"

namespace ltgnn {

struct TrainConfig {
    ModelKind model;
    std::int64_t epochs = 0;
    std::size_t batch_size = 2048;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    offset_t dim = 64;
    double init_std = 0.1;
    std::uint64_t seed = 42;
    node_id eval_k = 20;
    std::int64_t eval_every = 5;
    std::int64_t probe_every = 0; // in iterations; 0 disables the PPNP probe
    bool probe_targets_only = false;
    InferenceVariant inference = InferenceVariant::Appnp3;

    void validate() const {
        if (epochs < 0) throw ContractViolation("epochs must be >= 0");
        if (batch_size < 1) throw ContractViolation("batch_size must be >= 1");
        if (lr <= 0.0) throw ContractViolation("lr must be positive");
        if (weight_decay < 0.0) throw ContractViolation("weight_decay must be >= 0");
        if (dim < 1) throw ContractViolation("dim must be >= 1");
        if (eval_k < 1) throw ContractViolation("eval_k must be >= 1");
        if (model.family == ModelFamily::Ltgnn) model.prop.validate();
        if (model.family == ModelFamily::LightGcn && model.layers < 1) {
            throw ContractViolation("lightgcn needs layers >= 1");
        }
    }
};

inline double stable_sigmoid(double s) {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

/// -ln sigmoid(s) = softplus(-s), evaluated without overflow.
inline double neg_log_sigmoid(double s) {
    return std::max(-s, 0.0) + std::log1p(std::exp(-std::abs(s)));
}

inline offset_t target_index(const std::vector<node_id>& targets, node_id v) {
    const auto it = std::lower_bound(targets.begin(), targets.end(), v);
    return static_cast<offset_t>(it - targets.begin());
}

/// Sum of -ln sigmoid(y_ui - y_uj) over the batch. emb holds one row per
/// target, in target order.
template <class T>
double bpr_loss(const BprBatch& batch, const RowMatrix<T>& emb) {
    double loss = 0.0;
    for (const auto& t : batch.triplets) {
        const auto u = emb.row_span(target_index(batch.targets, t.user));
        const auto i = emb.row_span(target_index(batch.targets, t.pos_item));
        const auto j = emb.row_span(target_index(batch.targets, t.neg_item));
        loss += neg_log_sigmoid(dot(u, i) - dot(u, j));
    }
    return loss;
}

/// dL/dE_out on the target rows. Per triplet with s = y_ui - y_uj and
/// g = sigmoid(s) - 1: grad_u += g (e_i - e_j), grad_i += g e_u,
/// grad_j -= g e_u; contributions accumulate in triplet order.
template <class T>
RowMatrix<T> bpr_output_gradients(const BprBatch& batch, const RowMatrix<T>& emb) {
    RowMatrix<T> grad(static_cast<offset_t>(batch.targets.size()), emb.cols());
    const offset_t d = emb.cols();
    for (const auto& t : batch.triplets) {
        const offset_t iu = target_index(batch.targets, t.user);
        const offset_t ii = target_index(batch.targets, t.pos_item);
        const offset_t ij = target_index(batch.targets, t.neg_item);
        const T* eu = emb.row(iu);
        const T* ei = emb.row(ii);
        const T* ej = emb.row(ij);
        const double s = dot(emb.row_span(iu), emb.row_span(ii)) -
                         dot(emb.row_span(iu), emb.row_span(ij));
        const T g = static_cast<T>(stable_sigmoid(s) - 1.0);
        T* gu = grad.row(iu);
        T* gi = grad.row(ii);
        T* gj = grad.row(ij);
        for (offset_t c = 0; c < d; ++c) {
            gu[c] += g * (ei[c] - ej[c]);
            gi[c] += g * eu[c];
            gj[c] -= g * eu[c];
        }
    }
    return grad;
}

template <class T>
RowMatrix<T> gather_rows(const RowMatrix<T>& src, const std::vector<node_id>& rows) {
    RowMatrix<T> out(static_cast<offset_t>(rows.size()), src.cols());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        std::copy_n(src.row(rows[t]), src.cols(), out.row(static_cast<offset_t>(t)));
    }
    return out;
}

namespace detail {

class StageTimer {
public:
    void start() { t0_ = std::chrono::steady_clock::now(); }
    double stop() {
        const auto t1 = std::chrono::steady_clock::now();
        return std::chrono::duration<double>(t1 - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

} // namespace detail

/// Runs the training loop for any of the three model families. The LTGNN
/// path follows the single-layer forward/backward with historical state and
/// per-epoch memory refresh; iterations are sequential in k because each
/// reads the histories written by the previous one.
template <class T>
class Trainer {
public:
    Trainer(const Dataset<T>& data, TrainConfig cfg)
        : graph_(data.graph), test_items_(&data.test_items), cfg_(std::move(cfg)) {
        cfg_.validate();
        state_ = init_embeddings<T>(graph_.n_users, graph_.n_items, cfg_.dim, cfg_.seed,
                                    cfg_.init_std);
        adam_ = SparseAdam<T>(graph_.num_nodes(), cfg_.dim);
        if (needs_memory()) {
            // Histories and memories are full-size; six tables besides E_in.
            memory_.m_in = RowMatrix<T>(graph_.num_nodes(), cfg_.dim);
            memory_.m_ag = RowMatrix<T>(graph_.num_nodes(), cfg_.dim);
            memory_.m_in_grad = RowMatrix<T>(graph_.num_nodes(), cfg_.dim);
            memory_.m_ag_grad = RowMatrix<T>(graph_.num_nodes(), cfg_.dim);
        }
        if (cfg_.model.family == ModelFamily::LightGcn) {
            all_rows_.resize(graph_.num_nodes());
            for (offset_t r = 0; r < graph_.num_nodes(); ++r) {
                all_rows_[r] = static_cast<node_id>(r);
            }
            if (cfg_.model.lgcn_sampler == LightGcnSampler::ClassicVr) {
                layer_hist_.resize(cfg_.model.layers);
                layer_hist_[0] = state_.e_in;
                for (int l = 1; l < cfg_.model.layers; ++l) {
                    spmm_into(graph_.norm_adjacency, layer_hist_[l - 1], layer_hist_[l]);
                }
            }
        }
    }

    void set_report_sink(std::function<void(const EvalReport&)> sink) { sink_ = std::move(sink); }
    void set_probe_solver(std::shared_ptr<const PpnpSolver> solver) { probe_ = std::move(solver); }

    const EmbeddingState<T>& state() const { return state_; }
    EmbeddingState<T>& mutable_state() { return state_; }
    const VrMemory<T>& memory() const { return memory_; }
    const SparseAdam<T>& adam() const { return adam_; }
    const OpCounters& counters() const { return counters_; }
    const std::vector<std::pair<std::int64_t, double>>& probe_log() const { return probe_log_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    RowMatrix<T> final_embeddings() const {
        switch (cfg_.model.family) {
            case ModelFamily::Mf: return state_.e_in;
            case ModelFamily::LightGcn:
                return lightgcn_propagate(graph_, state_.e_in, cfg_.model.layers);
            case ModelFamily::Ltgnn:
                return infer_embeddings(graph_, state_, cfg_.model.prop.alpha, cfg_.inference);
        }
        return state_.e_in;
    }

    RankingMetrics evaluate_now() const {
        const RowMatrix<T> emb = final_embeddings();
        return evaluate_embeddings(emb, graph_, *test_items_, cfg_.eval_k);
    }

    std::vector<EvalReport> run() {
        std::vector<EvalReport> reports;
        EpochSampler sampler(graph_, cfg_.batch_size, cfg_.seed);
        if (sampler.clamped()) {
            warnings_.push_back("batch size clamped to |R+| = " +
                                std::to_string(sampler.batch_size()));
        }
        for (std::int64_t e = 0; e < cfg_.epochs; ++e) {
            detail::StageTimer epoch_timer;
            epoch_timer.start();
            EvalReport rep;
            rep.epoch = e + 1;
            rep.k = cfg_.eval_k;
            state_.epoch = e;
            const std::uint64_t madds_before = counters_.agg_madds;

            if (needs_memory()) {
                detail::StageTimer t;
                t.start();
                refresh_memory(graph_, state_.e_out_hist, state_.grad_in_hist, memory_,
                               &counters_);
                rep.memory_refresh_seconds = t.stop();
            }

            sampler.begin_epoch(static_cast<std::uint64_t>(e));
            double loss_sum = 0.0;
            std::size_t triplet_count = 0;
            std::vector<std::pair<node_id, node_id>> pairs;
            std::size_t batch_index = 0;
            while (sampler.next_batch(pairs)) {
                detail::StageTimer t;
                t.start();
                auto neg_rng = make_stream(cfg_.seed, static_cast<std::uint64_t>(e),
                                           batch_index, kNegativeTag);
                BprBatch batch = sample_negatives(graph_, pairs, neg_rng);
                rep.sampling_seconds += t.stop();
                if (!batch.triplets.empty()) {
                    switch (cfg_.model.family) {
                        case ModelFamily::Mf:
                            loss_sum += iterate_mf(batch, rep);
                            break;
                        case ModelFamily::LightGcn:
                            loss_sum += iterate_lightgcn(batch, rep, e, batch_index);
                            break;
                        case ModelFamily::Ltgnn:
                            loss_sum += iterate_ltgnn(batch, rep, e, batch_index);
                            break;
                    }
                }
                triplet_count += batch.triplets.size();
                ++batch_index;
            }

            rep.loss = triplet_count ? loss_sum / static_cast<double>(triplet_count) : 0.0;
            rep.agg_madds = counters_.agg_madds - madds_before;
            if (!probe_log_.empty() && probe_epoch_mark_ < probe_log_.size()) {
                rep.rel_error = probe_log_.back().second;
                probe_epoch_mark_ = probe_log_.size();
            }
            const bool eval_now = test_items_ != nullptr && cfg_.eval_every > 0 &&
                                  (rep.epoch % cfg_.eval_every == 0 || rep.epoch == cfg_.epochs);
            if (eval_now) {
                const RankingMetrics m = evaluate_now();
                if (m.users > 0) {
                    rep.recall = m.recall;
                    rep.ndcg = m.ndcg;
                }
            }
            rep.epoch_seconds = epoch_timer.stop();
            if (sink_) sink_(rep);
            reports.push_back(rep);
        }
        return reports;
    }

private:
    bool needs_memory() const {
        if (cfg_.model.family != ModelFamily::Ltgnn) return false;
        const VrMode m = cfg_.model.prop.vr_mode;
        return m == VrMode::Fvr || m == VrMode::Bvr || m == VrMode::Bivr ||
               m == VrMode::ClassicVr;
    }

    double iterate_mf(const BprBatch& batch, EvalReport& rep) {
        detail::StageTimer t;
        t.start();
        const RowMatrix<T> emb = gather_rows(state_.e_in, batch.targets);
        const double loss = bpr_loss(batch, emb);
        const RowMatrix<T> grad = bpr_output_gradients(batch, emb);
        adam_.step(batch.targets, grad, state_.e_in, cfg_.lr, cfg_.weight_decay);
        ++state_.iteration;
        rep.training_seconds += t.stop();
        return loss;
    }

    double iterate_ltgnn(const BprBatch& batch, EvalReport& rep, std::int64_t epoch,
                         std::size_t batch_index) {
        const auto& prop = cfg_.model.prop;
        detail::StageTimer t;
        t.start();
        auto nbr_rng = make_stream(cfg_.seed, static_cast<std::uint64_t>(epoch), batch_index,
                                   kNeighborTag);
        const SampledAdjacency<T> a_hat =
            sample_neighbors(graph_, batch.targets, prop.sample_size, nbr_rng);
        rep.sampling_seconds += t.stop();

        t.start();
        const RowMatrix<T> e_out =
            evr_forward(graph_, state_.e_out_hist, memory_, a_hat, state_.e_in, prop.alpha,
                        prop.vr_mode, state_.epoch, &counters_);
        const double loss = bpr_loss(batch, e_out);
        const RowMatrix<T> grad_out = bpr_output_gradients(batch, e_out);
        const RowMatrix<T> grad_in =
            evr_backward(graph_, state_.grad_in_hist, memory_, a_hat, grad_out, prop.alpha,
                         prop.vr_mode, state_.epoch, &counters_);
        adam_.step(batch.targets, grad_in, state_.e_in, cfg_.lr, cfg_.weight_decay);
        state_.save_output_rows(batch.targets, e_out);
        state_.save_grad_rows(batch.targets, grad_in);
        ++state_.iteration;
        rep.training_seconds += t.stop();

        if (cfg_.probe_every > 0 && state_.iteration % cfg_.probe_every == 0) {
            run_probe(batch.targets);
        }
        return loss;
    }

    double iterate_lightgcn(const BprBatch& batch, EvalReport& rep, std::int64_t epoch,
                            std::size_t batch_index) {
        const int layers = cfg_.model.layers;
        const LightGcnSampler mode = cfg_.model.lgcn_sampler;
        std::vector<SampledAdjacency<T>> a_hats;

        detail::StageTimer t;
        if (mode != LightGcnSampler::Full) {
            t.start();
            auto nbr_rng = make_stream(cfg_.seed, static_cast<std::uint64_t>(epoch), batch_index,
                                       kNeighborTag);
            a_hats.reserve(layers);
            for (int l = 0; l < layers; ++l) {
                a_hats.push_back(sample_neighbors(graph_, all_rows_,
                                                  cfg_.model.prop.sample_size, nbr_rng));
            }
            rep.sampling_seconds += t.stop();
        }

        t.start();
        std::vector<RowMatrix<T>> e(layers + 1);
        e[0] = state_.e_in;
        for (int l = 1; l <= layers; ++l) {
            switch (mode) {
                case LightGcnSampler::Full:
                    spmm_into(graph_.norm_adjacency, e[l - 1], e[l]);
                    detail::count_madds(&counters_,
                                        static_cast<std::uint64_t>(graph_.norm_adjacency.nnz()),
                                        cfg_.dim);
                    break;
                case LightGcnSampler::Ns:
                    a_hats[l - 1].apply(e[l - 1], e[l]);
                    detail::count_madds(&counters_, static_cast<std::uint64_t>(a_hats[l - 1].nnz()),
                                        cfg_.dim);
                    break;
                case LightGcnSampler::ClassicVr:
                    e[l] = classic_vr_aggregate(graph_, a_hats[l - 1], e[l - 1],
                                                layer_hist_[l - 1], &counters_);
                    break;
            }
        }
        RowMatrix<T> combined = e[0];
        for (int l = 1; l <= layers; ++l) {
            for (std::size_t i = 0; i < combined.data().size(); ++i) {
                combined.data()[i] += e[l].data()[i];
            }
        }
        const T scale = static_cast<T>(1.0 / (layers + 1));
        for (T& v : combined.data()) v *= scale;

        const RowMatrix<T> emb = gather_rows(combined, batch.targets);
        const double loss = bpr_loss(batch, emb);
        const RowMatrix<T> grad_targets = bpr_output_gradients(batch, emb);

        RowMatrix<T> g_full(graph_.num_nodes(), cfg_.dim);
        for (std::size_t i = 0; i < batch.targets.size(); ++i) {
            std::copy_n(grad_targets.row(static_cast<offset_t>(i)), cfg_.dim,
                        g_full.row(batch.targets[i]));
        }
        // d(combined)/dE_in applied to the output gradient, innermost layer first.
        RowMatrix<T> total = g_full;
        RowMatrix<T> tmp(graph_.num_nodes(), cfg_.dim);
        for (int l = layers; l >= 1; --l) {
            if (mode == LightGcnSampler::Full) {
                spmm_into(graph_.norm_adjacency, total, tmp);
                detail::count_madds(&counters_,
                                    static_cast<std::uint64_t>(graph_.norm_adjacency.nnz()),
                                    cfg_.dim);
            } else {
                tmp.fill(T(0));
                a_hats[l - 1].apply_transpose_add(total, T(1), tmp);
                detail::count_madds(&counters_, static_cast<std::uint64_t>(a_hats[l - 1].nnz()),
                                    cfg_.dim);
            }
            for (std::size_t i = 0; i < total.data().size(); ++i) {
                total.data()[i] = g_full.data()[i] + tmp.data()[i];
            }
        }
        for (T& v : total.data()) v *= scale;

        adam_.step(all_rows_, total, state_.e_in, cfg_.lr, cfg_.weight_decay);
        if (mode == LightGcnSampler::ClassicVr) {
            for (int l = 0; l < layers; ++l) layer_hist_[l] = e[l];
        }
        ++state_.iteration;
        rep.training_seconds += t.stop();
        return loss;
    }

    void run_probe(const std::vector<node_id>& targets) {
        if (probe_disabled_) return;
        if (!probe_) {
            if (graph_.num_nodes() > kPpnpDenseGuard) {
                warnings_.push_back("ppnp probe skipped: graph exceeds dense-solve guard");
                probe_disabled_ = true;
                return;
            }
            probe_ = std::make_shared<PpnpSolver>(graph_, cfg_.model.prop.alpha);
        }
        const double err =
            cfg_.probe_targets_only
                ? ppnp_relative_error(*probe_, state_.e_out_hist, state_.e_in, ProbeScope::Rows,
                                      &targets)
                : ppnp_relative_error(*probe_, state_.e_out_hist, state_.e_in);
        probe_log_.emplace_back(state_.iteration, err);
    }

    const InteractionGraph<T>& graph_;
    const std::vector<std::vector<node_id>>* test_items_;
    TrainConfig cfg_;
    EmbeddingState<T> state_;
    SparseAdam<T> adam_;
    VrMemory<T> memory_;
    OpCounters counters_;
    std::vector<node_id> all_rows_;
    std::vector<RowMatrix<T>> layer_hist_;
    std::shared_ptr<const PpnpSolver> probe_;
    bool probe_disabled_ = false;
    std::vector<std::pair<std::int64_t, double>> probe_log_;
    std::size_t probe_epoch_mark_ = 0;
    std::function<void(const EvalReport&)> sink_;
    std::vector<std::string> warnings_;
};

} // namespace ltgnn
