#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "ltgnn/propagation.hpp"
#include "ltgnn/sampler.hpp"
#include "oracles.hpp"

using namespace ltgnn;

TEST_CASE("one batch holds the whole epoch when B equals |R+|") {
    const auto g = oracle::random_bipartite<double>(4, 4, 10, 1);
    EpochSampler s(g, 10, 7);
    s.begin_epoch(0);
    std::vector<std::pair<node_id, node_id>> batch;
    REQUIRE(s.next_batch(batch));
    CHECK(batch.size() == 10);
    CHECK_FALSE(s.next_batch(batch));
}

TEST_CASE("epoch coverage is a permutation of R+") {
    const auto g = oracle::random_bipartite<double>(4, 4, 10, 2);
    EpochSampler s(g, 3, 7);
    CHECK(s.batches_per_epoch() == 4);
    std::vector<std::size_t> sizes;
    std::vector<std::pair<node_id, node_id>> all, batch;
    s.begin_epoch(0);
    while (s.next_batch(batch)) {
        sizes.push_back(batch.size());
        all.insert(all.end(), batch.begin(), batch.end());
    }
    CHECK(sizes == std::vector<std::size_t>{3, 3, 3, 1});
    std::sort(all.begin(), all.end());
    std::vector<std::pair<node_id, node_id>> edges = g.edges;
    std::sort(edges.begin(), edges.end());
    CHECK(all == edges);
}

TEST_CASE("oversized batch clamps to the interaction count") {
    const auto g = oracle::random_bipartite<double>(3, 3, 6, 3);
    EpochSampler s(g, 100, 7);
    CHECK(s.clamped());
    CHECK(s.batch_size() == 6);
    CHECK_THROWS_AS(EpochSampler(g, 0, 7), ContractViolation);
}

TEST_CASE("negative samples never collide with positives") {
    const auto g = oracle::random_bipartite<double>(10, 12, 60, 4);
    auto rng = make_stream(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::pair<node_id, node_id>> pairs(g.edges.begin(), g.edges.end());
        const BprBatch batch = sample_negatives(g, pairs, rng);
        REQUIRE(batch.triplets.size() == pairs.size());
        for (const auto& t : batch.triplets) {
            auto pos = g.user_items(t.user);
            CHECK(std::binary_search(pos.begin(), pos.end(), t.pos_item));
            CHECK_FALSE(std::binary_search(pos.begin(), pos.end(), t.neg_item));
            CHECK(t.neg_item >= g.n_users);
            CHECK(t.neg_item < g.n_users + g.n_items);
        }
        CHECK(batch.targets.size() <= 3 * batch.triplets.size());
        CHECK(std::is_sorted(batch.targets.begin(), batch.targets.end()));
    }
}

TEST_CASE("user with a single free item always receives it") {
    EdgeList el;
    el.n_users = 1;
    el.n_items = 5;
    el.pairs = {{0, 0}, {0, 1}, {0, 3}, {0, 4}}; // item 2 is the only free one
    const auto g = InteractionGraph<double>::from_edges(el);
    auto rng = make_stream(6);
    for (int trial = 0; trial < 50; ++trial) {
        const BprBatch b = sample_negatives(g, {{0, g.n_users + 0}}, rng);
        REQUIRE(b.triplets.size() == 1);
        CHECK(b.triplets[0].neg_item == g.n_users + 2);
    }
}

TEST_CASE("saturated user is skipped with a count") {
    EdgeList el;
    el.n_users = 2;
    el.n_items = 2;
    el.pairs = {{0, 0}, {0, 1}, {1, 0}};
    const auto g = InteractionGraph<double>::from_edges(el);
    auto rng = make_stream(6);
    const BprBatch b = sample_negatives(g, {{0, 2}, {1, 2}}, rng);
    CHECK(b.skipped == 1);
    REQUIRE(b.triplets.size() == 1);
    CHECK(b.triplets[0].user == 1);
}

TEST_CASE("negative draws are uniform over the complement") {
    const auto g = oracle::random_bipartite<double>(5, 50, 60, 8);
    const node_id u = 0;
    const auto positives = g.user_items(u);
    const std::size_t free_count = g.n_items - positives.size();
    auto rng = make_stream(9);
    std::map<node_id, std::size_t> counts;
    const std::size_t draws = 100000;
    for (std::size_t d = 0; d < draws; ++d) {
        const BprBatch b = sample_negatives(g, {{u, positives[0]}}, rng);
        ++counts[b.triplets[0].neg_item];
    }
    std::vector<std::size_t> observed;
    for (node_id i = g.n_users; i < g.n_users + g.n_items; ++i) {
        if (std::binary_search(positives.begin(), positives.end(), i)) continue;
        observed.push_back(counts.count(i) ? counts[i] : 0);
    }
    REQUIRE(observed.size() == free_count);
    const std::vector<double> expected(free_count,
                                       static_cast<double>(draws) / static_cast<double>(free_count));
    CHECK(oracle::chi_square_pvalue(observed, expected) > 0.01);
}

TEST_CASE("full sampling reproduces the exact normalized rows") {
    const auto g = oracle::random_bipartite<double>(8, 8, 30, 10);
    offset_t max_closed = 0;
    for (offset_t r = 0; r < g.num_nodes(); ++r) {
        max_closed = std::max(max_closed, g.degrees[r] + 1);
    }
    std::vector<node_id> targets;
    for (offset_t r = 0; r < g.num_nodes(); ++r) targets.push_back(static_cast<node_id>(r));
    auto rng = make_stream(11);
    const auto a_hat = sample_neighbors(g, targets, max_closed, rng);
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const offset_t r = targets[t];
        REQUIRE(a_hat.row_ptr[t + 1] - a_hat.row_ptr[t] == g.norm_adjacency.row_nnz(r));
        auto cols = g.norm_adjacency.row_cols(r);
        auto vals = g.norm_adjacency.row_vals(r);
        for (offset_t e = 0; e < g.norm_adjacency.row_nnz(r); ++e) {
            CHECK(a_hat.col_idx[a_hat.row_ptr[t] + e] == cols[e]);
            CHECK(a_hat.values[a_hat.row_ptr[t] + e] == vals[e]);
        }
    }
}

TEST_CASE("single-neighbor rows carry the closed-neighborhood scale") {
    const auto g = oracle::random_bipartite<double>(6, 6, 20, 12);
    std::vector<node_id> targets = {0, 1, 2};
    auto rng = make_stream(13);
    const auto a_hat = sample_neighbors(g, targets, 1, rng);
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const offset_t r = targets[t];
        const offset_t closed = g.degrees[r] + 1;
        REQUIRE(a_hat.row_ptr[t + 1] - a_hat.row_ptr[t] == (closed <= 1 ? closed : 1));
        const node_id c = a_hat.col_idx[a_hat.row_ptr[t]];
        auto cols = g.norm_adjacency.row_cols(r);
        auto vals = g.norm_adjacency.row_vals(r);
        const auto it = std::lower_bound(cols.begin(), cols.end(), c);
        REQUIRE(it != cols.end());
        const double exact = vals[it - cols.begin()];
        CHECK(a_hat.values[a_hat.row_ptr[t]] ==
              Catch::Approx(static_cast<double>(closed) * exact).epsilon(1e-12));
    }
}

TEST_CASE("sampled aggregation is unbiased (Monte Carlo)") {
    const auto g = oracle::random_bipartite<double>(12, 18, 60, 14);
    const auto x = oracle::random_matrix<double>(g.num_nodes(), 4, 15);
    std::vector<node_id> targets = {0, 3, 5, 11, 12, 14, 20, 25, 29};
    RowMatrix<double> exact;
    exact_rows_into(g.norm_adjacency, targets, x, exact);

    for (offset_t d_size : {1, 2, 5}) {
        auto rng = make_stream(16, static_cast<std::uint64_t>(d_size));
        const std::size_t draws = 20000;
        RowMatrix<double> mean(static_cast<offset_t>(targets.size()), x.cols());
        RowMatrix<double> m2(static_cast<offset_t>(targets.size()), x.cols());
        RowMatrix<double> sample;
        for (std::size_t k = 1; k <= draws; ++k) {
            const auto a_hat = sample_neighbors(g, targets, d_size, rng);
            a_hat.apply(x, sample);
            for (std::size_t i = 0; i < mean.data().size(); ++i) {
                const double delta = sample.data()[i] - mean.data()[i];
                mean.data()[i] += delta / static_cast<double>(k);
                m2.data()[i] += delta * (sample.data()[i] - mean.data()[i]);
            }
        }
        for (std::size_t i = 0; i < mean.data().size(); ++i) {
            const double se = std::sqrt(m2.data()[i] / (draws - 1) / draws);
            const double err = std::abs(mean.data()[i] - exact.data()[i]);
            REQUIRE(err <= 3.0 * se + 1e-12);
        }
    }
}

TEST_CASE("identical seeds give identical sampling sequences") {
    const auto g = oracle::random_bipartite<double>(10, 10, 40, 17);
    for (int run = 0; run < 2; ++run) {
        // streams keyed by (seed, epoch, batch) agree regardless of call order
        auto a1 = make_stream(42, 3, 7, kNeighborTag);
        auto a2 = make_stream(42, 3, 7, kNeighborTag);
        std::vector<node_id> targets = {1, 5, 9, 13};
        const auto s1 = sample_neighbors(g, targets, 2, a1);
        const auto s2 = sample_neighbors(g, targets, 2, a2);
        CHECK(s1.col_idx == s2.col_idx);
        CHECK(s1.values == s2.values);

        auto n1 = make_stream(42, 3, 7, kNegativeTag);
        auto n2 = make_stream(42, 3, 7, kNegativeTag);
        std::vector<std::pair<node_id, node_id>> pairs(g.edges.begin(), g.edges.begin() + 8);
        const auto b1 = sample_negatives(g, pairs, n1);
        const auto b2 = sample_negatives(g, pairs, n2);
        REQUIRE(b1.triplets.size() == b2.triplets.size());
        for (std::size_t i = 0; i < b1.triplets.size(); ++i) {
            CHECK(b1.triplets[i].neg_item == b2.triplets[i].neg_item);
        }
    }
}
