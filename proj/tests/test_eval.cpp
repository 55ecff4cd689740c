#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "xview/eval.hpp"

using namespace xview;

namespace {

EmbeddingSet make_set(Platform platform, const std::vector<int>& ids, const std::vector<int>& labels,
                      const Matrix& vectors) {
    EmbeddingSet e;
    e.platform = platform;
    e.ids = ids;
    e.labels = labels;
    e.vectors = vectors;
    e.validate();
    return e;
}

// Brute-force evaluator: full pairwise distances with loops, then the metric
// definitions applied directly. Independent of the library's ranking path.
struct BruteMetrics {
    double r1 = 0.0, ap = 0.0;
    int queries = 0;
};

BruteMetrics brute_force_direction(const EmbeddingSet& queries, const EmbeddingSet& gallery) {
    BruteMetrics out;
    for (int q = 0; q < queries.size(); ++q) {
        std::vector<std::pair<double, int>> scored;  // (distance, gallery row)
        for (int g = 0; g < gallery.size(); ++g) {
            double s = 0.0;
            for (int j = 0; j < gallery.vectors.cols; ++j) {
                double d = queries.vectors(q, j) - gallery.vectors(g, j);
                s += d * d;
            }
            scored.emplace_back(std::sqrt(s), g);
        }
        std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return gallery.ids[a.second] < gallery.ids[b.second];
        });
        int relevant_total = 0;
        for (int g = 0; g < gallery.size(); ++g)
            if (gallery.labels[g] == queries.labels[q]) ++relevant_total;
        if (relevant_total == 0) continue;
        ++out.queries;
        if (gallery.labels[scored[0].second] == queries.labels[q]) out.r1 += 1.0;
        int hits = 0;
        double ap = 0.0;
        for (size_t r = 0; r < scored.size(); ++r) {
            if (gallery.labels[scored[r].second] == queries.labels[q]) {
                ++hits;
                ap += static_cast<double>(hits) / (r + 1);
            }
        }
        out.ap += ap / relevant_total;
    }
    if (out.queries) {
        out.r1 /= out.queries;
        out.ap /= out.queries;
    }
    return out;
}

}  // namespace

TEST_CASE("rank_by_euclidean basics", "[eval]") {
    Matrix g(3, 2);
    g.data = {0, 0, 1, 1, 2, 2};
    EmbeddingSet gallery = make_set(Platform::satellite, {10, 11, 12}, {0, 1, 2}, g);

    std::vector<int> r = rank_by_euclidean({1.1, 1.1}, gallery);
    REQUIRE(r[0] == 1);

    std::vector<int> exact = rank_by_euclidean({2, 2}, gallery);
    REQUIRE(exact[0] == 2);

    Matrix one(1, 2);
    EmbeddingSet single = make_set(Platform::satellite, {5}, {0}, one);
    REQUIRE(rank_by_euclidean({3, 3}, single) == std::vector<int>{0});

    EmbeddingSet empty;
    empty.vectors = Matrix(1, 2);
    empty.vectors.rows = 0;  // simulate an empty gallery
    REQUIRE_THROWS_AS(rank_by_euclidean({1, 1}, empty), xview::error);
}

TEST_CASE("rank_by_euclidean ties break by ascending item id", "[eval]") {
    Matrix g(3, 1);
    g.data = {1.0, 1.0, 1.0};
    EmbeddingSet gallery = make_set(Platform::drone, {30, 10, 20}, {0, 1, 2}, g);
    std::vector<int> r = rank_by_euclidean({0.0}, gallery);
    REQUIRE(gallery.ids[r[0]] == 10);
    REQUIRE(gallery.ids[r[1]] == 20);
    REQUIRE(gallery.ids[r[2]] == 30);
}

TEST_CASE("rank_by_euclidean matches a brute-force sort", "[eval]") {
    Rng rng(501, 0);
    Matrix g = random_normal_matrix(20, 8, rng);
    std::vector<int> ids(20), labels(20, 0);
    for (int i = 0; i < 20; ++i) ids[i] = 100 + i;
    EmbeddingSet gallery = make_set(Platform::satellite, ids, labels, g);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> q(8);
        for (double& v : q) v = rng.normal();
        std::vector<int> got = rank_by_euclidean(q, gallery);
        // oracle: naive full sort on freshly computed distances
        std::vector<std::pair<double, int>> scored;
        for (int i = 0; i < 20; ++i) {
            double s = 0.0;
            for (int j = 0; j < 8; ++j) s += (q[j] - g(i, j)) * (q[j] - g(i, j));
            scored.emplace_back(std::sqrt(s), i);
        }
        std::sort(scored.begin(), scored.end());
        for (int i = 0; i < 20; ++i) REQUIRE(got[i] == scored[i].second);
    }
}

TEST_CASE("recall_hit_at_k", "[eval]") {
    std::vector<int> ranking = {3, 1, 4, 0, 2};
    std::vector<bool> relevant(5, false);
    relevant[4] = true;  // relevant item at rank 3
    REQUIRE(recall_hit_at_k(ranking, relevant, 1) == 0);
    REQUIRE(recall_hit_at_k(ranking, relevant, 3) == 1);
    REQUIRE(recall_hit_at_k(ranking, relevant, 5) == 1);
    REQUIRE_THROWS_AS(recall_hit_at_k(ranking, relevant, 0), config_error);

    std::vector<bool> first(5, false);
    first[3] = true;
    REQUIRE(recall_hit_at_k(ranking, first, 1) == 1);

    // random rankings vs a membership-scan oracle
    Rng rng(502, 0);
    for (int t = 0; t < 50; ++t) {
        std::vector<int> order(10);
        for (int i = 0; i < 10; ++i) order[i] = i;
        rng.shuffle(order);
        std::vector<bool> rel(10, false);
        int nrel = 1 + static_cast<int>(rng.below(3));
        for (int i = 0; i < nrel; ++i) rel[rng.below(10)] = true;
        int k = 1 + static_cast<int>(rng.below(10));
        int oracle = 0;
        for (int r = 0; r < k; ++r)
            if (rel[order[r]]) oracle = 1;
        REQUIRE(recall_hit_at_k(order, rel, k) == oracle);
    }
}

TEST_CASE("average precision analytic cases", "[eval]") {
    std::vector<int> ranking = {0, 1, 2, 3};

    std::vector<bool> at1(4, false);
    at1[0] = true;
    REQUIRE_THAT(average_precision(ranking, at1), Catch::Matchers::WithinAbs(1.0, 1e-15));

    std::vector<bool> at3(4, false);
    at3[2] = true;
    REQUIRE_THAT(average_precision(ranking, at3), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));

    std::vector<bool> two(4, false);
    two[0] = two[2] = true;  // ranks 1 and 3 -> (1 + 2/3)/2 = 5/6
    REQUIRE_THAT(average_precision(ranking, two), Catch::Matchers::WithinAbs(5.0 / 6.0, 1e-15));

    std::vector<bool> none(4, false);
    REQUIRE_THROWS_AS(average_precision(ranking, none), data_error);

    // AP = 1 iff all relevant items occupy the top ranks
    std::vector<bool> top2(4, false);
    top2[0] = top2[1] = true;
    REQUIRE(average_precision(ranking, top2) == 1.0);
    std::vector<bool> split(4, false);
    split[0] = split[3] = true;
    REQUIRE(average_precision(ranking, split) < 1.0);
}

TEST_CASE("evaluate_bidirectional on perfectly separated embeddings", "[eval]") {
    // per-class orthogonal one-hots: R@1 = AP = 1 in both directions
    const int C = 4;
    Matrix sat_vec(C, C);
    for (int i = 0; i < C; ++i) sat_vec(i, i) = 1.0;
    Matrix drone_vec(2 * C, C);
    std::vector<int> drone_ids, drone_labels;
    for (int i = 0; i < 2 * C; ++i) {
        drone_vec(i, i / 2) = 1.0 + 0.01 * (i % 2);
        drone_ids.push_back(100 + i);
        drone_labels.push_back(i / 2);
    }
    EmbeddingSet sat = make_set(Platform::satellite, {0, 1, 2, 3}, {0, 1, 2, 3}, sat_vec);
    EmbeddingSet drone = make_set(Platform::drone, drone_ids, drone_labels, drone_vec);

    BidirectionalMetrics m = evaluate_bidirectional(sat, drone, {1, 5});
    REQUIRE(m.drone_to_sat.recall_at.at(1) == 1.0);
    REQUIRE(m.drone_to_sat.ap == 1.0);
    REQUIRE(m.sat_to_drone.recall_at.at(1) == 1.0);
    REQUIRE(m.sat_to_drone.ap == 1.0);
    REQUIRE(m.drone_to_sat.num_queries == 8);
    REQUIRE(m.sat_to_drone.num_queries == 4);
    // recall is non-decreasing in K and hits 1 at the gallery size
    REQUIRE(m.drone_to_sat.recall_at.at(5) == 1.0);
}

TEST_CASE("random embeddings give R@1 near 1/G", "[eval]") {
    Rng rng(503, 0);
    const int C = 25;  // gallery size G = C, one relevant each
    int hits = 0, total = 0;
    for (int trial = 0; trial < 40; ++trial) {
        Matrix sat_vec = random_normal_matrix(C, 6, rng);
        Matrix drone_vec = random_normal_matrix(C, 6, rng);
        std::vector<int> ids(C), labels(C);
        for (int i = 0; i < C; ++i) {
            ids[i] = i;
            labels[i] = i;
        }
        EmbeddingSet sat = make_set(Platform::satellite, ids, labels, sat_vec);
        EmbeddingSet drone = make_set(Platform::drone, ids, labels, drone_vec);
        RetrievalMetrics m = evaluate_direction(drone, sat, {1});
        hits += static_cast<int>(std::lround(m.recall_at.at(1) * m.num_queries));
        total += m.num_queries;
    }
    double observed = static_cast<double>(hits) / total;  // E = 1/25 = 0.04
    double sigma = std::sqrt(0.04 * 0.96 / total);
    REQUIRE(std::fabs(observed - 0.04) < 4 * sigma + 1e-9);
}

TEST_CASE("evaluate_bidirectional equals the brute-force evaluator", "[eval]") {
    Rng rng(504, 0);
    for (int t = 0; t < 10; ++t) {
        const int C = 6, per_class = 3;
        Matrix sat_vec = random_normal_matrix(C, 5, rng);
        std::vector<int> sat_ids(C), sat_labels(C);
        for (int i = 0; i < C; ++i) {
            sat_ids[i] = i;
            sat_labels[i] = i;
        }
        Matrix drone_vec = random_normal_matrix(C * per_class, 5, rng);
        std::vector<int> drone_ids(C * per_class), drone_labels(C * per_class);
        for (int i = 0; i < C * per_class; ++i) {
            drone_ids[i] = 100 + i;
            drone_labels[i] = i % C;
        }
        EmbeddingSet sat = make_set(Platform::satellite, sat_ids, sat_labels, sat_vec);
        EmbeddingSet drone = make_set(Platform::drone, drone_ids, drone_labels, drone_vec);

        BidirectionalMetrics m = evaluate_bidirectional(sat, drone, {1});
        BruteMetrics d2s = brute_force_direction(drone, sat);
        BruteMetrics s2d = brute_force_direction(sat, drone);
        REQUIRE_THAT(m.drone_to_sat.recall_at.at(1), Catch::Matchers::WithinAbs(d2s.r1, 1e-12));
        REQUIRE_THAT(m.drone_to_sat.ap, Catch::Matchers::WithinAbs(d2s.ap, 1e-12));
        REQUIRE_THAT(m.sat_to_drone.recall_at.at(1), Catch::Matchers::WithinAbs(s2d.r1, 1e-12));
        REQUIRE_THAT(m.sat_to_drone.ap, Catch::Matchers::WithinAbs(s2d.ap, 1e-12));
    }
}

TEST_CASE("metrics are invariant under a global orthogonal transform", "[eval]") {
    Rng rng(505, 0);
    const int n = 12, d = 4;
    Matrix sat_vec = random_normal_matrix(n, d, rng);
    Matrix drone_vec = random_normal_matrix(n, d, rng);
    std::vector<int> ids(n), labels(n);
    for (int i = 0; i < n; ++i) {
        ids[i] = i;
        labels[i] = i % 6;
    }

    // Householder reflection H = I - 2vv^T, an exact isometry
    Matrix v(d, 1);
    double norm = 0.0;
    for (int i = 0; i < d; ++i) {
        v(i, 0) = rng.normal();
        norm += v(i, 0) * v(i, 0);
    }
    norm = std::sqrt(norm);
    for (int i = 0; i < d; ++i) v(i, 0) /= norm;
    Matrix H = Matrix::identity(d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) H(i, j) -= 2.0 * v(i, 0) * v(j, 0);

    EmbeddingSet sat = make_set(Platform::satellite, ids, labels, sat_vec);
    EmbeddingSet drone = make_set(Platform::drone, ids, labels, drone_vec);
    EmbeddingSet sat_rot = make_set(Platform::satellite, ids, labels, matmul_values(sat_vec, H));
    EmbeddingSet drone_rot = make_set(Platform::drone, ids, labels, matmul_values(drone_vec, H));

    BidirectionalMetrics a = evaluate_bidirectional(sat, drone, {1, 5});
    BidirectionalMetrics b = evaluate_bidirectional(sat_rot, drone_rot, {1, 5});
    REQUIRE_THAT(b.drone_to_sat.recall_at.at(1),
                 Catch::Matchers::WithinAbs(a.drone_to_sat.recall_at.at(1), 1e-9));
    REQUIRE_THAT(b.drone_to_sat.ap, Catch::Matchers::WithinAbs(a.drone_to_sat.ap, 1e-9));
    REQUIRE_THAT(b.sat_to_drone.ap, Catch::Matchers::WithinAbs(a.sat_to_drone.ap, 1e-9));
}

TEST_CASE("queries without a gallery match are skipped and counted", "[eval]") {
    Matrix sat_vec(2, 2);
    sat_vec.data = {1, 0, 0, 1};
    EmbeddingSet sat = make_set(Platform::satellite, {0, 1}, {0, 1}, sat_vec);
    Matrix drone_vec(3, 2);
    drone_vec.data = {1, 0, 0, 1, 1, 1};
    EmbeddingSet drone = make_set(Platform::drone, {10, 11, 12}, {0, 1, 7}, drone_vec);  // label 7 unmatched

    RetrievalMetrics m = evaluate_direction(drone, sat, {1});
    REQUIRE(m.num_queries == 2);
    REQUIRE(m.skipped == 1);
}

TEST_CASE("top-1 percent cutover", "[eval]") {
    REQUIRE(top1pct_k(1) == 1);
    REQUIRE(top1pct_k(100) == 1);
    REQUIRE(top1pct_k(101) == 2);
    REQUIRE(top1pct_k(951) == 10);
}

TEST_CASE("offdiag_stats on constructed embeddings", "[eval]") {
    Rng rng(506, 0);
    const int C = 40, d = 4;
    // identical whitened features on both sides: mean_diag = 1, offdiag ~ 0
    Matrix base = random_normal_matrix(C, d, rng);
    std::vector<int> ids(C), labels(C);
    for (int i = 0; i < C; ++i) {
        ids[i] = i;
        labels[i] = i;
    }
    EmbeddingSet sat = make_set(Platform::satellite, ids, labels, base);
    EmbeddingSet drone = make_set(Platform::drone, ids, labels, base);
    OffdiagStats s = offdiag_stats(sat, drone, 1e-8, 0.2);
    REQUIRE(s.pairs == C);
    REQUIRE_THAT(s.mean_diag, Catch::Matchers::WithinAbs(1.0, 1e-6));
    REQUIRE(s.mean_abs_offdiag < 0.35);  // random-noise level for 40 samples

    // duplicated channel: at least one off-diagonal |rho| = 1
    Matrix dup = base;
    for (int i = 0; i < C; ++i) dup(i, 1) = dup(i, 0);
    EmbeddingSet sat_dup = make_set(Platform::satellite, ids, labels, dup);
    EmbeddingSet drone_dup = make_set(Platform::drone, ids, labels, dup);
    OffdiagStats sd = offdiag_stats(sat_dup, drone_dup, 1e-8, 0.99);
    REQUIRE(sd.frac_above_tau > 0.0);

    // matches a naive per-pair Pearson computed over the same pairing
    Matrix rho_oracle(d, d);
    {
        const Matrix& x = base;
        for (int m2 = 0; m2 < d; ++m2)
            for (int n2 = 0; n2 < d; ++n2) {
                double mx = 0, my = 0;
                for (int i = 0; i < C; ++i) {
                    mx += x(i, m2);
                    my += x(i, n2);
                }
                mx /= C;
                my /= C;
                double cov = 0, vx = 0, vy = 0;
                for (int i = 0; i < C; ++i) {
                    cov += (x(i, m2) - mx) * (x(i, n2) - my);
                    vx += (x(i, m2) - mx) * (x(i, m2) - mx);
                    vy += (x(i, n2) - my) * (x(i, n2) - my);
                }
                rho_oracle(m2, n2) = (cov / C) / ((std::sqrt(vx / C) + 1e-8) * (std::sqrt(vy / C) + 1e-8));
            }
    }
    double oracle_offdiag = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (i != j) oracle_offdiag += std::fabs(rho_oracle(i, j));
    oracle_offdiag /= d * (d - 1);
    REQUIRE_THAT(s.mean_abs_offdiag, Catch::Matchers::WithinAbs(oracle_offdiag, 1e-12));

    // fewer than 2 shared classes is degenerate
    EmbeddingSet one_sat = make_set(Platform::satellite, {0}, {0}, Matrix(1, d, 1.0));
    EmbeddingSet one_drone = make_set(Platform::drone, {1}, {0}, Matrix(1, d, 2.0));
    REQUIRE_THROWS_AS(offdiag_stats(one_sat, one_drone, 1e-8, 0.2), degenerate_batch_error);
}

TEST_CASE("embedding files round trip", "[eval]") {
    Rng rng(507, 0);
    Matrix vec = random_normal_matrix(5, 3, rng);
    EmbeddingSet e = make_set(Platform::drone, {7, 3, 9, 1, 5}, {0, 1, 0, 2, 1}, vec);
    std::ostringstream os;
    write_embeddings(e, os);
    std::istringstream is(os.str());
    EmbeddingSet back = read_embeddings(is, "emb");
    REQUIRE(back.platform == Platform::drone);
    REQUIRE(back.ids == e.ids);
    REQUIRE(back.labels == e.labels);
    REQUIRE(max_abs_diff(back.vectors, e.vectors) == 0.0);

    std::istringstream bad("2 2\n0 0 sat 1 2\n1 0 drone 3 4\n");
    REQUIRE_THROWS_WITH(read_embeddings(bad, "emb"), Catch::Matchers::ContainsSubstring("mixed platforms"));
}
