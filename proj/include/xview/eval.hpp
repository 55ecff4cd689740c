#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "xview/dataset.hpp"
#include "xview/losses.hpp"
#include "xview/model.hpp"

namespace xview {

// Feature vectors of one platform at test time, rows aligned with ids/labels.
struct EmbeddingSet {
    std::vector<int> ids;
    std::vector<int> labels;
    Platform platform = Platform::satellite;
    Matrix vectors;  // n x d

    int size() const { return static_cast<int>(ids.size()); }

    void validate() const {
        if (static_cast<int>(ids.size()) != vectors.rows || ids.size() != labels.size())
            throw data_error("EmbeddingSet: ids/labels/vectors disagree");
    }
};

struct RetrievalMetrics {
    std::map<int, double> recall_at;  // K -> value in [0, 1]
    double recall_at_top1pct = 0.0;
    int top1pct_k = 0;
    double ap = 0.0;
    int num_queries = 0;
    int skipped = 0;  // queries with no gallery match
};

// Gallery indices by ascending Euclidean distance; ties broken by ascending
// item id so rankings are reproducible across platforms.
inline std::vector<int> rank_by_euclidean(const std::vector<double>& query, const EmbeddingSet& gallery) {
    gallery.validate();
    if (gallery.size() == 0) throw data_error("rank_by_euclidean: empty gallery");
    if (static_cast<int>(query.size()) != gallery.vectors.cols)
        throw dimension_error("rank_by_euclidean: query dimension mismatch");
    const int n = gallery.size();
    std::vector<double> dist(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < gallery.vectors.cols; ++j) {
            double d = query[j] - gallery.vectors(i, j);
            s += d * d;
        }
        dist[i] = std::sqrt(s);
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (dist[a] != dist[b]) return dist[a] < dist[b];
        return gallery.ids[a] < gallery.ids[b];
    });
    return order;
}

// 1 if any relevant index appears in the first k ranks, else 0.
inline int recall_hit_at_k(const std::vector<int>& ranking, const std::vector<bool>& relevant, int k) {
    if (k < 1) throw config_error("recall_hit_at_k: k must be >= 1");
    const int limit = std::min<int>(k, static_cast<int>(ranking.size()));
    for (int r = 0; r < limit; ++r)
        if (relevant[ranking[r]]) return 1;
    return 0;
}

// Mean precision at the relevant hits: AP = (1/R) sum_t t / rank_t.
inline double average_precision(const std::vector<int>& ranking, const std::vector<bool>& relevant) {
    int total_relevant = 0;
    for (bool r : relevant)
        if (r) ++total_relevant;
    if (total_relevant == 0) throw data_error("average_precision: empty relevant set");
    double sum = 0.0;
    int hits = 0;
    for (size_t r = 0; r < ranking.size(); ++r) {
        if (relevant[ranking[r]]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
    }
    return sum / total_relevant;
}

// R@Top1% protocol value: K = ceil(0.01 * gallery size).
inline int top1pct_k(int gallery_size) {
    return std::max(1, static_cast<int>(std::ceil(0.01 * gallery_size)));
}

// All queries of one platform against the gallery of the other. Queries
// whose label has no gallery match are skipped and counted.
inline RetrievalMetrics evaluate_direction(const EmbeddingSet& queries, const EmbeddingSet& gallery,
                                           const std::vector<int>& ks) {
    queries.validate();
    gallery.validate();
    if (queries.vectors.cols != gallery.vectors.cols)
        throw dimension_error("evaluate_direction: embedding dimensions disagree");
    RetrievalMetrics m;
    m.top1pct_k = top1pct_k(gallery.size());
    for (int k : ks) m.recall_at[k] = 0.0;

    for (int q = 0; q < queries.size(); ++q) {
        std::vector<bool> relevant(gallery.size(), false);
        bool any = false;
        for (int g = 0; g < gallery.size(); ++g) {
            if (gallery.labels[g] == queries.labels[q]) {
                relevant[g] = true;
                any = true;
            }
        }
        if (!any) {
            ++m.skipped;
            continue;
        }
        std::vector<double> query(gallery.vectors.cols);
        for (int j = 0; j < queries.vectors.cols; ++j) query[j] = queries.vectors(q, j);
        std::vector<int> ranking = rank_by_euclidean(query, gallery);
        for (int k : ks) m.recall_at[k] += recall_hit_at_k(ranking, relevant, k);
        m.recall_at_top1pct += recall_hit_at_k(ranking, relevant, m.top1pct_k);
        m.ap += average_precision(ranking, relevant);
        ++m.num_queries;
    }
    if (m.num_queries > 0) {
        for (auto& kv : m.recall_at) kv.second /= m.num_queries;
        m.recall_at_top1pct /= m.num_queries;
        m.ap /= m.num_queries;
    }
    return m;
}

struct BidirectionalMetrics {
    RetrievalMetrics drone_to_sat;
    RetrievalMetrics sat_to_drone;
};

inline BidirectionalMetrics evaluate_bidirectional(const EmbeddingSet& sat, const EmbeddingSet& drone,
                                                   const std::vector<int>& ks) {
    BidirectionalMetrics out;
    out.drone_to_sat = evaluate_direction(drone, sat, ks);
    out.sat_to_drone = evaluate_direction(sat, drone, ks);
    return out;
}

// ---------------------------------------------------------------------------
// Embedding redundancy diagnostics.
// ---------------------------------------------------------------------------

struct OffdiagStats {
    double mean_abs_offdiag = 0.0;
    double frac_above_tau = 0.0;  // fraction of |rho_ij|, i != j, above tau
    double mean_diag = 0.0;
    double tau = 0.2;
    int pairs = 0;  // aligned positive pairs used
};

// Pearson diagnostics over aligned positive pairs: for each label present on
// both sides, the first drone row (by item id) is paired with the first
// satellite row, giving one batch row per class.
inline OffdiagStats offdiag_stats(const EmbeddingSet& sat, const EmbeddingSet& drone, double eps,
                                  double tau = 0.2) {
    sat.validate();
    drone.validate();
    if (sat.vectors.cols != drone.vectors.cols)
        throw dimension_error("offdiag_stats: embedding dimensions disagree");

    auto first_row_per_label = [](const EmbeddingSet& e) {
        std::map<int, int> first;  // label -> row index of smallest item id
        for (int i = 0; i < e.size(); ++i) {
            auto it = first.find(e.labels[i]);
            if (it == first.end() || e.ids[i] < e.ids[it->second]) first[e.labels[i]] = i;
        }
        return first;
    };
    std::map<int, int> sat_rows = first_row_per_label(sat);
    std::map<int, int> drone_rows = first_row_per_label(drone);

    std::vector<std::pair<int, int>> paired;  // (sat row, drone row) per shared label
    for (const auto& [label, srow] : sat_rows) {
        auto it = drone_rows.find(label);
        if (it != drone_rows.end()) paired.emplace_back(srow, it->second);
    }
    if (paired.size() < 2) throw degenerate_batch_error("offdiag_stats: need at least 2 paired classes");

    const int d = sat.vectors.cols;
    Matrix xs(static_cast<int>(paired.size()), d), xd(static_cast<int>(paired.size()), d);
    for (size_t i = 0; i < paired.size(); ++i) {
        for (int j = 0; j < d; ++j) {
            xs(static_cast<int>(i), j) = sat.vectors(paired[i].first, j);
            xd(static_cast<int>(i), j) = drone.vectors(paired[i].second, j);
        }
    }
    Matrix rho = pearson_values(xs, xd, eps);

    OffdiagStats stats;
    stats.tau = tau;
    stats.pairs = static_cast<int>(paired.size());
    stats.mean_abs_offdiag = mean_abs_offdiag(rho);
    int above = 0, offdiag_count = 0;
    double diag_sum = 0.0;
    for (int i = 0; i < d; ++i) {
        diag_sum += rho(i, i);
        for (int j = 0; j < d; ++j) {
            if (i == j) continue;
            ++offdiag_count;
            if (std::fabs(rho(i, j)) > tau) ++above;
        }
    }
    stats.mean_diag = diag_sum / d;
    stats.frac_above_tau = offdiag_count > 0 ? static_cast<double>(above) / offdiag_count : 0.0;
    return stats;
}

// ---------------------------------------------------------------------------
// Embedding of datasets and embedding-file IO.
// ---------------------------------------------------------------------------

inline EmbeddingSet embed_platform(const ModelParams& m, const CrossViewDataset& ds, Platform platform,
                                   RetrievalFeature which) {
    std::vector<int> ids;
    for (const auto& gc : ds.classes)
        for (int id : platform == Platform::satellite ? gc.satellite_items : gc.drone_items)
            ids.push_back(id);
    EmbeddingSet out;
    out.platform = platform;
    out.ids = ids;
    for (int id : ids) out.labels.push_back(ds.item(id).label);
    out.vectors = embed_values(m, gather_features(ds, ids), which);
    return out;
}

// Embedding file format: header "n d", rows "item_id label platform v_1 ... v_d".
inline void write_embeddings(const EmbeddingSet& e, std::ostream& os) {
    e.validate();
    os << e.size() << ' ' << e.vectors.cols << '\n';
    for (int i = 0; i < e.size(); ++i) {
        os << e.ids[i] << ' ' << e.labels[i] << ' ' << platform_name(e.platform);
        for (int j = 0; j < e.vectors.cols; ++j) os << ' ' << format_double(e.vectors(i, j));
        os << '\n';
    }
}

inline void write_embeddings_file(const EmbeddingSet& e, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open '" + path + "' for writing");
    write_embeddings(e, os);
    if (!os) throw io_error("write failed for '" + path + "'");
}

inline EmbeddingSet read_embeddings(std::istream& is, const std::string& path = "<stream>") {
    std::string line;
    if (!std::getline(is, line)) throw io_error(path + ": empty embedding file");
    int n = 0, d = 0;
    {
        std::istringstream hdr(line);
        if (!(hdr >> n >> d) || n <= 0 || d <= 0) throw io_error(path + ":1: bad header, expected 'n d'");
    }
    EmbeddingSet e;
    e.vectors = Matrix(n, d);
    int line_no = 1;
    bool platform_set = false;
    for (int i = 0; i < n; ++i) {
        if (!std::getline(is, line)) throw io_error(path + ": truncated embedding file");
        ++line_no;
        std::istringstream ls(line);
        int id = 0, label = 0;
        std::string platform_tok, tok;
        if (!(ls >> id >> label >> platform_tok))
            throw io_error(path + ":" + std::to_string(line_no) + ": bad embedding row");
        Platform p = platform_from_name(platform_tok);
        if (!platform_set) {
            e.platform = p;
            platform_set = true;
        } else if (p != e.platform) {
            throw io_error(path + ":" + std::to_string(line_no) + ": mixed platforms in one embedding file");
        }
        e.ids.push_back(id);
        e.labels.push_back(label);
        for (int j = 0; j < d; ++j) {
            if (!(ls >> tok)) throw io_error(path + ":" + std::to_string(line_no) + ": short embedding row");
            e.vectors(i, j) = parse_double(tok, line_no, path);
        }
    }
    e.validate();
    return e;
}

inline EmbeddingSet read_embeddings_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open embeddings '" + path + "'");
    return read_embeddings(is, path);
}

}  // namespace xview
