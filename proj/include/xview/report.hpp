#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "xview/eval.hpp"
#include "xview/trainer.hpp"

namespace xview {

using json = nlohmann::json;

inline json metrics_to_json(const RetrievalMetrics& m, const std::string& direction) {
    json j;
    j["direction"] = direction;
    for (const auto& [k, v] : m.recall_at) j["R@" + std::to_string(k)] = v;
    j["R@top1percent"] = m.recall_at_top1pct;
    j["top1percent_k"] = m.top1pct_k;
    j["AP"] = m.ap;
    j["num_queries"] = m.num_queries;
    j["skipped"] = m.skipped;
    return j;
}

inline json offdiag_to_json(const OffdiagStats& s) {
    json j;
    j["mean_abs_offdiag"] = s.mean_abs_offdiag;
    j["frac_above_tau"] = s.frac_above_tau;
    j["tau"] = s.tau;
    j["mean_diag"] = s.mean_diag;
    j["pairs"] = s.pairs;
    return j;
}

inline json bidirectional_to_json(const BidirectionalMetrics& m) {
    json j;
    j["drone_to_sat"] = metrics_to_json(m.drone_to_sat, "drone_to_sat");
    j["sat_to_drone"] = metrics_to_json(m.sat_to_drone, "sat_to_drone");
    return j;
}

inline json epoch_stats_to_json(const EpochStats& s) {
    json j;
    j["epoch"] = s.epoch;
    j["l_id"] = s.l_id;
    j["l_dwdr"] = s.l_dwdr;
    j["l_total"] = s.l_total;
    j["mean_abs_offdiag_rho"] = s.mean_abs_offdiag_rho;
    j["lr_backbone"] = s.lr_backbone;
    j["lr_classifier"] = s.lr_classifier;
    return j;
}

inline void write_train_log_jsonl(const std::vector<EpochStats>& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open log '" + path + "' for writing");
    for (const EpochStats& s : log) os << epoch_stats_to_json(s).dump() << '\n';
    if (!os) throw io_error("write failed for log '" + path + "'");
}

inline void write_json_file(const json& j, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open '" + path + "' for writing");
    os << j.dump(2) << '\n';
    if (!os) throw io_error("write failed for '" + path + "'");
}

}  // namespace xview
