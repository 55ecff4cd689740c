#pragma once

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "xview/pipeline.hpp"
#include "xview/report.hpp"

namespace xview {

// One sweep arm: a name plus config overrides applied on top of the base.
struct SweepArm {
    std::string name;
    std::vector<std::pair<std::string, std::string>> overrides;
};

// Sweep spec file: regular config keys set the base run, plus
//   seeds = 1,2,3,4,5
//   jobs = 2
//   arm = <name> key=value key=value ...
struct SweepSpec {
    RunConfig base;
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
    int jobs = 0;  // 0: hardware concurrency
    std::vector<SweepArm> arms;
};

inline SweepSpec parse_sweep_spec(std::istream& is, const std::string& path = "<sweep>") {
    SweepSpec spec;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string t = cfgdetail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
        std::string key = cfgdetail::trim(t.substr(0, eq));
        std::string value = cfgdetail::trim(t.substr(eq + 1));
        try {
            if (key == "seeds") {
                spec.seeds.clear();
                for (int s : cfgdetail::parse_int_list(value, "seeds")) {
                    if (s < 0) throw config_error("seeds must be non-negative");
                    spec.seeds.push_back(static_cast<uint64_t>(s));
                }
            } else if (key == "jobs") {
                spec.jobs = cfgdetail::parse_number<int>(value, "jobs");
                if (spec.jobs < 0) throw config_error("jobs must be >= 0");
            } else if (key == "arm") {
                std::istringstream as(value);
                SweepArm arm;
                if (!(as >> arm.name)) throw config_error("arm line needs a name");
                std::string tok;
                while (as >> tok) {
                    size_t aeq = tok.find('=');
                    if (aeq == std::string::npos)
                        throw config_error("arm override '" + tok + "' is not key=value");
                    std::string okey = tok.substr(0, aeq), oval = tok.substr(aeq + 1);
                    if (!find_config_key(okey)) throw config_error("unknown config key '" + okey + "'");
                    arm.overrides.emplace_back(okey, oval);
                }
                spec.arms.push_back(std::move(arm));
            } else {
                apply_config_line(spec.base, key, value);
            }
        } catch (const config_error& e) {
            throw config_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (spec.arms.empty()) throw config_error(path + ": sweep spec defines no arms");
    if (spec.seeds.empty()) throw config_error(path + ": sweep spec has an empty seed list");
    return spec;
}

inline SweepSpec parse_sweep_spec_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open sweep spec '" + path + "'");
    return parse_sweep_spec(is, path);
}

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

inline MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd ms;
    if (xs.empty()) return ms;
    for (double x : xs) ms.mean += x;
    ms.mean /= xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - ms.mean) * (x - ms.mean);
    ms.stddev = std::sqrt(var / xs.size());
    return ms;
}

struct ArmSummary {
    std::string name;
    int completed = 0;
    int failed = 0;
    MeanStd r1_drone_to_sat, ap_drone_to_sat;
    MeanStd r1_sat_to_drone, ap_sat_to_drone;
    MeanStd mean_abs_offdiag;
    std::vector<std::string> errors;
};

namespace detail {

struct SweepTask {
    size_t arm_index;
    uint64_t seed;
};

struct SweepOutcome {
    bool ok = false;
    std::string error;
    double r1_d2s = 0.0, ap_d2s = 0.0, r1_s2d = 0.0, ap_s2d = 0.0, offdiag = 0.0;
};

inline RunConfig arm_config(const SweepSpec& spec, const SweepArm& arm, uint64_t seed) {
    RunConfig cfg = spec.base;
    for (const auto& [k, v] : arm.overrides) apply_config_line(cfg, k, v);
    cfg.seed = seed;
    cfg.train.seed = seed;
    return cfg;
}

}  // namespace detail

// Runs every (arm x seed) with isolated state, in parallel worker threads.
// Per-run failures are recorded in the arm's row; the sweep continues.
inline std::vector<ArmSummary> run_sweep(const SweepSpec& spec, std::ostream* progress = nullptr) {
    bool need_r1 = false;
    for (int k : spec.base.eval_ks)
        if (k == 1) need_r1 = true;
    if (!need_r1) throw config_error("sweep aggregation needs K=1 in eval_ks");

    std::vector<detail::SweepTask> tasks;
    for (size_t a = 0; a < spec.arms.size(); ++a)
        for (uint64_t s : spec.seeds) tasks.push_back({a, s});
    std::vector<detail::SweepOutcome> outcomes(tasks.size());

    int jobs = spec.jobs > 0 ? spec.jobs : static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    jobs = std::min<int>(jobs, static_cast<int>(tasks.size()));

    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const detail::SweepTask& task = tasks[i];
            detail::SweepOutcome& out = outcomes[i];
            try {
                RunConfig cfg = detail::arm_config(spec, spec.arms[task.arm_index], task.seed);
                ExperimentResult res = run_experiment(cfg);
                out.r1_d2s = res.metrics.drone_to_sat.recall_at.at(1);
                out.ap_d2s = res.metrics.drone_to_sat.ap;
                out.r1_s2d = res.metrics.sat_to_drone.recall_at.at(1);
                out.ap_s2d = res.metrics.sat_to_drone.ap;
                out.offdiag = res.offdiag.mean_abs_offdiag;
                out.ok = true;
            } catch (const std::exception& e) {
                out.error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::vector<ArmSummary> summaries;
    for (size_t a = 0; a < spec.arms.size(); ++a) {
        ArmSummary sum;
        sum.name = spec.arms[a].name;
        std::vector<double> r1d, apd, r1s, aps, off;
        for (size_t i = 0; i < tasks.size(); ++i) {
            if (tasks[i].arm_index != a) continue;
            const auto& out = outcomes[i];
            if (!out.ok) {
                ++sum.failed;
                sum.errors.push_back("seed " + std::to_string(tasks[i].seed) + ": " + out.error);
                continue;
            }
            ++sum.completed;
            r1d.push_back(out.r1_d2s);
            apd.push_back(out.ap_d2s);
            r1s.push_back(out.r1_s2d);
            aps.push_back(out.ap_s2d);
            off.push_back(out.offdiag);
        }
        sum.r1_drone_to_sat = mean_std(r1d);
        sum.ap_drone_to_sat = mean_std(apd);
        sum.r1_sat_to_drone = mean_std(r1s);
        sum.ap_sat_to_drone = mean_std(aps);
        sum.mean_abs_offdiag = mean_std(off);
        summaries.push_back(std::move(sum));
        if (progress)
            (*progress) << "arm " << summaries.back().name << ": " << summaries.back().completed << " runs, "
                        << summaries.back().failed << " failed\n";
    }
    return summaries;
}

// Fixed column order, documented in the README for downstream plotting.
inline void write_sweep_csv(const std::vector<ArmSummary>& rows, std::ostream& os) {
    os << "arm,completed,failed,"
          "r1_drone_to_sat_mean,r1_drone_to_sat_std,ap_drone_to_sat_mean,ap_drone_to_sat_std,"
          "r1_sat_to_drone_mean,r1_sat_to_drone_std,ap_sat_to_drone_mean,ap_sat_to_drone_std,"
          "mean_abs_offdiag_mean,mean_abs_offdiag_std\n";
    for (const auto& r : rows) {
        os << r.name << ',' << r.completed << ',' << r.failed << ',' << format_double(r.r1_drone_to_sat.mean)
           << ',' << format_double(r.r1_drone_to_sat.stddev) << ',' << format_double(r.ap_drone_to_sat.mean)
           << ',' << format_double(r.ap_drone_to_sat.stddev) << ',' << format_double(r.r1_sat_to_drone.mean)
           << ',' << format_double(r.r1_sat_to_drone.stddev) << ',' << format_double(r.ap_sat_to_drone.mean)
           << ',' << format_double(r.ap_sat_to_drone.stddev) << ',' << format_double(r.mean_abs_offdiag.mean)
           << ',' << format_double(r.mean_abs_offdiag.stddev) << '\n';
    }
}

inline json sweep_to_json(const std::vector<ArmSummary>& rows) {
    json arr = json::array();
    for (const auto& r : rows) {
        json j;
        j["arm"] = r.name;
        j["completed"] = r.completed;
        j["failed"] = r.failed;
        j["r1_drone_to_sat"] = {{"mean", r.r1_drone_to_sat.mean}, {"std", r.r1_drone_to_sat.stddev}};
        j["ap_drone_to_sat"] = {{"mean", r.ap_drone_to_sat.mean}, {"std", r.ap_drone_to_sat.stddev}};
        j["r1_sat_to_drone"] = {{"mean", r.r1_sat_to_drone.mean}, {"std", r.r1_sat_to_drone.stddev}};
        j["ap_sat_to_drone"] = {{"mean", r.ap_sat_to_drone.mean}, {"std", r.ap_sat_to_drone.stddev}};
        j["mean_abs_offdiag"] = {{"mean", r.mean_abs_offdiag.mean}, {"std", r.mean_abs_offdiag.stddev}};
        j["errors"] = r.errors;
        arr.push_back(j);
    }
    return arr;
}

}  // namespace xview
