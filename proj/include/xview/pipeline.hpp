#pragma once

#include <utility>

#include "xview/config.hpp"
#include "xview/eval.hpp"
#include "xview/synthdata.hpp"
#include "xview/trainer.hpp"

namespace xview {

// One full in-memory experiment: generate -> split -> train -> evaluate.
// Used by the sweep runner and the acceptance experiments; the CLI commands
// run the same stages through files on disk.
struct ExperimentResult {
    BidirectionalMetrics metrics;
    OffdiagStats offdiag;
    std::vector<EpochStats> log;
    ModelParams params;
};

inline std::pair<CrossViewDataset, CrossViewDataset> generate_split(const RunConfig& cfg) {
    Rng rng(cfg.seed, 0);
    CrossViewDataset full = generate_dataset(cfg.synth, rng);
    return split_train_test(full, cfg.synth);
}

inline ExperimentResult run_experiment(const RunConfig& cfg) {
    auto [train_ds, test_ds] = generate_split(cfg);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    TrainResult tr = train(tc, train_ds);

    ExperimentResult out;
    EmbeddingSet sat = embed_platform(tr.params, test_ds, Platform::satellite, tc.retrieval_feature);
    EmbeddingSet drone = embed_platform(tr.params, test_ds, Platform::drone, tc.retrieval_feature);
    out.metrics = evaluate_bidirectional(sat, drone, cfg.eval_ks);
    out.offdiag = offdiag_stats(sat, drone, tc.dwdr.eps, cfg.offdiag_tau);
    out.log = std::move(tr.log);
    out.params = std::move(tr.params);
    return out;
}

}  // namespace xview
