#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "xview/losses.hpp"
#include "xview/model.hpp"
#include "xview/optim.hpp"
#include "xview/sampling.hpp"

namespace xview {

enum class LossArm { instance_only, dwdr_only, instance_plus_dwdr, triplet_plus_dwdr, softmargin_plus_dwdr };

inline const char* loss_arm_name(LossArm a) {
    switch (a) {
        case LossArm::instance_only: return "instance_only";
        case LossArm::dwdr_only: return "dwdr_only";
        case LossArm::instance_plus_dwdr: return "instance_plus_dwdr";
        case LossArm::triplet_plus_dwdr: return "triplet_plus_dwdr";
        case LossArm::softmargin_plus_dwdr: return "softmargin_plus_dwdr";
    }
    return "?";
}

struct TrainConfig {
    // model
    int hidden = 64;
    int embed_dim = 32;
    int classifier_hidden = 64;
    double p_drop = 0.5;
    RetrievalFeature retrieval_feature = RetrievalFeature::embedding;

    // optimization
    LrSchedule schedule{60, 40, 0.1};
    int batch_size = 16;
    double lr_backbone = 1e-3;
    double lr_classifier = 1e-2;
    double momentum = 0.9;
    double weight_decay = 5e-4;

    // objective
    LossArm arm = LossArm::instance_plus_dwdr;
    DWDRConfig dwdr;
    TripletConfig triplet;
    double intra_noise_sigma = 0.05;
    double aug_noise_sigma = 0.1;  // train-time additive input noise (all arms)

    SamplingStrategy sampling = SamplingStrategy::symmetric;
    uint64_t seed = 1;

    bool uses_dwdr() const { return arm != LossArm::instance_only; }
    bool uses_classifier() const {
        return arm == LossArm::instance_only || arm == LossArm::instance_plus_dwdr;
    }

    void validate() const {
        if (schedule.epochs < 0) throw config_error("TrainConfig: epochs must be >= 0");
        if (batch_size < 2) throw config_error("TrainConfig: batch_size must be >= 2");
        if (intra_noise_sigma < 0.0) throw config_error("TrainConfig: intra_noise_sigma must be >= 0");
        if (aug_noise_sigma < 0.0) throw config_error("TrainConfig: aug_noise_sigma must be >= 0");
        if (uses_dwdr()) dwdr.validate();
        triplet.validate();
    }
};

// One structured log record per epoch.
struct EpochStats {
    int epoch = 0;
    double l_id = 0.0;    // supervised term (instance or triplet), batch mean
    double l_dwdr = 0.0;  // decorrelation term, batch mean
    double l_total = 0.0;
    double mean_abs_offdiag_rho = 0.0;  // cross-view Pearson diagnostic
    double lr_backbone = 0.0;
    double lr_classifier = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> log;
};

namespace detail {

struct ParamBinding {
    Matrix* storage;
    ParamGroup group;
};

inline std::vector<ParamBinding> param_bindings(ModelParams& m) {
    return {
        {&m.enc.w1, ParamGroup::backbone},        {&m.enc.b1, ParamGroup::backbone},
        {&m.enc.w2, ParamGroup::backbone},        {&m.enc.b2, ParamGroup::backbone},
        {&m.cls.w1, ParamGroup::classifier},      {&m.cls.b1, ParamGroup::classifier},
        {&m.cls.bn.scale, ParamGroup::classifier}, {&m.cls.bn.shift, ParamGroup::classifier},
        {&m.cls.w2, ParamGroup::classifier},      {&m.cls.b2, ParamGroup::classifier},
    };
}

// Leaf nodes for one step, aligned with param_bindings order.
struct StepLeaves {
    EncoderLeaves enc;
    ClassifierLeaves cls;

    std::vector<NodePtr> ordered() const {
        return {enc.w1, enc.b1, enc.w2, enc.b2, cls.w1, cls.b1, cls.scale, cls.shift, cls.w2, cls.b2};
    }
};

// Cyclically nearest batch row with a different label, or -1 if none.
inline std::vector<int> different_label_indices(const std::vector<int>& labels) {
    const int n = static_cast<int>(labels.size());
    std::vector<int> neg(n, -1);
    for (int i = 0; i < n; ++i) {
        for (int shift = 1; shift < n; ++shift) {
            int j = (i + shift) % n;
            if (labels[j] != labels[i]) {
                neg[i] = j;
                break;
            }
        }
    }
    return neg;
}

// Batch-mean triplet loss in both retrieval directions; rows without a
// different-label partner in the batch are dropped.
inline NodePtr batch_triplet_loss(const NodePtr& f_sat, const NodePtr& f_drone, const std::vector<int>& labels,
                                  const TripletConfig& cfg) {
    std::vector<int> neg = different_label_indices(labels);
    std::vector<int> valid, neg_valid;
    for (size_t i = 0; i < neg.size(); ++i) {
        if (neg[i] >= 0) {
            valid.push_back(static_cast<int>(i));
            neg_valid.push_back(neg[i]);
        }
    }
    if (valid.empty()) return constant_full(1, 1, 0.0);
    NodePtr t_drone = triplet_loss(gather_rows(f_drone, valid), gather_rows(f_sat, valid),
                                   gather_rows(f_sat, neg_valid), cfg);
    NodePtr t_sat = triplet_loss(gather_rows(f_sat, valid), gather_rows(f_drone, valid),
                                 gather_rows(f_drone, neg_valid), cfg);
    return scale(add(t_drone, t_sat), 0.5);
}

}  // namespace detail

// Mutable training state threaded through epochs: the sampler streams keep
// their positions and the rng streams their cursors across epoch boundaries.
struct TrainState {
    ModelParams params;
    OptimState optim;
    std::unique_ptr<BatchStream> batches;
    Rng dropout_rng;
    Rng augment_rng;

    TrainState(ModelParams p, OptimState o, std::unique_ptr<BatchStream> b, Rng drop, Rng aug)
        : params(std::move(p)), optim(std::move(o)), batches(std::move(b)), dropout_rng(drop), augment_rng(aug) {}
};

inline TrainState make_train_state(const TrainConfig& cfg, const CrossViewDataset& ds_train) {
    cfg.validate();
    ds_train.validate();
    ModelDims dims{ds_train.feature_dim, cfg.hidden, cfg.embed_dim, cfg.classifier_hidden,
                   ds_train.num_classes()};
    Rng init_rng(cfg.seed, 1);
    ModelParams params = init_model(dims, cfg.p_drop, init_rng);
    OptimState optim;
    optim.momentum = cfg.momentum;
    optim.weight_decay = cfg.weight_decay;
    optim.lr_backbone = cfg.lr_backbone;
    optim.lr_classifier = cfg.lr_classifier;
    for (const auto& pb : detail::param_bindings(params))
        optim.velocities.emplace_back(pb.storage->rows, pb.storage->cols);
    auto stream = make_batch_stream(cfg.sampling, ds_train, cfg.batch_size, Rng(cfg.seed, 2));
    return TrainState(std::move(params), std::move(optim), std::move(stream), Rng(cfg.seed, 3),
                      Rng(cfg.seed, 4));
}

// One optimization epoch: encode both platform sides of every batch with the
// shared encoder, assemble the configured objective, backpropagate and apply
// per-group SGD. Aborts on a non-finite loss.
inline EpochStats train_epoch(TrainState& st, const CrossViewDataset& ds, const TrainConfig& cfg, int epoch) {
    const double lr_bb = lr_at_epoch(cfg.schedule, st.optim, epoch, ParamGroup::backbone);
    const double lr_cl = lr_at_epoch(cfg.schedule, st.optim, epoch, ParamGroup::classifier);

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr_backbone = lr_bb;
    stats.lr_classifier = lr_cl;
    int batch_count = 0;

    for (;;) {
        BatchPlan plan = st.batches->next_batch();
        std::vector<int> sat_ids, drone_ids, labels;
        for (const SamplePair& p : plan.pairs) {
            sat_ids.push_back(p.satellite_id);
            drone_ids.push_back(p.drone_id);
            labels.push_back(p.label);
        }
        Matrix xs = gather_features(ds, sat_ids);
        Matrix xd = gather_features(ds, drone_ids);
        if (cfg.aug_noise_sigma > 0.0) {
            for (double& v : xs.data) v += st.augment_rng.normal(0.0, cfg.aug_noise_sigma);
            for (double& v : xd.data) v += st.augment_rng.normal(0.0, cfg.aug_noise_sigma);
        }

        detail::StepLeaves leaves{make_encoder_leaves(st.params.enc), make_classifier_leaves(st.params.cls)};
        NodePtr f_sat = encoder_forward(leaves.enc, constant(xs));
        NodePtr f_drone = encoder_forward(leaves.enc, constant(xd));

        NodePtr l_sup;  // null when the arm has no supervised term
        switch (cfg.arm) {
            case LossArm::instance_only:
            case LossArm::instance_plus_dwdr: {
                NodePtr z_sat = classifier_forward(leaves.cls, st.params.cls, f_sat, Mode::train,
                                                   st.dropout_rng, st.params.bn_momentum, st.params.bn_eps)
                                    .logits;
                NodePtr z_drone = classifier_forward(leaves.cls, st.params.cls, f_drone, Mode::train,
                                                     st.dropout_rng, st.params.bn_momentum, st.params.bn_eps)
                                      .logits;
                l_sup = instance_loss(z_sat, z_drone, labels);
                break;
            }
            case LossArm::triplet_plus_dwdr:
            case LossArm::softmargin_plus_dwdr: {
                TripletConfig tc = cfg.triplet;
                tc.variant = cfg.arm == LossArm::triplet_plus_dwdr ? TripletConfig::Variant::hard_margin
                                                                   : TripletConfig::Variant::soft_margin;
                l_sup = detail::batch_triplet_loss(f_sat, f_drone, labels, tc);
                break;
            }
            case LossArm::dwdr_only: break;
        }

        NodePtr l_decorr;
        if (cfg.uses_dwdr()) {
            std::vector<NodePtr> terms;
            if (cfg.dwdr.cross_view) terms.push_back(dwdr_loss(f_sat, f_drone, cfg.dwdr));
            if (cfg.dwdr.intra_view) {
                Matrix xs2 = xs, xd2 = xd;
                for (double& v : xs2.data) v += st.augment_rng.normal(0.0, cfg.intra_noise_sigma);
                for (double& v : xd2.data) v += st.augment_rng.normal(0.0, cfg.intra_noise_sigma);
                NodePtr f_sat2 = encoder_forward(leaves.enc, constant(xs2));
                NodePtr f_drone2 = encoder_forward(leaves.enc, constant(xd2));
                terms.push_back(scale(add(dwdr_loss(f_sat, f_sat2, cfg.dwdr), dwdr_loss(f_drone, f_drone2, cfg.dwdr)), 0.5));
            }
            l_decorr = terms.size() == 1 ? terms[0] : add(terms[0], terms[1]);
        }

        NodePtr loss;
        if (cfg.arm == LossArm::instance_only) {
            loss = l_sup;
        } else if (cfg.arm == LossArm::dwdr_only) {
            loss = l_decorr;
        } else {
            loss = total_loss(l_sup, l_decorr, cfg.dwdr.alpha);
        }

        if (!std::isfinite(loss->value.scalar()))
            throw numeric_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batch_count) + " (run seed " + std::to_string(cfg.seed) + ")");

        backward(loss);

        auto bindings = detail::param_bindings(st.params);
        auto nodes = leaves.ordered();
        for (size_t i = 0; i < bindings.size(); ++i) {
            double lr = bindings[i].group == ParamGroup::backbone ? lr_bb : lr_cl;
            sgd_step(*bindings[i].storage, nodes[i]->grad, st.optim.velocities[i], lr, st.optim.momentum,
                     st.optim.weight_decay);
        }

        stats.l_total += loss->value.scalar();
        if (l_sup) stats.l_id += l_sup->value.scalar();
        if (l_decorr) stats.l_dwdr += l_decorr->value.scalar();
        stats.mean_abs_offdiag_rho += mean_abs_offdiag(pearson_values(f_sat->value, f_drone->value, cfg.dwdr.eps));
        ++batch_count;

        if (st.batches->epoch_boundary()) break;
    }

    if (batch_count > 0) {
        stats.l_id /= batch_count;
        stats.l_dwdr /= batch_count;
        stats.l_total /= batch_count;
        stats.mean_abs_offdiag_rho /= batch_count;
    }
    return stats;
}

// Full training run: deterministic in (config, dataset).
inline TrainResult train(const TrainConfig& cfg, const CrossViewDataset& ds_train) {
    TrainState st = make_train_state(cfg, ds_train);
    TrainResult result;
    for (int epoch = 0; epoch < cfg.schedule.epochs; ++epoch)
        result.log.push_back(train_epoch(st, ds_train, cfg, epoch));
    result.params = std::move(st.params);
    return result;
}

}  // namespace xview
