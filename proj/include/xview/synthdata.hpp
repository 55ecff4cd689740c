#pragma once

#include <cmath>
#include <utility>

#include "xview/dataset.hpp"
#include "xview/rng.hpp"

namespace xview {

// Recipe for a deterministic two-platform dataset with the structural
// properties of the aerial geo-localization benchmarks at desk scale:
// 1:many view imbalance, and a latent split into per-class identity
// dimensions (perturbed in every drone view, like viewpoint-sensitive
// detail) and region-level context dimensions shared by neighbouring
// classes and stable across views (like scene context). Identity is the
// only factor that tells classes of one region apart.
struct SynthSpec {
    int num_classes = 60;
    int train_classes = 30;  // classes [0, train_classes) train, rest test
    int latent_dim = 8;      // identity dims: latent_dim - context_dim
    int context_dim = 4;     // trailing latent dims shared per region
    int region_size = 5;     // classes per region (region = label / region_size)
    int input_dim = 32;
    int drone_per_class = 12;
    double noise_sigma = 0.05;   // additive observation noise
    double latent_jitter = 0.9;  // drone-view perturbation of identity dims
    double context_scale = 1.0;  // amplitude of the context component
    uint64_t platform_transform_seed = 1234;

    int identity_dim() const { return latent_dim - context_dim; }

    void validate() const {
        if (num_classes < 2) throw config_error("SynthSpec: need at least 2 classes");
        if (train_classes < 1 || train_classes >= num_classes)
            throw config_error("SynthSpec: train_classes must lie in [1, num_classes)");
        if (latent_dim < 1 || input_dim < 1) throw config_error("SynthSpec: dimensions must be positive");
        if (context_dim < 0 || context_dim >= latent_dim)
            throw config_error("SynthSpec: context_dim must lie in [0, latent_dim)");
        if (region_size < 1) throw config_error("SynthSpec: region_size must be >= 1");
        if (drone_per_class < 1) throw config_error("SynthSpec: drone_per_class must be >= 1");
        if (noise_sigma < 0.0 || latent_jitter < 0.0 || context_scale < 0.0)
            throw config_error("SynthSpec: noise levels must be non-negative");
    }
};

namespace detail {

// Fixed per-platform observation map: x = tanh(W c), W drawn once from the
// transform seed. The tanh keeps the two platforms from being related by a
// single linear transform, which a linear encoder would trivially invert.
struct PlatformMap {
    Matrix w;  // input_dim x latent_dim

    std::vector<double> apply(const std::vector<double>& latent) const {
        std::vector<double> out(w.rows);
        for (int i = 0; i < w.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < w.cols; ++j) s += w(i, j) * latent[j];
            out[i] = std::tanh(s);
        }
        return out;
    }
};

inline PlatformMap make_platform_map(const SynthSpec& spec, int platform_index) {
    Rng rng(spec.platform_transform_seed, static_cast<uint64_t>(platform_index) + 1);
    PlatformMap map;
    map.w = random_normal_matrix(spec.input_dim, spec.latent_dim, rng, 1.0 / std::sqrt(spec.latent_dim));
    return map;
}

}  // namespace detail

// Per class: one satellite item from the class prototype, drone_per_class
// drone items from identity-jittered prototypes, both through their platform
// map, plus observation noise. Region context prototypes are drawn from a
// dedicated rng stream so that class prototypes do not depend on how many
// regions precede them. Item ids are dense in generation order.
inline CrossViewDataset generate_dataset(const SynthSpec& spec, Rng& rng) {
    spec.validate();
    detail::PlatformMap sat_map = detail::make_platform_map(spec, 0);
    detail::PlatformMap drone_map = detail::make_platform_map(spec, 1);

    const int id_dim = spec.identity_dim();
    const int num_regions = (spec.num_classes + spec.region_size - 1) / spec.region_size;
    std::vector<std::vector<double>> region_context(num_regions);
    {
        Rng ctx_rng(spec.platform_transform_seed, 101);
        for (auto& ctx : region_context) {
            ctx.resize(spec.context_dim);
            for (double& v : ctx) v = ctx_rng.normal(0.0, spec.context_scale);
        }
    }

    CrossViewDataset ds;
    ds.feature_dim = spec.input_dim;
    ds.classes.resize(spec.num_classes);
    int next_id = 0;
    for (int c = 0; c < spec.num_classes; ++c) {
        GeoClass& gc = ds.classes[c];
        gc.label = c;
        std::vector<double> prototype(spec.latent_dim);
        for (int j = 0; j < id_dim; ++j) prototype[j] = rng.normal();
        const std::vector<double>& ctx = region_context[c / spec.region_size];
        for (int j = 0; j < spec.context_dim; ++j) prototype[id_dim + j] = ctx[j];

        Item sat;
        sat.id = next_id++;
        sat.label = c;
        sat.platform = Platform::satellite;
        sat.features = sat_map.apply(prototype);
        for (double& v : sat.features) v += rng.normal(0.0, spec.noise_sigma);
        gc.satellite_items.push_back(sat.id);
        ds.add_item(std::move(sat));

        for (int k = 0; k < spec.drone_per_class; ++k) {
            std::vector<double> jittered = prototype;
            for (int j = 0; j < id_dim; ++j) jittered[j] += rng.normal(0.0, spec.latent_jitter);
            Item drone;
            drone.id = next_id++;
            drone.label = c;
            drone.platform = Platform::drone;
            drone.features = drone_map.apply(jittered);
            for (double& v : drone.features) v += rng.normal(0.0, spec.noise_sigma);
            gc.drone_items.push_back(drone.id);
            ds.add_item(std::move(drone));
        }
    }
    ds.validate();
    return ds;
}

// Class-disjoint partition: classes [0, train_classes) become the training
// set, the rest the test set; labels are re-packed to [0, C') on each side.
inline std::pair<CrossViewDataset, CrossViewDataset> split_train_test(const CrossViewDataset& ds,
                                                                      const SynthSpec& spec) {
    spec.validate();
    if (spec.num_classes != ds.num_classes())
        throw config_error("split_train_test: spec and dataset class counts disagree");

    auto take = [&](int first_class, int last_class) {
        CrossViewDataset part;
        part.feature_dim = ds.feature_dim;
        for (int c = first_class; c < last_class; ++c) {
            const GeoClass& src = ds.classes[c];
            GeoClass gc;
            gc.label = c - first_class;
            auto copy_items = [&](const std::vector<int>& ids, std::vector<int>& into) {
                for (int id : ids) {
                    Item it = ds.item(id);
                    it.label = gc.label;
                    into.push_back(it.id);
                    part.add_item(std::move(it));
                }
            };
            copy_items(src.satellite_items, gc.satellite_items);
            copy_items(src.drone_items, gc.drone_items);
            part.classes.push_back(std::move(gc));
        }
        part.validate();
        return part;
    };

    return {take(0, spec.train_classes), take(spec.train_classes, spec.num_classes)};
}

}  // namespace xview
