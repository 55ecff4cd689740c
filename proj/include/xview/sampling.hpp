#pragma once

#include <memory>
#include <vector>

#include "xview/dataset.hpp"
#include "xview/rng.hpp"

namespace xview {

// A cross-platform positive pair: both items share the geo-tag label.
struct SamplePair {
    int satellite_id = 0;
    int drone_id = 0;
    int label = 0;
};

// Which sampling rule produced a pair.
enum class Provenance { satellite_anchored, drone_anchored, uniform_random };

struct BatchPlan {
    std::vector<SamplePair> pairs;
    std::vector<Provenance> provenance;  // aligned with pairs

    int size() const { return static_cast<int>(pairs.size()); }
};

enum class SamplingStrategy { random, satellite, drone, symmetric };

inline const char* sampling_name(SamplingStrategy s) {
    switch (s) {
        case SamplingStrategy::random: return "random";
        case SamplingStrategy::satellite: return "satellite";
        case SamplingStrategy::drone: return "drone";
        case SamplingStrategy::symmetric: return "symmetric";
    }
    return "?";
}

namespace detail {

inline int uniform_pick(const std::vector<int>& ids, Rng& rng) {
    return ids.size() == 1 ? ids[0] : ids[rng.below(ids.size())];
}

}  // namespace detail

// One pass anchored on satellite items: a random permutation of every
// satellite item, each paired with a drone item of its class drawn uniformly
// with replacement (a fresh draw every epoch).
inline std::vector<SamplePair> satellite_view_epoch(const CrossViewDataset& ds, Rng& rng) {
    std::vector<int> anchors;
    for (const auto& gc : ds.classes)
        for (int id : gc.satellite_items) anchors.push_back(id);
    rng.shuffle(anchors);
    std::vector<SamplePair> out;
    out.reserve(anchors.size());
    for (int sat_id : anchors) {
        const Item& it = ds.item(sat_id);
        const GeoClass& gc = ds.classes[it.label];
        out.push_back({sat_id, detail::uniform_pick(gc.drone_items, rng), it.label});
    }
    return out;
}

// One pass anchored on drone items: a random permutation of every drone item
// (each appears exactly once), paired with a satellite item of its class.
// Duplicate labels within a window are expected for view-imbalanced data.
inline std::vector<SamplePair> drone_view_epoch(const CrossViewDataset& ds, Rng& rng) {
    std::vector<int> anchors;
    for (const auto& gc : ds.classes)
        for (int id : gc.drone_items) anchors.push_back(id);
    rng.shuffle(anchors);
    std::vector<SamplePair> out;
    out.reserve(anchors.size());
    for (int drone_id : anchors) {
        const Item& it = ds.item(drone_id);
        const GeoClass& gc = ds.classes[it.label];
        out.push_back({detail::uniform_pick(gc.satellite_items, rng), drone_id, it.label});
    }
    return out;
}

// Infinite stream of batch plans. epoch_boundary() reports whether the most
// recently emitted batch closed a training epoch under the stream's rule.
class BatchStream {
  public:
    virtual ~BatchStream() = default;
    virtual BatchPlan next_batch() = 0;
    virtual bool epoch_boundary() const = 0;
};

namespace detail {

// Continuous pair source that re-permutes whenever a pass is exhausted.
class AnchoredPairStream {
  public:
    enum class Anchor { satellite, drone };

    AnchoredPairStream(const CrossViewDataset& ds, Anchor anchor) : ds_(&ds), anchor_(anchor) {}

    SamplePair next(Rng& rng) {
        if (pos_ >= buffer_.size()) {
            buffer_ = anchor_ == Anchor::satellite ? satellite_view_epoch(*ds_, rng)
                                                   : drone_view_epoch(*ds_, rng);
            pos_ = 0;
        }
        SamplePair p = buffer_[pos_++];
        wrapped_on_last_ = pos_ == buffer_.size();
        return p;
    }

    bool wrapped_on_last() const { return wrapped_on_last_; }

  private:
    const CrossViewDataset* ds_;
    Anchor anchor_;
    std::vector<SamplePair> buffer_;
    size_t pos_ = 0;
    bool wrapped_on_last_ = false;
};

}  // namespace detail

// Pure single-anchor strategy: every batch drawn from one anchored stream;
// an epoch ends with the batch in which the stream completes a pass.
class AnchoredBatchStream : public BatchStream {
  public:
    AnchoredBatchStream(const CrossViewDataset& ds, int batch_size, Rng rng,
                        detail::AnchoredPairStream::Anchor anchor)
        : stream_(ds, anchor), rng_(rng), batch_size_(batch_size), provenance_(anchor == detail::AnchoredPairStream::Anchor::satellite
                                                                                   ? Provenance::satellite_anchored
                                                                                   : Provenance::drone_anchored) {
        if (batch_size < 1) throw config_error("batch size must be positive");
    }

    BatchPlan next_batch() override {
        BatchPlan plan;
        boundary_ = false;
        for (int i = 0; i < batch_size_; ++i) {
            plan.pairs.push_back(stream_.next(rng_));
            plan.provenance.push_back(provenance_);
            if (stream_.wrapped_on_last()) boundary_ = true;
        }
        return plan;
    }

    bool epoch_boundary() const override { return boundary_; }

  private:
    detail::AnchoredPairStream stream_;
    Rng rng_;
    int batch_size_;
    Provenance provenance_;
    bool boundary_ = false;
};

// The symmetric strategy: each batch combines B/2 satellite-anchored pairs
// with B/2 drone-anchored pairs; the two sub-streams advance independently.
// An epoch ends when the drone-anchored sub-stream (the longer one) completes
// a pass, which guarantees every drone item is visited.
class SymmetricBatchStream : public BatchStream {
  public:
    SymmetricBatchStream(const CrossViewDataset& ds, int batch_size, Rng rng)
        : sat_stream_(ds, detail::AnchoredPairStream::Anchor::satellite),
          drone_stream_(ds, detail::AnchoredPairStream::Anchor::drone),
          rng_(rng),
          batch_size_(batch_size) {
        if (batch_size < 2 || batch_size % 2 != 0)
            throw config_error("symmetric sampling requires an even batch size >= 2");
    }

    BatchPlan next_batch() override {
        BatchPlan plan;
        boundary_ = false;
        const int half = batch_size_ / 2;
        for (int i = 0; i < half; ++i) {
            plan.pairs.push_back(sat_stream_.next(rng_));
            plan.provenance.push_back(Provenance::satellite_anchored);
        }
        for (int i = 0; i < half; ++i) {
            plan.pairs.push_back(drone_stream_.next(rng_));
            plan.provenance.push_back(Provenance::drone_anchored);
            if (drone_stream_.wrapped_on_last()) boundary_ = true;
        }
        return plan;
    }

    bool epoch_boundary() const override { return boundary_; }

  private:
    detail::AnchoredPairStream sat_stream_;
    detail::AnchoredPairStream drone_stream_;
    Rng rng_;
    int batch_size_;
    bool boundary_ = false;
};

// Ablation control arm: classes drawn uniformly, one item per platform drawn
// uniformly within the class. Epoch length matches one drone pass so step
// counts are comparable with the drone-anchored strategy.
class RandomBatchStream : public BatchStream {
  public:
    RandomBatchStream(const CrossViewDataset& ds, int batch_size, Rng rng)
        : ds_(&ds), rng_(rng), batch_size_(batch_size) {
        if (batch_size < 1) throw config_error("batch size must be positive");
        batches_per_epoch_ = (ds.total_drone_items() + batch_size - 1) / batch_size;
        if (batches_per_epoch_ < 1) batches_per_epoch_ = 1;
    }

    BatchPlan next_batch() override {
        BatchPlan plan;
        for (int i = 0; i < batch_size_; ++i) {
            const GeoClass& gc = ds_->classes[rng_.below(ds_->classes.size())];
            plan.pairs.push_back({detail::uniform_pick(gc.satellite_items, rng_),
                                  detail::uniform_pick(gc.drone_items, rng_), gc.label});
            plan.provenance.push_back(Provenance::uniform_random);
        }
        ++emitted_;
        boundary_ = emitted_ % batches_per_epoch_ == 0;
        return plan;
    }

    bool epoch_boundary() const override { return boundary_; }

  private:
    const CrossViewDataset* ds_;
    Rng rng_;
    int batch_size_;
    int batches_per_epoch_ = 1;
    long emitted_ = 0;
    bool boundary_ = false;
};

inline std::unique_ptr<BatchStream> symmetric_batches(const CrossViewDataset& ds, int batch_size, Rng rng) {
    return std::make_unique<SymmetricBatchStream>(ds, batch_size, rng);
}

inline std::unique_ptr<BatchStream> random_pair_batches(const CrossViewDataset& ds, int batch_size, Rng rng) {
    return std::make_unique<RandomBatchStream>(ds, batch_size, rng);
}

inline std::unique_ptr<BatchStream> make_batch_stream(SamplingStrategy strategy, const CrossViewDataset& ds,
                                                      int batch_size, Rng rng) {
    switch (strategy) {
        case SamplingStrategy::random: return random_pair_batches(ds, batch_size, rng);
        case SamplingStrategy::satellite:
            return std::make_unique<AnchoredBatchStream>(ds, batch_size, rng,
                                                         detail::AnchoredPairStream::Anchor::satellite);
        case SamplingStrategy::drone:
            return std::make_unique<AnchoredBatchStream>(ds, batch_size, rng,
                                                         detail::AnchoredPairStream::Anchor::drone);
        case SamplingStrategy::symmetric: return symmetric_batches(ds, batch_size, rng);
    }
    throw config_error("unknown sampling strategy");
}

}  // namespace xview
