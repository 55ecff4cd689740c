#pragma once

#include <vector>

#include "xview/matrix.hpp"

namespace xview {

// SGD with classic (coupled) weight decay:
//   g' = g + weight_decay * w;  v' = momentum * v + g';  w' = w - lr * v'
inline void sgd_step(Matrix& weights, const Matrix& grads, Matrix& velocity, double lr, double momentum,
                     double weight_decay) {
    check_same_shape(weights, grads, "sgd_step");
    check_same_shape(weights, velocity, "sgd_step");
    for (size_t i = 0; i < weights.size(); ++i) {
        double g = grads.data[i] + weight_decay * weights.data[i];
        velocity.data[i] = momentum * velocity.data[i] + g;
        weights.data[i] -= lr * velocity.data[i];
    }
}

enum class ParamGroup { backbone, classifier };

struct OptimState {
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double lr_backbone = 1e-3;
    double lr_classifier = 1e-2;
    std::vector<Matrix> velocities;  // one per registered parameter, in order
};

struct LrSchedule {
    int epochs = 60;
    int decay_epoch = 40;
    double decay_factor = 0.1;
};

// Step schedule: the base rate, decayed once after decay_epoch.
inline double lr_at_epoch(const LrSchedule& sched, const OptimState& opt, int epoch, ParamGroup group) {
    if (epoch < 0 || epoch >= sched.epochs) throw config_error("lr_at_epoch: epoch out of range");
    double base = group == ParamGroup::backbone ? opt.lr_backbone : opt.lr_classifier;
    return epoch >= sched.decay_epoch ? base * sched.decay_factor : base;
}

}  // namespace xview
