#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "xview/losses.hpp"
#include "xview/model.hpp"

namespace xview {

// Central finite differences of a scalar-valued function, entry by entry:
// (f(x + h e_ij) - f(x - h e_ij)) / (2h).
inline Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
    if (h <= 0.0) throw config_error("finite_diff_grad: h must be positive");
    Matrix g(x.rows, x.cols);
    Matrix probe = x;
    for (size_t i = 0; i < x.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + h;
        double fp = f(probe);
        probe.data[i] = orig - h;
        double fm = f(probe);
        probe.data[i] = orig;
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

struct GradCompare {
    // worst entrywise violation ratio: |a - b| / max(abs_tol, rel_tol |a|),
    // computed at the tolerances passed to compare_grads; < 1 passes
    double worst = 0.0;
    double max_rel_err = 0.0;  // diagnostic, over entries with |analytic| > abs_tol
    double max_abs_err = 0.0;  // diagnostic, over the remaining entries
    bool ok() const { return worst < 1.0; }
};

// Elementwise rule: an entry matches when its error is below rel_tol
// relative to the analytic value or below abs_tol outright. The absolute
// fallback absorbs central-difference rounding noise on near-zero entries.
inline GradCompare compare_grads(const Matrix& analytic, const Matrix& fd, double rel_tol = 1e-6,
                                 double abs_tol = 1e-8) {
    check_same_shape(analytic, fd, "compare_grads");
    GradCompare c;
    for (size_t i = 0; i < analytic.size(); ++i) {
        double a = analytic.data[i], b = fd.data[i];
        double err = std::fabs(a - b);
        c.worst = std::max(c.worst, err / std::max(abs_tol, rel_tol * std::fabs(a)));
        if (std::fabs(a) > abs_tol) {
            c.max_rel_err = std::max(c.max_rel_err, err / std::fabs(a));
        } else {
            c.max_abs_err = std::max(c.max_abs_err, err);
        }
    }
    return c;
}

// One named check over many random instances.
struct GradCheckReport {
    std::string name;
    int instances = 0;
    double worst = 0.0;  // worst entrywise violation ratio; < 1 passes
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    double rel_tol = 1e-6;
    double abs_tol = 1e-8;
    bool passed = false;
};

namespace detail {

// A loss expressed as a graph builder over named leaf matrices. The builder
// must be a pure function of the leaf values.
struct GraphCase {
    std::vector<Matrix> inputs;
    std::function<NodePtr(const std::vector<NodePtr>&)> build;
};

inline void check_case(const GraphCase& gc, double h, GradCheckReport& report) {
    // analytic gradients
    std::vector<NodePtr> leaves;
    for (const Matrix& m : gc.inputs) leaves.push_back(leaf(m));
    NodePtr loss = gc.build(leaves);
    backward(loss);

    for (size_t li = 0; li < leaves.size(); ++li) {
        auto f = [&](const Matrix& probe) {
            std::vector<NodePtr> fresh;
            for (size_t k = 0; k < gc.inputs.size(); ++k)
                fresh.push_back(constant(k == li ? probe : gc.inputs[k]));
            return gc.build(fresh)->value.scalar();
        };
        Matrix fd = finite_diff_grad(f, gc.inputs[li], h);
        GradCompare cmp = compare_grads(leaves[li]->grad, fd, report.rel_tol, report.abs_tol);
        report.worst = std::max(report.worst, cmp.worst);
        report.max_rel_err = std::max(report.max_rel_err, cmp.max_rel_err);
        report.max_abs_err = std::max(report.max_abs_err, cmp.max_abs_err);
    }
    ++report.instances;
}

}  // namespace detail

struct GradCheckSuiteConfig {
    uint64_t seed = 1;
    int instances = 100;
    int batch = 8;
    int dim = 6;
    int classes = 5;
    double h = 1e-5;
    double loss_rel_tol = 1e-6;
    double composite_rel_tol = 1e-5;
};

// Finite-difference verification of every loss and of the full
// encoder+classifier composite (frozen dropout mask via a fixed rng seed per
// instance). Returns one report per check.
inline std::vector<GradCheckReport> run_gradcheck_suite(const GradCheckSuiteConfig& cfg) {
    std::vector<GradCheckReport> reports;
    Rng rng(cfg.seed, 17);
    const int b = cfg.batch, d = cfg.dim, classes = cfg.classes;

    auto random_labels = [&](int n, int k) {
        std::vector<int> y(n);
        for (int& v : y) v = static_cast<int>(rng.below(k));
        return y;
    };

    {
        GradCheckReport r;
        r.name = "barlow_twins";
        r.rel_tol = cfg.loss_rel_tol;
        for (int t = 0; t < cfg.instances; ++t) {
            detail::GraphCase gc;
            gc.inputs = {random_normal_matrix(d, d, rng)};
            gc.build = [](const std::vector<NodePtr>& in) { return barlow_twins_loss(in[0], 0.005); };
            detail::check_case(gc, cfg.h, r);
        }
        r.passed = r.worst < 1.0;
        reports.push_back(r);
    }
    {
        GradCheckReport r;
        r.name = "instance";
        r.rel_tol = cfg.loss_rel_tol;
        for (int t = 0; t < cfg.instances; ++t) {
            detail::GraphCase gc;
            gc.inputs = {random_normal_matrix(b, classes, rng), random_normal_matrix(b, classes, rng)};
            auto labels = random_labels(b, classes);
            gc.build = [labels](const std::vector<NodePtr>& in) {
                return instance_loss(in[0], in[1], labels);
            };
            detail::check_case(gc, cfg.h, r);
        }
        r.passed = r.worst < 1.0;
        reports.push_back(r);
    }
    // The |rho| weight kinks at rho_ij = 0; draw feature pairs whose Pearson
    // entries all sit clear of it at the finite-difference scale.
    auto smooth_pearson_pair = [&](Matrix& x, Matrix& y, double eps) {
        for (;;) {
            x = random_normal_matrix(b, d, rng);
            y = random_normal_matrix(b, d, rng);
            Matrix rho = pearson_values(x, y, eps);
            double min_abs = 1.0;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    if (i != j) min_abs = std::min(min_abs, std::fabs(rho(i, j)));
            if (min_abs > 1e-4) return;
        }
    };

    {
        GradCheckReport r;
        r.name = "dwdr";
        r.rel_tol = cfg.loss_rel_tol;
        DWDRConfig dc;
        dc.lambda = 0.01;
        dc.gamma1 = 1.0;
        dc.gamma2 = 1.0;
        for (int t = 0; t < cfg.instances; ++t) {
            detail::GraphCase gc;
            Matrix x, y;
            smooth_pearson_pair(x, y, dc.eps);
            gc.inputs = {x, y};
            gc.build = [dc](const std::vector<NodePtr>& in) { return dwdr_loss(in[0], in[1], dc); };
            detail::check_case(gc, cfg.h, r);
        }
        r.passed = r.worst < 1.0;
        reports.push_back(r);
    }
    {
        GradCheckReport r;
        r.name = "total";
        r.rel_tol = cfg.loss_rel_tol;
        DWDRConfig dc;
        for (int t = 0; t < cfg.instances; ++t) {
            detail::GraphCase gc;
            Matrix x, y;
            smooth_pearson_pair(x, y, dc.eps);
            gc.inputs = {random_normal_matrix(b, classes, rng), random_normal_matrix(b, classes, rng), x, y};
            auto labels = random_labels(b, classes);
            gc.build = [labels, dc](const std::vector<NodePtr>& in) {
                return total_loss(instance_loss(in[0], in[1], labels), dwdr_loss(in[2], in[3], dc), dc.alpha);
            };
            detail::check_case(gc, cfg.h, r);
        }
        r.passed = r.worst < 1.0;
        reports.push_back(r);
    }

    // Triplet variants: resample instances whose hinge or distance terms sit
    // near a non-smooth point at the finite-difference scale.
    for (auto variant : {TripletConfig::Variant::hard_margin, TripletConfig::Variant::soft_margin}) {
        TripletConfig tc;
        tc.margin = 0.3;
        tc.variant = variant;
        GradCheckReport r;
        r.name = variant == TripletConfig::Variant::hard_margin ? "triplet_hard" : "triplet_soft";
        r.rel_tol = cfg.loss_rel_tol;
        int produced = 0;
        while (produced < cfg.instances) {
            Matrix a = random_normal_matrix(b, d, rng);
            Matrix p = random_normal_matrix(b, d, rng);
            Matrix n = random_normal_matrix(b, d, rng);
            bool smooth = true;
            for (int i = 0; i < b && smooth; ++i) {
                double dp = 0.0, dn = 0.0;
                for (int j = 0; j < d; ++j) {
                    dp += (a(i, j) - p(i, j)) * (a(i, j) - p(i, j));
                    dn += (a(i, j) - n(i, j)) * (a(i, j) - n(i, j));
                }
                dp = std::sqrt(dp);
                dn = std::sqrt(dn);
                if (dp < 1e-2 || dn < 1e-2) smooth = false;
                if (variant == TripletConfig::Variant::hard_margin && std::fabs(dp - dn + tc.margin) < 1e-2)
                    smooth = false;
            }
            if (!smooth) continue;
            detail::GraphCase gc;
            gc.inputs = {a, p, n};
            gc.build = [tc](const std::vector<NodePtr>& in) { return triplet_loss(in[0], in[1], in[2], tc); };
            detail::check_case(gc, cfg.h, r);
            ++produced;
        }
        r.passed = r.worst < 1.0;
        reports.push_back(r);
    }

    // Full composite: encoder -> classifier -> instance loss blended with the
    // cross-view decorrelation term, differentiated w.r.t. every parameter.
    {
        GradCheckReport r;
        r.name = "composite";
        r.rel_tol = cfg.composite_rel_tol;
        DWDRConfig dc;
        dc.lambda = 0.01;
        const int p_in = 7, hid = 6;
        int produced = 0;
        for (int t = 0; produced < cfg.instances; ++t) {
            ModelDims dims{p_in, hid, d, hid, classes};
            Rng init_rng(cfg.seed + 1000 + t, 23);
            ModelParams model = init_model(dims, 0.5, init_rng);
            Matrix xs = random_normal_matrix(b, p_in, rng);
            Matrix xd = random_normal_matrix(b, p_in, rng);

            // Resample instances whose relu pre-activations or Pearson
            // off-diagonals sit near a kink.
            {
                auto preact_clear = [&](const Matrix& x) {
                    Matrix h = matmul_values(x, model.enc.w1);
                    for (int i = 0; i < h.rows; ++i)
                        for (int j = 0; j < h.cols; ++j)
                            if (std::fabs(h(i, j) + model.enc.b1(0, j)) < 1e-3) return false;
                    return true;
                };
                if (!preact_clear(xs) || !preact_clear(xd)) continue;
                Matrix f_s = embed_values(model, xs, RetrievalFeature::embedding);
                Matrix f_d = embed_values(model, xd, RetrievalFeature::embedding);
                Matrix rho = pearson_values(f_s, f_d, dc.eps);
                double min_abs = 1.0;
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j)
                        if (i != j) min_abs = std::min(min_abs, std::fabs(rho(i, j)));
                if (min_abs <= 1e-4) continue;
            }
            ++produced;
            auto labels = random_labels(b, classes);
            const uint64_t mask_seed = cfg.seed + 7777 + t;  // frozen dropout mask

            detail::GraphCase gc;
            gc.inputs = {model.enc.w1,        model.enc.b1, model.enc.w2,       model.enc.b2,
                         model.cls.w1,        model.cls.b1, model.cls.bn.scale, model.cls.bn.shift,
                         model.cls.w2,        model.cls.b2};
            gc.build = [&, labels, mask_seed](const std::vector<NodePtr>& in) {
                EncoderLeaves enc{in[0], in[1], in[2], in[3]};
                ClassifierLeaves cls{in[4], in[5], in[6], in[7], in[8], in[9]};
                NodePtr f_s = encoder_forward(enc, constant(xs));
                NodePtr f_d = encoder_forward(enc, constant(xd));
                // fresh BN state per evaluation: running-stat updates must not
                // leak across finite-difference probes
                BatchNormState bn_state(hid);
                Rng drop_rng(mask_seed, 3);
                NodePtr h_s = batch_norm_1d(add_rowvec(matmul(f_s, cls.w1), cls.b1), cls.scale, cls.shift,
                                            bn_state, Mode::train, 0.1, model.bn_eps);
                NodePtr z_s = add_rowvec(matmul(dropout(h_s, model.cls.p_drop, Mode::train, drop_rng), cls.w2),
                                         cls.b2);
                NodePtr h_d = batch_norm_1d(add_rowvec(matmul(f_d, cls.w1), cls.b1), cls.scale, cls.shift,
                                            bn_state, Mode::train, 0.1, model.bn_eps);
                NodePtr z_d = add_rowvec(matmul(dropout(h_d, model.cls.p_drop, Mode::train, drop_rng), cls.w2),
                                         cls.b2);
                NodePtr l_id = instance_loss(z_s, z_d, labels);
                NodePtr l_dwdr = dwdr_loss(f_s, f_d, dc);
                return total_loss(l_id, l_dwdr, dc.alpha);
            };
            detail::check_case(gc, cfg.h, r);
        }
        r.passed = r.worst < 1.0;
        reports.push_back(r);
    }

    return reports;
}

}  // namespace xview
