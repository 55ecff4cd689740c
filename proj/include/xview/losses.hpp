#pragma once

#include <cmath>
#include <vector>

#include "xview/tape.hpp"

namespace xview {

// Settings for the decorrelation regularizer and its blend with the
// supervised term: L_total = alpha * L_sup + (1 - alpha) * L_decorr.
// gamma1/gamma2 are the focusing exponents of the dynamic weights; setting
// both to zero recovers the plain redundancy-reduction (Barlow Twins) loss.
struct DWDRConfig {
    double lambda = 1e-2;   // off-diagonal balance
    double gamma1 = 1.0;    // diagonal focusing exponent
    double gamma2 = 1.0;    // off-diagonal focusing exponent
    double alpha = 0.9;     // supervised/regularizer blend
    double eps = 1e-8;      // Pearson denominator guard
    bool cross_view = true;
    bool intra_view = false;

    void validate() const {
        if (lambda <= 0.0) throw config_error("DWDRConfig: lambda must be positive");
        if (gamma1 < 0.0 || gamma2 < 0.0) throw config_error("DWDRConfig: gamma must be non-negative");
        if (alpha < 0.0 || alpha > 1.0) throw config_error("DWDRConfig: alpha must lie in [0, 1]");
        if (eps <= 0.0) throw config_error("DWDRConfig: eps must be positive");
        if (!cross_view && !intra_view)
            throw config_error("DWDRConfig: at least one of cross_view/intra_view must be enabled");
    }
};

struct TripletConfig {
    double margin = 0.3;
    enum class Variant { hard_margin, soft_margin } variant = Variant::hard_margin;

    void validate() const {
        if (margin < 0.0) throw config_error("TripletConfig: margin must be non-negative");
    }
};

// phi = (1/b) x^T y, channels as columns. d x d for b x d inputs.
inline NodePtr cross_correlation_matrix(const NodePtr& x, const NodePtr& y) {
    check_same_shape(x->value, y->value, "cross_correlation_matrix");
    const int b = x->value.rows;
    return scale(matmul(transpose(x), y), 1.0 / b);
}

// Pearson cross-correlation coefficient matrix:
// rho = (1/b) z_x^T z_y with z = column-standardized input, so that
// rho_mn = cov(x_:m, y_:n) / ((sigma_x_m + eps)(sigma_y_n + eps)).
inline NodePtr pearson_matrix(const NodePtr& x, const NodePtr& y, double eps) {
    check_same_shape(x->value, y->value, "pearson_matrix");
    NodePtr zx = standardize_columns(x, eps).z;
    NodePtr zy = standardize_columns(y, eps).z;
    return cross_correlation_matrix(zx, zy);
}

// Plain-value Pearson matrix (no graph), shared by logging and diagnostics.
inline Matrix pearson_values(const Matrix& x, const Matrix& y, double eps) {
    check_same_shape(x, y, "pearson_values");
    const int b = x.rows, d = x.cols;
    if (b < 2) throw degenerate_batch_error("pearson_values: need at least 2 rows");
    auto standardized = [&](const Matrix& m) {
        Matrix z(b, d);
        for (int j = 0; j < d; ++j) {
            double mean = 0.0;
            for (int i = 0; i < b; ++i) mean += m(i, j);
            mean /= b;
            double var = 0.0;
            for (int i = 0; i < b; ++i) {
                double c = m(i, j) - mean;
                var += c * c;
            }
            double denom = std::sqrt(var / b) + eps;
            for (int i = 0; i < b; ++i) z(i, j) = (m(i, j) - mean) / denom;
        }
        return z;
    };
    Matrix rho = matmul_values(transpose_values(standardized(x)), standardized(y));
    for (double& v : rho.data) v /= b;
    return rho;
}

inline double mean_abs_offdiag(const Matrix& m) {
    if (m.rows != m.cols) throw dimension_error("mean_abs_offdiag: matrix must be square");
    if (m.rows < 2) return 0.0;
    double s = 0.0;
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j)
            if (i != j) s += std::fabs(m(i, j));
    return s / (static_cast<double>(m.rows) * (m.rows - 1));
}

struct DynamicWeights {
    NodePtr w1;  // 1 x d, ((1 - rho_ii)/2)^gamma1
    NodePtr w2;  // d x d, |rho_ij|^gamma2 (diagonal present but unused)
};

// Dynamic focusing weights of the decorrelation loss. rho entries are
// clamped to [-1, 1] before weighting; gradients flow through the weights.
inline DynamicWeights dynamic_weights(const NodePtr& rho, double gamma1, double gamma2) {
    if (rho->value.rows != rho->value.cols) throw dimension_error("dynamic_weights: rho must be square");
    if (gamma1 < 0.0 || gamma2 < 0.0) throw config_error("dynamic_weights: gamma must be non-negative");
    const int d = rho->value.rows;
    NodePtr diag = clamp(extract_diag(rho), -1.0, 1.0);
    NodePtr w1 = pow_const(scale(sub(constant_full(1, d, 1.0), diag), 0.5), gamma1);
    NodePtr w2 = pow_const(abs(clamp(rho, -1.0, 1.0)), gamma2);
    return {w1, w2};
}

// Weighted identity-regression loss on an already-computed coefficient
// matrix: sum_i w1_i (1 - rho_ii)^2 + lambda * sum_{i != j} w2_ij rho_ij^2.
inline NodePtr dwdr_from_pearson(const NodePtr& rho, const DWDRConfig& cfg) {
    cfg.validate();
    const int d = rho->value.rows;
    DynamicWeights w = dynamic_weights(rho, cfg.gamma1, cfg.gamma2);
    NodePtr diag = extract_diag(rho);
    NodePtr term_diag = sum_all(mul(w.w1, square(sub(constant_full(1, d, 1.0), diag))));
    NodePtr term_off = sum_offdiag(mul(w.w2, square(rho)));
    return add(term_diag, scale(term_off, cfg.lambda));
}

// Dynamic weighted decorrelation regularization between two feature batches.
inline NodePtr dwdr_loss(const NodePtr& x, const NodePtr& y, const DWDRConfig& cfg) {
    return dwdr_from_pearson(pearson_matrix(x, y, cfg.eps), cfg);
}

// Unweighted redundancy-reduction loss on a square matrix:
// sum_i (1 - m_ii)^2 + lambda * sum_{i != j} m_ij^2.
inline NodePtr barlow_twins_loss(const NodePtr& m, double lambda) {
    if (m->value.rows != m->value.cols) throw dimension_error("barlow_twins_loss: input must be square");
    const int d = m->value.rows;
    NodePtr diag = extract_diag(m);
    NodePtr term_diag = sum_all(square(sub(constant_full(1, d, 1.0), diag)));
    NodePtr term_off = sum_offdiag(square(m));
    return add(term_diag, scale(term_off, lambda));
}

// Classification loss through the shared classifier: per platform the batch
// mean of -log softmax(z)[label], summed over the two platforms.
inline NodePtr instance_loss(const NodePtr& z1, const NodePtr& z2, const std::vector<int>& labels) {
    check_same_shape(z1->value, z2->value, "instance_loss");
    const int b = z1->value.rows, classes = z1->value.cols;
    if (static_cast<int>(labels.size()) != b) throw data_error("instance_loss: labels length != batch size");
    Matrix onehot(b, classes);
    for (int i = 0; i < b; ++i) {
        if (labels[i] < 0 || labels[i] >= classes)
            throw data_error("instance_loss: label " + std::to_string(labels[i]) + " out of range [0, " +
                             std::to_string(classes) + ")");
        onehot(i, labels[i]) = 1.0;
    }
    NodePtr mask = constant(std::move(onehot));
    NodePtr l1 = scale(sum_all(mul(log_softmax_rows(z1), mask)), -1.0 / b);
    NodePtr l2 = scale(sum_all(mul(log_softmax_rows(z2), mask)), -1.0 / b);
    return add(l1, l2);
}

// Batch-mean triplet loss on Euclidean distances.
// hard_margin: mean max(0, ||a-p|| - ||a-n|| + M)
// soft_margin: mean ln(1 + exp(||a-p|| - ||a-n||))
inline NodePtr triplet_loss(const NodePtr& anchor, const NodePtr& positive, const NodePtr& negative,
                            const TripletConfig& cfg) {
    cfg.validate();
    check_same_shape(anchor->value, positive->value, "triplet_loss");
    check_same_shape(anchor->value, negative->value, "triplet_loss");
    const int b = anchor->value.rows;
    NodePtr dpos = rowwise_euclidean(anchor, positive);
    NodePtr dneg = rowwise_euclidean(anchor, negative);
    NodePtr gap = sub(dpos, dneg);
    NodePtr per_row = cfg.variant == TripletConfig::Variant::hard_margin
                          ? relu(add_scalar(gap, cfg.margin))
                          : softplus(gap);
    return scale(sum_all(per_row), 1.0 / b);
}

// L_total = alpha * L_sup + (1 - alpha) * L_decorr.
inline NodePtr total_loss(const NodePtr& l_sup, const NodePtr& l_decorr, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw config_error("total_loss: alpha must lie in [0, 1]");
    if (!l_sup->value.is_scalar() || !l_decorr->value.is_scalar())
        throw contract_error("total_loss: inputs must be scalar nodes");
    return add(scale(l_sup, alpha), scale(l_decorr, 1.0 - alpha));
}

}  // namespace xview
