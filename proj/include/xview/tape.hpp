#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "xview/matrix.hpp"
#include "xview/rng.hpp"

namespace xview {

// Reverse-mode automatic differentiation over dense matrices.
//
// Each forward op allocates a TapeNode holding its value, a zero gradient
// accumulator and a closure computing the local vector-Jacobian product.
// The graph is acyclic (children point at parents) and single-use: after
// backward() has consumed a node, reaching it again is a contract error.
// Training code therefore rebuilds the graph from fresh leaves every step.
struct TapeNode {
    Matrix value;
    Matrix grad;  // same shape as value, zero until backward
    std::vector<std::shared_ptr<TapeNode>> parents;
    std::function<void()> backprop;  // accumulates this->grad into parents
    bool requires_grad = false;
    bool backward_done = false;
};

using NodePtr = std::shared_ptr<TapeNode>;

inline NodePtr make_node(Matrix value, std::vector<NodePtr> parents) {
    auto n = std::make_shared<TapeNode>();
    n->grad = Matrix(value.rows, value.cols);
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

// Differentiable leaf (a parameter or an input under test).
inline NodePtr leaf(Matrix value) {
    auto n = make_node(std::move(value), {});
    n->requires_grad = true;
    return n;
}

// Non-differentiable constant.
inline NodePtr constant(Matrix value) { return make_node(std::move(value), {}); }

inline NodePtr constant_full(int rows, int cols, double v) { return constant(Matrix::full(rows, cols, v)); }

// ---------------------------------------------------------------------------
// Elementwise binary ops with 1x1 scalar broadcast on either side.
// ---------------------------------------------------------------------------

namespace detail {

enum class BinKind { add, sub, mul, div };

inline NodePtr binary_ew(BinKind kind, const NodePtr& a, const NodePtr& b, const char* name) {
    const Matrix& av = a->value;
    const Matrix& bv = b->value;
    const bool a_scalar = av.is_scalar() && !bv.is_scalar();
    const bool b_scalar = bv.is_scalar() && !av.is_scalar();
    if (!a_scalar && !b_scalar) check_same_shape(av, bv, name);

    const Matrix& shape_src = a_scalar ? bv : av;
    Matrix out(shape_src.rows, shape_src.cols);
    const size_t n = out.size();
    for (size_t i = 0; i < n; ++i) {
        double x = a_scalar ? av.data[0] : av.data[i];
        double y = b_scalar ? bv.data[0] : bv.data[i];
        switch (kind) {
            case BinKind::add: out.data[i] = x + y; break;
            case BinKind::sub: out.data[i] = x - y; break;
            case BinKind::mul: out.data[i] = x * y; break;
            case BinKind::div:
                if (y == 0.0) throw numeric_error("elementwise div: zero denominator entry");
                out.data[i] = x / y;
                break;
        }
    }

    auto node = make_node(std::move(out), {a, b});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* pa = a.get();
    TapeNode* pb = b.get();
    node->backprop = [kind, o, pa, pb, a_scalar, b_scalar, n] {
        for (size_t i = 0; i < n; ++i) {
            const double g = o->grad.data[i];
            const double x = a_scalar ? pa->value.data[0] : pa->value.data[i];
            const double y = b_scalar ? pb->value.data[0] : pb->value.data[i];
            double ga = 0.0, gb = 0.0;
            switch (kind) {
                case BinKind::add: ga = g; gb = g; break;
                case BinKind::sub: ga = g; gb = -g; break;
                case BinKind::mul: ga = g * y; gb = g * x; break;
                case BinKind::div: ga = g / y; gb = -g * x / (y * y); break;
            }
            if (pa->requires_grad) pa->grad.data[a_scalar ? 0 : i] += ga;
            if (pb->requires_grad) pb->grad.data[b_scalar ? 0 : i] += gb;
        }
    };
    return node;
}

}  // namespace detail

inline NodePtr add(const NodePtr& a, const NodePtr& b) { return detail::binary_ew(detail::BinKind::add, a, b, "add"); }
inline NodePtr sub(const NodePtr& a, const NodePtr& b) { return detail::binary_ew(detail::BinKind::sub, a, b, "sub"); }
inline NodePtr mul(const NodePtr& a, const NodePtr& b) { return detail::binary_ew(detail::BinKind::mul, a, b, "mul"); }
inline NodePtr div(const NodePtr& a, const NodePtr& b) { return detail::binary_ew(detail::BinKind::div, a, b, "div"); }

inline NodePtr square(const NodePtr& x) { return mul(x, x); }

// y = c * x for a plain constant c.
inline NodePtr scale(const NodePtr& x, double c) {
    Matrix out = x->value;
    for (double& v : out.data) v *= c;
    auto node = make_node(std::move(out), {x});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    node->backprop = [o, px, c] { axpy_into(px->grad, c, o->grad); };
    return node;
}

// y = x + c elementwise for a plain constant c.
inline NodePtr add_scalar(const NodePtr& x, double c) {
    Matrix out = x->value;
    for (double& v : out.data) v += c;
    auto node = make_node(std::move(out), {x});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    node->backprop = [o, px] { add_into(px->grad, o->grad); };
    return node;
}

// y = x^e elementwise; e is a non-negative constant. 0^0 := 1 with zero
// gradient, so exponent 0 yields an exact constant-one matrix.
inline NodePtr pow_const(const NodePtr& x, double exponent) {
    if (exponent < 0.0) throw config_error("pow_const: exponent must be non-negative");
    Matrix out(x->value.rows, x->value.cols);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = std::pow(x->value.data[i], exponent);
    auto node = make_node(std::move(out), {x});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    node->backprop = [o, px, exponent] {
        if (exponent == 0.0) return;
        for (size_t i = 0; i < o->grad.size(); ++i) {
            double d = exponent == 1.0 ? 1.0 : exponent * std::pow(px->value.data[i], exponent - 1.0);
            px->grad.data[i] += o->grad.data[i] * d;
        }
    };
    return node;
}

// |x| elementwise; subgradient sign(0) := 0.
inline NodePtr abs(const NodePtr& x) {
    Matrix out(x->value.rows, x->value.cols);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = std::fabs(x->value.data[i]);
    auto node = make_node(std::move(out), {x});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    node->backprop = [o, px] {
        for (size_t i = 0; i < o->grad.size(); ++i) {
            double v = px->value.data[i];
            double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
            px->grad.data[i] += o->grad.data[i] * s;
        }
    };
    return node;
}

// Clamp to [lo, hi]; gradient passes only strictly inside the interval.
inline NodePtr clamp(const NodePtr& x, double lo, double hi) {
    Matrix out(x->value.rows, x->value.cols);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = std::min(hi, std::max(lo, x->value.data[i]));
    auto node = make_node(std::move(out), {x});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    node->backprop = [o, px, lo, hi] {
        for (size_t i = 0; i < o->grad.size(); ++i) {
            double v = px->value.data[i];
            if (v > lo && v < hi) px->grad.data[i] += o->grad.data[i];
        }
    };
    return node;
}

inline NodePtr relu(const NodePtr& x) {
    Matrix out(x->value.rows, x->value.cols);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = std::max(0.0, x->value.data[i]);
    auto node = make_node(std::move(out), {x});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    node->backprop = [o, px] {
        for (size_t i = 0; i < o->grad.size(); ++i)
            if (px->value.data[i] > 0.0) px->grad.data[i] += o->grad.data[i];
    };
    return node;
}

// ln(1 + exp(x)) elementwise, computed stably; gradient is the logistic.
inline NodePtr softplus(const NodePtr& x) {
    Matrix out(x->value.rows, x->value.cols);
    for (size_t i = 0; i < out.size(); ++i) {
        double v = x->value.data[i];
        out.data[i] = std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v)));
    }
    auto node = make_node(std::move(out), {x});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    node->backprop = [o, px] {
        for (size_t i = 0; i < o->grad.size(); ++i) {
            double v = px->value.data[i];
            double sig = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
            px->grad.data[i] += o->grad.data[i] * sig;
        }
    };
    return node;
}

// ---------------------------------------------------------------------------
// Matrix product and structural ops.
// ---------------------------------------------------------------------------

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    auto node = make_node(matmul_values(a->value, b->value), {a, b});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* pa = a.get();
    TapeNode* pb = b.get();
    node->backprop = [o, pa, pb] {
        if (pa->requires_grad) add_into(pa->grad, matmul_values(o->grad, transpose_values(pb->value)));
        if (pb->requires_grad) add_into(pb->grad, matmul_values(transpose_values(pa->value), o->grad));
    };
    return node;
}

inline NodePtr transpose(const NodePtr& x) {
    auto node = make_node(transpose_values(x->value), {x});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    node->backprop = [o, px] { add_into(px->grad, transpose_values(o->grad)); };
    return node;
}

// x (b x n) + bias row (1 x n), broadcast over rows.
inline NodePtr add_rowvec(const NodePtr& x, const NodePtr& row) {
    if (row->value.rows != 1 || row->value.cols != x->value.cols)
        throw dimension_error("add_rowvec: bias must be 1x" + std::to_string(x->value.cols));
    Matrix out = x->value;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out(i, j) += row->value(0, j);
    auto node = make_node(std::move(out), {x, row});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    TapeNode* pr = row.get();
    node->backprop = [o, px, pr] {
        if (px->requires_grad) add_into(px->grad, o->grad);
        if (pr->requires_grad)
            for (int i = 0; i < o->grad.rows; ++i)
                for (int j = 0; j < o->grad.cols; ++j) pr->grad(0, j) += o->grad(i, j);
    };
    return node;
}

// Select rows of x by index (repeats allowed); backward scatters with
// accumulation.
inline NodePtr gather_rows(const NodePtr& x, const std::vector<int>& indices) {
    const Matrix& v = x->value;
    for (int idx : indices)
        if (idx < 0 || idx >= v.rows) throw dimension_error("gather_rows: row index out of range");
    Matrix out(static_cast<int>(indices.size()), v.cols);
    for (size_t i = 0; i < indices.size(); ++i)
        for (int j = 0; j < v.cols; ++j) out(static_cast<int>(i), j) = v(indices[i], j);
    auto node = make_node(std::move(out), {x});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    auto idx = std::make_shared<std::vector<int>>(indices);
    node->backprop = [o, px, idx] {
        for (size_t i = 0; i < idx->size(); ++i)
            for (int j = 0; j < o->grad.cols; ++j) px->grad((*idx)[i], j) += o->grad(static_cast<int>(i), j);
    };
    return node;
}

// Diagonal of a square matrix as a 1 x d row.
inline NodePtr extract_diag(const NodePtr& x) {
    if (x->value.rows != x->value.cols) throw dimension_error("extract_diag: input must be square");
    const int d = x->value.rows;
    Matrix out(1, d);
    for (int i = 0; i < d; ++i) out(0, i) = x->value(i, i);
    auto node = make_node(std::move(out), {x});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    node->backprop = [o, px, d] {
        for (int i = 0; i < d; ++i) px->grad(i, i) += o->grad(0, i);
    };
    return node;
}

// ---------------------------------------------------------------------------
// Reductions to a 1x1 scalar node.
// ---------------------------------------------------------------------------

enum class ReduceKind { sum_all, sum_diag, sum_offdiag };

inline NodePtr reduce(ReduceKind kind, const NodePtr& x) {
    const Matrix& v = x->value;
    if (kind != ReduceKind::sum_all && v.rows != v.cols)
        throw dimension_error("reduce: diagonal reductions require a square matrix");
    double s = 0.0;
    switch (kind) {
        case ReduceKind::sum_all:
            for (double e : v.data) s += e;
            break;
        case ReduceKind::sum_diag:
            for (int i = 0; i < v.rows; ++i) s += v(i, i);
            break;
        case ReduceKind::sum_offdiag:
            for (int i = 0; i < v.rows; ++i)
                for (int j = 0; j < v.cols; ++j)
                    if (i != j) s += v(i, j);
            break;
    }
    auto node = make_node(Matrix::full(1, 1, s), {x});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    node->backprop = [kind, o, px] {
        const double g = o->grad.data[0];
        Matrix& gx = px->grad;
        switch (kind) {
            case ReduceKind::sum_all:
                for (double& e : gx.data) e += g;
                break;
            case ReduceKind::sum_diag:
                for (int i = 0; i < gx.rows; ++i) gx(i, i) += g;
                break;
            case ReduceKind::sum_offdiag:
                for (int i = 0; i < gx.rows; ++i)
                    for (int j = 0; j < gx.cols; ++j)
                        if (i != j) gx(i, j) += g;
                break;
        }
    };
    return node;
}

inline NodePtr sum_all(const NodePtr& x) { return reduce(ReduceKind::sum_all, x); }
inline NodePtr sum_diag(const NodePtr& x) { return reduce(ReduceKind::sum_diag, x); }
inline NodePtr sum_offdiag(const NodePtr& x) { return reduce(ReduceKind::sum_offdiag, x); }

// ---------------------------------------------------------------------------
// Row-stabilized log-softmax.
// ---------------------------------------------------------------------------

inline NodePtr log_softmax_rows(const NodePtr& z) {
    const Matrix& v = z->value;
    if (v.cols < 2) throw dimension_error("log_softmax_rows: need at least 2 columns");
    Matrix out(v.rows, v.cols);
    for (int i = 0; i < v.rows; ++i) {
        double mx = v(i, 0);
        for (int j = 1; j < v.cols; ++j) mx = std::max(mx, v(i, j));
        double sum = 0.0;
        for (int j = 0; j < v.cols; ++j) sum += std::exp(v(i, j) - mx);
        double lse = mx + std::log(sum);
        for (int j = 0; j < v.cols; ++j) out(i, j) = v(i, j) - lse;
    }
    auto node = make_node(std::move(out), {z});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* pz = z.get();
    node->backprop = [o, pz] {
        // d/dz_ik of y_ij = delta_jk - softmax(z)_ik
        for (int i = 0; i < o->grad.rows; ++i) {
            double gsum = 0.0;
            for (int j = 0; j < o->grad.cols; ++j) gsum += o->grad(i, j);
            for (int j = 0; j < o->grad.cols; ++j) {
                double p = std::exp(o->value(i, j));  // softmax from the log-softmax value
                pz->grad(i, j) += o->grad(i, j) - p * gsum;
            }
        }
    };
    return node;
}

// ---------------------------------------------------------------------------
// Column standardization (population statistics, eps added to sigma).
// ---------------------------------------------------------------------------

struct Standardized {
    NodePtr z;      // (x - mu) / (sigma + eps), b x d
    NodePtr mu;     // 1 x d
    NodePtr sigma;  // 1 x d, population std
};

inline Standardized standardize_columns(const NodePtr& x, double eps) {
    const Matrix& v = x->value;
    const int b = v.rows, d = v.cols;
    if (b < 2) throw degenerate_batch_error("standardize_columns: need at least 2 rows");
    if (eps <= 0.0) throw config_error("standardize_columns: eps must be positive");

    Matrix mu(1, d), sigma(1, d), z(b, d);
    for (int j = 0; j < d; ++j) {
        double m = 0.0;
        for (int i = 0; i < b; ++i) m += v(i, j);
        m /= b;
        double var = 0.0;
        for (int i = 0; i < b; ++i) {
            double c = v(i, j) - m;
            var += c * c;
        }
        var /= b;
        double sd = std::sqrt(var);
        mu(0, j) = m;
        sigma(0, j) = sd;
        double denom = sd + eps;
        for (int i = 0; i < b; ++i) z(i, j) = (v(i, j) - m) / denom;
    }

    Standardized out;
    out.z = make_node(std::move(z), {x});
    out.mu = make_node(std::move(mu), {x});
    out.sigma = make_node(std::move(sigma), {x});
    if (!x->requires_grad) return out;

    TapeNode* px = x.get();
    TapeNode* zn = out.z.get();
    TapeNode* mn = out.mu.get();
    TapeNode* sn = out.sigma.get();
    // Each closure captures only its own node and the shared parent, plus
    // value copies of the statistics, so sibling outputs may be dropped.
    auto mu_copy = std::make_shared<Matrix>(mn->value);
    auto sd_copy = std::make_shared<Matrix>(sn->value);

    // VJP of z: per column, with dL/dz = g, d = x - mu, s = sigma + eps:
    //   dL/dx_k = (g_k - mean(g))/s - d_k * mean(g .* d) / (s^2 * sigma)
    // The sigma term is dropped for constant columns (sqrt kink at 0).
    out.z->backprop = [px, zn, mu_copy, sd_copy, b, d, eps] {
        for (int j = 0; j < d; ++j) {
            double m = (*mu_copy)(0, j);
            double sd = (*sd_copy)(0, j);
            double s = sd + eps;
            double gmean = 0.0, gdmean = 0.0;
            for (int i = 0; i < b; ++i) {
                double g = zn->grad(i, j);
                gmean += g;
                gdmean += g * (px->value(i, j) - m);
            }
            gmean /= b;
            gdmean /= b;
            for (int i = 0; i < b; ++i) {
                double g = zn->grad(i, j);
                double dk = px->value(i, j) - m;
                double gx = (g - gmean) / s;
                if (sd > 0.0) gx -= dk * gdmean / (s * s * sd);
                px->grad(i, j) += gx;
            }
        }
    };
    out.mu->backprop = [px, mn, b, d] {
        for (int j = 0; j < d; ++j) {
            double g = mn->grad(0, j) / b;
            for (int i = 0; i < b; ++i) px->grad(i, j) += g;
        }
    };
    out.sigma->backprop = [px, sn, mu_copy, b, d] {
        for (int j = 0; j < d; ++j) {
            double sd = sn->value(0, j);
            if (sd <= 0.0) continue;
            double g = sn->grad(0, j);
            double m = (*mu_copy)(0, j);
            for (int i = 0; i < b; ++i) px->grad(i, j) += g * (px->value(i, j) - m) / (b * sd);
        }
    };
    return out;
}

// ---------------------------------------------------------------------------
// Batch normalization over columns with running statistics.
// ---------------------------------------------------------------------------

enum class Mode { train, eval };

struct BatchNormState {
    Matrix scale;         // 1 x d, learnable
    Matrix shift;         // 1 x d, learnable
    Matrix running_mean;  // 1 x d
    Matrix running_var;   // 1 x d, population variance

    explicit BatchNormState(int d)
        : scale(Matrix::full(1, d, 1.0)), shift(1, d), running_mean(1, d), running_var(Matrix::full(1, d, 1.0)) {}
};

// Train mode normalizes by batch statistics and folds them into the running
// estimates (running = (1-momentum)*running + momentum*batch); eval mode
// normalizes by the running estimates. scale/shift enter as graph nodes.
inline NodePtr batch_norm_1d(const NodePtr& x, const NodePtr& scale_node, const NodePtr& shift_node,
                             BatchNormState& state, Mode mode, double momentum, double eps) {
    const Matrix& v = x->value;
    const int d = v.cols;
    if (scale_node->value.cols != d || shift_node->value.cols != d)
        throw dimension_error("batch_norm_1d: scale/shift width mismatch");

    if (mode == Mode::eval) {
        Matrix out(v.rows, d);
        for (int j = 0; j < d; ++j) {
            double denom = std::sqrt(state.running_var(0, j)) + eps;
            double m = state.running_mean(0, j);
            double sc = scale_node->value(0, j), sh = shift_node->value(0, j);
            for (int i = 0; i < v.rows; ++i) out(i, j) = sc * (v(i, j) - m) / denom + sh;
        }
        auto node = make_node(std::move(out), {x, scale_node, shift_node});
        if (!node->requires_grad) return node;
        TapeNode* o = node.get();
        TapeNode* px = x.get();
        TapeNode* ps = scale_node.get();
        TapeNode* ph = shift_node.get();
        Matrix rmean = state.running_mean, rvar = state.running_var;  // frozen copies
        node->backprop = [o, px, ps, ph, rmean, rvar, eps] {
            for (int j = 0; j < o->grad.cols; ++j) {
                double denom = std::sqrt(rvar(0, j)) + eps;
                double sc = ps->value(0, j);
                for (int i = 0; i < o->grad.rows; ++i) {
                    double g = o->grad(i, j);
                    if (px->requires_grad) px->grad(i, j) += g * sc / denom;
                    if (ps->requires_grad) ps->grad(0, j) += g * (px->value(i, j) - rmean(0, j)) / denom;
                    if (ph->requires_grad) ph->grad(0, j) += g;
                }
            }
        };
        return node;
    }

    // train mode
    const int b = v.rows;
    if (b < 2) throw degenerate_batch_error("batch_norm_1d: train mode needs at least 2 rows");
    Matrix mu(1, d), sd(1, d), zhat(b, d), out(b, d);
    for (int j = 0; j < d; ++j) {
        double m = 0.0;
        for (int i = 0; i < b; ++i) m += v(i, j);
        m /= b;
        double var = 0.0;
        for (int i = 0; i < b; ++i) {
            double c = v(i, j) - m;
            var += c * c;
        }
        var /= b;
        mu(0, j) = m;
        sd(0, j) = std::sqrt(var);
        double denom = sd(0, j) + eps;
        double sc = scale_node->value(0, j), sh = shift_node->value(0, j);
        for (int i = 0; i < b; ++i) {
            zhat(i, j) = (v(i, j) - m) / denom;
            out(i, j) = sc * zhat(i, j) + sh;
        }
        state.running_mean(0, j) = (1.0 - momentum) * state.running_mean(0, j) + momentum * m;
        state.running_var(0, j) = (1.0 - momentum) * state.running_var(0, j) + momentum * var;
    }

    auto node = make_node(std::move(out), {x, scale_node, shift_node});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    TapeNode* ps = scale_node.get();
    TapeNode* ph = shift_node.get();
    auto zh = std::make_shared<Matrix>(std::move(zhat));
    auto mus = std::make_shared<Matrix>(std::move(mu));
    auto sds = std::make_shared<Matrix>(std::move(sd));
    node->backprop = [o, px, ps, ph, zh, mus, sds, b, eps] {
        for (int j = 0; j < o->grad.cols; ++j) {
            double sc = ps->value(0, j);
            double sdv = (*sds)(0, j);
            double s = sdv + eps;
            double m = (*mus)(0, j);
            double gmean = 0.0, gdmean = 0.0, gscale = 0.0, gshift = 0.0;
            for (int i = 0; i < b; ++i) {
                double g = o->grad(i, j);
                gshift += g;
                gscale += g * (*zh)(i, j);
                double gz = g * sc;  // upstream into zhat
                gmean += gz;
                gdmean += gz * (px->value(i, j) - m);
            }
            gmean /= b;
            gdmean /= b;
            if (ps->requires_grad) ps->grad(0, j) += gscale;
            if (ph->requires_grad) ph->grad(0, j) += gshift;
            if (px->requires_grad) {
                for (int i = 0; i < b; ++i) {
                    double gz = o->grad(i, j) * sc;
                    double dk = px->value(i, j) - m;
                    double gx = (gz - gmean) / s;
                    if (sdv > 0.0) gx -= dk * gdmean / (s * s * sdv);
                    px->grad(i, j) += gx;
                }
            }
        }
    };
    return node;
}

// ---------------------------------------------------------------------------
// Inverted dropout: identity in eval mode, survivors scaled by 1/(1-p).
// ---------------------------------------------------------------------------

inline NodePtr dropout(const NodePtr& x, double p, Mode mode, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw config_error("dropout: p must lie in [0, 1)");
    if (mode == Mode::eval || p == 0.0) {
        Matrix out = x->value;
        auto node = make_node(std::move(out), {x});
        if (!node->requires_grad) return node;
        TapeNode* o = node.get();
        TapeNode* px = x.get();
        node->backprop = [o, px] { add_into(px->grad, o->grad); };
        return node;
    }
    const double keep_scale = 1.0 / (1.0 - p);
    auto mask = std::make_shared<Matrix>(x->value.rows, x->value.cols);
    Matrix out(x->value.rows, x->value.cols);
    for (size_t i = 0; i < out.size(); ++i) {
        double m = rng.bernoulli(p) ? 0.0 : keep_scale;
        mask->data[i] = m;
        out.data[i] = x->value.data[i] * m;
    }
    auto node = make_node(std::move(out), {x});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* px = x.get();
    node->backprop = [o, px, mask] {
        for (size_t i = 0; i < o->grad.size(); ++i) px->grad.data[i] += o->grad.data[i] * mask->data[i];
    };
    return node;
}

// Row-wise Euclidean distance between paired rows of a and b -> b x 1.
// Zero-distance rows get a zero subgradient.
inline NodePtr rowwise_euclidean(const NodePtr& a, const NodePtr& b) {
    check_same_shape(a->value, b->value, "rowwise_euclidean");
    const int rows = a->value.rows, cols = a->value.cols;
    Matrix out(rows, 1);
    for (int i = 0; i < rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < cols; ++j) {
            double dlt = a->value(i, j) - b->value(i, j);
            s += dlt * dlt;
        }
        out(i, 0) = std::sqrt(s);
    }
    auto node = make_node(std::move(out), {a, b});
    if (!node->requires_grad) return node;
    TapeNode* o = node.get();
    TapeNode* pa = a.get();
    TapeNode* pb = b.get();
    node->backprop = [o, pa, pb, rows, cols] {
        for (int i = 0; i < rows; ++i) {
            double dist = o->value(i, 0);
            if (dist == 0.0) continue;
            double g = o->grad(i, 0) / dist;
            for (int j = 0; j < cols; ++j) {
                double dlt = pa->value(i, j) - pb->value(i, j);
                if (pa->requires_grad) pa->grad(i, j) += g * dlt;
                if (pb->requires_grad) pb->grad(i, j) -= g * dlt;
            }
        }
    };
    return node;
}

// ---------------------------------------------------------------------------
// Reverse pass.
// ---------------------------------------------------------------------------

namespace detail {

inline void topo_visit(TapeNode* n, std::unordered_set<TapeNode*>& seen, std::vector<TapeNode*>& order) {
    if (!n->requires_grad || seen.count(n)) return;
    if (n->backward_done) throw contract_error("backward: tape already consumed (single-use tape)");
    seen.insert(n);
    for (const auto& p : n->parents) topo_visit(p.get(), seen, order);
    order.push_back(n);
}

}  // namespace detail

// Reverse-topological gradient accumulation from a scalar loss. Every node
// reached is marked consumed; re-running backward over any part of the same
// graph throws contract_error.
inline void backward(const NodePtr& loss) {
    if (!loss->value.is_scalar()) throw contract_error("backward: loss must be a 1x1 scalar node");
    if (!loss->requires_grad)
        throw contract_error("backward: loss does not depend on any differentiable leaf");
    std::unordered_set<TapeNode*> seen;
    std::vector<TapeNode*> order;
    detail::topo_visit(loss.get(), seen, order);
    loss->grad.data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TapeNode* n = *it;
        n->backward_done = true;
        if (n->backprop) n->backprop();
    }
}

}  // namespace xview
