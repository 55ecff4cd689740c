#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "xview/dataset.hpp"
#include "xview/rng.hpp"
#include "xview/tape.hpp"

namespace xview {

// Which activation is exported as the retrieval feature.
enum class RetrievalFeature { embedding, classifier_hidden };

struct ModelDims {
    int input_dim = 32;
    int hidden = 64;
    int embed_dim = 32;
    int classifier_hidden = 64;
    int num_classes = 30;

    void validate() const {
        if (input_dim < 1 || hidden < 1 || embed_dim < 1 || classifier_hidden < 1 || num_classes < 2)
            throw config_error("ModelDims: all dimensions must be positive (num_classes >= 2)");
    }
};

// Two-layer MLP embedding head. One parameter set serves both platform
// branches; callers wrap the same matrices into fresh leaves each step.
struct EncoderParams {
    Matrix w1, b1;  // input_dim x hidden, 1 x hidden
    Matrix w2, b2;  // hidden x embed_dim, 1 x embed_dim
};

// FC -> BN -> Dropout -> FC classifier over geo-tag classes, shared by both
// platforms.
struct ClassifierParams {
    Matrix w1, b1;  // embed_dim x classifier_hidden
    BatchNormState bn;
    double p_drop = 0.5;
    Matrix w2, b2;  // classifier_hidden x num_classes

    explicit ClassifierParams(int classifier_hidden = 1) : bn(classifier_hidden) {}
};

struct ModelParams {
    ModelDims dims;
    EncoderParams enc;
    ClassifierParams cls;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
};

inline ModelParams init_model(const ModelDims& dims, double p_drop, Rng& rng) {
    dims.validate();
    if (p_drop < 0.0 || p_drop >= 1.0) throw config_error("init_model: p_drop must lie in [0, 1)");
    ModelParams m;
    m.dims = dims;
    m.enc.w1 = random_normal_matrix(dims.input_dim, dims.hidden, rng, std::sqrt(2.0 / dims.input_dim));
    m.enc.b1 = Matrix(1, dims.hidden);
    m.enc.w2 = random_normal_matrix(dims.hidden, dims.embed_dim, rng, std::sqrt(2.0 / dims.hidden));
    m.enc.b2 = Matrix(1, dims.embed_dim);
    m.cls = ClassifierParams(dims.classifier_hidden);
    m.cls.w1 = random_normal_matrix(dims.embed_dim, dims.classifier_hidden, rng, std::sqrt(2.0 / dims.embed_dim));
    m.cls.b1 = Matrix(1, dims.classifier_hidden);
    m.cls.p_drop = p_drop;
    m.cls.w2 = random_normal_matrix(dims.classifier_hidden, dims.num_classes, rng,
                                    std::sqrt(1.0 / dims.classifier_hidden));
    m.cls.b2 = Matrix(1, dims.num_classes);
    return m;
}

// Graph leaves for one training step. Building fresh leaves per step keeps
// the tape single-use while the underlying parameter storage persists.
struct EncoderLeaves {
    NodePtr w1, b1, w2, b2;
};

struct ClassifierLeaves {
    NodePtr w1, b1, scale, shift, w2, b2;
};

inline EncoderLeaves make_encoder_leaves(const EncoderParams& p) {
    return {leaf(p.w1), leaf(p.b1), leaf(p.w2), leaf(p.b2)};
}

inline ClassifierLeaves make_classifier_leaves(const ClassifierParams& p) {
    return {leaf(p.w1), leaf(p.b1), leaf(p.bn.scale), leaf(p.bn.shift), leaf(p.w2), leaf(p.b2)};
}

// f = relu(x W1 + b1) W2 + b2. Deterministic in both modes.
inline NodePtr encoder_forward(const EncoderLeaves& enc, const NodePtr& x) {
    NodePtr h = relu(add_rowvec(matmul(x, enc.w1), enc.b1));
    return add_rowvec(matmul(h, enc.w2), enc.b2);
}

struct ClassifierOutput {
    NodePtr logits;  // b x C
    NodePtr hidden;  // b x classifier_hidden, pre-BN (alternate retrieval feature)
};

// z = FC -> BN -> Dropout -> FC. Train mode uses batch statistics and a
// stochastic dropout mask; eval mode uses running statistics and identity
// dropout.
inline ClassifierOutput classifier_forward(const ClassifierLeaves& cls, ClassifierParams& state,
                                           const NodePtr& f, Mode mode, Rng& rng, double bn_momentum,
                                           double bn_eps) {
    NodePtr hidden = add_rowvec(matmul(f, cls.w1), cls.b1);
    NodePtr normed = batch_norm_1d(hidden, cls.scale, cls.shift, state.bn, mode, bn_momentum, bn_eps);
    NodePtr dropped = dropout(normed, state.p_drop, mode, rng);
    NodePtr logits = add_rowvec(matmul(dropped, cls.w2), cls.b2);
    return {logits, hidden};
}

// Plain-value embedding of a feature batch (eval mode, no graph).
inline Matrix embed_values(const ModelParams& m, const Matrix& x, RetrievalFeature which) {
    Matrix h = matmul_values(x, m.enc.w1);
    for (int i = 0; i < h.rows; ++i)
        for (int j = 0; j < h.cols; ++j) h(i, j) = std::max(0.0, h(i, j) + m.enc.b1(0, j));
    Matrix f = matmul_values(h, m.enc.w2);
    for (int i = 0; i < f.rows; ++i)
        for (int j = 0; j < f.cols; ++j) f(i, j) += m.enc.b2(0, j);
    if (which == RetrievalFeature::embedding) return f;
    Matrix c = matmul_values(f, m.cls.w1);
    for (int i = 0; i < c.rows; ++i)
        for (int j = 0; j < c.cols; ++j) c(i, j) += m.cls.b1(0, j);
    return c;
}

// ---------------------------------------------------------------------------
// Checkpoint IO: versioned text dump of every tensor with shape headers.
// ---------------------------------------------------------------------------

namespace detail {

struct NamedTensor {
    const char* name;
    Matrix* tensor;
};

inline std::vector<NamedTensor> checkpoint_tensors(ModelParams& m) {
    return {
        {"enc.w1", &m.enc.w1},
        {"enc.b1", &m.enc.b1},
        {"enc.w2", &m.enc.w2},
        {"enc.b2", &m.enc.b2},
        {"cls.w1", &m.cls.w1},
        {"cls.b1", &m.cls.b1},
        {"cls.bn.scale", &m.cls.bn.scale},
        {"cls.bn.shift", &m.cls.bn.shift},
        {"cls.bn.running_mean", &m.cls.bn.running_mean},
        {"cls.bn.running_var", &m.cls.bn.running_var},
        {"cls.w2", &m.cls.w2},
        {"cls.b2", &m.cls.b2},
    };
}

}  // namespace detail

inline void write_checkpoint(const ModelParams& m, std::ostream& os) {
    os << "xview-checkpoint 1\n";
    os << "dims " << m.dims.input_dim << ' ' << m.dims.hidden << ' ' << m.dims.embed_dim << ' '
       << m.dims.classifier_hidden << ' ' << m.dims.num_classes << '\n';
    os << "pdrop " << format_double(m.cls.p_drop) << '\n';
    os << "bn " << format_double(m.bn_momentum) << ' ' << format_double(m.bn_eps) << '\n';
    auto tensors = detail::checkpoint_tensors(const_cast<ModelParams&>(m));
    for (const auto& nt : tensors) {
        const Matrix& t = *nt.tensor;
        os << "tensor " << nt.name << ' ' << t.rows << ' ' << t.cols << '\n';
        for (int i = 0; i < t.rows; ++i) {
            for (int j = 0; j < t.cols; ++j) {
                if (j) os << ' ';
                os << format_double(t(i, j));
            }
            os << '\n';
        }
    }
    os << "end\n";
}

inline void write_checkpoint_file(const ModelParams& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open checkpoint '" + path + "' for writing");
    write_checkpoint(m, os);
    if (!os) throw io_error("write failed for checkpoint '" + path + "'");
}

inline ModelParams read_checkpoint(std::istream& is, const std::string& path = "<stream>") {
    std::string line;
    if (!std::getline(is, line) || line != "xview-checkpoint 1")
        throw io_error(path + ": not an xview-checkpoint (version 1) file");
    ModelParams m;
    std::string tag;
    if (!(is >> tag) || tag != "dims") throw io_error(path + ": expected dims record");
    if (!(is >> m.dims.input_dim >> m.dims.hidden >> m.dims.embed_dim >> m.dims.classifier_hidden >>
          m.dims.num_classes))
        throw io_error(path + ": bad dims record");
    m.dims.validate();
    if (!(is >> tag) || tag != "pdrop") throw io_error(path + ": expected pdrop record");
    if (!(is >> m.cls.p_drop)) throw io_error(path + ": bad pdrop record");
    if (!(is >> tag) || tag != "bn") throw io_error(path + ": expected bn record");
    if (!(is >> m.bn_momentum >> m.bn_eps)) throw io_error(path + ": bad bn record");

    auto tensors = detail::checkpoint_tensors(m);
    for (auto& nt : tensors) {
        std::string name;
        int rows = 0, cols = 0;
        if (!(is >> tag >> name >> rows >> cols) || tag != "tensor" || name != nt.name)
            throw io_error(path + ": expected tensor " + nt.name);
        if (rows < 1 || cols < 1) throw io_error(path + ": bad tensor shape for " + name);
        Matrix t(rows, cols);
        for (double& v : t.data)
            if (!(is >> v)) throw io_error(path + ": truncated tensor " + name);
        *nt.tensor = std::move(t);
    }
    if (!(is >> tag) || tag != "end") throw io_error(path + ": missing end marker");
    return m;
}

inline ModelParams read_checkpoint_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open checkpoint '" + path + "'");
    return read_checkpoint(is, path);
}

}  // namespace xview
