#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gaborcomp/feature_maps.hpp"

namespace gaborcomp {

// Patch-embedding geometry for one resolution branch. Kernel equals
// stride, so patches tile the (zero-padded) feature matrix without
// overlap; grid cells are serialized row-major into tokens.
struct BranchShape {
    int rows = 0, cols = 0;  // feature matrix shape
    int kh = 0, kw = 0;      // kernel == stride

    int grid_r() const { return (rows + kh - 1) / kh; }
    int grid_c() const { return (cols + kw - 1) / kw; }
    int tokens() const { return grid_r() * grid_c(); }
    int area() const { return kh * kw; }
};

struct ModelArch {
    int m = 0;
    int j_count = 0;
    int heads = 4;
    int d_head = 32;
    int d_model = 32;
    int n_classes = kNumClasses;
    std::vector<BranchShape> branches;

    int total_tokens() const;

    // Derives the branch grid for segment length m: branch j sees a
    // 2^j x m/2^j matrix and uses a kernel of lround(2^(j/1.75)) by
    // lround(2^(6-j/1.75)), clamped to the matrix extent.
    static ModelArch make(int m, int heads, int d_head);
};

// Flat parameter vector layout. Every weight lives in one named slice;
// matrices are column-major inside their slice. The single layout makes
// the optimizer, serialization and finite-difference checks trivial.
struct ParamLayout {
    enum class Kind : uint8_t { Weight, Bias, Gain };
    struct Slice {
        std::string name;
        long offset = 0;
        long rows = 0;
        long cols = 0;
        Kind kind = Kind::Weight;
        long size() const { return rows * cols; }
    };
    std::vector<Slice> slices;
    long total = 0;

    std::vector<int> conv_w, conv_b, proj_w, proj_b;  // per branch
    int embed_gain = -1, embed_bias = -1;
    std::vector<int> wq, wk, wv;                      // per head
    int wo = -1;
    int ln1_gain = -1, ln1_bias = -1;
    int ffn_w = -1, ffn_b = -1;
    int ln2_gain = -1, ln2_bias = -1;
    int head_w = -1, head_b = -1;

    static ParamLayout make(const ModelArch& arch);
};

struct Model {
    ModelArch arch;
    ParamLayout layout;
    Eigen::VectorXd params;
    uint64_t init_seed = 0;

    Eigen::Map<const Eigen::MatrixXd> view(int slice) const;
    Eigen::Map<Eigen::MatrixXd> view(int slice);
};

// Maps one layout slice of an external vector (e.g. a gradient buffer).
Eigen::Map<Eigen::MatrixXd> slice_view(const ParamLayout& layout, int slice,
                                       Eigen::VectorXd& v);

// Glorot-uniform weights, zero biases, unit gains; the draw order is
// fixed by the layout, so a seed fully determines the parameters.
Model init_model(const ModelArch& arch, uint64_t seed);

// Patch embedding of all branches followed by the shared layer norm;
// rows are tokens in branch order (ascending j).
Eigen::MatrixXd tokenize(const FeatureStack& stack, const Model& model);

// Scaled dot-product attention with a max-subtracted softmax. Exposes
// the row-stochastic weight matrix through probs_out when requested.
Eigen::MatrixXd attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                          const Eigen::MatrixXd& v,
                          Eigen::MatrixXd* probs_out = nullptr);

Eigen::MatrixXd multihead(const Eigen::MatrixXd& g, const Model& model);

// One encoder layer: LN(g + MHA(g)) fed through a single ReLU layer with
// a second residual and layer norm.
Eigen::MatrixXd encoder_layer(const Eigen::MatrixXd& g, const Model& model);

// Encoder, mean pooling and the linear head applied to an arbitrary
// token matrix; returns class probabilities.
Eigen::VectorXd forward_from_tokens(const Eigen::MatrixXd& g, const Model& model);

Eigen::VectorXd forward(const FeatureStack& stack, const Model& model);

// Argmax prediction (ties resolve to the lowest class index).
std::pair<int, Eigen::VectorXd> predict(const FeatureStack& stack, const Model& model);

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    int batch_size = 150;
    int epochs = 500;
    uint64_t seed = 0;
};

// Mean cross-entropy over the batch; optionally counts argmax hits.
double batch_loss(const std::vector<const FeatureStack*>& batch, const Model& model,
                  long* correct = nullptr);

// Mean loss plus mean gradient via reverse-mode differentiation of the
// whole network. Samples are processed in fixed-size chunks whose
// partial sums are reduced in chunk order, so the result is identical
// for any worker count.
double loss_and_grads(const std::vector<const FeatureStack*>& batch,
                      const Model& model, Eigen::VectorXd& grads,
                      long* correct = nullptr);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> val_loss;
    std::optional<double> val_acc;
};

// SGD with heavy-ball momentum over shuffled mini-batches. val_set may
// be empty; history (when given) receives one entry per epoch.
Model train(const std::vector<const FeatureStack*>& train_set,
            const std::vector<const FeatureStack*>& val_set, const ModelArch& arch,
            const TrainConfig& cfg, std::vector<EpochStats>* history = nullptr);

struct ParamCount {
    long total = 0;
    std::vector<std::pair<std::string, long>> entries;
};

ParamCount count_params(const ModelArch& arch);

}  // namespace gaborcomp
