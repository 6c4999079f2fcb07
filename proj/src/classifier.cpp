#include "gaborcomp/classifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>

namespace gaborcomp {

int ModelArch::total_tokens() const {
    int n = 0;
    for (const BranchShape& b : branches) n += b.tokens();
    return n;
}

ModelArch ModelArch::make(int m, int heads, int d_head) {
    const int levels = log2_exact(m, "ModelArch") - 1;
    if (levels < 1) throw InvalidResolution("ModelArch: M must be at least 4");
    if (heads < 1) throw InvalidSpec("ModelArch: heads must be at least 1");
    if (d_head < 1) throw InvalidSpec("ModelArch: d_head must be at least 1");
    ModelArch arch;
    arch.m = m;
    arch.j_count = levels;
    arch.heads = heads;
    arch.d_head = d_head;
    arch.branches.reserve(static_cast<size_t>(levels));
    for (int j = 1; j <= levels; ++j) {
        BranchShape b;
        b.rows = 1 << j;
        b.cols = m / b.rows;
        const double e = static_cast<double>(j) / 1.75;
        b.kh = std::clamp<int>(static_cast<int>(std::lround(std::pow(2.0, e))), 1, b.rows);
        b.kw = std::clamp<int>(static_cast<int>(std::lround(std::pow(2.0, 6.0 - e))), 1, b.cols);
        arch.branches.push_back(b);
    }
    return arch;
}

ParamLayout ParamLayout::make(const ModelArch& arch) {
    ParamLayout layout;
    const auto add = [&layout](const std::string& name, long rows, long cols,
                               Kind kind) {
        Slice s;
        s.name = name;
        s.offset = layout.total;
        s.rows = rows;
        s.cols = cols;
        s.kind = kind;
        layout.total += s.size();
        layout.slices.push_back(std::move(s));
        return static_cast<int>(layout.slices.size()) - 1;
    };

    const long d = arch.d_model;
    for (int j = 1; j <= arch.j_count; ++j) {
        const BranchShape& b = arch.branches[static_cast<size_t>(j - 1)];
        const std::string p = "branch" + std::to_string(j) + ".";
        layout.conv_w.push_back(add(p + "conv_w", d, b.area(), Kind::Weight));
        layout.conv_b.push_back(add(p + "conv_b", d, 1, Kind::Bias));
        layout.proj_w.push_back(add(p + "proj_w", d, d, Kind::Weight));
        layout.proj_b.push_back(add(p + "proj_b", d, 1, Kind::Bias));
    }
    layout.embed_gain = add("embed.ln_gain", d, 1, Kind::Gain);
    layout.embed_bias = add("embed.ln_bias", d, 1, Kind::Bias);
    for (int h = 1; h <= arch.heads; ++h) {
        const std::string p = "enc.head" + std::to_string(h) + ".";
        layout.wq.push_back(add(p + "wq", d, arch.d_head, Kind::Weight));
        layout.wk.push_back(add(p + "wk", d, arch.d_head, Kind::Weight));
        layout.wv.push_back(add(p + "wv", d, arch.d_head, Kind::Weight));
    }
    layout.wo = add("enc.wo", static_cast<long>(arch.heads) * arch.d_head, d, Kind::Weight);
    layout.ln1_gain = add("enc.ln1_gain", d, 1, Kind::Gain);
    layout.ln1_bias = add("enc.ln1_bias", d, 1, Kind::Bias);
    layout.ffn_w = add("enc.ffn_w", d, d, Kind::Weight);
    layout.ffn_b = add("enc.ffn_b", d, 1, Kind::Bias);
    layout.ln2_gain = add("enc.ln2_gain", d, 1, Kind::Gain);
    layout.ln2_bias = add("enc.ln2_bias", d, 1, Kind::Bias);
    layout.head_w = add("head.w", d, arch.n_classes, Kind::Weight);
    layout.head_b = add("head.b", arch.n_classes, 1, Kind::Bias);
    return layout;
}

Eigen::Map<const Eigen::MatrixXd> Model::view(int slice) const {
    const ParamLayout::Slice& s = layout.slices[static_cast<size_t>(slice)];
    return {params.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<Eigen::MatrixXd> Model::view(int slice) {
    const ParamLayout::Slice& s = layout.slices[static_cast<size_t>(slice)];
    return {params.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<Eigen::MatrixXd> slice_view(const ParamLayout& layout, int slice,
                                       Eigen::VectorXd& v) {
    const ParamLayout::Slice& s = layout.slices[static_cast<size_t>(slice)];
    return {v.data() + s.offset, s.rows, s.cols};
}

Model init_model(const ModelArch& arch, uint64_t seed) {
    Model model;
    model.arch = arch;
    model.layout = ParamLayout::make(arch);
    model.params.resize(model.layout.total);
    model.init_seed = seed;
    Rng rng(seed);
    for (const ParamLayout::Slice& s : model.layout.slices) {
        switch (s.kind) {
            case ParamLayout::Kind::Weight: {
                const double limit = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
                for (long i = 0; i < s.size(); ++i)
                    model.params[s.offset + i] = limit * (2.0 * rng.next_double() - 1.0);
                break;
            }
            case ParamLayout::Kind::Bias:
                model.params.segment(s.offset, s.size()).setZero();
                break;
            case ParamLayout::Kind::Gain:
                model.params.segment(s.offset, s.size()).setOnes();
                break;
        }
    }
    return model;
}

namespace {

constexpr double kLnEps = 1e-5;
constexpr int kChunk = 8;

struct LnCache {
    Eigen::MatrixXd xhat;
    Eigen::VectorXd inv_std;
};

// Row-wise layer norm with biased variance and epsilon inside the root.
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                           const Eigen::VectorXd& bias, LnCache* cache) {
    const long n = x.rows(), d = x.cols();
    Eigen::MatrixXd out(n, d);
    Eigen::MatrixXd xhat(n, d);
    Eigen::VectorXd inv_std(n);
    for (long i = 0; i < n; ++i) {
        const double mean = x.row(i).mean();
        double var = 0.0;
        for (long j = 0; j < d; ++j) {
            const double c = x(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        inv_std[i] = inv;
        for (long j = 0; j < d; ++j) {
            const double h = (x(i, j) - mean) * inv;
            xhat(i, j) = h;
            out(i, j) = h * gain[j] + bias[j];
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dy, const LnCache& cache,
                                    const Eigen::VectorXd& gain,
                                    Eigen::Map<Eigen::MatrixXd> dgain,
                                    Eigen::Map<Eigen::MatrixXd> dbias) {
    const long n = dy.rows(), d = dy.cols();
    Eigen::MatrixXd dx(n, d);
    Eigen::VectorXd dxhat(d);
    for (long i = 0; i < n; ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (long j = 0; j < d; ++j) {
            const double v = dy(i, j) * gain[j];
            dxhat[j] = v;
            m1 += v;
            m2 += v * cache.xhat(i, j);
            dgain(j, 0) += dy(i, j) * cache.xhat(i, j);
            dbias(j, 0) += dy(i, j);
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        const double inv = cache.inv_std[i];
        for (long j = 0; j < d; ++j)
            dx(i, j) = inv * (dxhat[j] - m1 - cache.xhat(i, j) * m2);
    }
    return dx;
}

void check_finite(const Eigen::MatrixXd& x, const char* stage) {
    if (!x.allFinite())
        throw NumericalError(std::string(stage) + " produced non-finite values");
}

// Copies patch (pr, pc) of mat into buf, row-major within the patch,
// zero-filling cells that fall outside the matrix (bottom/right pad).
void extract_patch(const Eigen::MatrixXd& mat, const BranchShape& b, int pr, int pc,
                   Eigen::VectorXd& buf) {
    buf.setZero(b.area());
    const int r0 = pr * b.kh, c0 = pc * b.kw;
    for (int dr = 0; dr < b.kh; ++dr) {
        const int r = r0 + dr;
        if (r >= b.rows) break;
        for (int dc = 0; dc < b.kw; ++dc) {
            const int c = c0 + dc;
            if (c >= b.cols) break;
            buf[dr * b.kw + dc] = mat(r, c);
        }
    }
}

void check_stack_shape(const FeatureStack& stack, const ModelArch& arch) {
    if (stack.j_count() != arch.j_count)
        throw DimError("stack has " + std::to_string(stack.j_count()) +
                       " resolution levels, model expects " + std::to_string(arch.j_count));
    for (int j = 1; j <= arch.j_count; ++j) {
        const BranchShape& b = arch.branches[static_cast<size_t>(j - 1)];
        const Eigen::MatrixXd& mat = stack.matrices[static_cast<size_t>(j - 1)];
        if (mat.rows() != b.rows || mat.cols() != b.cols)
            throw DimError("level " + std::to_string(j) + " matrix is " +
                           std::to_string(mat.rows()) + "x" + std::to_string(mat.cols()) +
                           ", model expects " + std::to_string(b.rows) + "x" +
                           std::to_string(b.cols));
    }
}

struct Trace {
    Eigen::MatrixXd conv_out;     // N x d_model, pre-projection activations
    Eigen::MatrixXd raw_tokens;   // N x d_model, pre layer norm
    LnCache ln_embed;
    Eigen::MatrixXd g;            // token matrix fed to the encoder
    std::vector<Eigen::MatrixXd> qh, kh, vh, ph;  // per head
    Eigen::MatrixXd concat;       // N x heads*d_head
    Eigen::MatrixXd mha_out;
    Eigen::MatrixXd s1;
    LnCache ln1;
    Eigen::MatrixXd z1;
    Eigen::MatrixXd ffn_pre;      // pre-ReLU
    Eigen::MatrixXd s2;
    LnCache ln2;
    Eigen::MatrixXd enc_out;
    Eigen::VectorXd pooled;
    Eigen::VectorXd logits;
    Eigen::VectorXd probs;
};

Eigen::MatrixXd tokenize_core(const FeatureStack& stack, const Model& model,
                              Trace* tr) {
    check_stack_shape(stack, model.arch);
    const ModelArch& arch = model.arch;
    const int n = arch.total_tokens();
    Eigen::MatrixXd conv_out(n, arch.d_model);
    Eigen::MatrixXd raw(n, arch.d_model);
    Eigen::VectorXd patch;
    int row = 0;
    for (int j = 1; j <= arch.j_count; ++j) {
        const BranchShape& b = arch.branches[static_cast<size_t>(j - 1)];
        const auto cw = model.view(model.layout.conv_w[j - 1]);
        const auto cb = model.view(model.layout.conv_b[j - 1]);
        const auto pw = model.view(model.layout.proj_w[j - 1]);
        const auto pb = model.view(model.layout.proj_b[j - 1]);
        const Eigen::MatrixXd& mat = stack.matrices[static_cast<size_t>(j - 1)];
        for (int pr = 0; pr < b.grid_r(); ++pr) {
            for (int pc = 0; pc < b.grid_c(); ++pc, ++row) {
                extract_patch(mat, b, pr, pc, patch);
                const Eigen::VectorXd v = cw * patch + cb.col(0);
                conv_out.row(row) = v.transpose();
                raw.row(row) = (pw * v + pb.col(0)).transpose();
            }
        }
    }
    check_finite(raw, "tokenize");
    LnCache cache;
    Eigen::MatrixXd g = layer_norm(raw, model.view(model.layout.embed_gain).col(0),
                                   model.view(model.layout.embed_bias).col(0),
                                   tr ? &cache : nullptr);
    if (tr) {
        tr->conv_out = std::move(conv_out);
        tr->raw_tokens = std::move(raw);
        tr->ln_embed = std::move(cache);
    }
    return g;
}

// Row-stable softmax in place.
void softmax_rows(Eigen::MatrixXd& u) {
    for (long i = 0; i < u.rows(); ++i) {
        const double mx = u.row(i).maxCoeff();
        double sum = 0.0;
        for (long j = 0; j < u.cols(); ++j) {
            const double e = std::exp(u(i, j) - mx);
            u(i, j) = e;
            sum += e;
        }
        u.row(i) /= sum;
    }
}

void encoder_core(const Eigen::MatrixXd& g, const Model& model, Trace& tr) {
    const ModelArch& arch = model.arch;
    const long n = g.rows();
    const int dh = arch.d_head;
    if (g.cols() != arch.d_model)
        throw DimError("token matrix has " + std::to_string(g.cols()) +
                       " columns, model expects " + std::to_string(arch.d_model));

    tr.qh.resize(static_cast<size_t>(arch.heads));
    tr.kh.resize(static_cast<size_t>(arch.heads));
    tr.vh.resize(static_cast<size_t>(arch.heads));
    tr.ph.resize(static_cast<size_t>(arch.heads));
    tr.concat.resize(n, static_cast<long>(arch.heads) * dh);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < arch.heads; ++h) {
        tr.qh[h].noalias() = g * model.view(model.layout.wq[h]);
        tr.kh[h].noalias() = g * model.view(model.layout.wk[h]);
        tr.vh[h].noalias() = g * model.view(model.layout.wv[h]);
        Eigen::MatrixXd u = tr.qh[h] * tr.kh[h].transpose() * scale;
        softmax_rows(u);
        tr.ph[h] = std::move(u);
        tr.concat.middleCols(static_cast<long>(h) * dh, dh).noalias() =
            tr.ph[h] * tr.vh[h];
    }
    tr.mha_out.noalias() = tr.concat * model.view(model.layout.wo);
    check_finite(tr.mha_out, "attention");

    tr.s1 = g + tr.mha_out;
    tr.z1 = layer_norm(tr.s1, model.view(model.layout.ln1_gain).col(0),
                       model.view(model.layout.ln1_bias).col(0), &tr.ln1);

    tr.ffn_pre.noalias() = tr.z1 * model.view(model.layout.ffn_w);
    tr.ffn_pre.rowwise() += model.view(model.layout.ffn_b).col(0).transpose();
    tr.s2 = tr.z1 + tr.ffn_pre.cwiseMax(0.0);
    tr.enc_out = layer_norm(tr.s2, model.view(model.layout.ln2_gain).col(0),
                            model.view(model.layout.ln2_bias).col(0), &tr.ln2);
    check_finite(tr.enc_out, "encoder");
}

void head_core(const Model& model, Trace& tr) {
    tr.pooled = tr.enc_out.colwise().mean().transpose();
    tr.logits = model.view(model.layout.head_w).transpose() * tr.pooled +
                model.view(model.layout.head_b).col(0);
    Eigen::VectorXd probs = tr.logits;
    const double mx = probs.maxCoeff();
    probs = (probs.array() - mx).exp();
    probs /= probs.sum();
    tr.probs = std::move(probs);
    if (!tr.probs.allFinite()) throw NumericalError("head produced non-finite values");
}

double forward_sample(const FeatureStack& stack, const Model& model, Trace& tr) {
    tr.g = tokenize_core(stack, model, &tr);
    encoder_core(tr.g, model, tr);
    head_core(model, tr);
    if (!stack.label)
        throw InvalidLabel("loss requires a labeled stack (segment '" +
                           stack.segment_ref + "' has no label)");
    const int y = static_cast<int>(*stack.label);
    const double mx = tr.logits.maxCoeff();
    const double lse = mx + std::log((tr.logits.array() - mx).exp().sum());
    return lse - tr.logits[y];
}

void backward_sample(const FeatureStack& stack, const Model& model, const Trace& tr,
                     Eigen::VectorXd& grads) {
    const ModelArch& arch = model.arch;
    const ParamLayout& layout = model.layout;
    const long n = tr.g.rows();
    const int dh = arch.d_head;
    const int y = static_cast<int>(*stack.label);

    // Head and pooling.
    Eigen::VectorXd dlogits = tr.probs;
    dlogits[y] -= 1.0;
    slice_view(layout, layout.head_w, grads).noalias() += tr.pooled * dlogits.transpose();
    slice_view(layout, layout.head_b, grads).col(0) += dlogits;
    const Eigen::VectorXd dpooled = model.view(layout.head_w) * dlogits;
    Eigen::MatrixXd d_enc(n, arch.d_model);
    d_enc.rowwise() = dpooled.transpose() / static_cast<double>(n);

    // Second layer norm and the ReLU block.
    const Eigen::MatrixXd d_s2 = layer_norm_backward(
        d_enc, tr.ln2, model.view(layout.ln2_gain).col(0),
        slice_view(layout, layout.ln2_gain, grads), slice_view(layout, layout.ln2_bias, grads));
    Eigen::MatrixXd d_z1 = d_s2;
    const Eigen::MatrixXd d_act =
        (tr.ffn_pre.array() > 0.0).select(d_s2, Eigen::MatrixXd::Zero(n, arch.d_model));
    slice_view(layout, layout.ffn_w, grads).noalias() += tr.z1.transpose() * d_act;
    slice_view(layout, layout.ffn_b, grads).col(0) += d_act.colwise().sum().transpose();
    d_z1.noalias() += d_act * model.view(layout.ffn_w).transpose();

    // First layer norm and the attention block.
    const Eigen::MatrixXd d_s1 = layer_norm_backward(
        d_z1, tr.ln1, model.view(layout.ln1_gain).col(0),
        slice_view(layout, layout.ln1_gain, grads), slice_view(layout, layout.ln1_bias, grads));
    Eigen::MatrixXd d_g = d_s1;
    const Eigen::MatrixXd& d_y = d_s1;

    slice_view(layout, layout.wo, grads).noalias() += tr.concat.transpose() * d_y;
    const Eigen::MatrixXd d_concat = d_y * model.view(layout.wo).transpose();

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < arch.heads; ++h) {
        const Eigen::MatrixXd d_head_out = d_concat.middleCols(static_cast<long>(h) * dh, dh);
        const Eigen::MatrixXd d_p = d_head_out * tr.vh[h].transpose();
        const Eigen::MatrixXd d_v = tr.ph[h].transpose() * d_head_out;
        // Softmax backward, row by row.
        Eigen::MatrixXd d_u(n, n);
        for (long i = 0; i < n; ++i) {
            const double dot = d_p.row(i).dot(tr.ph[h].row(i));
            d_u.row(i) = (d_p.row(i).array() - dot) * tr.ph[h].row(i).array();
        }
        const Eigen::MatrixXd d_q = d_u * tr.kh[h] * scale;
        const Eigen::MatrixXd d_k = d_u.transpose() * tr.qh[h] * scale;
        slice_view(layout, layout.wq[h], grads).noalias() += tr.g.transpose() * d_q;
        slice_view(layout, layout.wk[h], grads).noalias() += tr.g.transpose() * d_k;
        slice_view(layout, layout.wv[h], grads).noalias() += tr.g.transpose() * d_v;
        d_g.noalias() += d_q * model.view(layout.wq[h]).transpose();
        d_g.noalias() += d_k * model.view(layout.wk[h]).transpose();
        d_g.noalias() += d_v * model.view(layout.wv[h]).transpose();
    }

    // Shared embedding layer norm back to the raw tokens.
    const Eigen::MatrixXd d_raw = layer_norm_backward(
        d_g, tr.ln_embed, model.view(layout.embed_gain).col(0),
        slice_view(layout, layout.embed_gain, grads),
        slice_view(layout, layout.embed_bias, grads));

    // Branch projections and convolutions.
    Eigen::VectorXd patch;
    int row = 0;
    for (int j = 1; j <= arch.j_count; ++j) {
        const BranchShape& b = arch.branches[static_cast<size_t>(j - 1)];
        const Eigen::MatrixXd& mat = stack.matrices[static_cast<size_t>(j - 1)];
        const auto pw = model.view(layout.proj_w[j - 1]);
        auto d_cw = slice_view(layout, layout.conv_w[j - 1], grads);
        auto d_cb = slice_view(layout, layout.conv_b[j - 1], grads);
        auto d_pw = slice_view(layout, layout.proj_w[j - 1], grads);
        auto d_pb = slice_view(layout, layout.proj_b[j - 1], grads);
        for (int pr = 0; pr < b.grid_r(); ++pr) {
            for (int pc = 0; pc < b.grid_c(); ++pc, ++row) {
                const Eigen::VectorXd d_tok = d_raw.row(row).transpose();
                const Eigen::VectorXd v = tr.conv_out.row(row).transpose();
                d_pw.noalias() += d_tok * v.transpose();
                d_pb.col(0) += d_tok;
                const Eigen::VectorXd d_v = pw.transpose() * d_tok;
                extract_patch(mat, b, pr, pc, patch);
                d_cw.noalias() += d_v * patch.transpose();
                d_cb.col(0) += d_v;
            }
        }
    }
}

}  // namespace

Eigen::MatrixXd tokenize(const FeatureStack& stack, const Model& model) {
    return tokenize_core(stack, model, nullptr);
}

Eigen::MatrixXd attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                          const Eigen::MatrixXd& v, Eigen::MatrixXd* probs_out) {
    if (q.cols() != k.cols())
        throw DimError("attention: query and key widths differ");
    if (k.rows() != v.rows())
        throw DimError("attention: key and value token counts differ");
    Eigen::MatrixXd u = q * k.transpose() / std::sqrt(static_cast<double>(q.cols()));
    softmax_rows(u);
    if (probs_out) *probs_out = u;
    return u * v;
}

Eigen::MatrixXd multihead(const Eigen::MatrixXd& g, const Model& model) {
    Trace tr;
    const ModelArch& arch = model.arch;
    const int dh = arch.d_head;
    tr.qh.resize(static_cast<size_t>(arch.heads));
    tr.kh.resize(static_cast<size_t>(arch.heads));
    tr.vh.resize(static_cast<size_t>(arch.heads));
    tr.ph.resize(static_cast<size_t>(arch.heads));
    tr.concat.resize(g.rows(), static_cast<long>(arch.heads) * dh);
    for (int h = 0; h < arch.heads; ++h) {
        tr.qh[h].noalias() = g * model.view(model.layout.wq[h]);
        tr.kh[h].noalias() = g * model.view(model.layout.wk[h]);
        tr.vh[h].noalias() = g * model.view(model.layout.wv[h]);
        tr.concat.middleCols(static_cast<long>(h) * dh, dh) =
            attention(tr.qh[h], tr.kh[h], tr.vh[h]);
    }
    return tr.concat * model.view(model.layout.wo);
}

Eigen::MatrixXd encoder_layer(const Eigen::MatrixXd& g, const Model& model) {
    Trace tr;
    encoder_core(g, model, tr);
    return tr.enc_out;
}

Eigen::VectorXd forward_from_tokens(const Eigen::MatrixXd& g, const Model& model) {
    Trace tr;
    encoder_core(g, model, tr);
    head_core(model, tr);
    return tr.probs;
}

Eigen::VectorXd forward(const FeatureStack& stack, const Model& model) {
    Trace tr;
    tr.g = tokenize_core(stack, model, &tr);
    encoder_core(tr.g, model, tr);
    head_core(model, tr);
    return tr.probs;
}

std::pair<int, Eigen::VectorXd> predict(const FeatureStack& stack, const Model& model) {
    Eigen::VectorXd probs = forward(stack, model);
    int best = 0;
    for (int c = 1; c < probs.size(); ++c)
        if (probs[c] > probs[best]) best = c;
    return {best, std::move(probs)};
}

namespace {

// Shared chunked evaluation. Chunk partial sums are combined in chunk
// order so results do not depend on the worker count.
double batch_eval(const std::vector<const FeatureStack*>& batch, const Model& model,
                  Eigen::VectorXd* grads, long* correct) {
    if (batch.empty()) throw EmptyInput("batch evaluation: empty batch");
    const int n = static_cast<int>(batch.size());
    const int n_chunks = (n + kChunk - 1) / kChunk;
    std::vector<double> chunk_loss(static_cast<size_t>(n_chunks), 0.0);
    std::vector<long> chunk_correct(static_cast<size_t>(n_chunks), 0);
    std::vector<Eigen::VectorXd> chunk_grads;
    if (grads) chunk_grads.resize(static_cast<size_t>(n_chunks));

    std::exception_ptr failure;
    std::mutex failure_mu;
    parallel_for(n_chunks, [&](int c) {
        try {
            Eigen::VectorXd* g = nullptr;
            if (grads) {
                chunk_grads[c] = Eigen::VectorXd::Zero(model.layout.total);
                g = &chunk_grads[c];
            }
            const int lo = c * kChunk;
            const int hi = std::min(n, lo + kChunk);
            for (int i = lo; i < hi; ++i) {
                Trace tr;
                const double loss = forward_sample(*batch[i], model, tr);
                chunk_loss[c] += loss;
                int best = 0;
                for (int k = 1; k < tr.probs.size(); ++k)
                    if (tr.probs[k] > tr.probs[best]) best = k;
                if (best == static_cast<int>(*batch[i]->label)) ++chunk_correct[c];
                if (g) backward_sample(*batch[i], model, tr, *g);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mu);
            if (!failure) failure = std::current_exception();
        }
    });
    if (failure) std::rethrow_exception(failure);

    double loss = 0.0;
    long hits = 0;
    if (grads) grads->setZero(model.layout.total);
    for (int c = 0; c < n_chunks; ++c) {
        loss += chunk_loss[c];
        hits += chunk_correct[c];
        if (grads) *grads += chunk_grads[c];
    }
    if (grads) *grads /= static_cast<double>(n);
    if (correct) *correct = hits;
    return loss / n;
}

}  // namespace

double batch_loss(const std::vector<const FeatureStack*>& batch, const Model& model,
                  long* correct) {
    return batch_eval(batch, model, nullptr, correct);
}

double loss_and_grads(const std::vector<const FeatureStack*>& batch, const Model& model,
                      Eigen::VectorXd& grads, long* correct) {
    return batch_eval(batch, model, &grads, correct);
}

Model train(const std::vector<const FeatureStack*>& train_set,
            const std::vector<const FeatureStack*>& val_set, const ModelArch& arch,
            const TrainConfig& cfg, std::vector<EpochStats>* history) {
    if (train_set.empty()) throw EmptyInput("train: empty training set");
    if (cfg.batch_size < 1) throw InvalidSpec("train: batch_size must be positive");
    if (cfg.epochs < 0) throw InvalidSpec("train: epochs must be non-negative");
    if (!(cfg.lr > 0.0)) throw InvalidSpec("train: learning rate must be positive");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw InvalidSpec("train: momentum must lie in [0, 1)");

    std::array<bool, kNumClasses> seen{};
    for (const FeatureStack* s : train_set) {
        if (!s->label)
            throw InvalidLabel("train: stack '" + s->segment_ref + "' has no label");
        seen[static_cast<size_t>(*s->label)] = true;
        check_stack_shape(*s, arch);
    }
    if (std::count(seen.begin(), seen.end(), true) < 2)
        throw DegenerateDataset("train: need at least two distinct classes");

    Model model = init_model(arch, mix_seed(cfg.seed, 1));
    Eigen::VectorXd velocity = Eigen::VectorXd::Zero(model.layout.total);
    Eigen::VectorXd grads(model.layout.total);
    Rng shuffle_rng(mix_seed(cfg.seed, 2));

    std::vector<int> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size() - 1; i > 0; --i) {
            const size_t j = shuffle_rng.next_below(i + 1);
            std::swap(order[i], order[j]);
        }
        double epoch_loss = 0.0;
        long epoch_hits = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop =
                std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<const FeatureStack*> batch;
            batch.reserve(stop - start);
            for (size_t i = start; i < stop; ++i) batch.push_back(train_set[order[i]]);
            long hits = 0;
            const double loss = loss_and_grads(batch, model, grads, &hits);
            epoch_loss += loss * static_cast<double>(batch.size());
            epoch_hits += hits;
            velocity = cfg.momentum * velocity + grads;
            model.params -= cfg.lr * velocity;
        }
        if (history) {
            EpochStats st;
            st.epoch = epoch;
            st.train_loss = epoch_loss / static_cast<double>(train_set.size());
            st.train_acc =
                static_cast<double>(epoch_hits) / static_cast<double>(train_set.size());
            if (!val_set.empty()) {
                long val_hits = 0;
                st.val_loss = batch_loss(val_set, model, &val_hits);
                st.val_acc =
                    static_cast<double>(val_hits) / static_cast<double>(val_set.size());
            }
            history->push_back(st);
        }
    }
    return model;
}

ParamCount count_params(const ModelArch& arch) {
    const ParamLayout layout = ParamLayout::make(arch);
    ParamCount out;
    out.total = layout.total;
    out.entries.reserve(layout.slices.size());
    for (const ParamLayout::Slice& s : layout.slices)
        out.entries.emplace_back(s.name, s.size());
    return out;
}

}  // namespace gaborcomp
