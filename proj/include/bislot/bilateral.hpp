#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bislot/encoder.hpp"
#include "bislot/slot_attention.hpp"

namespace bislot {

// ---------------------------------------------------------------------------
// cross-eye correspondence
// ---------------------------------------------------------------------------

struct CrossAttnParams {
    int heads = 0;
    int dim = 0;
    int head_dim = 0;
    std::vector<Tensor> Wq, Wk, Wv; // per head, D×D_h
    Tensor Wo;                      // D×D

    static CrossAttnParams init(int dim, int heads, Rng& rng) {
        if (heads <= 0 || dim % heads != 0)
            throw ConfigError("head count " + std::to_string(heads) + " must divide dim " +
                              std::to_string(dim));
        CrossAttnParams p;
        p.heads = heads;
        p.dim = dim;
        p.head_dim = dim / heads;
        const double scale = 1.0 / std::sqrt(double(dim));
        auto mat = [&](int r, int c) {
            std::vector<double> d(size_t(r) * c);
            for (auto& v : d) v = rng.normal() * scale;
            return Tensor::from_data({r, c}, std::move(d), true);
        };
        for (int h = 0; h < heads; ++h) {
            p.Wq.push_back(mat(dim, p.head_dim));
            p.Wk.push_back(mat(dim, p.head_dim));
            p.Wv.push_back(mat(dim, p.head_dim));
        }
        p.Wo = mat(dim, dim);
        return p;
    }

    std::vector<Tensor> params() const {
        std::vector<Tensor> out;
        for (int h = 0; h < heads; ++h) {
            out.push_back(Wq[h]);
            out.push_back(Wk[h]);
            out.push_back(Wv[h]);
        }
        out.push_back(Wo);
        return out;
    }
};

// Per-head row-stochastic affinities between the querying eye's slots (rows)
// and the contralateral slots (columns), plus their head mean.
struct CorrespondenceMatrix {
    std::vector<Tensor> per_head;
    Tensor mean;
};

// Multi-head cross-attention of s_q onto s_kv; per-head attention is a
// softmax over the contralateral axis at temperature 1/sqrt(D_h), heads are
// concatenated and projected by Wo.
inline std::pair<Tensor, CorrespondenceMatrix> cross_attend(const Tensor& s_q, const Tensor& s_kv,
                                                            const CrossAttnParams& p) {
    const double scale = 1.0 / std::sqrt(double(p.head_dim));
    CorrespondenceMatrix corr;
    std::vector<Tensor> head_outs;
    Tensor acc;
    for (int h = 0; h < p.heads; ++h) {
        Tensor q = matmul(s_q, p.Wq[h]);
        Tensor k = matmul(s_kv, p.Wk[h]);
        Tensor v = matmul(s_kv, p.Wv[h]);
        Tensor a = softmax(mul_scalar(matmul_nt(q, k), scale), 1);
        corr.per_head.push_back(a);
        head_outs.push_back(matmul(a, v));
        acc = h == 0 ? a : add(acc, a);
    }
    corr.mean = mul_scalar(acc, 1.0 / p.heads);
    return {matmul(concat_cols(head_outs), p.Wo), corr};
}

// ---------------------------------------------------------------------------
// reconstruction decoder
// ---------------------------------------------------------------------------

struct DecoderParams {
    Tensor pos;  // N×D learned patch positions
    Tensor Wdec; // D×4: channels 0-2 RGB logits, channel 3 assignment logit
    Tensor bdec; // 4

    static DecoderParams init(int n_tokens, int dim, Rng& rng) {
        DecoderParams p;
        std::vector<double> pos(size_t(n_tokens) * dim);
        for (auto& v : pos) v = rng.normal() * 0.3;
        p.pos = Tensor::from_data({n_tokens, dim}, std::move(pos), true);
        std::vector<double> w(size_t(dim) * 4);
        const double scale = 1.0 / std::sqrt(double(dim));
        for (auto& v : w) v = rng.normal() * scale;
        p.Wdec = Tensor::from_data({dim, 4}, std::move(w), true);
        p.bdec = Tensor::zeros({4}, true);
        return p;
    }

    std::vector<Tensor> params() const { return {pos, Wdec, bdec}; }
};

// Every slot predicts per-patch RGB and an assignment logit from the additive
// combination (slot + position); patches are the mixture over slots of the
// per-slot sigmoids. Returns (x̂ N×3, π K×N).
inline std::pair<Tensor, Tensor> decode_reconstruct(const Tensor& slots, const DecoderParams& p) {
    Tensor sw = matmul(slots, p.Wdec);                   // K×4
    Tensor pw = add_row(matmul(p.pos, p.Wdec), p.bdec);  // N×4
    Tensor mix_logits = outer_add(col(sw, 3), col(pw, 3));
    Tensor pi = softmax(mix_logits, 0);  // distribution over slots per patch
    std::vector<Tensor> channels;
    for (int c = 0; c < 3; ++c) {
        Tensor rgb = sigmoid(outer_add(col(sw, c), col(pw, c)));
        channels.push_back(transpose(sum_axis(mul(pi, rgb), 0)));
    }
    return {concat_cols(channels), pi};
}

// Mean over patches of the squared L2 distance between RGB triples.
inline Tensor loss_recon(const Tensor& xhat, const Tensor& target) {
    detail::check_same_shape(xhat, target, "loss_recon");
    Tensor diff = sub(xhat, target);
    return mul_scalar(sum_all(mul(diff, diff)), 1.0 / xhat.rows());
}

// Mean binary cross-entropy over classes, stable logit form.
inline Tensor loss_cls(const Tensor& logits, const std::vector<double>& labels) {
    return bce_with_logits_mean(logits, labels);
}

inline Tensor loss_total(const Tensor& l_cls, const Tensor& l_recon, double lambda) {
    if (lambda < 0) throw ConfigError("lambda must be nonnegative");
    if (lambda == 0.0 || !l_recon.defined()) return l_cls;
    return add(l_cls, mul_scalar(l_recon, lambda));
}

// ---------------------------------------------------------------------------
// pooled classifier
// ---------------------------------------------------------------------------

struct HeadParams {
    Tensor W1, b1; // 2D×hidden
    Tensor W2, b2; // hidden×C
    double dropout_p = 0.1;

    static HeadParams init(int feat_dim, int hidden, int classes, Rng& rng) {
        HeadParams p;
        auto mat = [&](int r, int c) {
            std::vector<double> d(size_t(r) * c);
            const double scale = 1.0 / std::sqrt(double(r));
            for (auto& v : d) v = rng.normal() * scale;
            return Tensor::from_data({r, c}, std::move(d), true);
        };
        p.W1 = mat(feat_dim, hidden);
        p.b1 = Tensor::zeros({hidden}, true);
        p.W2 = mat(hidden, classes);
        p.b2 = Tensor::zeros({classes}, true);
        return p;
    }

    std::vector<Tensor> params() const { return {W1, b1, W2, b2}; }
};

// z = [mean rows of left; mean rows of right], then a two-layer GELU MLP with
// dropout in training mode. Returns 1×C logits (and z via out param users can
// recompute; see forward_pair which exposes it).
inline Tensor pool_features(const Tensor& left, const Tensor& right) {
    return concat_cols({mean_rows(left), mean_rows(right)});
}

inline Tensor classify(const Tensor& pooled, const HeadParams& p, bool training, Rng& rng) {
    Tensor h = gelu(add_row(matmul(pooled, p.W1), p.b1));
    if (training && p.dropout_p > 0.0) h = dropout(h, p.dropout_p, rng);
    return add_row(matmul(h, p.W2), p.b2);
}

inline Tensor pool_and_classify(const Tensor& left, const Tensor& right, const HeadParams& p,
                                bool training, Rng& rng) {
    return classify(pool_features(left, right), p, training, rng);
}

// ---------------------------------------------------------------------------
// full bilateral model
// ---------------------------------------------------------------------------

enum class Variant { full, no_slots, no_bilateral, patch_cross_attn, lambda_zero, frozen_encoder };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_slots: return "no_slots";
        case Variant::no_bilateral: return "no_bilateral";
        case Variant::patch_cross_attn: return "patch_cross_attn";
        case Variant::lambda_zero: return "lambda_zero";
        case Variant::frozen_encoder: return "frozen_encoder";
    }
    return "?";
}

inline Variant variant_from(const std::string& s) {
    for (Variant v : {Variant::full, Variant::no_slots, Variant::no_bilateral,
                      Variant::patch_cross_attn, Variant::lambda_zero, Variant::frozen_encoder})
        if (variant_name(v) == s) return v;
    throw ConfigError("unknown model variant '" + s + "'");
}

struct ModelConfig {
    Variant variant = Variant::full;
    int image_side = 64;
    int patch_size = 8;
    int dim = 32;        // D
    int num_slots = 8;   // K
    int iterations = 3;  // I
    int heads = 8;       // H
    int classes = 4;     // C
    int hidden = 128;
    double lambda = 0.5;
    double dropout = 0.1;

    int n_tokens() const {
        int g = patch_grid_side(image_side, patch_size);
        return g * g;
    }
    double effective_lambda() const { return variant == Variant::lambda_zero ? 0.0 : lambda; }
    bool uses_slots() const {
        return variant != Variant::no_slots && variant != Variant::patch_cross_attn;
    }
    bool uses_decoder() const { return uses_slots() && effective_lambda() != 0.0; }
    bool uses_cross() const {
        return variant == Variant::full || variant == Variant::lambda_zero ||
               variant == Variant::frozen_encoder || variant == Variant::patch_cross_attn;
    }
};

struct Model {
    ModelConfig cfg;
    EncoderParams enc;
    SlotParams slots;
    CrossAttnParams cross;
    DecoderParams dec;
    HeadParams head;

    static Model init(const ModelConfig& cfg, uint64_t seed) {
        if (cfg.classes < 1) throw ConfigError("need at least one class");
        Model m;
        m.cfg = cfg;
        Rng rng(seed, stream_of(0x1817));
        m.enc = EncoderParams::init(cfg.image_side, cfg.patch_size, cfg.dim, rng);
        m.slots = SlotParams::init(cfg.num_slots, cfg.dim, rng);
        m.cross = CrossAttnParams::init(cfg.dim, cfg.heads, rng);
        m.dec = DecoderParams::init(cfg.n_tokens(), cfg.dim, rng);
        m.head = HeadParams::init(2 * cfg.dim, cfg.hidden, cfg.classes, rng);
        m.head.dropout_p = cfg.dropout;
        if (cfg.variant == Variant::frozen_encoder) {
            m.enc.proj.set_requires_grad(false);
            m.enc.pos_embed.set_requires_grad(false);
        }
        return m;
    }

    // Trainable parameters in two learning-rate groups.
    std::vector<Tensor> encoder_group() const {
        if (cfg.variant == Variant::frozen_encoder) return {enc.ln_gamma, enc.ln_beta};
        return enc.params();
    }

    std::vector<Tensor> slot_head_group() const {
        std::vector<Tensor> out;
        auto append = [&](const std::vector<Tensor>& v) { out.insert(out.end(), v.begin(), v.end()); };
        if (cfg.uses_slots()) append(slots.params());
        if (cfg.uses_cross()) append(cross.params());
        if (cfg.uses_slots()) append(dec.params());
        append(head.params());
        return out;
    }

    std::vector<Tensor> all_params() const {
        std::vector<Tensor> out = encoder_group();
        auto rest = slot_head_group();
        out.insert(out.end(), rest.begin(), rest.end());
        return out;
    }

    Model clone() const {
        Model m = *this;
        auto copy = [](Tensor& t) {
            if (t.defined())
                t = Tensor::from_data(t.shape(), t.value(), t.requires_grad());
        };
        auto copy_all = [&](auto&... fields) { (copy(fields), ...); };
        copy_all(m.enc.proj, m.enc.pos_embed, m.enc.ln_gamma, m.enc.ln_beta);
        copy_all(m.slots.mu, m.slots.log_sigma, m.slots.Wq, m.slots.Wk, m.slots.Wv,
                 m.slots.ln_input_gamma, m.slots.ln_input_beta, m.slots.ln_slot_gamma,
                 m.slots.ln_slot_beta);
        copy_all(m.slots.gru.Wz, m.slots.gru.Uz, m.slots.gru.bz, m.slots.gru.Wr, m.slots.gru.Ur,
                 m.slots.gru.br, m.slots.gru.Wh, m.slots.gru.Uh, m.slots.gru.bh);
        for (auto* vec : {&m.cross.Wq, &m.cross.Wk, &m.cross.Wv})
            for (auto& t : *vec) copy(t);
        copy_all(m.cross.Wo, m.dec.pos, m.dec.Wdec, m.dec.bdec, m.head.W1, m.head.b1, m.head.W2,
                 m.head.b2);
        return m;
    }
};

struct ForwardInput {
    Tensor left, right;                  // 3×S×S images in [0,1]
    Tensor targets_left, targets_right;  // N×3 per-patch mean RGB (may be undefined)
    std::vector<double> labels;          // length C
};

struct ForwardOutput {
    Tensor logits;     // 1×C
    Tensor pooled;     // 1×2D feature z
    Tensor cls;        // scalar
    Tensor recon;      // scalar (undefined when the decoder is off)
    Tensor total;      // scalar
    std::optional<SlotState> slots_left, slots_right;
    Tensor refined_left, refined_right;  // slots after the bilateral exchange
    std::optional<CorrespondenceMatrix> corr_lr, corr_rl;
    Tensor recon_left, recon_right;      // N×3 (undefined when the decoder is off)
};

// One bilateral pass: shared encoder per eye, slot decomposition, the
// bidirectional exchange, pooled classification, and (when enabled) the slot
// mixture reconstruction of both eyes.
inline ForwardOutput forward_pair(const Model& m, const ForwardInput& in, bool training, Rng& rng,
                                  bool want_recon_output = false) {
    const ModelConfig& cfg = m.cfg;
    ForwardOutput out;
    Tensor tokens_l = encode(in.left, m.enc);
    Tensor tokens_r = encode(in.right, m.enc);

    if (cfg.variant == Variant::no_slots) {
        out.pooled = pool_features(tokens_l, tokens_r);
    } else if (cfg.variant == Variant::patch_cross_attn) {
        auto [tl, cl] = cross_attend(tokens_l, tokens_r, m.cross);
        auto [tr, cr] = cross_attend(tokens_r, tokens_l, m.cross);
        out.pooled = pool_features(tl, tr);
    } else {
        out.slots_left = run_slot_attention(tokens_l, m.slots, cfg.iterations, rng);
        out.slots_right = run_slot_attention(tokens_r, m.slots, cfg.iterations, rng);
        if (cfg.uses_cross()) {
            auto [sl, corr_lr] = cross_attend(out.slots_left->slots, out.slots_right->slots, m.cross);
            auto [sr, corr_rl] = cross_attend(out.slots_right->slots, out.slots_left->slots, m.cross);
            out.refined_left = sl;
            out.refined_right = sr;
            out.corr_lr = std::move(corr_lr);
            out.corr_rl = std::move(corr_rl);
        } else {
            out.refined_left = out.slots_left->slots;
            out.refined_right = out.slots_right->slots;
        }
        out.pooled = pool_features(out.refined_left, out.refined_right);
    }

    out.logits = classify(out.pooled, m.head, training, rng);
    out.cls = loss_cls(out.logits, in.labels);

    if (cfg.uses_decoder() || (want_recon_output && cfg.uses_slots())) {
        auto [xl, pil] = decode_reconstruct(out.refined_left, m.dec);
        auto [xr, pir] = decode_reconstruct(out.refined_right, m.dec);
        out.recon_left = xl;
        out.recon_right = xr;
        if (cfg.uses_decoder()) {
            Tensor rl = loss_recon(xl, in.targets_left);
            Tensor rr = loss_recon(xr, in.targets_right);
            out.recon = mul_scalar(add(rl, rr), 0.5);
        }
    }
    out.total = loss_total(out.cls, out.recon, cfg.effective_lambda());
    return out;
}

}  // namespace bislot
