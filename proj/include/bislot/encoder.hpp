#pragma once

#include <vector>

#include "bislot/errors.hpp"
#include "bislot/rng.hpp"
#include "bislot/tensor.hpp"

namespace bislot {

inline int patch_grid_side(int image_side, int patch_size) {
    if (patch_size <= 0 || image_side % patch_size != 0)
        throw ConfigError("image side " + std::to_string(image_side) +
                          " is not divisible by patch size " + std::to_string(patch_size));
    return image_side / patch_size;
}

// Trainable linear patch embedder with learned positions; produces the
// N×D token grid both eyes share.
struct EncoderParams {
    int patch_size = 0;
    int embed_dim = 0;
    Tensor proj;      // (3·patch²)×D
    Tensor pos_embed; // N×D
    Tensor ln_gamma;  // D
    Tensor ln_beta;   // D

    static EncoderParams init(int image_side, int patch_size, int embed_dim, Rng& rng) {
        const int g = patch_grid_side(image_side, patch_size);
        const int n_tokens = g * g;
        const int in_dim = 3 * patch_size * patch_size;
        EncoderParams p;
        p.patch_size = patch_size;
        p.embed_dim = embed_dim;
        const double proj_scale = 1.0 / std::sqrt(double(in_dim));
        std::vector<double> w(size_t(in_dim) * embed_dim);
        for (auto& v : w) v = rng.normal() * proj_scale;
        p.proj = Tensor::from_data({in_dim, embed_dim}, std::move(w), true);
        std::vector<double> pos(size_t(n_tokens) * embed_dim);
        for (auto& v : pos) v = rng.normal() * 0.3;
        p.pos_embed = Tensor::from_data({n_tokens, embed_dim}, std::move(pos), true);
        p.ln_gamma = Tensor::full({embed_dim}, 1.0, true);
        p.ln_beta = Tensor::zeros({embed_dim}, true);
        return p;
    }

    std::vector<Tensor> params() const { return {proj, pos_embed, ln_gamma, ln_beta}; }
};

// Rearranges a 3×S×S image into N rows, one flattened (channel, y, x) RGB
// block per patch, patches in row-major grid order.
inline Tensor patchify(const Tensor& img, int patch_size) {
    if (img.ndim() != 3 || img.shape()[0] != 3 || img.shape()[1] != img.shape()[2])
        throw ShapeError("patchify: expected a 3xSxS image, got " + detail::shape_str(img.shape()));
    const int s = img.shape()[1];
    const int g = patch_grid_side(s, patch_size);
    const int n_tokens = g * g;
    const int row_len = 3 * patch_size * patch_size;
    Tensor out = detail::make_op({n_tokens, row_len}, {img.node()});
    detail::Node* o = out.node().get();
    const auto& iv = img.value();
    auto pix = [&](int c, int y, int x) { return iv[(size_t(c) * s + y) * s + x]; };
    for (int py = 0; py < g; ++py)
        for (int px = 0; px < g; ++px) {
            double* row = o->value.data() + size_t(py * g + px) * row_len;
            int t = 0;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < patch_size; ++y)
                    for (int x = 0; x < patch_size; ++x)
                        row[t++] = pix(c, py * patch_size + y, px * patch_size + x);
        }
    if (o->requires_grad) {
        detail::Node* pi = img.node().get();
        o->backprop = [o, pi, s, g, patch_size, row_len]() {
            for (int py = 0; py < g; ++py)
                for (int px = 0; px < g; ++px) {
                    const double* row = o->grad.data() + size_t(py * g + px) * row_len;
                    int t = 0;
                    for (int c = 0; c < 3; ++c)
                        for (int y = 0; y < patch_size; ++y)
                            for (int x = 0; x < patch_size; ++x)
                                pi->grad[(size_t(c) * s + py * patch_size + y) * s + px * patch_size + x] +=
                                    row[t++];
                }
        };
    }
    return out;
}

// layer_norm(patchify(img)·proj + pos_embed)
inline Tensor encode(const Tensor& img, const EncoderParams& p) {
    Tensor tokens = add(matmul(patchify(img, p.patch_size), p.proj), p.pos_embed);
    return layer_norm(tokens, p.ln_gamma, p.ln_beta);
}

// Per-patch mean RGB, the reconstruction target grid (N×3).
inline Tensor patch_targets(const Tensor& img, int patch_size) {
    if (img.ndim() != 3 || img.shape()[0] != 3 || img.shape()[1] != img.shape()[2])
        throw ShapeError("patch_targets: expected a 3xSxS image, got " +
                         detail::shape_str(img.shape()));
    const int s = img.shape()[1];
    const int g = patch_grid_side(s, patch_size);
    const double inv = 1.0 / (patch_size * patch_size);
    std::vector<double> out(size_t(g) * g * 3, 0.0);
    const auto& iv = img.value();
    for (int py = 0; py < g; ++py)
        for (int px = 0; px < g; ++px)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int y = 0; y < patch_size; ++y)
                    for (int x = 0; x < patch_size; ++x)
                        acc += iv[(size_t(c) * s + py * patch_size + y) * s + px * patch_size + x];
                out[size_t(py * g + px) * 3 + c] = acc * inv;
            }
    return Tensor::from_data({g * g, 3}, std::move(out));
}

}  // namespace bislot
