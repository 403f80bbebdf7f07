#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "bislot/bilateral.hpp"

using namespace bislot;

namespace {

Tensor random_mat(int r, int c, Rng& rng, double scale = 1.0, bool rg = false) {
    std::vector<double> d(size_t(r) * c);
    for (auto& v : d) v = rng.normal() * scale;
    return Tensor::from_data({r, c}, std::move(d), rg);
}

Tensor random_image(int s, Rng& rng) {
    std::vector<double> d(size_t(3) * s * s);
    for (auto& v : d) v = rng.uniform();
    return Tensor::from_data({3, s, s}, std::move(d));
}

ForwardInput random_input(int s, int patch, int classes, Rng& rng) {
    ForwardInput in;
    in.left = random_image(s, rng);
    in.right = random_image(s, rng);
    in.targets_left = patch_targets(in.left, patch);
    in.targets_right = patch_targets(in.right, patch);
    in.labels.assign(classes, 0.0);
    in.labels[0] = 1.0;
    return in;
}

}  // namespace

TEST_CASE("cross_attend with one slot is a plain projection") {
    Rng rng(1);
    const int d = 8, h = 2;
    CrossAttnParams p = CrossAttnParams::init(d, h, rng);
    Tensor sq = random_mat(1, d, rng);
    Tensor skv = random_mat(1, d, rng);
    auto [refined, corr] = cross_attend(sq, skv, p);
    for (int i = 0; i < h; ++i) CHECK(corr.per_head[i].value()[0] == 1.0);
    // expected: concat_h(s_kv·Wv_h)·Wo
    std::vector<Tensor> vs;
    for (int i = 0; i < h; ++i) vs.push_back(matmul(skv, p.Wv[i]));
    Tensor expect = matmul(concat_cols(vs), p.Wo);
    for (int j = 0; j < d; ++j) CHECK(std::abs(refined.at(0, j) - expect.at(0, j)) <= 1e-12);
}

TEST_CASE("identical key rows give uniform attention rows") {
    Rng rng(2);
    const int d = 8, k = 4;
    CrossAttnParams p = CrossAttnParams::init(d, 2, rng);
    Tensor sq = random_mat(k, d, rng);
    std::vector<double> same(size_t(k) * d);
    Rng row_rng(5);
    std::vector<double> one_row(d);
    for (auto& v : one_row) v = row_rng.normal();
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < d; ++j) same[size_t(i) * d + j] = one_row[j];
    auto [refined, corr] = cross_attend(sq, Tensor::from_data({k, d}, std::move(same)), p);
    for (const auto& a : corr.per_head)
        for (size_t i = 0; i < a.size(); ++i) CHECK(a.value()[i] == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("cross_attend matches a scalar multi-head oracle") {
    Rng rng(3);
    const int d = 6, h = 2, k = 2, dh = 3;
    CrossAttnParams p = CrossAttnParams::init(d, h, rng);
    Tensor sq = random_mat(k, d, rng);
    Tensor skv = random_mat(k, d, rng);
    auto [refined, corr] = cross_attend(sq, skv, p);

    auto matrow = [&](const Tensor& w, const Tensor& src, int row, int cols) {
        std::vector<double> out(cols, 0.0);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < cols; ++j) out[j] += src.at(row, i) * w.value()[size_t(i) * cols + j];
        return out;
    };
    std::vector<std::vector<double>> concat(k, std::vector<double>(size_t(h) * dh, 0.0));
    for (int head = 0; head < h; ++head) {
        std::vector<std::vector<double>> q(k), key(k), val(k);
        for (int i = 0; i < k; ++i) {
            q[i] = matrow(p.Wq[head], sq, i, dh);
            key[i] = matrow(p.Wk[head], skv, i, dh);
            val[i] = matrow(p.Wv[head], skv, i, dh);
        }
        for (int i = 0; i < k; ++i) {
            std::vector<double> logits(k);
            double mx = -1e300;
            for (int j = 0; j < k; ++j) {
                double dot = 0;
                for (int t = 0; t < dh; ++t) dot += q[i][t] * key[j][t];
                logits[j] = dot / std::sqrt(double(dh));
                mx = std::max(mx, logits[j]);
            }
            double denom = 0;
            for (int j = 0; j < k; ++j) denom += std::exp(logits[j] - mx);
            for (int j = 0; j < k; ++j) {
                double aij = std::exp(logits[j] - mx) / denom;
                CHECK(std::abs(corr.per_head[head].at(i, j) - aij) <= 1e-10);
                for (int t = 0; t < dh; ++t) concat[i][size_t(head) * dh + t] += aij * val[j][t];
            }
        }
    }
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < d; ++j) {
            double expect = 0;
            for (int t = 0; t < d; ++t) expect += concat[i][t] * p.Wo.value()[size_t(t) * d + j];
            CHECK(std::abs(refined.at(i, j) - expect) <= 1e-10);
        }
}

TEST_CASE("cross-attention rows are stochastic and the mean matches the heads") {
    Rng rng(4);
    const int d = 16, h = 4, k = 5;
    CrossAttnParams p = CrossAttnParams::init(d, h, rng);
    auto [refined, corr] = cross_attend(random_mat(k, d, rng), random_mat(k, d, rng), p);
    for (const auto& a : corr.per_head)
        for (int i = 0; i < k; ++i) {
            double s = 0;
            for (int j = 0; j < k; ++j) s += a.at(i, j);
            REQUIRE(std::abs(s - 1.0) <= 1e-9);
        }
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            double mean = 0;
            for (int head = 0; head < h; ++head) mean += corr.per_head[head].at(i, j);
            CHECK(std::abs(corr.mean.at(i, j) - mean / h) <= 1e-12);
        }
}

TEST_CASE("cross_attend rejects head counts that do not divide the dim") {
    Rng rng(5);
    CHECK_THROWS_AS(CrossAttnParams::init(10, 4, rng), ConfigError);
}

TEST_CASE("joint slot permutation conjugates the mean correspondence") {
    Rng rng(6);
    const int d = 8, k = 4;
    CrossAttnParams p = CrossAttnParams::init(d, 2, rng);
    Tensor sl = random_mat(k, d, rng);
    Tensor sr = random_mat(k, d, rng);
    std::vector<int> perm = {2, 3, 1, 0};
    auto permute_rows = [&](const Tensor& t) {
        std::vector<double> out(t.size());
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < d; ++j) out[size_t(i) * d + j] = t.at(perm[i], j);
        return Tensor::from_data({k, d}, std::move(out));
    };
    auto [r0, c0] = cross_attend(sl, sr, p);
    auto [r1, c1] = cross_attend(permute_rows(sl), permute_rows(sr), p);
    double diag0 = 0, diag1 = 0, all0 = 0, all1 = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            CHECK(std::abs(c1.mean.at(i, j) - c0.mean.at(perm[i], perm[j])) <= 1e-9);
            all0 += c0.mean.at(i, j);
            all1 += c1.mean.at(i, j);
            if (i == j) {
                diag0 += c0.mean.at(i, i);
                diag1 += c1.mean.at(i, i);
            }
        }
    CHECK(std::abs(diag0 / all0 - diag1 / all1) <= 1e-9);
}

TEST_CASE("pool_and_classify of zero features with zero biases is zero") {
    Rng rng(7);
    HeadParams p = HeadParams::init(8, 16, 3, rng);
    Tensor z = Tensor::zeros({2, 4});
    Rng drop(1);
    Tensor logits = pool_and_classify(z, z, p, false, drop);
    for (double v : logits.value()) CHECK(v == 0.0);
}

TEST_CASE("classifier logits are invariant to within-eye slot order") {
    Rng rng(8);
    const int k = 5, d = 6;
    HeadParams p = HeadParams::init(2 * d, 16, 4, rng);
    Tensor sl = random_mat(k, d, rng);
    Tensor sr = random_mat(k, d, rng);
    std::vector<int> perm = {4, 2, 0, 1, 3};
    std::vector<double> permuted(size_t(k) * d);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < d; ++j) permuted[size_t(i) * d + j] = sl.at(perm[i], j);
    Rng drop(1);
    Tensor a = pool_and_classify(sl, sr, p, false, drop);
    Tensor b = pool_and_classify(Tensor::from_data({k, d}, std::move(permuted)), sr, p, false, drop);
    for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.value()[i] - b.value()[i]) <= 1e-9);
}

TEST_CASE("pool_and_classify matches a scalar MLP oracle") {
    Rng rng(9);
    const int k = 3, d = 4, hidden = 5, classes = 2;
    HeadParams p = HeadParams::init(2 * d, hidden, classes, rng);
    Tensor sl = random_mat(k, d, rng);
    Tensor sr = random_mat(k, d, rng);
    Rng drop(1);
    Tensor logits = pool_and_classify(sl, sr, p, false, drop);

    std::vector<double> z(2 * d, 0.0);
    for (int j = 0; j < d; ++j) {
        for (int i = 0; i < k; ++i) {
            z[j] += sl.at(i, j) / k;
            z[d + j] += sr.at(i, j) / k;
        }
    }
    const double kg = std::sqrt(2.0 / M_PI);
    std::vector<double> h(hidden);
    for (int j = 0; j < hidden; ++j) {
        double acc = p.b1.value()[j];
        for (int i = 0; i < 2 * d; ++i) acc += z[i] * p.W1.value()[size_t(i) * hidden + j];
        h[j] = 0.5 * acc * (1.0 + std::tanh(kg * (acc + 0.044715 * acc * acc * acc)));
    }
    for (int c = 0; c < classes; ++c) {
        double acc = p.b2.value()[c];
        for (int j = 0; j < hidden; ++j) acc += h[j] * p.W2.value()[size_t(j) * classes + c];
        CHECK(std::abs(logits.at(0, c) - acc) <= 1e-10);
    }
}

TEST_CASE("decode_reconstruct with one slot is the sigmoid of its logits") {
    Rng rng(10);
    const int n = 4, d = 6;
    DecoderParams p = DecoderParams::init(n, d, rng);
    Tensor slots = random_mat(1, d, rng);
    auto [xhat, pi] = decode_reconstruct(slots, p);
    for (int j = 0; j < n; ++j) CHECK(pi.at(0, j) == 1.0);
    for (int nidx = 0; nidx < n; ++nidx)
        for (int c = 0; c < 3; ++c) {
            double logit = p.bdec.value()[c];
            for (int t = 0; t < d; ++t)
                logit += (slots.at(0, t) + p.pos.at(nidx, t)) * p.Wdec.value()[size_t(t) * 4 + c];
            CHECK(std::abs(xhat.at(nidx, c) - 1.0 / (1.0 + std::exp(-logit))) <= 1e-10);
        }
}

TEST_CASE("mixture weights form a distribution over slots at every patch") {
    Rng rng(11);
    const int n = 9, d = 8, k = 5;
    DecoderParams p = DecoderParams::init(n, d, rng);
    auto [xhat, pi] = decode_reconstruct(random_mat(k, d, rng), p);
    for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int i = 0; i < k; ++i) s += pi.at(i, j);
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("decode_reconstruct matches a scalar mixture oracle") {
    Rng rng(12);
    const int n = 2, d = 5, k = 2;
    DecoderParams p = DecoderParams::init(n, d, rng);
    Tensor slots = random_mat(k, d, rng);
    auto [xhat, pi] = decode_reconstruct(slots, p);
    for (int j = 0; j < n; ++j) {
        std::vector<double> mix_logit(k);
        std::vector<std::vector<double>> rgb(k, std::vector<double>(3));
        for (int i = 0; i < k; ++i) {
            std::vector<double> outv(4);
            for (int c = 0; c < 4; ++c) {
                double acc = p.bdec.value()[c];
                for (int t = 0; t < d; ++t)
                    acc += (slots.at(i, t) + p.pos.at(j, t)) * p.Wdec.value()[size_t(t) * 4 + c];
                outv[c] = acc;
            }
            mix_logit[i] = outv[3];
            for (int c = 0; c < 3; ++c) rgb[i][c] = 1.0 / (1.0 + std::exp(-outv[c]));
        }
        double mx = std::max(mix_logit[0], mix_logit[1]);
        double denom = std::exp(mix_logit[0] - mx) + std::exp(mix_logit[1] - mx);
        for (int c = 0; c < 3; ++c) {
            double expect = 0;
            for (int i = 0; i < k; ++i)
                expect += std::exp(mix_logit[i] - mx) / denom * rgb[i][c];
            CHECK(std::abs(xhat.at(j, c) - expect) <= 1e-10);
        }
    }
}

TEST_CASE("loss_recon closed forms") {
    Rng rng(13);
    Tensor x = random_mat(6, 3, rng);
    CHECK(loss_recon(x, x).item() == 0.0);

    Tensor shifted = add_scalar(x, 0.0);
    std::vector<double> off = x.value();
    for (size_t i = 0; i < off.size(); i += 3) off[i] += 1.0;  // +1 on the red channel
    CHECK(loss_recon(Tensor::from_data({6, 3}, std::move(off)), x).item() ==
          Catch::Approx(1.0).margin(1e-12));

    Tensor a = random_mat(4, 3, rng);
    Tensor b = random_mat(4, 3, rng);
    double expect = 0;
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 3; ++c) expect += std::pow(a.at(i, c) - b.at(i, c), 2);
    CHECK(std::abs(loss_recon(a, b).item() - expect / 4.0) <= 1e-12);
}

TEST_CASE("loss_cls closed forms") {
    CHECK(loss_cls(Tensor::zeros({3}), {1, 0, 1}).item() ==
          Catch::Approx(std::log(2.0)).margin(1e-12));
    Tensor z = Tensor::from_data({2}, {1.0, -1.0});
    CHECK(loss_cls(z, {1.0, 0.0}).item() == Catch::Approx(0.31326).margin(1e-5));
}

TEST_CASE("loss_total weighting") {
    Tensor cls = Tensor::scalar(0.7);
    Tensor rec = Tensor::scalar(0.2);
    CHECK(loss_total(cls, rec, 0.5).item() == Catch::Approx(0.8).margin(1e-12));
    CHECK(loss_total(cls, rec, 0.0).item() == 0.7);
    CHECK(loss_total(cls, rec, 1.0).item() == Catch::Approx(0.9).margin(1e-12));
    CHECK_THROWS_AS(loss_total(cls, rec, -0.1), ConfigError);
}

TEST_CASE("no_bilateral returns the slot state unchanged") {
    ModelConfig cfg;
    cfg.variant = Variant::no_bilateral;
    cfg.image_side = 16;
    cfg.patch_size = 8;
    cfg.dim = 8;
    cfg.num_slots = 2;
    cfg.iterations = 2;
    cfg.heads = 2;
    cfg.classes = 2;
    cfg.hidden = 8;
    Model m = Model::init(cfg, 1);
    Rng rng(3);
    ForwardInput in = random_input(16, 8, 2, rng);
    Rng fw(5, 1);
    ForwardOutput out = forward_pair(m, in, false, fw);
    REQUIRE(out.slots_left.has_value());
    CHECK_FALSE(out.corr_lr.has_value());
    for (size_t i = 0; i < out.refined_left.size(); ++i)
        REQUIRE(out.refined_left.value()[i] == out.slots_left->slots.value()[i]);
}

TEST_CASE("no_slots still produces a 2D-dimensional pooled vector") {
    ModelConfig cfg;
    cfg.variant = Variant::no_slots;
    cfg.image_side = 16;
    cfg.patch_size = 8;
    cfg.dim = 8;
    cfg.classes = 2;
    cfg.hidden = 8;
    cfg.heads = 2;
    Model m = Model::init(cfg, 2);
    Rng rng(4);
    ForwardInput in = random_input(16, 8, 2, rng);
    Rng fw(6, 1);
    ForwardOutput out = forward_pair(m, in, false, fw);
    CHECK(out.pooled.cols() == 2 * cfg.dim);
    CHECK_FALSE(out.slots_left.has_value());
    CHECK_FALSE(out.recon.defined());
}

TEST_CASE("with lambda zero the decoder gradient is exactly zero") {
    ModelConfig cfg;
    cfg.variant = Variant::lambda_zero;
    cfg.image_side = 16;
    cfg.patch_size = 8;
    cfg.dim = 8;
    cfg.num_slots = 2;
    cfg.iterations = 1;
    cfg.heads = 2;
    cfg.classes = 2;
    cfg.hidden = 8;
    Model m = Model::init(cfg, 3);
    Rng rng(5);
    ForwardInput in = random_input(16, 8, 2, rng);
    Rng fw(7, 1);
    ForwardOutput out = forward_pair(m, in, true, fw);
    backward(out.total);
    for (const auto& t : m.dec.params())
        for (double g : t.grad()) REQUIRE(g == 0.0);
}

TEST_CASE("full forward objective passes a gradient check on a tiny config") {
    ModelConfig cfg;
    cfg.variant = Variant::full;
    cfg.image_side = 16;
    cfg.patch_size = 8;
    cfg.dim = 8;
    cfg.num_slots = 2;
    cfg.iterations = 2;
    cfg.heads = 2;
    cfg.classes = 2;
    cfg.hidden = 8;
    cfg.lambda = 0.5;
    Model m = Model::init(cfg, 4);
    Rng rng(6);
    ForwardInput in = random_input(16, 8, 2, rng);
    Rng coord_rng(17);
    auto f = [&] {
        Rng fw(11, 1);
        return forward_pair(m, in, false, fw).total;
    };
    double err = grad_check(f, m.all_params(), 1e-5, 6, &coord_rng);
    CHECK(err <= 1e-4);
}

TEST_CASE("frozen encoder stops gradients to the patch projection") {
    ModelConfig cfg;
    cfg.variant = Variant::frozen_encoder;
    cfg.image_side = 16;
    cfg.patch_size = 8;
    cfg.dim = 8;
    cfg.num_slots = 2;
    cfg.iterations = 1;
    cfg.heads = 2;
    cfg.classes = 2;
    cfg.hidden = 8;
    Model m = Model::init(cfg, 5);
    Rng rng(7);
    ForwardInput in = random_input(16, 8, 2, rng);
    Rng fw(8, 1);
    ForwardOutput out = forward_pair(m, in, true, fw);
    backward(out.total);
    for (double g : m.enc.proj.grad()) REQUIRE(g == 0.0);
    // layer norm of the encoder stays trainable
    double sum = 0;
    for (double g : m.enc.ln_gamma.grad()) sum += std::abs(g);
    CHECK(sum > 0.0);
}
