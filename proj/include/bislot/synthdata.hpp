#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bislot/encoder.hpp"
#include "bislot/errors.hpp"
#include "bislot/rng.hpp"
#include "bislot/tensor.hpp"

namespace bislot::synth {

// ---------------------------------------------------------------------------
// sample model
// ---------------------------------------------------------------------------

struct EyeGeometry {
    double disc_cx = 0, disc_cy = 0;
    double disc_r = 0;               // base radius, drives the asymmetry label
    double disc_rx = 0, disc_ry = 0; // ellipse semi-axes after aspect jitter
    double macula_cx = 0, macula_cy = 0, macula_r = 0;
    int n_vessels = 0;
    std::array<std::array<double, 6>, 3> vessels{}; // x0,y0,cx,cy,x1,y1
    int n_lesions = 0;
    std::array<std::array<double, 3>, 4> lesions{}; // x,y,r
    double pallor_shift = 0;
};

// Classes: 0 normal, 1 disc-radius asymmetry (cross-eye only), 2 lesions,
// 3 unilateral pallor.
constexpr int kClasses = 4;
constexpr double kAsymThreshold = 2.0;  // px of |r_L - r_R| that flips class 1

struct BilateralSample {
    int side = 0;
    std::vector<uint8_t> left, right;              // 3×S×S, row-major, 8-bit
    std::vector<bool> gt_disc_left, gt_disc_right; // N patches
    EyeGeometry geo_left, geo_right;
    std::vector<int> labels;                       // kClasses entries in {0,1}

    Tensor image(bool right_eye) const {
        const auto& buf = right_eye ? right : left;
        std::vector<double> d(buf.size());
        for (size_t i = 0; i < buf.size(); ++i) d[i] = buf[i] / 255.0;
        return Tensor::from_data({3, side, side}, std::move(d));
    }
    Tensor left_image() const { return image(false); }
    Tensor right_image() const { return image(true); }
};

struct DatasetSpec {
    int n_train = 2000, n_val = 400, n_test = 400;
    int image_side = 64;
    int patch_size = 8;
    int classes = kClasses;
    double p_disc_asym = 0.30, p_lesions = 0.28, p_pallor = 0.28;
    uint64_t seed = 1;

    void validate() const {
        if (classes != kClasses) throw ConfigError("synthetic dataset defines exactly 4 classes");
        if (n_train < 0 || n_val < 0 || n_test < 0) throw ConfigError("negative split size");
        patch_grid_side(image_side, patch_size);
    }
    int total() const { return n_train + n_val + n_test; }
};

struct Dataset {
    DatasetSpec spec;
    std::vector<BilateralSample> samples; // train, then val, then test
    uint64_t hash = 0;

    int train_begin() const { return 0; }
    int val_begin() const { return spec.n_train; }
    int test_begin() const { return spec.n_train + spec.n_val; }
    const BilateralSample& train(int i) const { return samples[size_t(i)]; }
    const BilateralSample& val(int i) const { return samples[size_t(val_begin() + i)]; }
    const BilateralSample& test(int i) const { return samples[size_t(test_begin() + i)]; }
};

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

namespace detail {

struct Canvas {
    int side;
    std::vector<double> px; // 3×S×S
    explicit Canvas(int s) : side(s), px(size_t(3) * s * s, 0.0) {}
    double& at(int c, int y, int x) { return px[(size_t(c) * side + y) * side + x]; }
};

inline void add_cov(Canvas& img, const std::vector<double>& cov, const double rgb[3]) {
    const int s = img.side;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < s * s; ++i) img.px[size_t(c) * s * s + i] += rgb[c] * cov[i];
}

// Anti-aliased ellipse coverage (1 inside, smooth 1.5px falloff at the rim).
inline std::vector<double> ellipse_cov(int s, double cx, double cy, double rx, double ry) {
    std::vector<double> cov(size_t(s) * s, 0.0);
    const double aa = 1.5, rmin = std::min(rx, ry);
    const int x0 = std::max(0, int(cx - rx - 2)), x1 = std::min(s - 1, int(cx + rx + 2));
    const int y0 = std::max(0, int(cy - ry - 2)), y1 = std::min(s - 1, int(cy + ry + 2));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
            const double d = (std::sqrt(dx * dx + dy * dy) - 1.0) * rmin;
            cov[size_t(y) * s + x] = std::clamp(0.5 - d / aa, 0.0, 1.0);
        }
    return cov;
}

// Quadratic bezier stroke; coverage is the max over sampled stamps.
inline std::vector<double> bezier_cov(int s, const std::array<double, 6>& b, double thickness) {
    std::vector<double> cov(size_t(s) * s, 0.0);
    const double aa = 1.2;
    const int steps = 3 * s;
    for (int t = 0; t <= steps; ++t) {
        const double u = double(t) / steps, w = 1.0 - u;
        const double x = w * w * b[0] + 2 * w * u * b[2] + u * u * b[4];
        const double y = w * w * b[1] + 2 * w * u * b[3] + u * u * b[5];
        const int xi0 = std::max(0, int(x - thickness - 2)), xi1 = std::min(s - 1, int(x + thickness + 2));
        const int yi0 = std::max(0, int(y - thickness - 2)), yi1 = std::min(s - 1, int(y + thickness + 2));
        for (int yy = yi0; yy <= yi1; ++yy)
            for (int xx = xi0; xx <= xi1; ++xx) {
                const double d = std::hypot(xx + 0.5 - x, yy + 0.5 - y) - 0.5 * thickness;
                const double c = std::clamp(0.5 - d / aa, 0.0, 1.0);
                auto& cell = cov[size_t(yy) * s + xx];
                cell = std::max(cell, c);
            }
    }
    return cov;
}

inline void render_eye(Canvas& img, const EyeGeometry& g, double base_r, double base_g,
                       double base_b, double disc_amp, double macula_depth, double vessel_depth,
                       Rng& rng) {
    const int s = img.side;
    // background: tinted base + two low-frequency gratings + pixel noise + vignette
    const double f1 = rng.uniform(0.5, 1.5), f2 = rng.uniform(1.0, 2.5);
    const double ph1 = rng.uniform(0.0, 6.283), ph2 = rng.uniform(0.0, 6.283);
    const double th1 = rng.uniform(0.0, 3.1416), th2 = rng.uniform(0.0, 3.1416);
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            const double u = double(x) / s, v = double(y) / s;
            const double w1 = std::cos(6.283 * f1 * (u * std::cos(th1) + v * std::sin(th1)) + ph1);
            const double w2 = std::cos(6.283 * f2 * (u * std::cos(th2) + v * std::sin(th2)) + ph2);
            const double tex = 0.02 * w1 + 0.015 * w2 + 0.01 * (rng.uniform() - 0.5);
            const double dx = u - 0.5, dy = v - 0.5;
            const double vig = 1.0 - 0.55 * std::pow(2.0 * std::hypot(dx, dy), 3.0);
            img.at(0, y, x) = (base_r + tex) * vig;
            img.at(1, y, x) = (base_g + tex * 0.8) * vig;
            img.at(2, y, x) = (base_b + tex * 0.6) * vig;
        }

    const double disc_rgb[3] = {disc_amp, disc_amp * 0.85, disc_amp * 0.55};
    add_cov(img, ellipse_cov(s, g.disc_cx, g.disc_cy, g.disc_rx, g.disc_ry), disc_rgb);

    const double vessel_rgb[3] = {-vessel_depth * 0.35, -vessel_depth * 0.85, -vessel_depth * 0.75};
    for (int i = 0; i < g.n_vessels; ++i)
        add_cov(img, bezier_cov(s, g.vessels[i], rng.uniform(1.2, 1.9)), vessel_rgb);

    // macula: soft gaussian darkening
    {
        const double sig = g.macula_r * 0.75;
        const int x0 = std::max(0, int(g.macula_cx - 3 * sig)), x1 = std::min(s - 1, int(g.macula_cx + 3 * sig));
        const int y0 = std::max(0, int(g.macula_cy - 3 * sig)), y1 = std::min(s - 1, int(g.macula_cy + 3 * sig));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double d2 = std::pow(x + 0.5 - g.macula_cx, 2) + std::pow(y + 0.5 - g.macula_cy, 2);
                const double w = std::exp(-d2 / (2 * sig * sig)) * macula_depth;
                img.at(0, y, x) -= w * 0.55;
                img.at(1, y, x) -= w * 0.85;
                img.at(2, y, x) -= w * 0.60;
            }
    }

    const double lesion_rgb[3] = {0.32, 0.28, 0.10};
    for (int i = 0; i < g.n_lesions; ++i)
        add_cov(img, ellipse_cov(s, g.lesions[i][0], g.lesions[i][1], g.lesions[i][2], g.lesions[i][2]),
                lesion_rgb);

    if (g.pallor_shift != 0.0)
        for (auto& p : img.px) p += g.pallor_shift;

    for (auto& p : img.px) p = std::clamp(p, 0.0, 1.0);
}

inline std::vector<uint8_t> quantize(const Canvas& img) {
    std::vector<uint8_t> out(img.px.size());
    for (size_t i = 0; i < img.px.size(); ++i)
        out[i] = uint8_t(std::lround(img.px[i] * 255.0));
    return out;
}

}  // namespace detail

// Patch mask of a disc ellipse: exactly the patches whose center lies inside.
inline std::vector<bool> disc_mask_from_geometry(const EyeGeometry& g, int image_side,
                                                 int patch_size) {
    const int grid = patch_grid_side(image_side, patch_size);
    std::vector<bool> mask(size_t(grid) * grid, false);
    for (int py = 0; py < grid; ++py)
        for (int px = 0; px < grid; ++px) {
            const double cx = (px + 0.5) * patch_size, cy = (py + 0.5) * patch_size;
            const double dx = (cx - g.disc_cx) / g.disc_rx, dy = (cy - g.disc_cy) / g.disc_ry;
            mask[size_t(py) * grid + px] = dx * dx + dy * dy <= 1.0;
        }
    return mask;
}

// One procedural bilateral pair. The right eye mirrors the left layout with
// small per-structure jitter; labels are decided first and drive the
// label-dependent parameter rules. The left-eye disc radius is drawn from the
// same marginal for every class, so class 1 carries no single-eye signal, and
// the disc amplitude is flux-normalized so radius asymmetry stays out of
// global intensity statistics.
inline BilateralSample generate_sample(const DatasetSpec& spec, Rng& rng) {
    spec.validate();
    const int s = spec.image_side;
    const double scale = s / 64.0;

    BilateralSample out;
    out.side = s;
    out.labels.assign(kClasses, 0);
    const bool asym = rng.bernoulli(spec.p_disc_asym);
    const bool lesions = rng.bernoulli(spec.p_lesions);
    const bool pallor = rng.bernoulli(spec.p_pallor);
    out.labels[1] = asym;
    out.labels[2] = lesions;
    out.labels[3] = pallor;
    out.labels[0] = !(asym || lesions || pallor);

    EyeGeometry& L = out.geo_left;
    EyeGeometry& R = out.geo_right;
    auto jit = [&](double amount) { return rng.uniform(-amount, amount); };

    // disc placement, mirrored horizontally
    L.disc_cx = rng.uniform(0.18, 0.42) * s;
    L.disc_cy = rng.uniform(0.32, 0.68) * s;
    R.disc_cx = (s - L.disc_cx) + jit(1.5 * scale);
    R.disc_cy = L.disc_cy + jit(1.5 * scale);

    // class-independent left marginal; the class decides only the contralateral radius
    L.disc_r = rng.uniform(7.2, 10.2) * scale;
    {
        const double delta = asym ? rng.uniform(2.2, 3.0) * scale : rng.uniform(0.0, 0.8) * scale;
        const bool minus_ok = L.disc_r - delta >= 6.9 * scale;
        const bool plus_ok = L.disc_r + delta <= 13.0 * scale;
        bool minus = minus_ok && (!plus_ok || rng.bernoulli(0.5));
        R.disc_r = minus ? L.disc_r - delta : L.disc_r + delta;
    }
    for (EyeGeometry* g : {&L, &R}) {
        const double aspect = jit(0.08);
        g->disc_rx = g->disc_r * (1.0 + aspect);
        g->disc_ry = g->disc_r * (1.0 - aspect);
    }

    // macula toward the temporal side, mirrored
    L.macula_cx = rng.uniform(0.60, 0.76) * s;
    L.macula_cy = rng.uniform(0.40, 0.60) * s;
    L.macula_r = rng.uniform(4.5, 6.5) * scale;
    R.macula_cx = (s - L.macula_cx) + jit(1.5 * scale);
    R.macula_cy = L.macula_cy + jit(1.5 * scale);
    R.macula_r = L.macula_r * (1.0 + jit(0.05));

    // vascular arcades out of the disc
    L.n_vessels = R.n_vessels = 2 + int(rng.uniform_int(2));
    for (int i = 0; i < L.n_vessels; ++i) {
        const double ang = rng.uniform(-1.1, 1.1) + (i % 2 == 0 ? 0.7 : -0.7);
        const double len = rng.uniform(0.45, 0.75) * s;
        const double ex = std::clamp(L.disc_cx + std::cos(ang) * len, 2.0, s - 2.0);
        const double ey = std::clamp(L.disc_cy + std::sin(ang) * len, 2.0, s - 2.0);
        const double bow = rng.uniform(-0.18, 0.18) * s;
        const double mx = 0.5 * (L.disc_cx + ex) - std::sin(ang) * bow;
        const double my = 0.5 * (L.disc_cy + ey) + std::cos(ang) * bow;
        L.vessels[i] = {L.disc_cx, L.disc_cy, mx, my, ex, ey};
        R.vessels[i] = {R.disc_cx,          R.disc_cy,          s - mx + jit(1.5 * scale),
                        my + jit(1.5 * scale), s - ex + jit(1.5 * scale), ey + jit(1.5 * scale)};
    }

    if (lesions) {
        L.n_lesions = R.n_lesions = 2 + int(rng.uniform_int(3));
        for (int i = 0; i < L.n_lesions; ++i) {
            const double x = rng.uniform(0.15, 0.85) * s, y = rng.uniform(0.15, 0.85) * s;
            const double r = rng.uniform(1.2, 2.2) * scale;
            L.lesions[i] = {x, y, r};
            R.lesions[i] = {(s - x) + jit(2.0 * scale), y + jit(2.0 * scale), r * (1.0 + jit(0.1))};
        }
    }

    if (pallor) {
        const double shift = rng.uniform(0.10, 0.16);
        (rng.bernoulli(0.5) ? L : R).pallor_shift = shift;
    }

    // shared appearance; disc amplitude normalized so total disc flux is
    // radius-independent
    const double base_r = 0.42 + jit(0.015), base_g = 0.27 + jit(0.012), base_b = 0.16 + jit(0.01);
    const double amp0 = rng.uniform(0.26, 0.32);
    const double r_ref = 8.5 * scale;
    const double macula_depth = rng.uniform(0.10, 0.16);
    const double vessel_depth = rng.uniform(0.12, 0.18);

    detail::Canvas cl(s), cr(s);
    detail::render_eye(cl, L, base_r, base_g, base_b, amp0 * (r_ref * r_ref) / (L.disc_rx * L.disc_ry),
                       macula_depth, vessel_depth, rng);
    detail::render_eye(cr, R, base_r, base_g, base_b, amp0 * (r_ref * r_ref) / (R.disc_rx * R.disc_ry),
                       macula_depth, vessel_depth, rng);
    out.left = detail::quantize(cl);
    out.right = detail::quantize(cr);
    out.gt_disc_left = disc_mask_from_geometry(L, s, spec.patch_size);
    out.gt_disc_right = disc_mask_from_geometry(R, s, spec.patch_size);
    return out;
}

inline uint64_t dataset_hash(const Dataset& ds);

inline Dataset generate_dataset(const DatasetSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.spec = spec;
    ds.samples.reserve(spec.total());
    for (int i = 0; i < spec.total(); ++i) {
        Rng rng(spec.seed, stream_of(0x5a011, uint64_t(i)));
        ds.samples.push_back(generate_sample(spec, rng));
    }
    ds.hash = dataset_hash(ds);
    return ds;
}

// ---------------------------------------------------------------------------
// noise stress and pairing disruption
// ---------------------------------------------------------------------------

// i.i.d. additive pixel noise, clamped to the unit interval.
inline Tensor add_gaussian_noise(const Tensor& img, double sigma, Rng& rng) {
    if (sigma < 0) throw ConfigError("noise sigma must be nonnegative");
    if (sigma == 0.0) return img;
    std::vector<double> d = img.value();
    for (auto& v : d) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
    return Tensor::from_data(img.shape(), std::move(d));
}

enum class ShuffleMode { eval_shuffle, train_shuffle };

// Derangement over [0,n): a permutation that leaves no pair intact.
inline std::vector<int> derangement(int n, Rng& rng) {
    if (n < 2) throw ConfigError("pairing disruption needs at least two samples");
    std::vector<int> perm(n);
    while (true) {
        for (int i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        bool fixed = false;
        for (int i = 0; i < n; ++i) fixed = fixed || perm[i] == i;
        if (!fixed) return perm;
    }
}

// Reassigns right eyes across the chosen split by a derangement; labels and
// left eyes stay with their sample, and the right-eye ground truth follows
// the moved image.
inline Dataset shuffle_pairs(const Dataset& ds, ShuffleMode mode, Rng& rng) {
    Dataset out = ds;
    const int begin = mode == ShuffleMode::eval_shuffle ? ds.test_begin() : ds.train_begin();
    const int count = mode == ShuffleMode::eval_shuffle ? ds.spec.n_test : ds.spec.n_train;
    std::vector<int> perm = derangement(count, rng);
    for (int i = 0; i < count; ++i) {
        const BilateralSample& src = ds.samples[size_t(begin + perm[i])];
        BilateralSample& dst = out.samples[size_t(begin + i)];
        dst.right = src.right;
        dst.gt_disc_right = src.gt_disc_right;
        dst.geo_right = src.geo_right;
    }
    out.hash = dataset_hash(out);
    return out;
}

// ---------------------------------------------------------------------------
// binary file format (little-endian, see README for the layout)
// ---------------------------------------------------------------------------

namespace detail {

constexpr uint32_t kMagic = 0x444c5342;  // "BSLD"
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("dataset file truncated");
    return v;
}

inline void put_geo(std::ostream& os, const EyeGeometry& g) {
    put(os, g.disc_cx); put(os, g.disc_cy); put(os, g.disc_r);
    put(os, g.disc_rx); put(os, g.disc_ry);
    put(os, g.macula_cx); put(os, g.macula_cy); put(os, g.macula_r);
    put(os, int32_t(g.n_vessels));
    for (const auto& v : g.vessels)
        for (double x : v) put(os, x);
    put(os, int32_t(g.n_lesions));
    for (const auto& l : g.lesions)
        for (double x : l) put(os, x);
    put(os, g.pallor_shift);
}

inline EyeGeometry get_geo(std::istream& is) {
    EyeGeometry g;
    g.disc_cx = get<double>(is); g.disc_cy = get<double>(is); g.disc_r = get<double>(is);
    g.disc_rx = get<double>(is); g.disc_ry = get<double>(is);
    g.macula_cx = get<double>(is); g.macula_cy = get<double>(is); g.macula_r = get<double>(is);
    g.n_vessels = get<int32_t>(is);
    for (auto& v : g.vessels)
        for (double& x : v) x = get<double>(is);
    g.n_lesions = get<int32_t>(is);
    for (auto& l : g.lesions)
        for (double& x : l) x = get<double>(is);
    g.pallor_shift = get<double>(is);
    return g;
}

inline void put_mask(std::ostream& os, const std::vector<bool>& mask) {
    uint8_t byte = 0;
    int bit = 0;
    for (bool b : mask) {
        byte |= uint8_t(b) << bit;
        if (++bit == 8) {
            put(os, byte);
            byte = 0;
            bit = 0;
        }
    }
    if (bit) put(os, byte);
}

inline std::vector<bool> get_mask(std::istream& is, int n) {
    std::vector<bool> mask(n);
    uint8_t byte = 0;
    for (int i = 0; i < n; ++i) {
        if (i % 8 == 0) byte = get<uint8_t>(is);
        mask[i] = (byte >> (i % 8)) & 1;
    }
    return mask;
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    detail::put(os, detail::kMagic);
    detail::put(os, detail::kVersion);
    detail::put(os, int32_t(ds.spec.n_train));
    detail::put(os, int32_t(ds.spec.n_val));
    detail::put(os, int32_t(ds.spec.n_test));
    detail::put(os, int32_t(ds.spec.image_side));
    detail::put(os, int32_t(ds.spec.patch_size));
    detail::put(os, int32_t(ds.spec.classes));
    detail::put(os, ds.spec.p_disc_asym);
    detail::put(os, ds.spec.p_lesions);
    detail::put(os, ds.spec.p_pallor);
    detail::put(os, ds.spec.seed);
    const int n_patches = ds.spec.image_side / ds.spec.patch_size;
    (void)n_patches;
    for (const auto& s : ds.samples) {
        for (int l : s.labels) detail::put(os, uint8_t(l));
        detail::put_geo(os, s.geo_left);
        detail::put_geo(os, s.geo_right);
        detail::put_mask(os, s.gt_disc_left);
        detail::put_mask(os, s.gt_disc_right);
        os.write(reinterpret_cast<const char*>(s.left.data()), std::streamsize(s.left.size()));
        os.write(reinterpret_cast<const char*>(s.right.data()), std::streamsize(s.right.size()));
    }
    if (!os) throw IoError("write failure on " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    if (detail::get<uint32_t>(is) != detail::kMagic) throw IoError(path + " is not a dataset file");
    if (detail::get<uint32_t>(is) != detail::kVersion) throw IoError(path + ": unsupported version");
    Dataset ds;
    ds.spec.n_train = detail::get<int32_t>(is);
    ds.spec.n_val = detail::get<int32_t>(is);
    ds.spec.n_test = detail::get<int32_t>(is);
    ds.spec.image_side = detail::get<int32_t>(is);
    ds.spec.patch_size = detail::get<int32_t>(is);
    ds.spec.classes = detail::get<int32_t>(is);
    ds.spec.p_disc_asym = detail::get<double>(is);
    ds.spec.p_lesions = detail::get<double>(is);
    ds.spec.p_pallor = detail::get<double>(is);
    ds.spec.seed = detail::get<uint64_t>(is);
    ds.spec.validate();
    const int g = ds.spec.image_side / ds.spec.patch_size;
    const int n_patches = g * g;
    const size_t img_bytes = size_t(3) * ds.spec.image_side * ds.spec.image_side;
    ds.samples.resize(ds.spec.total());
    for (auto& s : ds.samples) {
        s.side = ds.spec.image_side;
        s.labels.resize(kClasses);
        for (int c = 0; c < kClasses; ++c) s.labels[c] = detail::get<uint8_t>(is);
        s.geo_left = detail::get_geo(is);
        s.geo_right = detail::get_geo(is);
        s.gt_disc_left = detail::get_mask(is, n_patches);
        s.gt_disc_right = detail::get_mask(is, n_patches);
        s.left.resize(img_bytes);
        s.right.resize(img_bytes);
        is.read(reinterpret_cast<char*>(s.left.data()), std::streamsize(img_bytes));
        is.read(reinterpret_cast<char*>(s.right.data()), std::streamsize(img_bytes));
        if (!is) throw IoError(path + " truncated");
    }
    ds.hash = dataset_hash(ds);
    return ds;
}

// FNV-1a over images, labels and masks; pairs runs to the data they saw.
inline uint64_t dataset_hash(const Dataset& ds) {
    uint64_t h = 1469598103934665603ULL;
    auto eat = [&](uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xff;
            h *= 1099511628211ULL;
        }
    };
    eat(ds.spec.seed);
    eat(uint64_t(ds.spec.total()));
    for (const auto& s : ds.samples) {
        for (int l : s.labels) eat(uint64_t(l));
        for (size_t i = 0; i < s.left.size(); i += 97) eat(s.left[i]);
        for (size_t i = 0; i < s.right.size(); i += 97) eat(s.right[i]);
    }
    return h;
}

}  // namespace bislot::synth
