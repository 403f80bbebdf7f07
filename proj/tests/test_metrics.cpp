#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "bislot/metrics.hpp"

using namespace bislot;
using namespace bislot::metrics;

namespace {

Tensor square(int k, const std::vector<double>& vals) { return Tensor::from_data({k, k}, vals); }

}  // namespace

TEST_CASE("rho of a uniform 8x8 matrix is exactly 0.125") {
    CHECK(rho(Tensor::full({8, 8}, 1.0)) == 0.125);
    CHECK(rho(Tensor::full({8, 8}, 0.37)) == Catch::Approx(0.125).margin(1e-15));
}

TEST_CASE("rho of the identity is 1 and of a derangement 0") {
    std::vector<double> eye(16, 0.0), der(16, 0.0);
    for (int i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
    der[0 * 4 + 1] = der[1 * 4 + 2] = der[2 * 4 + 3] = der[3 * 4 + 0] = 1.0;
    CHECK(rho(square(4, eye)) == 1.0);
    CHECK(rho(square(4, der)) == 0.0);
}

TEST_CASE("rho rejects an all-zero matrix and is scale invariant") {
    CHECK_THROWS_AS(rho(Tensor::zeros({3, 3})), NumericError);
    Rng rng(1);
    std::vector<double> v(25);
    for (auto& x : v) x = rng.uniform();
    Tensor c = square(5, v);
    for (auto& x : v) x *= 7.3;
    CHECK(rho(c) == Catch::Approx(rho(square(5, v))).margin(1e-12));
}

TEST_CASE("off_diag_row_max closed forms") {
    std::vector<double> eye(16, 0.0);
    for (int i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
    CHECK(off_diag_row_max(square(4, eye)) == 0.0);
    CHECK(off_diag_row_max(Tensor::full({8, 8}, 0.125)) == Catch::Approx(0.125).margin(1e-15));
    CHECK_THROWS_AS(off_diag_row_max(Tensor::full({1, 1}, 1.0)), NumericError);
}

TEST_CASE("off_diag_row_max matches a scalar oracle") {
    Rng rng(2);
    const int k = 6;
    std::vector<double> v(size_t(k) * k);
    for (auto& x : v) x = rng.uniform();
    Tensor c = square(k, v);
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
        double row = 0, best = 0;
        for (int j = 0; j < k; ++j) row += v[size_t(i) * k + j];
        for (int j = 0; j < k; ++j)
            if (j != i) best = std::max(best, v[size_t(i) * k + j] / row);
        acc += best;
    }
    CHECK(std::abs(off_diag_row_max(c) - acc / k) <= 1e-12);
}

TEST_CASE("attention entropy closed forms") {
    CHECK(std::abs(attention_entropy_bits(Tensor::full({8, 8}, 0.125)) - 3.0) <= 1e-12);
    std::vector<double> onehot(16, 0.0);
    for (int i = 0; i < 4; ++i) onehot[i * 4 + (i + 1) % 4] = 1.0;
    CHECK(attention_entropy_bits(square(4, onehot)) == 0.0);
    Tensor half = Tensor::from_data({1, 4}, {0.5, 0.5, 0.0, 0.0});
    CHECK(attention_entropy_bits(half) == Catch::Approx(1.0).margin(1e-15));
    CHECK_THROWS_AS(attention_entropy_bits(Tensor::zeros({2, 2})), NumericError);
}

TEST_CASE("attention entropy is maximized exactly at uniform rows") {
    Rng rng(3);
    const int k = 8;
    std::vector<double> v(size_t(k) * k);
    for (auto& x : v) x = rng.uniform() + 0.01;
    CHECK(attention_entropy_bits(square(k, v)) < 3.0);
    CHECK(attention_entropy_bits(Tensor::full({k, k}, 0.4)) == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("fisher_ratio vanishes when class means coincide") {
    std::vector<std::vector<double>> f = {{-1.0}, {1.0}, {-1.0}, {1.0}};
    std::vector<int> y = {0, 0, 1, 1};
    CHECK(std::abs(fisher_ratio(f, y)) <= 1e-9);
}

TEST_CASE("fisher_ratio matches the 1-D hand computation") {
    // classes at means ±1 with within-class variance 1: S_W=4, S_B=4
    std::vector<std::vector<double>> f = {{-2.0}, {0.0}, {0.0}, {2.0}};
    std::vector<int> y = {0, 0, 1, 1};
    CHECK(fisher_ratio(f, y) == Catch::Approx(1.0).margin(1e-5));
}

TEST_CASE("fisher_ratio is invariant under a common invertible map") {
    Rng rng(4);
    const int m = 60;
    std::vector<std::vector<double>> f(m, std::vector<double>(2));
    std::vector<int> y(m);
    for (int i = 0; i < m; ++i) {
        y[i] = i % 3;
        f[i][0] = rng.normal() + 2.0 * y[i];
        f[i][1] = rng.normal() - 1.0 * y[i];
    }
    double base = fisher_ratio(f, y);
    // invertible map [[1.3, 0.4], [-0.2, 0.9]]
    std::vector<std::vector<double>> g(m, std::vector<double>(2));
    for (int i = 0; i < m; ++i) {
        g[i][0] = 1.3 * f[i][0] + 0.4 * f[i][1];
        g[i][1] = -0.2 * f[i][0] + 0.9 * f[i][1];
    }
    CHECK(std::abs(fisher_ratio(g, y) - base) / std::max(1.0, std::abs(base)) <= 1e-6);
}

TEST_CASE("fisher_ratio preconditions") {
    std::vector<std::vector<double>> f = {{1.0}, {2.0}};
    CHECK_THROWS_AS(fisher_ratio(f, {0, 0}), NumericError);
    std::vector<std::vector<double>> wide = {{1.0, 2.0, 3.0}, {2.0, 1.0, 0.0}};
    CHECK_THROWS_AS(fisher_ratio(wide, {0, 1}), NumericError);
}

TEST_CASE("spatial_variance closed forms") {
    // all mass on one patch
    std::vector<double> one(16, 0.0);
    one[5] = 1.0;
    CHECK(spatial_variance(Tensor::from_data({1, 16}, one), 4)[0] == 0.0);

    // uniform over a g x g grid: 2 (g^2 - 1) / 12
    const int g = 4;
    Tensor uni = Tensor::full({1, g * g}, 1.0 / (g * g));
    CHECK(spatial_variance(uni, g)[0] == Catch::Approx(2.0 * (g * g - 1) / 12.0).margin(1e-12));

    // equal mass on two horizontally adjacent patches
    std::vector<double> two(16, 0.0);
    two[5] = 0.5;
    two[6] = 0.5;
    CHECK(spatial_variance(Tensor::from_data({1, 16}, two), 4)[0] ==
          Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("jaccard_stability closed forms") {
    std::vector<std::vector<int>> same = {{0, 1, 1, 0}, {0, 1, 1, 0}};
    CHECK(jaccard_stability(same, 1) == 1.0);
    std::vector<std::vector<int>> disjoint = {{1, 1, 0, 0}, {0, 0, 1, 1}};
    CHECK(jaccard_stability(disjoint, 1) == 0.0);
    // slot-1 sets {1,2} and {2,3} over 5 tokens
    std::vector<std::vector<int>> partial = {{0, 1, 1, 0, 0}, {0, 0, 1, 1, 0}};
    CHECK(jaccard_stability(partial, 1) == Catch::Approx(1.0 / 3.0).margin(1e-15));
    CHECK_THROWS_AS(jaccard_stability({{0, 1}}, 1), NumericError);
}

TEST_CASE("jaccard_stability is symmetric in sample order") {
    Rng rng(5);
    std::vector<std::vector<int>> a(4, std::vector<int>(10));
    for (auto& row : a)
        for (auto& v : row) v = int(rng.uniform_int(3));
    std::vector<std::vector<int>> rev(a.rbegin(), a.rend());
    for (int slot = 0; slot < 3; ++slot)
        CHECK(jaccard_stability(a, slot) == Catch::Approx(jaccard_stability(rev, slot)).margin(1e-15));
}

TEST_CASE("miou_dice closed forms") {
    std::vector<bool> a = {true, true, false, false};
    auto same = miou_dice(a, a);
    CHECK(same.iou == 1.0);
    CHECK(same.dice == 1.0);

    std::vector<bool> b = {false, false, true, true};
    auto dis = miou_dice(a, b);
    CHECK(dis.iou == 0.0);
    CHECK(dis.dice == 0.0);

    std::vector<bool> p = {true, true, false, false};
    std::vector<bool> g = {false, true, true, false};
    auto both = miou_dice(p, g);
    CHECK(both.iou == Catch::Approx(1.0 / 3.0).margin(1e-15));
    CHECK(both.dice == Catch::Approx(0.5).margin(1e-15));

    std::vector<bool> empty = {false, false};
    auto ee = miou_dice(empty, empty);
    CHECK(ee.iou == 1.0);
    CHECK(ee.dice == 1.0);
}

TEST_CASE("dice equals 2 iou over 1+iou for every mask pair up to N=6") {
    for (int n = 1; n <= 6; ++n) {
        for (int pm = 0; pm < (1 << n); ++pm)
            for (int gm = 0; gm < (1 << n); ++gm) {
                std::vector<bool> p(n), g(n);
                for (int i = 0; i < n; ++i) {
                    p[i] = pm & (1 << i);
                    g[i] = gm & (1 << i);
                }
                auto r = miou_dice(p, g);
                REQUIRE(std::abs(r.dice - 2.0 * r.iou / (1.0 + r.iou)) <= 1e-12);
            }
    }
}

TEST_CASE("macro_auc closed forms") {
    // perfectly ordered
    std::vector<std::vector<double>> s1 = {{0.1}, {0.2}, {0.8}, {0.9}};
    std::vector<std::vector<int>> y1 = {{0}, {0}, {1}, {1}};
    CHECK(macro_auc(s1, y1).macro == 1.0);

    // all ties
    std::vector<std::vector<double>> s2 = {{0.5}, {0.5}, {0.5}, {0.5}};
    CHECK(macro_auc(s2, y1).macro == 0.5);

    // the 4-sample hand case
    std::vector<std::vector<double>> s3 = {{0.1}, {0.4}, {0.35}, {0.8}};
    std::vector<std::vector<int>> y3 = {{0}, {0}, {1}, {1}};
    CHECK(macro_auc(s3, y3).macro == 0.75);
}

TEST_CASE("macro_auc skips single-sign classes and errors when none are valid") {
    std::vector<std::vector<double>> s = {{0.2, 0.3}, {0.8, 0.6}};
    std::vector<std::vector<int>> y = {{0, 1}, {1, 1}};
    auto r = macro_auc(s, y);
    CHECK(r.skipped == 1);
    CHECK(std::isnan(r.per_class[1]));
    CHECK(r.macro == 1.0);
    std::vector<std::vector<int>> allpos = {{1, 1}, {1, 1}};
    CHECK_THROWS_AS(macro_auc(s, allpos), NumericError);
}

TEST_CASE("macro_auc is invariant under strictly monotone score transforms") {
    Rng rng(6);
    const int m = 40;
    std::vector<std::vector<double>> s(m, std::vector<double>(2));
    std::vector<std::vector<int>> y(m, std::vector<int>(2));
    for (int i = 0; i < m; ++i) {
        s[i][0] = rng.normal();
        s[i][1] = rng.normal();
        y[i][0] = rng.bernoulli(0.4);
        y[i][1] = rng.bernoulli(0.6);
    }
    auto base = macro_auc(s, y);
    auto t = s;
    for (auto& row : t)
        for (auto& v : row) v = std::exp(3.0 * v) + 1.0;
    auto mapped = macro_auc(t, y);
    CHECK(base.macro == Catch::Approx(mapped.macro).margin(1e-12));
}

TEST_CASE("macro_f1 closed forms") {
    std::vector<std::vector<double>> perfect = {{0.9}, {0.9}, {0.1}, {0.1}};
    std::vector<std::vector<int>> y = {{1}, {1}, {0}, {0}};
    CHECK(macro_f1(perfect, y).macro == 1.0);

    std::vector<std::vector<double>> allneg = {{0.1}, {0.1}, {0.1}, {0.1}};
    CHECK(macro_f1(allneg, y).macro == 0.0);

    // TP=1 FP=1 FN=1 over 4 samples
    std::vector<std::vector<double>> s = {{0.9}, {0.9}, {0.1}, {0.1}};
    std::vector<std::vector<int>> y2 = {{1}, {0}, {1}, {0}};
    CHECK(macro_f1(s, y2).macro == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("kmeans recovers two well-separated groups") {
    Rng rng(7);
    std::vector<std::vector<double>> f;
    for (int i = 0; i < 20; ++i)
        f.push_back({rng.normal() * 0.1 + (i < 10 ? 0.0 : 10.0), rng.normal() * 0.1});
    Rng km(1);
    auto assign = kmeans_baseline(f, 2, km);
    for (int i = 1; i < 10; ++i) CHECK(assign[i] == assign[0]);
    for (int i = 11; i < 20; ++i) CHECK(assign[i] == assign[10]);
    CHECK(assign[0] != assign[10]);
}

TEST_CASE("kmeans with k=n isolates every point") {
    Rng rng(8);
    std::vector<std::vector<double>> f;
    for (int i = 0; i < 6; ++i) f.push_back({double(i), double(i % 2)});
    Rng km(2);
    auto assign = kmeans_baseline(f, 6, km);
    std::vector<int> sorted = assign;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 6; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("kmeans is deterministic for a fixed seed") {
    Rng rng(9);
    std::vector<std::vector<double>> f;
    for (int i = 0; i < 30; ++i) f.push_back({rng.normal(), rng.normal(), rng.normal()});
    Rng a(3), b(3);
    CHECK(kmeans_baseline(f, 4, a) == kmeans_baseline(f, 4, b));
}

TEST_CASE("metric records validate names and finiteness") {
    CHECK_NOTHROW(metrics::MetricRecord("macro_auc", 0.5, 1, "abc"));
    CHECK_THROWS_AS(metrics::MetricRecord("not_a_metric", 0.5, 1, "abc"), ConfigError);
    CHECK_THROWS_AS(metrics::MetricRecord("macro_auc", std::nan(""), 1, "abc"), NumericError);
}

TEST_CASE("mean pairwise cosine detects collapsed rows") {
    Tensor collapsed = Tensor::from_data({3, 2}, {1, 1, 2, 2, 3, 3});
    CHECK(mean_pairwise_cosine(collapsed) == Catch::Approx(1.0).margin(1e-12));
    Tensor orth = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    CHECK(mean_pairwise_cosine(orth) == 0.0);
}
