#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "bislot/errors.hpp"
#include "bislot/rng.hpp"
#include "bislot/tensor.hpp"

namespace bislot::metrics {

// Diagonal concentration ratio of a nonnegative affinity matrix.
inline double rho(const Tensor& c) {
    if (c.ndim() != 2 || c.rows() != c.cols()) throw ShapeError("rho: need a square matrix");
    double diag = 0.0, total = 0.0;
    for (int i = 0; i < c.rows(); ++i)
        for (int j = 0; j < c.cols(); ++j) {
            double v = c.at(i, j);
            if (v < 0) throw NumericError("rho: negative affinity");
            total += v;
            if (i == j) diag += v;
        }
    if (total == 0.0) throw NumericError("rho: all-zero matrix");
    return diag / total;
}

// Mean over rows of the largest off-diagonal entry, rows normalized to sum 1.
inline double off_diag_row_max(const Tensor& c) {
    if (c.ndim() != 2 || c.rows() != c.cols()) throw ShapeError("off_diag_row_max: need a square matrix");
    const int k = c.rows();
    if (k < 2) throw NumericError("off_diag_row_max: need at least two slots");
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < k; ++j) row_sum += c.at(i, j);
        if (row_sum == 0.0) throw NumericError("off_diag_row_max: zero row");
        double best = 0.0;
        for (int j = 0; j < k; ++j)
            if (j != i) best = std::max(best, c.at(i, j) / row_sum);
        acc += best;
    }
    return acc / k;
}

// Mean per-row Shannon entropy in bits, rows renormalized to distributions.
inline double attention_entropy_bits(const Tensor& c) {
    if (c.ndim() != 2) throw ShapeError("attention_entropy_bits: need a 2-D tensor");
    const int m = c.rows(), n = c.cols();
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < n; ++j) row_sum += c.at(i, j);
        if (row_sum <= 0.0) throw NumericError("attention_entropy_bits: zero row");
        double h = 0.0;
        for (int j = 0; j < n; ++j) {
            double p = c.at(i, j) / row_sum;
            if (p > 0.0) h -= p * std::log2(p);
        }
        acc += h;
    }
    return acc / m;
}

namespace detail {

// LU solve with partial pivoting; a is destroyed, b holds the solution.
inline void lu_solve(std::vector<double>& a, std::vector<double>& b, int n, int nrhs) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[size_t(r) * n + col]) > std::abs(a[size_t(piv) * n + col])) piv = r;
        if (std::abs(a[size_t(piv) * n + col]) < 1e-300)
            throw NumericError("singular system in scatter solve");
        if (piv != col) {
            for (int j = 0; j < n; ++j) std::swap(a[size_t(piv) * n + j], a[size_t(col) * n + j]);
            for (int j = 0; j < nrhs; ++j)
                std::swap(b[size_t(piv) * nrhs + j], b[size_t(col) * nrhs + j]);
        }
        const double d = a[size_t(col) * n + col];
        for (int r = col + 1; r < n; ++r) {
            const double f = a[size_t(r) * n + col] / d;
            if (f == 0.0) continue;
            for (int j = col; j < n; ++j) a[size_t(r) * n + j] -= f * a[size_t(col) * n + j];
            for (int j = 0; j < nrhs; ++j)
                b[size_t(r) * nrhs + j] -= f * b[size_t(col) * nrhs + j];
        }
    }
    for (int col = n - 1; col >= 0; --col) {
        const double d = a[size_t(col) * n + col];
        for (int j = 0; j < nrhs; ++j) {
            double v = b[size_t(col) * nrhs + j];
            for (int r = col + 1; r < n; ++r) v -= a[size_t(col) * n + r] * b[size_t(r) * nrhs + j];
            b[size_t(col) * nrhs + j] = v / d;
        }
    }
}

}  // namespace detail

// trace(S_W^{-1} S_B) with S_W regularized by +reg·I. Labels are single class
// indices; multi-label data must be reduced by the caller beforehand.
inline double fisher_ratio(const std::vector<std::vector<double>>& features,
                           const std::vector<int>& labels, double reg = 1e-6) {
    const int m = int(features.size());
    if (m == 0 || labels.size() != features.size())
        throw ShapeError("fisher_ratio: features and labels disagree");
    const int d = int(features[0].size());
    if (d > m) throw NumericError("fisher_ratio: more dimensions than samples");
    int max_label = 0;
    for (int l : labels) max_label = std::max(max_label, l);
    const int n_classes = max_label + 1;
    std::vector<int> counts(n_classes, 0);
    for (int l : labels) counts[l]++;
    int populated = 0;
    for (int c : counts)
        if (c >= 2) populated++;
    if (populated < 2) throw NumericError("fisher_ratio: need two classes with two samples each");

    std::vector<std::vector<double>> mu_c(n_classes, std::vector<double>(d, 0.0));
    std::vector<double> mu(d, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) {
            mu_c[labels[i]][j] += features[i][j];
            mu[j] += features[i][j];
        }
    for (int c = 0; c < n_classes; ++c)
        if (counts[c] > 0)
            for (int j = 0; j < d; ++j) mu_c[c][j] /= counts[c];
    for (int j = 0; j < d; ++j) mu[j] /= m;

    std::vector<double> sw(size_t(d) * d, 0.0), sb(size_t(d) * d, 0.0);
    for (int i = 0; i < m; ++i) {
        const auto& f = features[i];
        const auto& mc = mu_c[labels[i]];
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) sw[size_t(a) * d + b] += (f[a] - mc[a]) * (f[b] - mc[b]);
    }
    for (int c = 0; c < n_classes; ++c) {
        if (counts[c] == 0) continue;
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                sb[size_t(a) * d + b] += counts[c] * (mu_c[c][a] - mu[a]) * (mu_c[c][b] - mu[b]);
    }
    for (int a = 0; a < d; ++a) sw[size_t(a) * d + a] += reg;

    detail::lu_solve(sw, sb, d, d);
    double trace = 0.0;
    for (int a = 0; a < d; ++a) trace += sb[size_t(a) * d + a];
    return trace;
}

// Per-slot variance of the attention mass over grid coordinates (var_x +
// var_y, in patch units); each row treated as a distribution.
inline std::vector<double> spatial_variance(const Tensor& attn, int grid_side) {
    if (attn.ndim() != 2 || attn.cols() != grid_side * grid_side)
        throw ShapeError("spatial_variance: attention width must be grid_side^2");
    const int k = attn.rows(), n = attn.cols();
    std::vector<double> out(k, 0.0);
    for (int i = 0; i < k; ++i) {
        double total = 0.0;
        for (int j = 0; j < n; ++j) total += attn.at(i, j);
        if (total <= 0.0) continue;
        double ex = 0, ey = 0, ex2 = 0, ey2 = 0;
        for (int j = 0; j < n; ++j) {
            const double p = attn.at(i, j) / total;
            const double x = j % grid_side, y = j / grid_side;
            ex += p * x;
            ey += p * y;
            ex2 += p * x * x;
            ey2 += p * y * y;
        }
        out[i] = (ex2 - ex * ex) + (ey2 - ey * ey);
    }
    return out;
}

namespace detail {

inline double jaccard(const std::vector<int>& a, const std::vector<int>& b, int slot) {
    int inter = 0, uni = 0;
    for (size_t j = 0; j < a.size(); ++j) {
        const bool in_a = a[j] == slot, in_b = b[j] == slot;
        inter += in_a && in_b;
        uni += in_a || in_b;
    }
    return uni == 0 ? 1.0 : double(inter) / uni;  // both empty counts as agreement
}

}  // namespace detail

// Mean pairwise Jaccard index of the token sets a slot claims across samples.
inline double jaccard_stability(const std::vector<std::vector<int>>& assignments, int slot) {
    const int m = int(assignments.size());
    if (m < 2) throw NumericError("jaccard_stability: need at least two samples");
    double acc = 0.0;
    int pairs = 0;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            acc += detail::jaccard(assignments[i], assignments[j], slot);
            ++pairs;
        }
    return acc / pairs;
}

struct IouDice {
    double iou;
    double dice;
};

// Overlap of binary masks; the empty-vs-empty pair scores (1, 1).
inline IouDice miou_dice(const std::vector<bool>& pred, const std::vector<bool>& gt) {
    if (pred.size() != gt.size()) throw ShapeError("miou_dice: mask lengths differ");
    int inter = 0, uni = 0, p = 0, g = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        inter += pred[i] && gt[i];
        uni += pred[i] || gt[i];
        p += pred[i];
        g += gt[i];
    }
    if (uni == 0) return {1.0, 1.0};
    return {double(inter) / uni, 2.0 * inter / (p + g)};
}

struct MacroResult {
    double macro = 0.0;
    std::vector<double> per_class;  // NaN where the class was skipped
    int skipped = 0;
};

// Macro ROC AUC via the rank statistic with ties credited 0.5. Classes
// without both a positive and a negative are skipped and counted.
inline MacroResult macro_auc(const std::vector<std::vector<double>>& scores,
                             const std::vector<std::vector<int>>& labels) {
    const int m = int(scores.size());
    if (m == 0 || labels.size() != scores.size())
        throw ShapeError("macro_auc: scores and labels disagree");
    const int c = int(scores[0].size());
    MacroResult out;
    out.per_class.assign(c, std::nan(""));
    double acc = 0.0;
    int valid = 0;
    std::vector<int> order(m);
    std::vector<double> rank(m);
    for (int cls = 0; cls < c; ++cls) {
        int n_pos = 0;
        for (int i = 0; i < m; ++i) n_pos += labels[i][cls] > 0;
        const int n_neg = m - n_pos;
        if (n_pos == 0 || n_neg == 0) {
            out.skipped++;
            continue;
        }
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return scores[a][cls] < scores[b][cls]; });
        for (int i = 0; i < m;) {
            int j = i;
            while (j + 1 < m && scores[order[j + 1]][cls] == scores[order[i]][cls]) ++j;
            const double avg = 0.5 * (i + j) + 1.0;  // average of 1-based ranks i+1..j+1
            for (int t = i; t <= j; ++t) rank[order[t]] = avg;
            i = j + 1;
        }
        double rank_pos = 0.0;
        for (int i = 0; i < m; ++i)
            if (labels[i][cls] > 0) rank_pos += rank[i];
        const double u = rank_pos - 0.5 * n_pos * (n_pos + 1.0);
        const double auc = u / (double(n_pos) * n_neg);
        out.per_class[cls] = auc;
        acc += auc;
        ++valid;
    }
    if (valid == 0) throw NumericError("macro_auc: no class has both positives and negatives");
    out.macro = acc / valid;
    return out;
}

// Macro F1 at a probability threshold; scores must be probabilities. Uses the
// same class-validity rule as macro_auc; degenerate 0/0 F1 counts as 0.
inline MacroResult macro_f1(const std::vector<std::vector<double>>& scores,
                            const std::vector<std::vector<int>>& labels, double threshold = 0.5) {
    const int m = int(scores.size());
    if (m == 0 || labels.size() != scores.size())
        throw ShapeError("macro_f1: scores and labels disagree");
    const int c = int(scores[0].size());
    MacroResult out;
    out.per_class.assign(c, std::nan(""));
    double acc = 0.0;
    int valid = 0;
    for (int cls = 0; cls < c; ++cls) {
        int n_pos = 0;
        for (int i = 0; i < m; ++i) n_pos += labels[i][cls] > 0;
        if (n_pos == 0 || n_pos == m) {
            out.skipped++;
            continue;
        }
        int tp = 0, fp = 0, fn = 0;
        for (int i = 0; i < m; ++i) {
            const bool pred = scores[i][cls] >= threshold;
            const bool truth = labels[i][cls] > 0;
            tp += pred && truth;
            fp += pred && !truth;
            fn += !pred && truth;
        }
        const double denom = 2.0 * tp + fp + fn;
        const double f1 = denom == 0.0 ? 0.0 : 2.0 * tp / denom;
        out.per_class[cls] = f1;
        acc += f1;
        ++valid;
    }
    if (valid == 0) throw NumericError("macro_f1: no class has both positives and negatives");
    out.macro = acc / valid;
    return out;
}

// Lloyd's algorithm on row features with restarts; the best run by inertia
// wins. Empty clusters are reseeded from the point farthest from its
// centroid.
inline std::vector<int> kmeans_baseline(const std::vector<std::vector<double>>& features, int k,
                                        Rng& rng, int iters = 50, int restarts = 5) {
    const int n = int(features.size());
    if (k <= 0 || k > n) throw ConfigError("kmeans_baseline: k must be in [1, n]");
    const int d = int(features[0].size());
    auto sqdist = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
        return s;
    };

    std::vector<int> best_assign(n, 0);
    double best_inertia = std::numeric_limits<double>::infinity();
    for (int rs = 0; rs < restarts; ++rs) {
        // distinct random points as initial centroids
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        std::vector<std::vector<double>> cent(k);
        for (int c = 0; c < k; ++c) cent[c] = features[idx[c]];

        std::vector<int> assign(n, 0);
        for (int it = 0; it < iters; ++it) {
            bool changed = false;
            for (int i = 0; i < n; ++i) {
                int arg = 0;
                double best = sqdist(features[i], cent[0]);
                for (int c = 1; c < k; ++c) {
                    double dd = sqdist(features[i], cent[c]);
                    if (dd < best) {
                        best = dd;
                        arg = c;
                    }
                }
                if (assign[i] != arg) changed = true;
                assign[i] = arg;
            }
            std::vector<int> counts(k, 0);
            std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
            for (int i = 0; i < n; ++i) {
                counts[assign[i]]++;
                for (int j = 0; j < d; ++j) sums[assign[i]][j] += features[i][j];
            }
            for (int c = 0; c < k; ++c) {
                if (counts[c] == 0) {
                    // farthest point from its current centroid
                    int far = 0;
                    double far_d = -1.0;
                    for (int i = 0; i < n; ++i) {
                        double dd = sqdist(features[i], cent[assign[i]]);
                        if (dd > far_d) {
                            far_d = dd;
                            far = i;
                        }
                    }
                    cent[c] = features[far];
                    assign[far] = c;
                    changed = true;
                } else {
                    for (int j = 0; j < d; ++j) cent[c][j] = sums[c][j] / counts[c];
                }
            }
            if (!changed) break;
        }
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) inertia += sqdist(features[i], cent[assign[i]]);
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best_assign = assign;
        }
    }
    return best_assign;
}

// Mean pairwise cosine similarity of matrix rows (slot collapse diagnostic).
inline double mean_pairwise_cosine(const Tensor& rows) {
    const int k = rows.rows(), d = rows.cols();
    if (k < 2) throw NumericError("mean_pairwise_cosine: need at least two rows");
    double acc = 0.0;
    int pairs = 0;
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) {
            double dot = 0, na = 0, nb = 0;
            for (int t = 0; t < d; ++t) {
                dot += rows.at(i, t) * rows.at(j, t);
                na += rows.at(i, t) * rows.at(i, t);
                nb += rows.at(j, t) * rows.at(j, t);
            }
            if (na > 0 && nb > 0) acc += dot / std::sqrt(na * nb);
            ++pairs;
        }
    return acc / pairs;
}

// Registered metric names; harness records must use one of these.
inline const std::vector<std::string>& metric_registry() {
    static const std::vector<std::string> names = {
        "macro_auc",       "macro_f1",           "loss_cls",        "loss_recon",
        "rho",             "off_diag_row_max",   "entropy_bits",    "fisher_ratio",
        "slot_cosine",     "miou_best",          "dice_best",       "miou_all_mean",
        "miou_kmeans",     "dice_kmeans",        "spatial_variance", "jaccard",
        "disc_concentration", "best_slot",       "val_auc",         "rho_untrained",
        "entropy_untrained"};
    return names;
}

struct MetricRecord {
    std::string name;
    double value = 0.0;
    uint64_t seed = 0;
    std::string config_hash;
    std::vector<double> auxiliary;

    MetricRecord(std::string n, double v, uint64_t s, std::string hash,
                 std::vector<double> aux = {})
        : name(std::move(n)), value(v), seed(s), config_hash(std::move(hash)),
          auxiliary(std::move(aux)) {
        if (!std::isfinite(value)) throw NumericError("metric '" + name + "' is not finite");
        const auto& reg = metric_registry();
        if (std::find(reg.begin(), reg.end(), name) == reg.end())
            throw ConfigError("metric '" + name + "' is not in the registry");
    }
};

}  // namespace bislot::metrics
