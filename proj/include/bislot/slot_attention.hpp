#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "bislot/rng.hpp"
#include "bislot/tensor.hpp"

namespace bislot {

// Learnable slot priors and the shared projection / update weights.
// sigma is parameterized as exp(log_sigma) with log_sigma clamped to [-20, 2]
// so it stays positive under gradient descent.
struct SlotParams {
    int num_slots = 0;
    int dim = 0;
    Tensor mu;         // K×D
    Tensor log_sigma;  // K×D
    Tensor Wq, Wk, Wv; // D×D, shared across iterations
    GruParams gru;
    Tensor ln_input_gamma, ln_input_beta; // D
    Tensor ln_slot_gamma, ln_slot_beta;   // D

    static SlotParams init(int num_slots, int dim, Rng& rng) {
        SlotParams p;
        p.num_slots = num_slots;
        p.dim = dim;
        std::vector<double> m(size_t(num_slots) * dim);
        for (auto& v : m) v = rng.normal() * 0.5;
        p.mu = Tensor::from_data({num_slots, dim}, std::move(m), true);
        p.log_sigma = Tensor::full({num_slots, dim}, -1.0, true);
        const double w_scale = 1.0 / std::sqrt(double(dim));
        auto mat = [&]() {
            std::vector<double> d(size_t(dim) * dim);
            for (auto& v : d) v = rng.normal() * w_scale;
            return Tensor::from_data({dim, dim}, std::move(d), true);
        };
        p.Wq = mat();
        p.Wk = mat();
        p.Wv = mat();
        p.gru = GruParams::init(dim, rng, w_scale);
        p.ln_input_gamma = Tensor::full({dim}, 1.0, true);
        p.ln_input_beta = Tensor::zeros({dim}, true);
        p.ln_slot_gamma = Tensor::full({dim}, 1.0, true);
        p.ln_slot_beta = Tensor::zeros({dim}, true);
        return p;
    }

    std::vector<Tensor> params() const {
        std::vector<Tensor> out = {mu,  log_sigma,      Wq,            Wk,
                                   Wv,  ln_input_gamma, ln_input_beta, ln_slot_gamma,
                                   ln_slot_beta};
        auto g = gru.params();
        out.insert(out.end(), g.begin(), g.end());
        return out;
    }
};

// Slots plus the attention maps of every iteration. `competition` is the
// softmax over slots (columns sum to 1), `attn` its L1 row renormalization
// (rows sum to 1); the final entries drive correspondence and grounding.
struct SlotState {
    Tensor slots;                    // K×D
    std::vector<Tensor> attn;        // per iteration, K×N
    std::vector<Tensor> competition; // per iteration, K×N
    int iterations_run = 0;
};

// s0 = mu + exp(log_sigma) ⊙ eps, reparameterized so mu and log_sigma train.
inline Tensor init_slots(const SlotParams& p, Rng& rng) {
    std::vector<double> eps(size_t(p.num_slots) * p.dim);
    for (auto& v : eps) v = rng.normal();
    Tensor noise = Tensor::from_data({p.num_slots, p.dim}, std::move(eps));
    return add(p.mu, mul(exp(clamp(p.log_sigma, -20.0, 2.0)), noise));
}

namespace detail {

struct SlotIterationOut {
    Tensor slots;
    Tensor attn;        // renormalized ã
    Tensor competition; // slot-axis softmax a
};

// One refinement step with precomputed key/value projections of the tokens.
inline SlotIterationOut slot_iteration_kv(const Tensor& slots, const Tensor& k, const Tensor& v,
                                          const SlotParams& p) {
    Tensor q = matmul(layer_norm(slots, p.ln_slot_gamma, p.ln_slot_beta), p.Wq);
    Tensor logits = mul_scalar(matmul_nt(q, k), 1.0 / std::sqrt(double(p.dim)));
    Tensor a = softmax(logits, 0);       // competition over slots, per token
    Tensor attn = row_l1_normalize(a);   // weighted-mean weights over tokens
    Tensor updates = matmul(attn, v);
    return {gru_cell(updates, slots, p.gru), attn, a};
}

inline std::pair<Tensor, Tensor> project_tokens(const Tensor& tokens, const SlotParams& p) {
    Tensor normed = layer_norm(tokens, p.ln_input_gamma, p.ln_input_beta);
    return {matmul(normed, p.Wk), matmul(normed, p.Wv)};
}

}  // namespace detail

// One public refinement step: (slots', renormalized attention).
inline std::pair<Tensor, Tensor> slot_iteration(const Tensor& slots, const Tensor& tokens,
                                                const SlotParams& p) {
    auto [k, v] = detail::project_tokens(tokens, p);
    auto out = detail::slot_iteration_kv(slots, k, v, p);
    return {out.slots, out.attn};
}

// Refinement from explicit initial slots, recording the attention maps of
// every step. Keys/values depend only on the tokens and are projected once.
inline SlotState run_slot_attention_from(const Tensor& initial_slots, const Tensor& tokens,
                                         const SlotParams& p, int iterations) {
    if (iterations < 1) throw ConfigError("slot attention requires at least one iteration");
    SlotState state;
    state.slots = initial_slots;
    auto [k, v] = detail::project_tokens(tokens, p);
    for (int t = 0; t < iterations; ++t) {
        auto out = detail::slot_iteration_kv(state.slots, k, v, p);
        state.slots = out.slots;
        state.attn.push_back(out.attn);
        state.competition.push_back(out.competition);
    }
    state.iterations_run = iterations;
    return state;
}

// Full decomposition: reparameterized init, then iterative refinement.
inline SlotState run_slot_attention(const Tensor& tokens, const SlotParams& p, int iterations,
                                    Rng& rng) {
    return run_slot_attention_from(init_slots(p, rng), tokens, p, iterations);
}

// Hard token-to-slot assignment from the final competition softmax; ties go
// to the lowest slot index.
inline std::vector<int> argmax_masks(const SlotState& state) {
    if (state.iterations_run < 1) throw ConfigError("argmax_masks: no iterations recorded");
    const Tensor& a = state.competition.back();
    const int k = a.rows(), n = a.cols();
    std::vector<int> assignment(n, 0);
    for (int j = 0; j < n; ++j) {
        double best = a.at(0, j);
        int arg = 0;
        for (int i = 1; i < k; ++i)
            if (a.at(i, j) > best) {
                best = a.at(i, j);
                arg = i;
            }
        assignment[j] = arg;
    }
    return assignment;
}

}  // namespace bislot
