#pragma once

// Forward-pass trace shared between model.cpp and autograd.cpp. Holds every
// intermediate the reverse pass needs; sized for desk-scale models.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "lmadapt/model.hpp"
#include "lmadapt/tensor.hpp"

namespace lmadapt::detail {

struct LoraBranchTrace {
    Tensor u;        // [T, r] low-rank activation
    Tensor dropmul;  // [T, in] dropout multipliers, empty when dropout off
};

struct LayerTrace {
    Tensor x_in;          // [T, d] block input
    Tensor h_attn;        // [T, d] normed attention input
    Tensor inv_rms_attn;  // [T]
    Tensor q_rot, k_rot;  // [T, d] post-rotation
    Tensor v;             // [T, d]
    Tensor probs;         // [H, T, T]
    Tensor attn_ctx;      // [T, d] head-concatenated attention output
    Tensor x_mid;         // [T, d] after attention residual
    Tensor h_mlp;         // [T, d] normed MLP input
    Tensor inv_rms_mlp;   // [T]
    Tensor gate_out;      // [T, f] pre-activation
    Tensor up_out;        // [T, f]
    Tensor inner;         // [T, f] silu(gate) * up
    std::map<std::string, LoraBranchTrace> lora;  // keyed by target weight name
};

struct ForwardTrace {
    Tensor embed_eff;  // [V, d] embeddings with delta applied
    Tensor x0;         // [T, d]
    std::vector<LayerTrace> layers;
    Tensor x_last;         // [T, d] final norm input
    Tensor h_final;        // [T, d]
    Tensor inv_rms_final;  // [T]
    Tensor logits;         // [T, V]
};

Tensor forward_traced(const TinyLM& model, std::span<const int32_t> tokens,
                      const ForwardOptions& opts, ForwardTrace* trace);

// y = x * inv_rms * gain rowwise; inv_rms returned per row.
std::pair<Tensor, Tensor> rms_norm_traced(const Tensor& x, const Tensor& gain, double eps);

// Rotary embedding over heads, half-split pairing (i, i + hd/2); direction
// +1 applies the rotation, -1 inverts it (used for gradients).
Tensor rope_apply(const Tensor& x, int64_t n_heads, int64_t head_dim, double base, int direction,
                  int64_t pos0 = 0);

}  // namespace lmadapt::detail
