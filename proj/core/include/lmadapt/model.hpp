#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lmadapt/ckpt.hpp"
#include "lmadapt/lora.hpp"
#include "lmadapt/tensor.hpp"

namespace lmadapt {

struct ModelConfig {
    int64_t vocab_size = 0;
    int64_t d_model = 0;
    int64_t n_layers = 0;
    int64_t n_heads = 0;
    int64_t head_dim = 0;
    int64_t d_ff = 0;
    double rope_base = 10000.0;
    int64_t max_seq = 128;
    bool tie_lm_head = true;

    void validate() const;  // n_heads*head_dim == d_model, head_dim even, positives
    std::string digest() const;
};

// Canonical parameter names for a config:
//   embed_tokens [vocab, d_model]
//   layers.<i>.{q,k,v,o}_proj [d_model, d_model]
//   layers.<i>.{gate,up}_proj [d_ff, d_model], layers.<i>.down_proj [d_model, d_ff]
//   layers.<i>.{ln_attn, ln_mlp} [d_model], ln_final [d_model]
//   lm_head [vocab, d_model] unless tied
std::vector<std::string> canonical_param_names(const ModelConfig& cfg);
std::vector<int64_t> param_shape(const ModelConfig& cfg, const std::string& name);

struct TinyLM {
    ModelConfig config;
    Checkpoint params;

    // Exact canonical name/shape match, no extras, none missing. BF16
    // parameters are converted to F32 up front (storage dtype only).
    void validate_and_normalize();
};

TinyLM init_params(const ModelConfig& cfg, uint64_t seed, Dtype dtype = Dtype::F32);
TinyLM load_model(const ModelConfig& cfg, const Checkpoint& params);

// Runtime fake-quantization of activations (dynamic per-tensor FP8). Applied
// to the input of each linear projection whose name is not excluded.
struct ActQuantConfig {
    bool fp8 = false;
    std::vector<std::string> exclusions;  // suffix match
};

struct ForwardOptions {
    const LoraAdapter* adapter = nullptr;
    bool training = false;      // enables LoRA dropout
    uint64_t dropout_key = 0;   // RandomStream key for dropout masks
    ActQuantConfig act_quant;
};

// Pre-norm causal decoder forward pass; returns logits [T, vocab]. Pure
// function of (parameters, tokens, options); safe to call concurrently.
Tensor forward(const TinyLM& model, std::span<const int32_t> tokens,
               const ForwardOptions& opts = {});

}  // namespace lmadapt
