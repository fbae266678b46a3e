#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lmadapt/ckpt.hpp"
#include "lmadapt/tensor.hpp"

namespace lmadapt {

struct TinyLM;

// The seven per-block projection targets trainable via low-rank factors.
extern const std::vector<std::string> kDefaultLoraTargets;

struct LoraConfig {
    int64_t rank = 8;
    double alpha = 8.0;
    double dropout_p = 0.0;  // applied to the low-rank branch input, training only
    std::vector<std::string> target_modules = kDefaultLoraTargets;
    bool train_embeddings = false;

    void validate() const;
};

// Per (layer, module) factor pair stored flat under canonical names:
//   layers.<i>.<target>.lora_A   [r, in]
//   layers.<i>.<target>.lora_B   [out, r]
//   embed_tokens.delta           [vocab, d_model]   when train_embeddings
struct LoraAdapter {
    LoraConfig config;
    std::map<std::string, Tensor> tensors;

    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    const Tensor& at(const std::string& name) const;

    // A/B pair names for a target weight name ("layers.0.q_proj"), or empty
    // strings when the target is not adapted.
    std::pair<std::string, std::string> pair_names(const std::string& weight_name) const;
};

// A ~ N(0, 0.02^2) from the shared counter PRNG keyed by (seed, tensor name),
// B = 0, embedding delta = 0. The adapted model starts behavior-identical to
// the base.
LoraAdapter lora_init(const TinyLM& model, const LoraConfig& cfg, uint64_t seed);

// delta = (alpha / r) * B * A, shape [out, in]
Tensor lora_delta(const Tensor& a, const Tensor& b, int64_t rank, double alpha);

// Fold the adapter into a plain checkpoint: W = W0 + delta per target,
// embedding delta added when present, everything else copied verbatim.
Checkpoint merge_lora(const Checkpoint& base, const LoraAdapter& adapter);

// Percentage of trainable parameters against the frozen base parameter count.
// Targets are matched by name suffix against 2-D base tensors.
double trainable_fraction(const Checkpoint& base, const LoraConfig& cfg);

// Adapter persistence uses the ckpt container with config recorded in meta.
Checkpoint adapter_to_checkpoint(const LoraAdapter& adapter);
LoraAdapter adapter_from_checkpoint(const Checkpoint& ckpt);

}  // namespace lmadapt
