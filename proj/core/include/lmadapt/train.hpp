#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmadapt/lora.hpp"
#include "lmadapt/model.hpp"
#include "lmadapt/tensor.hpp"

namespace lmadapt {

struct TrainConfig {
    double peak_lr = 1e-3;
    int64_t total_steps = 100;
    int64_t warmup_steps = 10;
    int64_t global_batch = 8;
    int64_t micro_batch = 2;
    int64_t accum_steps = 4;
    int64_t seq_len = 32;
    double epochs = 0.0;  // informational
    double weight_decay = 0.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    int64_t eval_every = 25;  // 0 disables held-out eval

    void validate() const;  // global = micro * accum, warmup < total
};

// Linear warmup from peak/warmup to peak, then cosine to 0 at total_steps.
double lr_at(int64_t step, const TrainConfig& cfg);

// Mean over positions of -log softmax(logits)[target]; target -1 is ignored.
// Accumulates in F64 regardless of the logits dtype.
double cross_entropy(const Tensor& logits, std::span<const int32_t> targets);

struct BackwardOptions {
    bool training = false;  // enables LoRA dropout
    uint64_t dropout_key = 0;
};

struct BackwardResult {
    double loss = 0.0;
    std::map<std::string, Tensor> grads;  // trainable adapter tensors only
};

// Analytic reverse-mode gradients of the next-token loss with respect to the
// adapter's trainable tensors. Frozen base weights get no entry.
BackwardResult loss_and_grads(const TinyLM& model, const LoraAdapter& adapter,
                              std::span<const int32_t> tokens, std::span<const int32_t> targets,
                              const BackwardOptions& opts = {});

struct Sequence {
    std::vector<int32_t> inputs;
    std::vector<int32_t> targets;
};
using MicroBatch = std::vector<Sequence>;

struct AdamWState {
    int64_t t = 0;
    std::map<std::string, Tensor> m, v;
};

// Decoupled weight decay update over the adapter's tensors.
void adamw_step(LoraAdapter& adapter, const std::map<std::string, Tensor>& grads, AdamWState& state,
                double lr, const TrainConfig& cfg);

// Gradients averaged over all sequences of all micro batches, then one AdamW
// update. Returns the mean loss; skips the update when it is not finite.
double train_step(const TinyLM& model, LoraAdapter& adapter, AdamWState& state,
                  const std::vector<MicroBatch>& micro_batches, double lr, const TrainConfig& cfg,
                  uint64_t dropout_key, double* grad_norm_out = nullptr);

struct StepMetrics {
    int64_t step = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    std::optional<double> eval_loss;
};

struct TrainResult {
    LoraAdapter adapter;
    std::vector<StepMetrics> metrics;
};

// Two-stage-capable training loop: chunks the tokenized corpus into
// (seq_len + 1)-token windows, shuffles per epoch from the seeded stream, and
// runs total_steps AdamW updates with the warmup + cosine schedule. A held-out
// slice (every 8th chunk) provides the periodic eval loss. Aborts with
// diagnostics when the loss stops being finite.
TrainResult train(const TinyLM& model, const LoraAdapter& adapter,
                  const std::vector<std::vector<int32_t>>& docs, const TrainConfig& cfg);

void write_metrics_jsonl(const std::vector<StepMetrics>& metrics, const std::string& path);

}  // namespace lmadapt
