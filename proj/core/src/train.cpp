#include "lmadapt/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "lmadapt/rng.hpp"

namespace lmadapt {

void TrainConfig::validate() const {
    if (!(peak_lr > 0)) config_error("train: peak_lr must be positive");
    if (total_steps < 1) config_error("train: total_steps must be >= 1");
    if (warmup_steps < 0) config_error("train: warmup_steps must be >= 0");
    if (warmup_steps >= total_steps) config_error("train: warmup_steps must be < total_steps");
    if (micro_batch < 1 || accum_steps < 1) config_error("train: batch sizes must be >= 1");
    if (global_batch != micro_batch * accum_steps)
        config_error("train: global_batch must equal micro_batch * accum_steps");
    if (seq_len < 1) config_error("train: seq_len must be >= 1");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
        config_error("train: adam betas must be in [0, 1)");
    if (!(adam_eps > 0)) config_error("train: adam_eps must be positive");
    if (weight_decay < 0) config_error("train: weight_decay must be >= 0");
}

namespace {

// cos(pi * t) with exact values at half-integers
double cospi(double t) {
    t = std::fmod(t, 2.0);
    if (t < 0) t += 2.0;
    double sign = 1.0;
    if (t > 1.0) t = 2.0 - t;
    if (t > 0.5) {
        t = 1.0 - t;
        sign = -1.0;
    }
    if (t == 0.5) return 0.0;
    if (t == 0.0) return sign;
    return sign * std::cos(M_PI * t);
}

}  // namespace

double lr_at(int64_t step, const TrainConfig& cfg) {
    if (step < 0 || step > cfg.total_steps)
        config_error("lr_at: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(cfg.total_steps) + "]");
    if (step < cfg.warmup_steps)
        return cfg.peak_lr * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
    double t = static_cast<double>(step - cfg.warmup_steps) /
               static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    return cfg.peak_lr * 0.5 * (1.0 + cospi(t));
}

void adamw_step(LoraAdapter& adapter, const std::map<std::string, Tensor>& grads, AdamWState& state,
                double lr, const TrainConfig& cfg) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));
    for (auto& [name, theta] : adapter.tensors) {
        auto git = grads.find(name);
        if (git == grads.end()) data_error("adamw: missing gradient for '" + name + "'");
        const Tensor& g = git->second;
        Tensor& m = state.m.try_emplace(name, Tensor(theta.dtype(), theta.shape())).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor(theta.dtype(), theta.shape())).first->second;
        for (int64_t i = 0; i < theta.numel(); ++i) {
            const double gi = g.get(i);
            const double mi = cfg.adam_beta1 * m.get(i) + (1.0 - cfg.adam_beta1) * gi;
            const double vi = cfg.adam_beta2 * v.get(i) + (1.0 - cfg.adam_beta2) * gi * gi;
            m.set(i, mi);
            v.set(i, vi);
            const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.adam_eps);
            theta.set(i, theta.get(i) - lr * (update + cfg.weight_decay * theta.get(i)));
        }
    }
}

double train_step(const TinyLM& model, LoraAdapter& adapter, AdamWState& state,
                  const std::vector<MicroBatch>& micro_batches, double lr, const TrainConfig& cfg,
                  uint64_t dropout_key, double* grad_norm_out) {
    std::map<std::string, Tensor> sum;
    double loss_sum = 0.0;
    int64_t n_seq = 0;
    for (size_t mb = 0; mb < micro_batches.size(); ++mb) {
        for (size_t si = 0; si < micro_batches[mb].size(); ++si) {
            const Sequence& seq = micro_batches[mb][si];
            BackwardOptions bo;
            bo.training = true;
            bo.dropout_key = RandomStream::with_key(dropout_key)
                                 .fork("mb" + std::to_string(mb) + "/seq" + std::to_string(si))
                                 .key();
            BackwardResult r = loss_and_grads(model, adapter, seq.inputs, seq.targets, bo);
            loss_sum += r.loss;
            ++n_seq;
            if (!std::isfinite(r.loss)) continue;  // caller aborts on the mean
            for (auto& [name, g] : r.grads) {
                auto it = sum.find(name);
                if (it == sum.end())
                    sum.emplace(name, std::move(g));
                else
                    add_inplace(it->second, g);
            }
        }
    }
    if (n_seq == 0) data_error("train_step: empty batch");
    const double inv = 1.0 / static_cast<double>(n_seq);
    double sq = 0.0;
    for (auto& [name, g] : sum) {
        (void)name;
        g = scale(g, inv);
        for (int64_t i = 0; i < g.numel(); ++i) sq += g.get(i) * g.get(i);
    }
    if (grad_norm_out != nullptr) *grad_norm_out = std::sqrt(sq);
    const double mean_loss = loss_sum * inv;
    if (std::isfinite(mean_loss)) adamw_step(adapter, sum, state, lr, cfg);
    return mean_loss;
}

namespace {

std::vector<Sequence> chunk_corpus(const std::vector<std::vector<int32_t>>& docs, int64_t seq_len) {
    std::vector<int32_t> stream;
    for (const auto& doc : docs) stream.insert(stream.end(), doc.begin(), doc.end());
    std::vector<Sequence> chunks;
    const size_t window = static_cast<size_t>(seq_len) + 1;
    for (size_t off = 0; off + window <= stream.size(); off += window) {
        Sequence s;
        s.inputs.assign(stream.begin() + off, stream.begin() + off + window - 1);
        s.targets.assign(stream.begin() + off + 1, stream.begin() + off + window);
        chunks.push_back(std::move(s));
    }
    return chunks;
}

}  // namespace

TrainResult train(const TinyLM& model, const LoraAdapter& adapter,
                  const std::vector<std::vector<int32_t>>& docs, const TrainConfig& cfg) {
    cfg.validate();
    std::vector<Sequence> chunks = chunk_corpus(docs, cfg.seq_len);
    if (chunks.empty())
        data_error("train: corpus too small for seq_len " + std::to_string(cfg.seq_len));

    std::vector<Sequence> train_set, eval_set;
    for (size_t i = 0; i < chunks.size(); ++i) {
        if (cfg.eval_every > 0 && chunks.size() >= 16 && i % 8 == 7)
            eval_set.push_back(chunks[i]);
        else
            train_set.push_back(chunks[i]);
    }

    RandomStream root(cfg.seed);
    TrainResult out;
    out.adapter = adapter;
    AdamWState state;

    std::vector<size_t> order(train_set.size());
    size_t cursor = order.size();  // forces a shuffle on first use
    int64_t epoch = 0;
    auto next_seq = [&]() -> const Sequence& {
        if (cursor >= order.size()) {
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            RandomStream shuffle = root.fork("data/epoch" + std::to_string(epoch));
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[shuffle.next_below(i)]);
            cursor = 0;
            ++epoch;
        }
        return train_set[order[cursor++]];
    };

    auto eval_loss = [&]() -> double {
        double total = 0.0;
        for (const Sequence& s : eval_set) {
            ForwardOptions fo;
            fo.adapter = &out.adapter;
            Tensor logits = forward(model, s.inputs, fo);
            total += cross_entropy(logits, s.targets);
        }
        return total / static_cast<double>(eval_set.size());
    };

    for (int64_t step = 0; step < cfg.total_steps; ++step) {
        const double lr = lr_at(step, cfg);
        std::vector<MicroBatch> micros(static_cast<size_t>(cfg.accum_steps));
        for (auto& mb : micros)
            for (int64_t i = 0; i < cfg.micro_batch; ++i) mb.push_back(next_seq());

        const uint64_t dropout_key = root.fork("dropout/step" + std::to_string(step)).key();
        double grad_norm = 0.0;
        double loss = train_step(model, out.adapter, state, micros, lr, cfg, dropout_key, &grad_norm);

        StepMetrics sm;
        sm.step = step;
        sm.lr = lr;
        sm.train_loss = loss;
        if (!std::isfinite(loss))
            numeric_error("train: non-finite loss at step " + std::to_string(step) + " (lr " +
                          std::to_string(lr) + ", grad norm " + std::to_string(grad_norm) + ")");
        if (!eval_set.empty() &&
            ((cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) || step + 1 == cfg.total_steps))
            sm.eval_loss = eval_loss();
        out.metrics.push_back(sm);
    }
    return out;
}

void write_metrics_jsonl(const std::vector<StepMetrics>& metrics, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) data_error("metrics: cannot open '" + path + "' for writing");
    for (const auto& m : metrics) {
        nlohmann::json j;
        j["step"] = m.step;
        j["lr"] = m.lr;
        j["train_loss"] = m.train_loss;
        if (m.eval_loss.has_value()) j["eval_loss"] = *m.eval_loss;
        f << j.dump() << "\n";
    }
}

}  // namespace lmadapt
