#include "lmadapt/lora.hpp"

#include <algorithm>

#include "lmadapt/model.hpp"
#include "lmadapt/rng.hpp"

namespace lmadapt {

const std::vector<std::string> kDefaultLoraTargets = {
    "q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj"};

void LoraConfig::validate() const {
    if (rank < 1) config_error("lora: rank must be >= 1");
    if (!(alpha > 0)) config_error("lora: alpha must be positive");
    if (dropout_p < 0.0 || dropout_p >= 1.0) config_error("lora: dropout must be in [0, 1)");
    for (const auto& t : target_modules) {
        if (std::find(kDefaultLoraTargets.begin(), kDefaultLoraTargets.end(), t) ==
            kDefaultLoraTargets.end())
            config_error("lora: unknown target module '" + t + "'");
    }
}

const Tensor& LoraAdapter::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) data_error("adapter: no tensor named '" + name + "'");
    return it->second;
}

std::pair<std::string, std::string> LoraAdapter::pair_names(const std::string& weight_name) const {
    for (const auto& t : config.target_modules) {
        if (weight_name.size() > t.size() + 1 && weight_name.ends_with("." + t))
            return {weight_name + ".lora_A", weight_name + ".lora_B"};
    }
    return {"", ""};
}

LoraAdapter lora_init(const TinyLM& model, const LoraConfig& cfg, uint64_t seed) {
    cfg.validate();
    Dtype dt = model.params.at("embed_tokens").dtype();
    LoraAdapter ad;
    ad.config = cfg;
    RandomStream root(seed);
    for (int64_t l = 0; l < model.config.n_layers; ++l) {
        std::string pfx = "layers." + std::to_string(l) + ".";
        for (const auto& t : cfg.target_modules) {
            std::string wname = pfx + t;
            const Tensor& w = model.params.at(wname);  // errors on unknown target
            int64_t out = w.dim(0), in = w.dim(1);
            Tensor a(dt, {cfg.rank, in});
            fill_normal(a, root.fork("lora/" + wname + ".lora_A"), 0.0, 0.02);
            Tensor b(dt, {out, cfg.rank});  // zeros: adapted model starts as a no-op
            ad.tensors.emplace(wname + ".lora_A", std::move(a));
            ad.tensors.emplace(wname + ".lora_B", std::move(b));
        }
    }
    if (cfg.train_embeddings) {
        const Tensor& e = model.params.at("embed_tokens");
        ad.tensors.emplace("embed_tokens.delta", Tensor(dt, e.shape()));
    }
    return ad;
}

Tensor lora_delta(const Tensor& a, const Tensor& b, int64_t rank, double alpha) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != rank || b.dim(1) != rank)
        data_error("lora_delta: factor shapes " + shape_str(b.shape()) + " x " +
                   shape_str(a.shape()) + " do not match rank " + std::to_string(rank));
    return scale(matmul(b, a), alpha / static_cast<double>(rank));
}

namespace {

bool tensor_is_zero(const Tensor& t) {
    for (int64_t i = 0; i < t.numel(); ++i)
        if (t.get(i) != 0.0) return false;
    return true;
}

}  // namespace

Checkpoint merge_lora(const Checkpoint& base, const LoraAdapter& adapter) {
    Checkpoint out;
    out.meta = base.meta;
    for (const auto& [name, t] : base.tensors) {
        auto [an, bn] = adapter.pair_names(name);
        if (!an.empty() && adapter.has(an)) {
            const Tensor& a = adapter.at(an);
            const Tensor& b = adapter.at(bn);
            if (a.dtype() != t.dtype())
                data_error("merge_lora: dtype mismatch between base '" + name + "' and its delta");
            Tensor delta = lora_delta(a, b, adapter.config.rank, adapter.config.alpha);
            if (delta.shape() != t.shape())
                data_error("merge_lora: delta shape " + shape_str(delta.shape()) +
                           " does not match '" + name + "' " + shape_str(t.shape()));
            // zero deltas copy verbatim so a fresh adapter is byte-exact
            out.tensors.emplace(name, tensor_is_zero(delta) ? t : add(t, delta));
        } else if (name == "embed_tokens" && adapter.has("embed_tokens.delta")) {
            const Tensor& delta = adapter.at("embed_tokens.delta");
            if (delta.dtype() != t.dtype())
                data_error("merge_lora: dtype mismatch between embeddings and their delta");
            out.tensors.emplace(name, tensor_is_zero(delta) ? t : add(t, delta));
        } else {
            out.tensors.emplace(name, t);
        }
    }
    return out;
}

double trainable_fraction(const Checkpoint& base, const LoraConfig& cfg) {
    cfg.validate();
    int64_t base_params = base.total_params();
    if (base_params == 0) return 0.0;
    int64_t trainable = 0;
    for (const auto& [name, t] : base.tensors) {
        if (t.rank() != 2) continue;
        for (const auto& target : cfg.target_modules) {
            bool match = name == target || name.ends_with("." + target);
            if (match) {
                trainable += cfg.rank * (t.dim(0) + t.dim(1));
                break;
            }
        }
    }
    if (cfg.train_embeddings && base.has("embed_tokens"))
        trainable += base.at("embed_tokens").numel();
    return 100.0 * static_cast<double>(trainable) / static_cast<double>(base_params);
}

Checkpoint adapter_to_checkpoint(const LoraAdapter& adapter) {
    Checkpoint ckpt;
    ckpt.tensors = adapter.tensors;
    ckpt.meta["adapter.rank"] = std::to_string(adapter.config.rank);
    ckpt.meta["adapter.alpha"] = std::to_string(adapter.config.alpha);
    ckpt.meta["adapter.dropout"] = std::to_string(adapter.config.dropout_p);
    std::string targets;
    for (const auto& t : adapter.config.target_modules) {
        if (!targets.empty()) targets += ",";
        targets += t;
    }
    ckpt.meta["adapter.targets"] = targets;
    ckpt.meta["adapter.train_embeddings"] = adapter.config.train_embeddings ? "1" : "0";
    return ckpt;
}

LoraAdapter adapter_from_checkpoint(const Checkpoint& ckpt) {
    LoraAdapter ad;
    ad.tensors = ckpt.tensors;
    try {
        ad.config.rank = std::stoll(ckpt.meta.at("adapter.rank"));
        ad.config.alpha = std::stod(ckpt.meta.at("adapter.alpha"));
        ad.config.dropout_p = std::stod(ckpt.meta.at("adapter.dropout"));
        ad.config.train_embeddings = ckpt.meta.at("adapter.train_embeddings") == "1";
        ad.config.target_modules.clear();
        std::string targets = ckpt.meta.at("adapter.targets");
        size_t pos = 0;
        while (pos < targets.size()) {
            size_t comma = targets.find(',', pos);
            if (comma == std::string::npos) comma = targets.size();
            ad.config.target_modules.push_back(targets.substr(pos, comma - pos));
            pos = comma + 1;
        }
    } catch (const std::out_of_range&) {
        data_error("adapter checkpoint is missing adapter.* metadata");
    } catch (const std::invalid_argument&) {
        data_error("adapter checkpoint has malformed adapter.* metadata");
    }
    ad.config.validate();
    return ad;
}

}  // namespace lmadapt
