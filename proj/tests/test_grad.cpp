#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "lmadapt/lora.hpp"
#include "lmadapt/model.hpp"
#include "lmadapt/rng.hpp"
#include "lmadapt/train.hpp"

using namespace lmadapt;

namespace {

ModelConfig grad_config(bool tied = true) {
    ModelConfig cfg;
    cfg.vocab_size = 17;
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.head_dim = 4;
    cfg.d_ff = 12;
    cfg.max_seq = 8;
    cfg.tie_lm_head = tied;
    return cfg;
}

Tensor forward_with(const TinyLM& model, const LoraAdapter& adapter,
                    const std::vector<int32_t>& tokens) {
    ForwardOptions fo;
    fo.adapter = &adapter;
    return forward(model, tokens, fo);
}

// central finite differences against the analytic gradients, all trainable
// tensors, F64
double max_rel_error(const ModelConfig& cfg, const LoraConfig& lc, uint64_t seed) {
    TinyLM model = init_params(cfg, seed, Dtype::F64);
    LoraAdapter adapter = lora_init(model, lc, seed + 1);
    // non-trivial B so gradients flow through every branch
    RandomStream rng(seed + 2);
    for (auto& [name, t] : adapter.tensors)
        if (name.ends_with(".lora_B") || name == "embed_tokens.delta")
            fill_normal(t, rng.fork(name), 0.0, 0.05);

    std::vector<int32_t> tokens = {3, 1, 4, 1, 5, 9};
    std::vector<int32_t> targets = {1, 4, 1, 5, 9, 2};

    BackwardResult res = loss_and_grads(model, adapter, tokens, targets);
    REQUIRE(std::isfinite(res.loss));

    const double h = 1e-5;
    double worst = 0.0;
    for (auto& [name, t] : adapter.tensors) {
        REQUIRE(res.grads.count(name) == 1);
        const Tensor& g = res.grads.at(name);
        for (int64_t i = 0; i < t.numel(); ++i) {
            double orig = t.get(i);
            t.set(i, orig + h);
            double up = cross_entropy(forward_with(model, adapter, tokens), targets);
            t.set(i, orig - h);
            double down = cross_entropy(forward_with(model, adapter, tokens), targets);
            t.set(i, orig);
            double numeric = (up - down) / (2.0 * h);
            double analytic = g.get(i);
            double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            worst = std::max(worst, std::abs(numeric - analytic) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("gradient of B is zero when A is zero") {
    TinyLM model = init_params(grad_config(), 1, Dtype::F64);
    LoraConfig lc;
    lc.rank = 2;
    lc.alpha = 2.0;
    LoraAdapter adapter = lora_init(model, lc, 2);
    for (auto& [name, t] : adapter.tensors)
        if (name.ends_with(".lora_A")) t = Tensor(t.dtype(), t.shape());  // zero A

    std::vector<int32_t> tokens = {1, 2, 3};
    std::vector<int32_t> targets = {2, 3, 4};
    BackwardResult res = loss_and_grads(model, adapter, tokens, targets);
    for (const auto& [name, g] : res.grads) {
        if (!name.ends_with(".lora_B")) continue;
        for (int64_t i = 0; i < g.numel(); ++i) CHECK(g.get(i) == 0.0);
    }
}

TEST_CASE("frozen base weights have no gradient entry") {
    TinyLM model = init_params(grad_config(), 3, Dtype::F64);
    LoraConfig lc;
    lc.rank = 2;
    lc.alpha = 2.0;
    LoraAdapter adapter = lora_init(model, lc, 4);
    std::vector<int32_t> tokens = {1, 2, 3};
    std::vector<int32_t> targets = {2, 3, 4};
    BackwardResult res = loss_and_grads(model, adapter, tokens, targets);
    CHECK(res.grads.count("layers.0.q_proj") == 0);
    CHECK(res.grads.count("embed_tokens") == 0);
    for (const auto& [name, g] : res.grads) {
        (void)g;
        CHECK(adapter.tensors.count(name) == 1);
    }
}

TEST_CASE("finite differences confirm every trainable tensor (tied head)") {
    LoraConfig lc;
    lc.rank = 2;
    lc.alpha = 2.0;
    lc.train_embeddings = true;
    CHECK(max_rel_error(grad_config(true), lc, 11) <= 1e-4);
}

TEST_CASE("finite differences confirm every trainable tensor (untied head)") {
    LoraConfig lc;
    lc.rank = 2;
    lc.alpha = 2.0;
    lc.train_embeddings = true;
    CHECK(max_rel_error(grad_config(false), lc, 12) <= 1e-4);
}

TEST_CASE("finite differences with a target subset") {
    LoraConfig lc;
    lc.rank = 3;
    lc.alpha = 6.0;
    lc.target_modules = {"q_proj", "down_proj"};
    CHECK(max_rel_error(grad_config(true), lc, 13) <= 1e-4);
}

TEST_CASE("dropout masks are deterministic per key and change with it") {
    TinyLM model = init_params(grad_config(), 5, Dtype::F64);
    LoraConfig lc;
    lc.rank = 2;
    lc.alpha = 2.0;
    lc.dropout_p = 0.5;
    LoraAdapter adapter = lora_init(model, lc, 6);
    RandomStream rng(7);
    for (auto& [name, t] : adapter.tensors)
        if (name.ends_with(".lora_B")) fill_normal(t, rng.fork(name), 0.0, 0.1);

    std::vector<int32_t> tokens = {1, 2, 3, 4};
    std::vector<int32_t> targets = {2, 3, 4, 5};
    BackwardOptions bo;
    bo.training = true;
    bo.dropout_key = 100;
    BackwardResult a = loss_and_grads(model, adapter, tokens, targets, bo);
    BackwardResult b = loss_and_grads(model, adapter, tokens, targets, bo);
    CHECK(a.loss == b.loss);
    bo.dropout_key = 101;
    BackwardResult c = loss_and_grads(model, adapter, tokens, targets, bo);
    CHECK(a.loss != c.loss);
    // inference path ignores dropout
    BackwardResult d = loss_and_grads(model, adapter, tokens, targets);
    BackwardOptions bo0;
    bo0.training = true;
    bo0.dropout_key = 100;
    LoraAdapter no_drop = adapter;
    no_drop.config.dropout_p = 0.0;
    BackwardResult e = loss_and_grads(model, no_drop, tokens, targets, bo0);
    CHECK(d.loss == e.loss);
}

TEST_CASE("finite differences hold under an active dropout mask") {
    // fixed mask via fixed key; the masked objective must still differentiate
    TinyLM model = init_params(grad_config(), 8, Dtype::F64);
    LoraConfig lc;
    lc.rank = 2;
    lc.alpha = 2.0;
    lc.dropout_p = 0.3;
    LoraAdapter adapter = lora_init(model, lc, 9);
    RandomStream rng(10);
    for (auto& [name, t] : adapter.tensors)
        if (name.ends_with(".lora_B")) fill_normal(t, rng.fork(name), 0.0, 0.05);

    std::vector<int32_t> tokens = {3, 1, 4, 1};
    std::vector<int32_t> targets = {1, 4, 1, 5};
    BackwardOptions bo;
    bo.training = true;
    bo.dropout_key = 55;
    BackwardResult res = loss_and_grads(model, adapter, tokens, targets, bo);

    auto loss_at = [&]() {
        ForwardOptions fo;
        fo.adapter = &adapter;
        fo.training = true;
        fo.dropout_key = 55;
        return cross_entropy(forward(model, tokens, fo), targets);
    };
    const double h = 1e-5;
    double worst = 0.0;
    for (auto& [name, t] : adapter.tensors) {
        if (!name.ends_with(".lora_A")) continue;  // A sits behind the mask
        const Tensor& g = res.grads.at(name);
        for (int64_t i = 0; i < std::min<int64_t>(t.numel(), 8); ++i) {
            double orig = t.get(i);
            t.set(i, orig + h);
            double up = loss_at();
            t.set(i, orig - h);
            double down = loss_at();
            t.set(i, orig);
            double numeric = (up - down) / (2.0 * h);
            double denom = std::max({std::abs(numeric), std::abs(g.get(i)), 1e-6});
            worst = std::max(worst, std::abs(numeric - g.get(i)) / denom);
        }
    }
    CHECK(worst <= 1e-4);
}
