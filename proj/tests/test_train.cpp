#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lmadapt/lora.hpp"
#include "lmadapt/model.hpp"
#include "lmadapt/rng.hpp"
#include "lmadapt/train.hpp"

using namespace lmadapt;

namespace {

ModelConfig train_config_model() {
    ModelConfig cfg;
    cfg.vocab_size = 11;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.head_dim = 4;
    cfg.d_ff = 32;
    cfg.max_seq = 24;
    return cfg;
}

LoraConfig train_lora() {
    LoraConfig lc;
    lc.rank = 4;
    lc.alpha = 4.0;
    lc.train_embeddings = true;
    return lc;
}

Sequence make_seq(RandomStream& rng, int64_t len, int64_t vocab) {
    Sequence s;
    for (int64_t i = 0; i <= len; ++i)
        s.inputs.push_back(static_cast<int32_t>(rng.next_below(static_cast<uint64_t>(vocab))));
    s.targets.assign(s.inputs.begin() + 1, s.inputs.end());
    s.inputs.pop_back();
    return s;
}

// alternating two-symbol grammar docs over tokens {1, 2}
std::vector<std::vector<int32_t>> grammar_corpus(int docs, int len) {
    std::vector<std::vector<int32_t>> out;
    for (int d = 0; d < docs; ++d) {
        std::vector<int32_t> doc;
        int32_t cur = 1 + (d % 2);
        for (int i = 0; i < len; ++i) {
            doc.push_back(cur);
            cur = cur == 1 ? 2 : 1;
        }
        out.push_back(std::move(doc));
    }
    return out;
}

}  // namespace

TEST_CASE("train config invariants") {
    TrainConfig cfg;
    cfg.global_batch = 9;  // != micro * accum
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.warmup_steps = cfg.total_steps;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("accumulation equivalence: 4 micro-batches equal one large batch") {
    ModelConfig mcfg = train_config_model();
    TinyLM model = init_params(mcfg, 1, Dtype::F64);
    LoraConfig lc = train_lora();

    RandomStream rng(50);
    MicroBatch micro;
    for (int i = 0; i < 2; ++i) micro.push_back(make_seq(rng, 12, mcfg.vocab_size));

    TrainConfig cfg;
    cfg.peak_lr = 1e-2;
    cfg.total_steps = 10;
    cfg.warmup_steps = 1;
    cfg.micro_batch = 2;
    cfg.accum_steps = 4;
    cfg.global_batch = 8;
    cfg.seq_len = 12;

    // accumulated: 4 identical micro-batches
    LoraAdapter accum = lora_init(model, lc, 2);
    AdamWState accum_state;
    std::vector<MicroBatch> micros(4, micro);
    double loss_a = train_step(model, accum, accum_state, micros, 1e-2, cfg, 0);

    // one step on the concatenated batch
    TrainConfig big = cfg;
    big.micro_batch = 8;
    big.accum_steps = 1;
    LoraAdapter one = lora_init(model, lc, 2);
    AdamWState one_state;
    MicroBatch large;
    for (int i = 0; i < 4; ++i) large.insert(large.end(), micro.begin(), micro.end());
    double loss_b = train_step(model, one, one_state, {large}, 1e-2, big, 0);

    CHECK(loss_a == doctest::Approx(loss_b).epsilon(1e-9));
    for (const auto& [name, t] : accum.tensors)
        CHECK(max_abs_diff(t, one.at(name)) <= 1e-6);
}

TEST_CASE("metrics lr column reproduces lr_at pointwise") {
    ModelConfig mcfg = train_config_model();
    TinyLM model = init_params(mcfg, 3);
    LoraConfig lc = train_lora();
    LoraAdapter adapter = lora_init(model, lc, 4);

    TrainConfig cfg;
    cfg.peak_lr = 5e-3;
    cfg.total_steps = 12;
    cfg.warmup_steps = 3;
    cfg.micro_batch = 2;
    cfg.accum_steps = 2;
    cfg.global_batch = 4;
    cfg.seq_len = 8;
    cfg.seed = 9;
    cfg.eval_every = 6;

    TrainResult res = train(model, adapter, grammar_corpus(8, 40), cfg);
    REQUIRE(res.metrics.size() == 12);
    for (const auto& m : res.metrics) {
        CHECK(m.lr == lr_at(m.step, cfg));
        CHECK(std::isfinite(m.train_loss));
    }
    // periodic eval losses present and finite
    bool saw_eval = false;
    for (const auto& m : res.metrics)
        if (m.eval_loss.has_value()) {
            saw_eval = true;
            CHECK(std::isfinite(*m.eval_loss));
        }
    CHECK(saw_eval);
}

TEST_CASE("200-step smoke run on a two-symbol grammar cuts loss by 20%") {
    ModelConfig mcfg = train_config_model();
    TinyLM model = init_params(mcfg, 5);
    LoraConfig lc = train_lora();
    LoraAdapter adapter = lora_init(model, lc, 6);

    TrainConfig cfg;
    cfg.peak_lr = 1e-2;
    cfg.total_steps = 200;
    cfg.warmup_steps = 14;  // about 7% of steps
    cfg.micro_batch = 2;
    cfg.accum_steps = 2;
    cfg.global_batch = 4;
    cfg.seq_len = 16;
    cfg.seed = 7;
    cfg.eval_every = 50;

    TrainResult res = train(model, adapter, grammar_corpus(16, 64), cfg);
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) first += res.metrics[static_cast<size_t>(i)].train_loss;
    for (int i = 0; i < 10; ++i)
        last += res.metrics[res.metrics.size() - 1 - static_cast<size_t>(i)].train_loss;
    first /= 10;
    last /= 10;
    CHECK(last <= 0.8 * first);
    for (const auto& m : res.metrics) CHECK(std::isfinite(m.train_loss));
}

TEST_CASE("training is deterministic for a fixed seed") {
    ModelConfig mcfg = train_config_model();
    TinyLM model = init_params(mcfg, 8);
    LoraConfig lc = train_lora();
    lc.dropout_p = 0.1;
    LoraAdapter adapter = lora_init(model, lc, 9);

    TrainConfig cfg;
    cfg.peak_lr = 5e-3;
    cfg.total_steps = 20;
    cfg.warmup_steps = 2;
    cfg.micro_batch = 2;
    cfg.accum_steps = 2;
    cfg.global_batch = 4;
    cfg.seq_len = 12;
    cfg.seed = 10;

    TrainResult a = train(model, adapter, grammar_corpus(8, 40), cfg);
    TrainResult b = train(model, adapter, grammar_corpus(8, 40), cfg);
    for (size_t i = 0; i < a.metrics.size(); ++i)
        CHECK(a.metrics[i].train_loss == b.metrics[i].train_loss);
    for (const auto& [name, t] : a.adapter.tensors) CHECK(bitwise_equal(t, b.adapter.at(name)));
}

TEST_CASE("non-finite loss aborts with diagnostics") {
    ModelConfig mcfg = train_config_model();
    TinyLM model = init_params(mcfg, 11);
    LoraConfig lc = train_lora();
    LoraAdapter adapter = lora_init(model, lc, 12);
    // poison one factor so the forward pass goes NaN immediately
    adapter.tensors.at("layers.0.q_proj.lora_B").f32()[0] = std::numeric_limits<float>::quiet_NaN();

    TrainConfig cfg;
    cfg.peak_lr = 1e-3;
    cfg.total_steps = 5;
    cfg.warmup_steps = 1;
    cfg.micro_batch = 1;
    cfg.accum_steps = 1;
    cfg.global_batch = 1;
    cfg.seq_len = 8;

    try {
        train(model, adapter, grammar_corpus(4, 40), cfg);
        FAIL("expected a numeric error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Numeric);
        std::string msg = e.what();
        CHECK(msg.find("step") != std::string::npos);
        CHECK(msg.find("lr") != std::string::npos);
        CHECK(msg.find("grad norm") != std::string::npos);
    }
}

TEST_CASE("metrics jsonl serialization") {
    std::vector<StepMetrics> metrics(2);
    metrics[0].step = 0;
    metrics[0].lr = 0.5;
    metrics[0].train_loss = 2.0;
    metrics[1].step = 1;
    metrics[1].lr = 0.25;
    metrics[1].train_loss = 1.5;
    metrics[1].eval_loss = 1.75;
    auto path = std::filesystem::temp_directory_path() / "lmadapt_metrics.jsonl";
    write_metrics_jsonl(metrics, path.string());
    std::ifstream f(path);
    std::string line1, line2;
    std::getline(f, line1);
    std::getline(f, line2);
    CHECK(line1.find("\"step\":0") != std::string::npos);
    CHECK(line1.find("eval_loss") == std::string::npos);
    CHECK(line2.find("\"eval_loss\":1.75") != std::string::npos);
}
