#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "lmadapt/fixture.hpp"
#include "lmadapt/lora.hpp"
#include "lmadapt/merge.hpp"
#include "lmadapt/pipeline.hpp"
#include "lmadapt/rng.hpp"
#include "lmadapt/train.hpp"

using namespace lmadapt;
namespace fs = std::filesystem;

namespace {

Checkpoint random_ckpt(uint64_t seed, Dtype dt = Dtype::F32) {
    Checkpoint c;
    RandomStream root(seed);
    for (const char* name : {"w.a", "w.b", "bias"}) {
        Tensor t(dt, name == std::string("bias") ? std::vector<int64_t>{6}
                                                 : std::vector<int64_t>{4, 6});
        fill_normal(t, root.fork(name), 0.0, 1.0);
        c.tensors.emplace(name, std::move(t));
    }
    return c;
}

}  // namespace

TEST_CASE("w = 1 endpoint is bit-identical to a") {
    Checkpoint a = random_ckpt(1), b = random_ckpt(2);
    Checkpoint m = linear_merge(a, b, MergeSpec(1.0));
    for (const auto& [name, t] : a.tensors) CHECK(bitwise_equal(m.at(name), t));
    Checkpoint m0 = linear_merge(a, b, MergeSpec(0.0));
    for (const auto& [name, t] : b.tensors) CHECK(bitwise_equal(m0.at(name), t));
}

TEST_CASE("a = -b at w = 0.5 gives zeros") {
    Checkpoint a = random_ckpt(3);
    Checkpoint b;
    for (const auto& [name, t] : a.tensors) b.tensors.emplace(name, scale(t, -1.0));
    Checkpoint m = linear_merge(a, b, MergeSpec(0.5));
    for (const auto& [name, t] : m.tensors) {
        (void)name;
        for (int64_t i = 0; i < t.numel(); ++i) CHECK(t.get(i) == 0.0);
    }
}

TEST_CASE("default mixture weight is 0.8") {
    MergeSpec spec;
    CHECK(spec.weight_a == 0.8);
    CHECK(spec.weight_b == doctest::Approx(0.2));
}

TEST_CASE("merge(a,b,spec) equals merge(b,a,spec.flipped()) bitwise") {
    for (double w : {0.8, 0.3, 0.5, 0.05}) {
        Checkpoint a = random_ckpt(4), b = random_ckpt(5);
        MergeSpec spec(w);
        Checkpoint m1 = linear_merge(a, b, spec);
        Checkpoint m2 = linear_merge(b, a, spec.flipped());
        for (const auto& [name, t] : m1.tensors) CHECK(bitwise_equal(t, m2.at(name)));
    }
}

TEST_CASE("merge is elementwise linear: m(w) + m(1-w) = a + b") {
    Checkpoint a = random_ckpt(6), b = random_ckpt(7);
    MergeSpec spec(0.3);
    Checkpoint m1 = linear_merge(a, b, spec);
    Checkpoint m2 = linear_merge(a, b, spec.flipped());
    for (const auto& [name, t1] : m1.tensors) {
        Tensor sum = add(t1, m2.at(name));
        Tensor want = add(a.at(name), b.at(name));
        CHECK(max_abs_diff(sum, want) <= 1e-6);
    }
}

TEST_CASE("merge records weight and input digests in meta") {
    Checkpoint a = random_ckpt(8), b = random_ckpt(9);
    Checkpoint m = linear_merge(a, b, MergeSpec(0.8));
    CHECK(m.meta.at("merge.digest_a") == checkpoint_digest(a));
    CHECK(m.meta.at("merge.digest_b") == checkpoint_digest(b));
    CHECK(m.meta.at("merge.weight_a").substr(0, 3) == "0.8");
}

TEST_CASE("name-set mismatch reports the symmetric difference") {
    Checkpoint a = random_ckpt(10), b = random_ckpt(11);
    a.tensors.emplace("only_in_a", Tensor::scalar(Dtype::F32, 1.0));
    b.tensors.emplace("only_in_b", Tensor::scalar(Dtype::F32, 2.0));
    try {
        linear_merge(a, b, MergeSpec(0.5));
        FAIL("expected mismatch error");
    } catch (const Error& e) {
        std::string msg = e.what();
        CHECK(msg.find("only_in_a") != std::string::npos);
        CHECK(msg.find("only_in_b") != std::string::npos);
    }
}

TEST_CASE("per-tensor shape mismatch errors") {
    Checkpoint a = random_ckpt(12), b = random_ckpt(13);
    b.tensors.at("bias") = Tensor(Dtype::F32, {7});
    CHECK_THROWS_WITH_AS(linear_merge(a, b, MergeSpec(0.5)), doctest::Contains("bias"), Error);
}

TEST_CASE("name filter merges only the listed tensors") {
    Checkpoint a = random_ckpt(14), b = random_ckpt(15);
    MergeSpec spec(0.5);
    spec.name_filter = std::set<std::string>{"w.a"};
    Checkpoint m = linear_merge(a, b, spec);
    CHECK(bitwise_equal(m.at("bias"), a.at("bias")));
    CHECK(bitwise_equal(m.at("w.b"), a.at("w.b")));
    CHECK(!bitwise_equal(m.at("w.a"), a.at("w.a")));
}

TEST_CASE("bf16 checkpoints interpolate in F32 with one final rounding") {
    Checkpoint a = random_ckpt(16, Dtype::BF16), b = random_ckpt(17, Dtype::BF16);
    MergeSpec spec(0.25);
    Checkpoint m = linear_merge(a, b, spec);
    const Tensor& t = m.at("w.a");
    REQUIRE(t.dtype() == Dtype::BF16);
    for (int64_t i = 0; i < t.numel(); ++i) {
        float fa = bf16_to_f32(a.at("w.a").bf16()[i]);
        float fb = bf16_to_f32(b.at("w.a").bf16()[i]);
        uint16_t want = f32_to_bf16(0.25f * fa + 0.75f * fb);
        CHECK(t.bf16()[i] == want);
    }
}

// two toy checkpoints fine-tuned on disjoint skills, swept on the union
TEST_CASE("sweep endpoints equal standalone accuracies and rows reproduce") {
    fs::path dir = fs::temp_directory_path() / "lmadapt_merge_fixture";
    make_fixture(dir.string(), 101, 40);
    IniFile ini = IniFile::parse_file((dir / "pipeline.cfg").string());
    ModelConfig mcfg = model_config_from_ini(ini);
    Tokenizer tok = tokenizer_from_ini(ini, dir.string());
    auto bench = load_benchmark((dir / "bench.jsonl").string());

    TinyLM base = init_params(mcfg, 1000);
    auto tune_on = [&](const std::string& corpus, uint64_t seed) {
        LoraConfig lc;
        lc.rank = 4;
        lc.alpha = 4.0;
        lc.train_embeddings = true;
        TrainConfig tc;
        tc.peak_lr = 8e-3;
        tc.total_steps = 40;
        tc.warmup_steps = 4;
        tc.micro_batch = 2;
        tc.accum_steps = 2;
        tc.global_batch = 4;
        tc.seq_len = 16;
        tc.seed = seed;
        tc.eval_every = 0;
        std::vector<std::vector<int32_t>> docs;
        for (const auto& d : load_corpus((dir / corpus).string())) docs.push_back(tok.encode(d));
        LoraAdapter ad = lora_init(base, lc, seed);
        TrainResult res = train(base, ad, docs, tc);
        return merge_lora(base.params, res.adapter);
    };
    Checkpoint ck_a = tune_on("skill_a.jsonl", 1);
    Checkpoint ck_b = tune_on("skill_b.jsonl", 2);

    SweepConfig scfg;
    scfg.model = mcfg;
    scfg.tok = &tok;
    std::vector<double> ratios = {0.0, 0.5, 1.0};
    auto rows = merge_sweep(ck_a, ck_b, ratios, bench, scfg);
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) CHECK(r.error.empty());

    // endpoints match standalone evaluation exactly
    EvalReport ea = evaluate(load_model(mcfg, ck_a), bench, scfg.tmpl, tok);
    EvalReport eb = evaluate(load_model(mcfg, ck_b), bench, scfg.tmpl, tok);
    CHECK(rows[2].accuracy == ea.overall);
    CHECK(rows[0].accuracy == eb.overall);

    // an independent merge+evaluate per ratio reproduces the table
    for (const auto& row : rows) {
        Checkpoint merged = linear_merge(ck_a, ck_b, MergeSpec(row.ratio));
        EvalReport rep = evaluate(load_model(mcfg, merged), bench, scfg.tmpl, tok);
        CHECK(rep.overall == row.accuracy);
    }

    // determinism of the sweep itself
    auto rows2 = merge_sweep(ck_a, ck_b, ratios, bench, scfg);
    for (size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].accuracy == rows2[i].accuracy);

    // failures are recorded per ratio without aborting the sweep
    Checkpoint broken = ck_b;
    broken.tensors.erase("ln_final");
    auto rows3 = merge_sweep(ck_a, broken, {0.5, 1.0}, bench, scfg);
    REQUIRE(rows3.size() == 2);
    CHECK(!rows3[0].error.empty());
    CHECK(!rows3[1].error.empty());  // the name-set check rejects every ratio
}

TEST_CASE("sweep csv formatting") {
    std::vector<SweepRow> rows(2);
    rows[0].ratio = 0.2;
    rows[0].accuracy = 0.75;
    rows[1].ratio = 0.8;
    rows[1].error = "boom";
    std::string csv = sweep_csv(rows);
    CHECK(csv.find("weight_a,mean_accuracy\n") == 0);
    CHECK(csv.find("0.2,0.750000") != std::string::npos);
    CHECK(csv.find("0.8,error") != std::string::npos);
}
