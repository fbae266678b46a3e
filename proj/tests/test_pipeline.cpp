#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "lmadapt/config.hpp"
#include "lmadapt/error.hpp"
#include "lmadapt/fixture.hpp"
#include "lmadapt/pipeline.hpp"

using namespace lmadapt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "lmadapt_pipeline_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("ini parsing: sections, comments, typed getters") {
    IniFile ini = IniFile::parse(
        "# comment\n"
        "[model]\n"
        "vocab_size = 27\n"
        "rope_base = 10000.5\n"
        "tie_lm_head = true\n"
        "name = hello world\n"
        "list = a, b,c\n"
        "\n"
        "[empty]\n");
    CHECK(ini.get_int("model", "vocab_size") == 27);
    CHECK(ini.get_real("model", "rope_base") == 10000.5);
    CHECK(ini.get_bool("model", "tie_lm_head", false));
    CHECK(ini.get_str("model", "name") == "hello world");
    CHECK(ini.get_list("model", "list") == std::vector<std::string>{"a", "b", "c"});
    CHECK(ini.has_section("empty"));
    CHECK(ini.get_int("model", "missing", 7) == 7);
    CHECK_THROWS_AS(ini.get_int("model", "missing"), Error);
    CHECK_THROWS_AS(ini.get_int("model", "name"), Error);
    CHECK_THROWS_AS(IniFile::parse("[unterminated\n"), Error);
    CHECK_THROWS_AS(IniFile::parse("keyonly\n"), Error);
}

TEST_CASE("fixture generation is deterministic and self-consistent") {
    fs::path a = fresh_dir("fix_a");
    fs::path b = fresh_dir("fix_b");
    make_fixture(a.string(), 3, 40);
    make_fixture(b.string(), 3, 40);
    for (const char* name : {"vocab.txt", "cpt_corpus.txt", "sft_corpus.jsonl", "bench.jsonl",
                             "model.cfg", "pipeline.cfg", "skill_a.jsonl", "skill_b.jsonl"}) {
        CHECK(slurp(a / name) == slurp(b / name));
    }
    make_fixture(fresh_dir("fix_c").string(), 4, 40);
    CHECK(slurp(a / "bench.jsonl") !=
          slurp(fs::temp_directory_path() / "lmadapt_pipeline_tests" / "fix_c" / "bench.jsonl"));

    // every benchmark word tokenizes under the fixture vocab
    IniFile ini = IniFile::parse_file((a / "pipeline.cfg").string());
    Tokenizer tok = tokenizer_from_ini(ini, a.string());
    auto bench = load_benchmark((a / "bench.jsonl").string());
    CHECK(bench.size() == 40);
    PromptTemplate tmpl;
    for (const auto& item : bench) {
        auto ids = tok.encode(build_prompt_raw(item, tmpl));
        CHECK(!ids.empty());
        for (int32_t id : ids) CHECK(id != tok.unk_id);
    }
}

TEST_CASE("pipeline runs end to end and reruns byte-identically") {
    fs::path data = fresh_dir("pipe_data");
    make_fixture(data.string(), 11, 24);
    IniFile ini = IniFile::parse_file((data / "pipeline.cfg").string());

    // shrink the configured steps to keep this unit test quick
    IniFile small = IniFile::parse(
        "[pipeline]\nseed = 11\n"
        "[model]\nvocab_size = 27\nd_model = 16\nn_layers = 1\nn_heads = 4\nhead_dim = 4\n"
        "d_ff = 32\nrope_base = 10000\nmax_seq = 64\ntie_lm_head = true\n"
        "[tokenizer]\nkind = word\nvocab = vocab.txt\n"
        "[cpt]\ncorpus = cpt_corpus.txt\npeak_lr = 0.01\ntotal_steps = 12\nwarmup_steps = 2\n"
        "micro_batch = 2\naccum_steps = 2\nseq_len = 16\nrank = 4\nalpha = 4\ndropout = 0.0\n"
        "train_embeddings = true\neval_every = 6\n"
        "[sft]\ncorpus = sft_corpus.jsonl\npeak_lr = 0.005\ntotal_steps = 8\nwarmup_steps = 2\n"
        "micro_batch = 2\naccum_steps = 2\nseq_len = 16\nrank = 2\nalpha = 2\ndropout = 0.0\n"
        "train_embeddings = false\neval_every = 4\n"
        "[merge]\nweight_a = 0.8\nwith = base\nsweep_grid = 0.5,1.0\n"
        "[eval]\nbench = bench.jsonl\nformat = raw\n"
        "[quant]\nscheme = int4-gptq\ngroup = 16\ncalib = cpt_corpus.txt\ncalib_samples = 8\n"
        "exclude = lm_head,embed_tokens\n");

    fs::path out1 = fresh_dir("pipe_out1");
    fs::path out2 = fresh_dir("pipe_out2");
    PipelineResult r1 = run_pipeline(small, data.string(), out1.string(), StageToggles{});
    PipelineResult r2 = run_pipeline(small, data.string(), out2.string(), StageToggles{});

    for (const char* name : {"base.tck", "cpt.tck", "sft.tck", "merged.tck", "quant.tck",
                             "metrics_cpt.jsonl", "metrics_sft.jsonl", "eval_report.json",
                             "sweep.csv", "summary.txt"}) {
        INFO(name);
        CHECK(fs::exists(out1 / name));
        CHECK(slurp(out1 / name) == slurp(out2 / name));
    }
    CHECK(r1.digests == r2.digests);
    CHECK(r1.eval_accuracy == r2.eval_accuracy);
    REQUIRE(r1.quant_footprint.has_value());
    CHECK(r1.quant_footprint->scheme == "int4-gptq");

    // skip-train path reuses the existing checkpoints and still merges/evals
    StageToggles toggles;
    toggles.train = false;
    toggles.sweep = false;
    toggles.quant = false;
    PipelineResult r3 = run_pipeline(small, data.string(), out1.string(), toggles);
    CHECK(r3.digests.count("merged.tck") == 1);
    CHECK(r3.digests.at("merged.tck") == r1.digests.at("merged.tck"));
}

TEST_CASE("pipeline surfaces config errors with the config kind") {
    fs::path data = fresh_dir("pipe_badcfg");
    make_fixture(data.string(), 1, 8);
    IniFile bad = IniFile::parse("[pipeline]\nseed = 1\n[model]\nvocab_size = 27\n");
    try {
        run_pipeline(bad, data.string(), (data / "out").string(), StageToggles{});
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
}
