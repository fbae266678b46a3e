#include "lmadapt/fixture.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <vector>

#include "json.hpp"
#include "lmadapt/error.hpp"
#include "lmadapt/evalmc.hpp"
#include "lmadapt/rng.hpp"

namespace lmadapt {

namespace {

constexpr int kSymbols = 8;

std::string sym(char family, int i) { return std::string(1, family) + std::to_string(i); }

int successor(char family, int i) { return family == 'a' ? (i + 1) % kSymbols : (i + 3) % kSymbols; }

std::string chain(char family, int start, int len) {
    std::string s;
    int cur = start;
    for (int i = 0; i < len; ++i) {
        if (i) s += " ";
        s += sym(family, cur);
        cur = successor(family, cur);
    }
    return s;
}

McqItem make_item(RandomStream& stream, char family, int index) {
    int start = static_cast<int>(stream.next_below(kSymbols));
    std::string question = chain(family, start, 3);
    int third = (family == 'a') ? (start + 2) % kSymbols : (start + 6) % kSymbols;
    int correct = successor(family, third);

    // three distinct wrong symbols from the same family
    std::vector<int> others;
    for (int i = 0; i < kSymbols; ++i)
        if (i != correct) others.push_back(i);
    for (size_t i = others.size(); i > 1; --i)
        std::swap(others[i - 1], others[stream.next_below(i)]);

    McqItem item;
    item.question = question;
    item.answer = static_cast<int>(stream.next_below(4));
    int wrong = 0;
    for (int pos = 0; pos < 4; ++pos) {
        if (pos == item.answer)
            item.options[static_cast<size_t>(pos)] = sym(family, correct);
        else
            item.options[static_cast<size_t>(pos)] = sym(family, others[static_cast<size_t>(wrong++)]);
    }
    item.subject = family == 'a' ? "skill_a" : "skill_b";
    char buf[16];
    std::snprintf(buf, sizeof buf, "item%04d", index);
    item.id = buf;
    return item;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) data_error("fixture: cannot write '" + path.string() + "'");
    f << text;
}

std::string item_jsonl_line(const McqItem& item) {
    nlohmann::json j;
    j["question"] = item.question;
    j["options"] = item.options;
    j["answer"] = std::string(1, static_cast<char>('A' + item.answer));
    j["subject"] = item.subject;
    j["id"] = item.id;
    return j.dump();
}

std::string sft_doc(const McqItem& item) {
    PromptTemplate tmpl;
    std::string letter(1, static_cast<char>('A' + item.answer));
    return build_prompt_raw(item, tmpl) + " " + letter + "\n";
}

}  // namespace

void make_fixture(const std::string& dir, uint64_t seed, int64_t bench_items) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::path root(dir);
    RandomStream rng(seed);

    // word-level vocab: answer letters, prompt scaffold words, grammar symbols
    std::vector<std::string> vocab = {"<unk>", "A",  "B",  "C",  "D", "Question:",
                                      "Answer:", "A.", "B.", "C.", "D."};
    for (char fam : {'a', 'b'})
        for (int i = 0; i < kSymbols; ++i) vocab.push_back(sym(fam, i));
    std::string vocab_text;
    for (const auto& t : vocab) vocab_text += escape_token(t) + "\n";
    write_text(root / "vocab.txt", vocab_text);

    // continual-pretraining corpus: interleaved successor chains
    {
        RandomStream s = rng.fork("cpt");
        std::string corpus;
        for (int line = 0; line < 240; ++line) {
            char fam = (line % 2 == 0) ? 'a' : 'b';
            corpus += chain(fam, static_cast<int>(s.next_below(kSymbols)), 24) + "\n";
        }
        write_text(root / "cpt_corpus.txt", corpus);
    }

    // instruction corpora in the exact prompt layout the harness builds
    {
        RandomStream s = rng.fork("sft");
        std::string joint;
        for (int i = 0; i < 200; ++i) {
            char fam = (i % 2 == 0) ? 'a' : 'b';
            nlohmann::json j;
            j["text"] = sft_doc(make_item(s, fam, i));
            joint += j.dump() + "\n";
        }
        write_text(root / "sft_corpus.jsonl", joint);
    }
    for (char fam : {'a', 'b'}) {
        RandomStream s = rng.fork(std::string("skill_") + fam);
        std::string docs;
        for (int i = 0; i < 150; ++i) {
            nlohmann::json j;
            j["text"] = sft_doc(make_item(s, fam, i));
            docs += j.dump() + "\n";
        }
        write_text(root / (std::string("skill_") + fam + ".jsonl"), docs);
    }

    // benchmark: half per skill
    {
        RandomStream s = rng.fork("bench");
        std::string bench;
        for (int64_t i = 0; i < bench_items; ++i) {
            char fam = (i % 2 == 0) ? 'a' : 'b';
            bench += item_jsonl_line(make_item(s, fam, static_cast<int>(i))) + "\n";
        }
        write_text(root / "bench.jsonl", bench);
    }

    write_text(root / "model.cfg",
               "[model]\n"
               "vocab_size = 27\n"
               "d_model = 32\n"
               "n_layers = 2\n"
               "n_heads = 4\n"
               "head_dim = 8\n"
               "d_ff = 64\n"
               "rope_base = 10000\n"
               "max_seq = 64\n"
               "tie_lm_head = true\n");

    write_text(root / "pipeline.cfg",
               "[pipeline]\n"
               "seed = 7\n"
               "\n"
               "[model]\n"
               "vocab_size = 27\n"
               "d_model = 32\n"
               "n_layers = 2\n"
               "n_heads = 4\n"
               "head_dim = 8\n"
               "d_ff = 64\n"
               "rope_base = 10000\n"
               "max_seq = 64\n"
               "tie_lm_head = true\n"
               "\n"
               "[tokenizer]\n"
               "kind = word\n"
               "vocab = vocab.txt\n"
               "\n"
               "[cpt]\n"
               "corpus = cpt_corpus.txt\n"
               "peak_lr = 0.01\n"
               "total_steps = 160\n"
               "warmup_steps = 12\n"
               "micro_batch = 4\n"
               "accum_steps = 2\n"
               "seq_len = 24\n"
               "rank = 8\n"
               "alpha = 8\n"
               "dropout = 0.1\n"
               "train_embeddings = true\n"
               "eval_every = 40\n"
               "\n"
               "[sft]\n"
               "corpus = sft_corpus.jsonl\n"
               "peak_lr = 0.005\n"
               "total_steps = 120\n"
               "warmup_steps = 10\n"
               "micro_batch = 4\n"
               "accum_steps = 2\n"
               "seq_len = 24\n"
               "rank = 4\n"
               "alpha = 4\n"
               "dropout = 0.1\n"
               "train_embeddings = true\n"
               "eval_every = 40\n"
               "\n"
               "[merge]\n"
               "weight_a = 0.8\n"
               "with = base\n"
               "sweep_grid = 0.2,0.5,0.8\n"
               "\n"
               "[eval]\n"
               "bench = bench.jsonl\n"
               "format = raw\n"
               "\n"
               "[quant]\n"
               "scheme = int4-gptq\n"
               "group = 16\n"
               "calib = cpt_corpus.txt\n"
               "calib_samples = 32\n"
               "exclude = lm_head,embed_tokens\n");
}

}  // namespace lmadapt
