// Command-line front end wiring the toolkit into one pipeline:
// stats -> train(cpt) -> train(sft) -> merge/sweep -> eval -> quantize -> footprint.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "lmadapt/config.hpp"
#include "lmadapt/error.hpp"
#include "lmadapt/evalmc.hpp"
#include "lmadapt/fixture.hpp"
#include "lmadapt/lora.hpp"
#include "lmadapt/merge.hpp"
#include "lmadapt/model.hpp"
#include "lmadapt/pipeline.hpp"
#include "lmadapt/quant.hpp"
#include "lmadapt/rng.hpp"
#include "lmadapt/tok.hpp"
#include "lmadapt/train.hpp"

namespace fs = std::filesystem;
using namespace lmadapt;

namespace {

TokenizerKind parse_kind(const std::string& s) {
    if (s == "char") return TokenizerKind::CharLevel;
    if (s == "word") return TokenizerKind::WordLevel;
    if (s == "bpe") return TokenizerKind::Bpe;
    config_error("unknown tokenizer kind '" + s + "' (expected char|word|bpe)");
}

Tokenizer load_tokenizer_args(const std::string& kind, const std::string& vocab,
                              const std::string& merges) {
    if (vocab.empty()) config_error("a --vocab file is required");
    return Tokenizer::load(parse_kind(kind), vocab, merges);
}

std::vector<double> parse_grid(const std::string& s) {
    // "lo:hi:step" or comma list
    std::vector<double> grid;
    if (s.find(':') != std::string::npos) {
        double lo = 0, hi = 0, step = 0;
        if (std::sscanf(s.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || step <= 0)
            config_error("grid must be lo:hi:step with step > 0");
        for (int i = 0;; ++i) {
            double v = lo + step * i;
            if (v > hi + 1e-9) break;
            grid.push_back(v);
        }
    } else {
        for (const auto& p : split_commas(s)) grid.push_back(std::stod(p));
    }
    if (grid.empty()) config_error("grid is empty");
    return grid;
}

struct TrainCli {
    std::string stage, config, base, out, metrics;
};

void run_train(const TrainCli& args) {
    IniFile ini = IniFile::parse_file(args.config);
    std::string cfg_dir = fs::path(args.config).parent_path().string();
    if (cfg_dir.empty()) cfg_dir = ".";
    if (!ini.has_section(args.stage))
        config_error("config has no [" + args.stage + "] section");

    ModelConfig mcfg = model_config_from_ini(ini);
    Tokenizer tok = tokenizer_from_ini(ini, cfg_dir);
    TrainConfig tc = train_config_from_ini(ini, args.stage);
    tc.seed = static_cast<uint64_t>(ini.get_int("pipeline", "seed", 0));
    LoraConfig lc = lora_config_from_ini(ini, args.stage);

    TinyLM model = load_model(mcfg, read_checkpoint(args.base));
    std::vector<std::vector<int32_t>> docs;
    for (const auto& d : load_corpus((fs::path(cfg_dir) / ini.get_str(args.stage, "corpus")).string()))
        docs.push_back(tok.encode(d));

    LoraAdapter adapter = lora_init(model, lc, tc.seed);
    TrainResult result = train(model, adapter, docs, tc);
    Checkpoint merged = merge_lora(model.params, result.adapter);
    write_checkpoint(merged, args.out);
    std::string metrics_path = args.metrics.empty()
                                   ? (fs::path(args.out).replace_extension(".metrics.jsonl").string())
                                   : args.metrics;
    write_metrics_jsonl(result.metrics, metrics_path);
    std::printf("trained %s: %lld steps, final loss %.4f -> %s\n", args.stage.c_str(),
                static_cast<long long>(tc.total_steps),
                result.metrics.empty() ? 0.0 : result.metrics.back().train_loss, args.out.c_str());
    std::printf("trainable parameters: %.2f%%\n", trainable_fraction(model.params, lc));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale LoRA adaptation toolkit: tokenizer stats, two-stage "
                 "low-rank training, checkpoint merging, multiple-choice evaluation, "
                 "and post-training quantization"};
    app.require_subcommand(1);

    // ---- tok ----
    auto* tok_cmd = app.add_subcommand("tok", "tokenizer corpus statistics and fertility");
    tok_cmd->require_subcommand(1);
    std::string tok_corpus, tok_vocab, tok_merges, tok_kind = "bpe";

    auto* tok_stats = tok_cmd->add_subcommand("stats", "corpus character/word statistics");
    tok_stats->add_option("--corpus", tok_corpus, "text file, directory, or JSONL")->required();
    tok_stats->callback([&]() {
        CorpusStats st = corpus_stats(load_corpus(tok_corpus));
        std::printf("characters %llu\nwords %llu\navg_word_len %.3f\nsamples %llu\n",
                    static_cast<unsigned long long>(st.characters),
                    static_cast<unsigned long long>(st.words), st.avg_word_len,
                    static_cast<unsigned long long>(st.samples));
    });

    auto* tok_fert = tok_cmd->add_subcommand("fertility", "tokens per word over a corpus");
    tok_fert->add_option("--corpus", tok_corpus, "text file, directory, or JSONL")->required();
    tok_fert->add_option("--vocab", tok_vocab, "vocab file, one token per line")->required();
    tok_fert->add_option("--merges", tok_merges, "merge rules, 'left right' per line");
    tok_fert->add_option("--kind", tok_kind, "tokenizer kind: bpe|char|word");
    tok_fert->callback([&]() {
        Tokenizer tok = load_tokenizer_args(tok_kind, tok_vocab, tok_merges);
        double f = fertility(tok, load_corpus(tok_corpus));
        std::printf("fertility %.3f\n", f);
    });

    // ---- train ----
    TrainCli train_args;
    auto* train_cmd = app.add_subcommand("train", "LoRA training stage (cpt or sft)");
    train_cmd->add_option("--stage", train_args.stage, "config section: cpt or sft")
        ->required()
        ->check(CLI::IsMember({"cpt", "sft"}));
    train_cmd->add_option("--config", train_args.config, "pipeline-style config file")->required();
    train_cmd->add_option("--base", train_args.base, "input checkpoint (.tck)")->required();
    train_cmd->add_option("--out", train_args.out, "output merged checkpoint (.tck)")->required();
    train_cmd->add_option("--metrics", train_args.metrics, "metrics JSONL path");
    train_cmd->callback([&]() { run_train(train_args); });

    // ---- merge ----
    auto* merge_cmd = app.add_subcommand("merge", "linear checkpoint interpolation");
    std::string merge_a, merge_b, merge_out, merge_filter;
    double merge_w = 0.8;
    merge_cmd->add_option("--a", merge_a, "checkpoint A (weight w)");
    merge_cmd->add_option("--b", merge_b, "checkpoint B (weight 1-w)");
    merge_cmd->add_option("--w", merge_w, "weight of checkpoint A, default 0.8");
    merge_cmd->add_option("--filter", merge_filter, "comma list of tensor names to merge");
    std::string sweep_grid = "0.05:0.9:0.05", sweep_bench, sweep_cfg_path, sweep_vocab,
                sweep_kind = "word", sweep_out = "sweep.csv";
    auto* sweep_cmd = merge_cmd->add_subcommand("sweep", "accuracy across merge ratios");
    sweep_cmd->add_option("--a", merge_a, "checkpoint A")->required();
    sweep_cmd->add_option("--b", merge_b, "checkpoint B")->required();
    sweep_cmd->add_option("--grid", sweep_grid, "B-side weights, lo:hi:step or comma list");
    sweep_cmd->add_option("--bench", sweep_bench, "benchmark JSONL/CSV")->required();
    sweep_cmd->add_option("--config", sweep_cfg_path, "config file with [model]")->required();
    sweep_cmd->add_option("--vocab", sweep_vocab, "tokenizer vocab")->required();
    sweep_cmd->add_option("--kind", sweep_kind, "tokenizer kind");
    sweep_cmd->add_option("--out", sweep_out, "output CSV path");
    sweep_cmd->callback([&]() {
        IniFile ini = IniFile::parse_file(sweep_cfg_path);
        SweepConfig scfg;
        scfg.model = model_config_from_ini(ini);
        Tokenizer tok = load_tokenizer_args(sweep_kind, sweep_vocab, "");
        scfg.tok = &tok;
        scfg.eval.threads = default_thread_count();
        // the grid names the B-side contribution; rows report the A-side weight
        std::vector<double> ratios;
        for (double g : parse_grid(sweep_grid)) ratios.push_back(1.0 - g);
        auto rows = merge_sweep(read_checkpoint(merge_a), read_checkpoint(merge_b), ratios,
                                load_benchmark(sweep_bench), scfg);
        std::ofstream f(sweep_out, std::ios::trunc);
        f << sweep_csv(rows);
        std::printf("wrote %s (%zu ratios)\n", sweep_out.c_str(), rows.size());
    });
    merge_cmd->add_option("--out", merge_out, "output checkpoint");
    merge_cmd->callback([&]() {
        if (merge_cmd->get_subcommands().empty()) {
            if (merge_a.empty() || merge_b.empty()) config_error("merge: --a and --b are required");
            if (merge_out.empty()) config_error("merge: --out is required");
            MergeSpec spec(merge_w);
            if (!merge_filter.empty()) {
                std::set<std::string> names;
                for (const auto& n : split_commas(merge_filter)) names.insert(n);
                spec.name_filter = names;
            }
            Checkpoint merged =
                linear_merge(read_checkpoint(merge_a), read_checkpoint(merge_b), spec);
            write_checkpoint(merged, merge_out);
            std::printf("merged %s (w=%g) + %s (w=%g) -> %s\n", merge_a.c_str(), spec.weight_a,
                        merge_b.c_str(), spec.weight_b, merge_out.c_str());
        }
    });

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "multiple-choice logit evaluation");
    std::string eval_model, eval_cfg, eval_bench, eval_report_path, eval_format = "raw",
                eval_template, eval_vocab, eval_kind = "word";
    bool eval_lenient = false, eval_act_fp8 = false;
    eval_cmd->add_option("--model", eval_model, "model checkpoint (.tck)")->required();
    eval_cmd->add_option("--config", eval_cfg, "config file with [model]")->required();
    eval_cmd->add_option("--bench", eval_bench, "benchmark JSONL/CSV")->required();
    eval_cmd->add_option("--format", eval_format, "raw or chat")
        ->check(CLI::IsMember({"raw", "chat"}));
    eval_cmd->add_option("--template", eval_template, "config file with [eval] template keys");
    eval_cmd->add_option("--vocab", eval_vocab, "tokenizer vocab")->required();
    eval_cmd->add_option("--kind", eval_kind, "tokenizer kind");
    eval_cmd->add_option("--report", eval_report_path, "JSON report output path");
    eval_cmd->add_flag("--lenient", eval_lenient, "exclude failing items instead of aborting");
    eval_cmd->add_flag("--act-fp8", eval_act_fp8, "dynamic FP8 fake-quant of activations");
    eval_cmd->callback([&]() {
        IniFile ini = IniFile::parse_file(eval_cfg);
        ModelConfig mcfg = model_config_from_ini(ini);
        Checkpoint ckpt = read_checkpoint(eval_model);
        if (is_quantized(ckpt)) ckpt = dequantize_checkpoint(ckpt);
        TinyLM model = load_model(mcfg, ckpt);
        Tokenizer tok = load_tokenizer_args(eval_kind, eval_vocab, "");
        PromptTemplate tmpl;
        if (!eval_template.empty()) tmpl = prompt_template_from_ini(IniFile::parse_file(eval_template));
        tmpl.format = eval_format == "chat" ? PromptFormat::Chat : PromptFormat::Raw;
        EvalOptions opts;
        opts.strict = !eval_lenient;
        opts.threads = default_thread_count();
        if (eval_act_fp8) {
            opts.act_quant.fp8 = true;
            opts.act_quant.exclusions = {"lm_head"};
        }
        EvalReport rep = evaluate(model, load_benchmark(eval_bench), tmpl, tok, opts);
        if (!eval_report_path.empty()) write_report_json(rep, eval_report_path);
        std::fputs(report_summary(rep).c_str(), stdout);
    });

    // ---- quantize ----
    auto* quant_cmd = app.add_subcommand("quantize", "post-training weight quantization");
    std::string q_in, q_out, q_scheme = "int4-gptq", q_calib, q_exclude, q_cfg, q_vocab,
                q_kind = "word";
    int64_t q_group = 128, q_samples = 128;
    double q_damping = 0.01;
    quant_cmd->add_option("--in", q_in, "input checkpoint")->required();
    quant_cmd->add_option("--out", q_out, "output checkpoint")->required();
    quant_cmd->add_option("--scheme", q_scheme, "fp8 | int4-rtn | int4-gptq")
        ->check(CLI::IsMember({"fp8", "int4-rtn", "int4-gptq"}));
    quant_cmd->add_option("--group", q_group, "group size, default 128");
    quant_cmd->add_option("--calib", q_calib, "calibration corpus (GPTQ)");
    quant_cmd->add_option("--calib-samples", q_samples, "calibration sample count");
    quant_cmd->add_option("--damping", q_damping, "GPTQ damping fraction");
    quant_cmd->add_option("--exclude", q_exclude, "comma list of excluded name suffixes");
    quant_cmd->add_option("--config", q_cfg, "config with [model] (GPTQ calibration)");
    quant_cmd->add_option("--vocab", q_vocab, "tokenizer vocab (GPTQ calibration)");
    quant_cmd->add_option("--kind", q_kind, "tokenizer kind");
    quant_cmd->callback([&]() {
        QuantSpec spec = QuantSpec::defaults(*scheme_from_name(q_scheme));
        spec.group_size = q_group;
        spec.calib_samples = q_samples;
        spec.damping = q_damping;
        if (!q_exclude.empty()) spec.exclusions = split_commas(q_exclude);
        Checkpoint in = read_checkpoint(q_in);
        CalibActivations acts;
        bool have_acts = false;
        if (spec.scheme == QuantScheme::Int4Gptq && !q_calib.empty()) {
            if (q_cfg.empty() || q_vocab.empty())
                config_error("quantize: GPTQ calibration needs --config and --vocab");
            ModelConfig mcfg = model_config_from_ini(IniFile::parse_file(q_cfg));
            TinyLM model = load_model(mcfg, in);
            Tokenizer tok = load_tokenizer_args(q_kind, q_vocab, "");
            std::vector<int32_t> stream;
            for (const auto& d : load_corpus(q_calib)) {
                auto ids = tok.encode(d);
                stream.insert(stream.end(), ids.begin(), ids.end());
            }
            const size_t window = static_cast<size_t>(std::min<int64_t>(mcfg.max_seq, 32));
            std::vector<std::vector<int32_t>> samples;
            for (size_t off = 0; off + window <= stream.size() &&
                                 samples.size() < static_cast<size_t>(spec.calib_samples);
                 off += window)
                samples.emplace_back(stream.begin() + off, stream.begin() + off + window);
            if (samples.empty()) data_error("quantize: calibration corpus too small");
            acts = collect_calib_activations(model, samples);
            have_acts = true;
        }
        Checkpoint q = quantize_checkpoint(in, spec, have_acts ? &acts : nullptr);
        write_checkpoint(q, q_out);
        FootprintReport fp = footprint(q);
        std::printf("quantized %s -> %s (%s)\n", q_in.c_str(), q_out.c_str(), fp.scheme.c_str());
        std::fputs(footprint_table(fp, fs::path(q_out).stem().string()).c_str(), stdout);
    });

    // ---- footprint ----
    auto* fp_cmd = app.add_subcommand("footprint", "memory accounting for a checkpoint");
    std::string fp_in, fp_scheme, fp_exclude;
    int64_t fp_group = 128;
    fp_cmd->add_option("--in", fp_in, "checkpoint path")->required();
    fp_cmd->add_option("--scheme", fp_scheme, "hypothetical scheme: fp8 | int4-rtn | int4-gptq")
        ->check(CLI::IsMember({"fp8", "int4-rtn", "int4-gptq"}));
    fp_cmd->add_option("--group", fp_group, "group size for hypothetical INT4");
    fp_cmd->add_option("--exclude", fp_exclude, "comma list of excluded name suffixes");
    fp_cmd->callback([&]() {
        Checkpoint ckpt = read_checkpoint(fp_in);
        std::optional<QuantSpec> spec;
        if (!fp_scheme.empty()) {
            spec = QuantSpec::defaults(*scheme_from_name(fp_scheme));
            spec->group_size = fp_group;
            if (!fp_exclude.empty()) spec->exclusions = split_commas(fp_exclude);
        }
        FootprintReport fp = footprint(ckpt, spec);
        std::fputs(footprint_table(fp, fs::path(fp_in).stem().string()).c_str(), stdout);
    });

    // ---- ckpt ----
    auto* ckpt_cmd = app.add_subcommand("ckpt", "checkpoint file utilities");
    ckpt_cmd->require_subcommand(1);
    std::string inspect_path;
    auto* inspect_cmd = ckpt_cmd->add_subcommand("inspect", "list tensors, dtypes, shapes, bytes");
    inspect_cmd->add_option("path", inspect_path, "checkpoint path")->required();
    inspect_cmd->callback(
        [&]() { std::fputs(inspect_checkpoint(read_checkpoint(inspect_path)).c_str(), stdout); });

    // ---- pipeline ----
    auto* pipe_cmd = app.add_subcommand("pipeline", "run every stage end to end");
    std::string pipe_cfg, pipe_out = "run";
    bool skip_train = false, skip_merge = false, skip_eval = false, skip_quant = false,
         skip_sweep = false;
    pipe_cmd->add_option("--config", pipe_cfg, "pipeline config file")->required();
    pipe_cmd->add_option("--out", pipe_out, "output directory");
    pipe_cmd->add_flag("--skip-train", skip_train, "reuse base.tck/sft.tck from the output dir");
    pipe_cmd->add_flag("--skip-merge", skip_merge, "skip linear merging");
    pipe_cmd->add_flag("--skip-eval", skip_eval, "skip benchmark evaluation");
    pipe_cmd->add_flag("--skip-sweep", skip_sweep, "skip the merge ratio sweep");
    pipe_cmd->add_flag("--skip-quant", skip_quant, "skip quantization");
    pipe_cmd->callback([&]() {
        IniFile ini = IniFile::parse_file(pipe_cfg);
        std::string cfg_dir = fs::path(pipe_cfg).parent_path().string();
        if (cfg_dir.empty()) cfg_dir = ".";
        StageToggles toggles;
        toggles.train = !skip_train;
        toggles.merge = !skip_merge;
        toggles.eval = !skip_eval;
        toggles.sweep = !skip_sweep;
        toggles.quant = !skip_quant;
        fs::create_directories(pipe_out);
        std::ofstream log((fs::path(pipe_out) / "run.log").string(), std::ios::app);
        PipelineResult r = run_pipeline(ini, cfg_dir, pipe_out, toggles, &log);
        std::printf("pipeline done; artifacts in %s\n", pipe_out.c_str());
        for (const auto& [name, digest] : r.digests)
            std::printf("  %s %s\n", name.c_str(), digest.c_str());
        if (r.eval_accuracy.has_value()) std::printf("  eval accuracy %.4f\n", *r.eval_accuracy);
    });

    // ---- fixture ----
    auto* fix_cmd = app.add_subcommand("fixture", "generate the synthetic two-skill workspace");
    std::string fix_out = "data";
    uint64_t fix_seed = 0;
    int64_t fix_items = 100;
    fix_cmd->add_option("--out", fix_out, "output directory");
    fix_cmd->add_option("--seed", fix_seed, "generator seed");
    fix_cmd->add_option("--items", fix_items, "benchmark item count");
    fix_cmd->callback([&]() {
        make_fixture(fix_out, fix_seed, fix_items);
        std::printf("fixture written to %s\n", fix_out.c_str());
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // unknown flags and bad usage exit 2
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        switch (e.kind()) {
            case ErrorKind::Config: return 2;
            case ErrorKind::Data: return 3;
            case ErrorKind::Numeric: return 4;
        }
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
