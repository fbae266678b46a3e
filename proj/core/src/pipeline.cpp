#include "lmadapt/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "lmadapt/lora.hpp"
#include "lmadapt/merge.hpp"
#include "lmadapt/rng.hpp"

namespace lmadapt {

namespace fs = std::filesystem;

ModelConfig model_config_from_ini(const IniFile& ini, const std::string& section) {
    ModelConfig cfg;
    cfg.vocab_size = ini.get_int(section, "vocab_size");
    cfg.d_model = ini.get_int(section, "d_model");
    cfg.n_layers = ini.get_int(section, "n_layers");
    cfg.n_heads = ini.get_int(section, "n_heads");
    cfg.head_dim = ini.get_int(section, "head_dim");
    cfg.d_ff = ini.get_int(section, "d_ff");
    cfg.rope_base = ini.get_real(section, "rope_base", 10000.0);
    cfg.max_seq = ini.get_int(section, "max_seq", 128);
    cfg.tie_lm_head = ini.get_bool(section, "tie_lm_head", true);
    cfg.validate();
    return cfg;
}

TrainConfig train_config_from_ini(const IniFile& ini, const std::string& section) {
    TrainConfig cfg;
    cfg.peak_lr = ini.get_real(section, "peak_lr");
    cfg.total_steps = ini.get_int(section, "total_steps");
    cfg.warmup_steps = ini.get_int(section, "warmup_steps");
    cfg.micro_batch = ini.get_int(section, "micro_batch");
    cfg.accum_steps = ini.get_int(section, "accum_steps");
    cfg.global_batch = ini.get_int(section, "global_batch", cfg.micro_batch * cfg.accum_steps);
    cfg.seq_len = ini.get_int(section, "seq_len");
    cfg.epochs = ini.get_real(section, "epochs", 0.0);
    cfg.weight_decay = ini.get_real(section, "weight_decay", 0.0);
    cfg.adam_beta1 = ini.get_real(section, "adam_beta1", 0.9);
    cfg.adam_beta2 = ini.get_real(section, "adam_beta2", 0.999);
    cfg.adam_eps = ini.get_real(section, "adam_eps", 1e-8);
    cfg.eval_every = ini.get_int(section, "eval_every", 25);
    cfg.validate();
    return cfg;
}

LoraConfig lora_config_from_ini(const IniFile& ini, const std::string& section) {
    LoraConfig cfg;
    cfg.rank = ini.get_int(section, "rank");
    cfg.alpha = ini.get_real(section, "alpha", static_cast<double>(cfg.rank));
    cfg.dropout_p = ini.get_real(section, "dropout", 0.0);
    if (ini.has(section, "targets")) cfg.target_modules = ini.get_list(section, "targets");
    cfg.train_embeddings = ini.get_bool(section, "train_embeddings", false);
    cfg.validate();
    return cfg;
}

QuantSpec quant_spec_from_ini(const IniFile& ini, const std::string& section) {
    std::string scheme_s = ini.get_str(section, "scheme", "int4-gptq");
    auto scheme = scheme_from_name(scheme_s);
    if (!scheme) config_error("config: unknown quantization scheme '" + scheme_s + "'");
    QuantSpec spec = QuantSpec::defaults(*scheme);
    spec.group_size = ini.get_int(section, "group", 128);
    spec.calib_samples = ini.get_int(section, "calib_samples", 128);
    spec.damping = ini.get_real(section, "damping", 0.01);
    if (ini.has(section, "exclude")) spec.exclusions = ini.get_list(section, "exclude");
    spec.validate();
    return spec;
}

Tokenizer tokenizer_from_ini(const IniFile& ini, const std::string& base_dir,
                             const std::string& section) {
    std::string kind_s = ini.get_str(section, "kind", "word");
    TokenizerKind kind;
    if (kind_s == "word")
        kind = TokenizerKind::WordLevel;
    else if (kind_s == "char")
        kind = TokenizerKind::CharLevel;
    else if (kind_s == "bpe")
        kind = TokenizerKind::Bpe;
    else
        config_error("config: unknown tokenizer kind '" + kind_s + "'");
    fs::path vocab = fs::path(base_dir) / ini.get_str(section, "vocab");
    std::string merges;
    if (ini.has(section, "merges")) merges = (fs::path(base_dir) / ini.get_str(section, "merges")).string();
    return Tokenizer::load(kind, vocab.string(), merges);
}

PromptTemplate prompt_template_from_ini(const IniFile& ini, const std::string& section) {
    PromptTemplate tmpl;
    std::string fmt = ini.get_str(section, "format", "raw");
    if (fmt == "raw")
        tmpl.format = PromptFormat::Raw;
    else if (fmt == "chat")
        tmpl.format = PromptFormat::Chat;
    else
        config_error("config: unknown prompt format '" + fmt + "'");
    tmpl.question_label = ini.get_str(section, "question_label", tmpl.question_label);
    tmpl.answer_label = ini.get_str(section, "answer_label", tmpl.answer_label);
    tmpl.system_text = ini.get_str(section, "system_text", tmpl.system_text);
    if (ini.has(section, "letters")) {
        auto letters = ini.get_list(section, "letters");
        if (letters.size() != 4) config_error("config: letters must list exactly 4 strings");
        for (size_t i = 0; i < 4; ++i) tmpl.option_letters[i] = letters[i];
    }
    return tmpl;
}

namespace {

std::vector<std::vector<int32_t>> tokenize_corpus(const Tokenizer& tok,
                                                  const std::vector<std::string>& docs) {
    std::vector<std::vector<int32_t>> out;
    out.reserve(docs.size());
    for (const auto& doc : docs) out.push_back(tok.encode(doc));
    return out;
}

void log_line(std::ostream* log, const std::string& msg) {
    if (log == nullptr) return;
    auto now = std::chrono::system_clock::now().time_since_epoch();
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
    *log << "[" << ms << "] " << msg << "\n";
}

double mean_loss(const std::vector<StepMetrics>& metrics, size_t first, size_t count) {
    double total = 0.0;
    size_t n = 0;
    for (size_t i = first; i < metrics.size() && n < count; ++i, ++n) total += metrics[i].train_loss;
    return n == 0 ? 0.0 : total / static_cast<double>(n);
}

}  // namespace

PipelineResult run_pipeline(const IniFile& cfg, const std::string& cfg_dir,
                            const std::string& out_dir, const StageToggles& toggles,
                            std::ostream* log) {
    fs::create_directories(out_dir);
    fs::path out(out_dir);
    auto resolve = [&](const std::string& rel) { return (fs::path(cfg_dir) / rel).string(); };

    const uint64_t seed = static_cast<uint64_t>(cfg.get_int("pipeline", "seed", 0));
    RandomStream root(seed);
    ModelConfig mcfg = model_config_from_ini(cfg);
    Tokenizer tok = tokenizer_from_ini(cfg, cfg_dir);
    PipelineResult result;

    auto save = [&](const char* name, const Checkpoint& ckpt) {
        write_checkpoint(ckpt, (out / name).string());
        result.digests[name] = checkpoint_digest(ckpt);
        log_line(log, std::string("wrote ") + name);
    };

    Checkpoint base_ckpt, sft_ckpt;
    if (toggles.train) {
        log_line(log, "stage base: initializing parameters");
        TinyLM base = init_params(mcfg, root.fork("stage/base").key());
        base_ckpt = base.params;
        save("base.tck", base_ckpt);

        // continual pretraining
        log_line(log, "stage cpt: training");
        TrainConfig tc = train_config_from_ini(cfg, "cpt");
        tc.seed = root.fork("stage/cpt").key();
        LoraConfig lc = lora_config_from_ini(cfg, "cpt");
        auto docs = tokenize_corpus(tok, load_corpus(resolve(cfg.get_str("cpt", "corpus"))));
        LoraAdapter adapter = lora_init(base, lc, tc.seed);
        TrainResult tr = train(base, adapter, docs, tc);
        write_metrics_jsonl(tr.metrics, (out / "metrics_cpt.jsonl").string());
        result.cpt_loss_start = mean_loss(tr.metrics, 0, 10);
        result.cpt_loss_end =
            mean_loss(tr.metrics, tr.metrics.size() > 10 ? tr.metrics.size() - 10 : 0, 10);
        Checkpoint cpt_ckpt = merge_lora(base_ckpt, tr.adapter);
        save("cpt.tck", cpt_ckpt);

        // instruction tuning
        log_line(log, "stage sft: training");
        TinyLM cpt_model = load_model(mcfg, cpt_ckpt);
        TrainConfig tc2 = train_config_from_ini(cfg, "sft");
        tc2.seed = root.fork("stage/sft").key();
        LoraConfig lc2 = lora_config_from_ini(cfg, "sft");
        auto docs2 = tokenize_corpus(tok, load_corpus(resolve(cfg.get_str("sft", "corpus"))));
        LoraAdapter adapter2 = lora_init(cpt_model, lc2, tc2.seed);
        TrainResult tr2 = train(cpt_model, adapter2, docs2, tc2);
        write_metrics_jsonl(tr2.metrics, (out / "metrics_sft.jsonl").string());
        sft_ckpt = merge_lora(cpt_ckpt, tr2.adapter);
        save("sft.tck", sft_ckpt);
    } else {
        log_line(log, "stage train: skipped, reading prebuilt checkpoints");
        base_ckpt = read_checkpoint((out / "base.tck").string());
        sft_ckpt = read_checkpoint((out / "sft.tck").string());
    }

    // merge with the reference checkpoint (the pre-adaptation base by default)
    Checkpoint merged = sft_ckpt;
    if (toggles.merge) {
        log_line(log, "stage merge");
        std::string with = cfg.get_str("merge", "with", "base");
        Checkpoint counterpart = with == "base" ? base_ckpt : read_checkpoint(resolve(with));
        MergeSpec spec(cfg.get_real("merge", "weight_a", 0.8));
        merged = linear_merge(sft_ckpt, counterpart, spec);
        save("merged.tck", merged);

        if (toggles.sweep && cfg.has("merge", "sweep_grid")) {
            log_line(log, "stage sweep");
            std::vector<double> grid;
            for (const auto& s : cfg.get_list("merge", "sweep_grid")) grid.push_back(std::stod(s));
            SweepConfig scfg;
            scfg.model = mcfg;
            scfg.tok = &tok;
            scfg.tmpl = prompt_template_from_ini(cfg);
            scfg.eval.threads = default_thread_count();
            auto bench = load_benchmark(resolve(cfg.get_str("eval", "bench")));
            auto rows = merge_sweep(sft_ckpt, counterpart, grid, bench, scfg);
            std::ofstream f((out / "sweep.csv").string(), std::ios::trunc);
            f << sweep_csv(rows);
        }
    }

    if (toggles.eval) {
        log_line(log, "stage eval");
        auto bench = load_benchmark(resolve(cfg.get_str("eval", "bench")));
        TinyLM merged_model = load_model(mcfg, merged);
        EvalOptions eo;
        eo.threads = default_thread_count();
        EvalReport rep = evaluate(merged_model, bench, prompt_template_from_ini(cfg), tok, eo);
        write_report_json(rep, (out / "eval_report.json").string());
        result.eval_accuracy = rep.overall;
    }

    if (toggles.quant) {
        log_line(log, "stage quantize");
        QuantSpec spec = quant_spec_from_ini(cfg);
        TinyLM merged_model = load_model(mcfg, merged);
        CalibActivations acts;
        if (spec.scheme == QuantScheme::Int4Gptq) {
            auto calib_docs = tokenize_corpus(
                tok, load_corpus(resolve(cfg.get_str("quant", "calib"))));
            std::vector<std::vector<int32_t>> samples;
            std::vector<int32_t> stream;
            for (const auto& d : calib_docs) stream.insert(stream.end(), d.begin(), d.end());
            const size_t window = static_cast<size_t>(std::min<int64_t>(mcfg.max_seq, 32));
            for (size_t off = 0;
                 off + window <= stream.size() && samples.size() < static_cast<size_t>(spec.calib_samples);
                 off += window)
                samples.emplace_back(stream.begin() + off, stream.begin() + off + window);
            if (samples.empty()) data_error("pipeline: calibration corpus is too small");
            acts = collect_calib_activations(merged_model, samples);
        }
        Checkpoint q = quantize_checkpoint(merged, spec,
                                           spec.scheme == QuantScheme::Int4Gptq ? &acts : nullptr);
        save("quant.tck", q);
        result.quant_footprint = footprint(q);
    }

    // deterministic summary; wall-clock timing lives only in the log
    {
        std::ofstream f((out / "summary.txt").string(), std::ios::trunc);
        f << "pipeline summary\n";
        for (const auto& [name, digest] : result.digests) f << name << " digest " << digest << "\n";
        char buf[160];
        if (toggles.train) {
            std::snprintf(buf, sizeof buf,
                          "cpt train loss: first10 %.6f last10 %.6f drop %.1f%%\n",
                          result.cpt_loss_start, result.cpt_loss_end,
                          result.cpt_loss_start > 0
                              ? 100.0 * (1.0 - result.cpt_loss_end / result.cpt_loss_start)
                              : 0.0);
            f << buf;
        }
        if (result.eval_accuracy.has_value()) {
            std::snprintf(buf, sizeof buf, "merged eval accuracy: %.4f\n", *result.eval_accuracy);
            f << buf;
        }
        if (result.quant_footprint.has_value()) {
            const auto& fp = *result.quant_footprint;
            std::snprintf(buf, sizeof buf, "quantized footprint: %llu bytes (%s), bf16 %llu, ratio %.2fx\n",
                          static_cast<unsigned long long>(fp.total_bytes), fp.scheme.c_str(),
                          static_cast<unsigned long long>(fp.baseline_bf16_bytes), fp.ratio);
            f << buf;
        }
    }
    log_line(log, "pipeline complete");
    return result;
}

}  // namespace lmadapt
