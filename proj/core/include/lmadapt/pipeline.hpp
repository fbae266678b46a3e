#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "lmadapt/config.hpp"
#include "lmadapt/evalmc.hpp"
#include "lmadapt/model.hpp"
#include "lmadapt/quant.hpp"
#include "lmadapt/tok.hpp"
#include "lmadapt/train.hpp"

namespace lmadapt {

// Config-section readers shared by the pipeline and the CLI subcommands.
ModelConfig model_config_from_ini(const IniFile& ini, const std::string& section = "model");
TrainConfig train_config_from_ini(const IniFile& ini, const std::string& section);
LoraConfig lora_config_from_ini(const IniFile& ini, const std::string& section);
QuantSpec quant_spec_from_ini(const IniFile& ini, const std::string& section = "quant");
Tokenizer tokenizer_from_ini(const IniFile& ini, const std::string& base_dir,
                             const std::string& section = "tokenizer");
PromptTemplate prompt_template_from_ini(const IniFile& ini, const std::string& section = "eval");

struct StageToggles {
    bool train = true;
    bool merge = true;
    bool eval = true;
    bool sweep = true;
    bool quant = true;
};

struct PipelineResult {
    std::map<std::string, std::string> digests;  // artifact file name -> checkpoint digest
    double cpt_loss_start = 0.0;  // mean train loss, first 10 steps
    double cpt_loss_end = 0.0;    // mean train loss, last 10 steps
    std::optional<double> eval_accuracy;
    std::optional<FootprintReport> quant_footprint;
};

// Runs base -> cpt -> sft -> merge -> eval (+ sweep) -> quantize -> footprint,
// writing every artifact under out_dir. Relative paths in the config resolve
// against cfg_dir. All artifacts are byte-deterministic for a fixed config and
// seed; timestamps go only to `log`.
PipelineResult run_pipeline(const IniFile& cfg, const std::string& cfg_dir,
                            const std::string& out_dir, const StageToggles& toggles,
                            std::ostream* log = nullptr);

}  // namespace lmadapt
