#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lmadapt/ckpt.hpp"
#include "lmadapt/evalmc.hpp"
#include "lmadapt/model.hpp"
#include "lmadapt/tok.hpp"

namespace lmadapt {

// Both weights are stored explicitly; flipped() swaps them so that
// merge(a, b, spec) and merge(b, a, spec.flipped()) are bitwise identical
// (recomputing 1 - (1 - w) would not round back to w in general).
struct MergeSpec {
    double weight_a = 0.8;
    double weight_b = 0.2;
    std::optional<std::set<std::string>> name_filter;  // merge only these; others copy from a

    MergeSpec() = default;
    explicit MergeSpec(double wa) : weight_a(wa), weight_b(1.0 - wa) { validate(); }

    MergeSpec flipped() const {
        MergeSpec s = *this;
        std::swap(s.weight_a, s.weight_b);
        return s;
    }
    void validate() const;
};

// out = weight_a * a + weight_b * b per tensor, computed in F32 at minimum
// and stored in a's dtype (one rounding). Weights 1/0 copy verbatim. The
// result records both input digests and the mixing weight in meta.
Checkpoint linear_merge(const Checkpoint& a, const Checkpoint& b, const MergeSpec& spec);

struct SweepRow {
    double ratio = 0.0;  // weight of checkpoint a
    double accuracy = 0.0;
    std::string error;  // empty on success
};

struct SweepConfig {
    ModelConfig model;
    PromptTemplate tmpl;
    const Tokenizer* tok = nullptr;
    EvalOptions eval;
};

// Merges at every ratio (the a-side weight) and evaluates on the benchmark;
// per-ratio failures are recorded and the sweep continues. Rows come back
// sorted by ratio.
std::vector<SweepRow> merge_sweep(const Checkpoint& a, const Checkpoint& b,
                                  const std::vector<double>& ratios,
                                  const std::vector<McqItem>& benchmark, const SweepConfig& cfg);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace lmadapt
