#pragma once

#include <cstdint>
#include <string>

namespace lmadapt {

// Writes a self-contained synthetic workspace for the end-to-end pipeline:
// a word-level vocab over two deterministic successor grammars (a0..a7 with
// +1 wraparound, b0..b7 with +3), a plain-text chain corpus for continual
// pretraining, MCQ-formatted instruction corpora (joint and per skill), a
// four-option benchmark split evenly across the two skills, and model /
// pipeline config files wired to those paths.
void make_fixture(const std::string& dir, uint64_t seed, int64_t bench_items = 100);

}  // namespace lmadapt
