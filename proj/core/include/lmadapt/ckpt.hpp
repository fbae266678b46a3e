#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lmadapt/tensor.hpp"

namespace lmadapt {

// Ordered (lexicographic) map of named tensors plus string metadata. The unit
// of persistence, merging and quantization.
struct Checkpoint {
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::string> meta;

    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    const Tensor& at(const std::string& name) const;
    int64_t total_params() const;
};

// TCK1 file layout, little-endian:
//   magic "TCK1" (4 bytes)
//   header_len: u64
//   header: UTF-8 JSON text, space-padded so the payload base is 64-aligned.
//     Keys sorted lexicographically. Each tensor name maps to
//     {"dtype","shape","byte_offset","byte_len"}; "__meta__" maps to the
//     string metadata. byte_offset is relative to the payload base (first
//     byte after the padded header) and is itself 64-aligned; gaps are
//     zero-filled.
//   raw row-major tensor payloads at the declared offsets.
struct WriteOptions {
    bool allow_nonfinite = false;  // writer refuses NaN/Inf in F32/F64 unless set
};

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& ckpt, const WriteOptions& opts = {});
void write_checkpoint(const Checkpoint& ckpt, const std::string& path, const WriteOptions& opts = {});

Checkpoint parse_checkpoint(const uint8_t* data, size_t size);
Checkpoint read_checkpoint(const std::string& path);

// FNV-1a over the canonical serialized bytes; stable across runs.
std::string checkpoint_digest(const Checkpoint& ckpt);

// Validates name constraints (nonempty, ASCII printable) and scale pairing
// ("X.qdata" implies "X.scales" and vice versa). Called by the writer.
void validate_checkpoint(const Checkpoint& ckpt);

std::string inspect_checkpoint(const Checkpoint& ckpt);

}  // namespace lmadapt
