#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lmadapt/ckpt.hpp"
#include "lmadapt/tensor.hpp"

namespace lmadapt {

struct TinyLM;

enum class QuantScheme { Fp8Dynamic, Int4Rtn, Int4Gptq };

const char* scheme_name(QuantScheme s) noexcept;
std::optional<QuantScheme> scheme_from_name(std::string_view name) noexcept;

struct QuantSpec {
    QuantScheme scheme = QuantScheme::Int4Rtn;
    int64_t group_size = 128;
    std::vector<std::string> exclusions;  // suffix match against tensor names
    int64_t calib_samples = 128;
    double damping = 0.01;  // GPTQ: fraction of mean Hessian diagonal

    static QuantSpec defaults(QuantScheme scheme);
    void validate() const;
};

// Packed low-bit payload plus scales.
//   INT4: qdata U8 [d, ceil(k/2)], two two's-complement nibbles per byte (low
//         nibble first), codes in [-8, 7]; scales F32 [d, ceil(k/group)].
//   FP8:  qdata U8 [d, k] of E4M3 bit patterns; scales F32 [1] per tensor.
struct QuantizedTensor {
    Tensor qdata;
    Tensor scales;
    std::vector<int64_t> orig_shape;
    QuantScheme scheme = QuantScheme::Int4Rtn;
    int64_t group_size = 0;  // INT4 only
};

// E4M3 codec: 1 sign, 4 exponent (bias 7), 3 mantissa bits; no infinities,
// 0x7f/0xff are NaN, max normal 448. Encoding picks the nearest representable
// with ties to even.
uint8_t f32_to_e4m3(float x) noexcept;
float e4m3_to_f32(uint8_t code) noexcept;

// scale = absmax / 448 (1 when the tensor is all zero); codes are nearest
// E4M3 of w / scale.
QuantizedTensor quant_fp8(const Tensor& w);
Tensor dequant_fp8(const QuantizedTensor& q);

// Quantize-dequantize roundtrip with a fresh per-tensor scale. Used for
// dynamic activation fake-quantization inside forward.
Tensor fp8_fakequant(const Tensor& x);

// Per row, per group of `group` columns: scale = absmax / 7 (1 when the
// group is all zero); code = clamp(round-half-even(w / scale), -8, 7).
QuantizedTensor quant_int4_rtn(const Tensor& w, int64_t group);
Tensor dequant_int4(const QuantizedTensor& q);

// H = 2 X X^T / N + damping * mean(diag(2 X X^T / N)) * I, X is [k, N].
Tensor hessian_from_calib(const Tensor& x, double damping);

// Column-sequential quantization with error compensation through the upper
// Cholesky factor of H^-1. Group scales are frozen from the original weights,
// so an identity Hessian reduces exactly to RTN.
QuantizedTensor gptq_quant(const Tensor& w, const Tensor& hessian, int64_t group);

double gptq_proxy_loss(const Tensor& w, const Tensor& w_hat, const Tensor& hessian);

// Per-target calibration activations, name -> X [k, N].
using CalibActivations = std::map<std::string, Tensor>;
CalibActivations collect_calib_activations(const TinyLM& model,
                                           const std::vector<std::vector<int32_t>>& samples);

// Replaces each non-excluded 2-D tensor by "<name>.qdata" / "<name>.scales"
// pairs; everything else is copied verbatim. GPTQ tensors without calibration
// activations fall back to an identity Hessian (RTN-equivalent).
Checkpoint quantize_checkpoint(const Checkpoint& ckpt, const QuantSpec& spec,
                               const CalibActivations* calib = nullptr);

bool is_quantized(const Checkpoint& ckpt);
// Expands qdata/scales pairs back to dense F32 tensors for on-the-fly
// execution of quantized checkpoints.
Checkpoint dequantize_checkpoint(const Checkpoint& ckpt);

struct FootprintReport {
    std::string scheme;
    uint64_t total_bytes = 0;
    uint64_t baseline_bf16_bytes = 0;
    double ratio = 0.0;  // baseline / total
};

// Actual accounting for quantized checkpoints; hypothetical accounting for a
// plain checkpoint under `spec` (BF16 2 B/param, FP8 1 B/param + one F32
// scale, INT4 0.5 B/param + one F32 scale per group; excluded and non-2-D
// tensors at their stored dtype).
FootprintReport footprint(const Checkpoint& ckpt, const std::optional<QuantSpec>& spec = {});
std::string footprint_table(const FootprintReport& r, const std::string& variant);

}  // namespace lmadapt
