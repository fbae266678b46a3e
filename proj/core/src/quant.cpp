#include "lmadapt/quant.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <sstream>

#include "lmadapt/model.hpp"
#include "model_internal.hpp"

namespace lmadapt {

const char* scheme_name(QuantScheme s) noexcept {
    switch (s) {
        case QuantScheme::Fp8Dynamic: return "fp8";
        case QuantScheme::Int4Rtn: return "int4-rtn";
        case QuantScheme::Int4Gptq: return "int4-gptq";
    }
    return "?";
}

std::optional<QuantScheme> scheme_from_name(std::string_view name) noexcept {
    if (name == "fp8") return QuantScheme::Fp8Dynamic;
    if (name == "int4-rtn") return QuantScheme::Int4Rtn;
    if (name == "int4-gptq") return QuantScheme::Int4Gptq;
    return std::nullopt;
}

QuantSpec QuantSpec::defaults(QuantScheme scheme) {
    QuantSpec s;
    s.scheme = scheme;
    if (scheme == QuantScheme::Fp8Dynamic) {
        s.exclusions = {"lm_head"};
    } else {
        s.exclusions = {"lm_head", "embed_tokens", "vision_tower", "multi_modal_projector"};
    }
    return s;
}

void QuantSpec::validate() const {
    if (group_size < 1) config_error("quant: group_size must be >= 1");
    if (scheme == QuantScheme::Int4Gptq && !(damping > 0))
        config_error("quant: damping must be positive for GPTQ");
    if (calib_samples < 1) config_error("quant: calib_samples must be >= 1");
}

// ---- E4M3 codec ----

namespace {

constexpr uint8_t kE4m3Nan = 0x7f;
constexpr float kE4m3Max = 448.0f;

struct E4m3Table {
    // positive magnitudes by code 0x00..0x7e (0x7f is NaN)
    std::array<float, 127> value;
    E4m3Table() {
        for (int code = 0; code < 127; ++code) {
            int e = (code >> 3) & 0xf;
            int m = code & 0x7;
            float v;
            if (e == 0)
                v = static_cast<float>(m) / 8.0f * std::exp2(-6.0f);
            else
                v = (1.0f + static_cast<float>(m) / 8.0f) * std::exp2(static_cast<float>(e - 7));
            value[static_cast<size_t>(code)] = v;
        }
    }
};

const E4m3Table& e4m3_table() {
    static const E4m3Table t;
    return t;
}

}  // namespace

float e4m3_to_f32(uint8_t code) noexcept {
    if ((code & 0x7f) == kE4m3Nan) return std::numeric_limits<float>::quiet_NaN();
    float mag = e4m3_table().value[code & 0x7f];
    return (code & 0x80) ? -mag : mag;
}

uint8_t f32_to_e4m3(float x) noexcept {
    if (std::isnan(x)) return kE4m3Nan;
    uint8_t sign = std::signbit(x) ? 0x80 : 0x00;
    float mag = std::fabs(x);
    if (mag >= kE4m3Max) return sign | 0x7e;  // saturate at 448
    const auto& tab = e4m3_table().value;
    // binary search the sorted magnitude table, then round to nearest with
    // ties to the even code
    size_t lo = 0, hi = tab.size() - 1;
    while (lo < hi) {
        size_t mid = (lo + hi + 1) / 2;
        if (tab[mid] <= mag)
            lo = mid;
        else
            hi = mid - 1;
    }
    uint8_t best = static_cast<uint8_t>(lo);
    if (lo + 1 < tab.size()) {
        float d_lo = mag - tab[lo];
        float d_hi = tab[lo + 1] - mag;
        if (d_hi < d_lo)
            best = static_cast<uint8_t>(lo + 1);
        else if (d_hi == d_lo && (lo & 1) != 0)
            best = static_cast<uint8_t>(lo + 1);  // tie: pick the even code
    }
    return sign | best;
}

QuantizedTensor quant_fp8(const Tensor& w) {
    Tensor wf = w.dtype() == Dtype::F32 ? w : cast(w, Dtype::F32);
    const float* p = wf.f32();
    int64_t n = wf.numel();
    float absmax = 0.0f;
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i])) numeric_error("quant_fp8: non-finite input");
        absmax = std::max(absmax, std::fabs(p[i]));
    }
    float s = absmax == 0.0f ? 1.0f : absmax / kE4m3Max;

    QuantizedTensor q;
    q.scheme = QuantScheme::Fp8Dynamic;
    q.orig_shape = w.shape();
    q.qdata = Tensor(Dtype::U8, w.shape());
    q.scales = Tensor(Dtype::F32, {1});
    q.scales.f32()[0] = s;
    uint8_t* out = q.qdata.u8();
    for (int64_t i = 0; i < n; ++i) out[i] = f32_to_e4m3(p[i] / s);
    return q;
}

Tensor dequant_fp8(const QuantizedTensor& q) {
    Tensor t(Dtype::F32, q.orig_shape);
    const uint8_t* in = q.qdata.u8();
    float s = q.scales.f32()[0];
    float* out = t.f32();
    for (int64_t i = 0; i < t.numel(); ++i) out[i] = e4m3_to_f32(in[i]) * s;
    return t;
}

Tensor fp8_fakequant(const Tensor& x) {
    bool f64 = x.dtype() == Dtype::F64;
    QuantizedTensor q = quant_fp8(x);
    Tensor y = dequant_fp8(q);
    return f64 ? cast(y, Dtype::F64) : y;
}

// ---- INT4 ----

namespace {

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

float rne(float x) { return std::nearbyintf(x); }  // assumes FE_TONEAREST

void pack_nibble(uint8_t* row, int64_t col, int code) {
    uint8_t nib = static_cast<uint8_t>(code & 0xf);
    if (col % 2 == 0)
        row[col / 2] = (row[col / 2] & 0xf0) | nib;
    else
        row[col / 2] = (row[col / 2] & 0x0f) | static_cast<uint8_t>(nib << 4);
}

int unpack_nibble(const uint8_t* row, int64_t col) {
    uint8_t nib = (col % 2 == 0) ? (row[col / 2] & 0x0f) : (row[col / 2] >> 4);
    return nib >= 8 ? static_cast<int>(nib) - 16 : static_cast<int>(nib);
}

// per-row per-group absmax / 7 scales from the original weights
Tensor int4_group_scales(const Tensor& wf, int64_t group) {
    int64_t d = wf.dim(0), k = wf.dim(1);
    int64_t ng = ceil_div(k, group);
    Tensor scales(Dtype::F32, {d, ng});
    const float* p = wf.f32();
    float* s = scales.f32();
    for (int64_t r = 0; r < d; ++r) {
        for (int64_t g = 0; g < ng; ++g) {
            float absmax = 0.0f;
            int64_t c0 = g * group, c1 = std::min(k, c0 + group);
            for (int64_t c = c0; c < c1; ++c) absmax = std::max(absmax, std::fabs(p[r * k + c]));
            s[r * ng + g] = absmax == 0.0f ? 1.0f : absmax / 7.0f;
        }
    }
    return scales;
}

}  // namespace

QuantizedTensor quant_int4_rtn(const Tensor& w, int64_t group) {
    if (w.rank() != 2) data_error("quant_int4_rtn: expected rank-2 tensor, got " + shape_str(w.shape()));
    if (group < 1) config_error("quant_int4_rtn: group must be >= 1");
    Tensor wf = w.dtype() == Dtype::F32 ? w : cast(w, Dtype::F32);
    int64_t d = wf.dim(0), k = wf.dim(1);
    int64_t ng = ceil_div(k, group);

    QuantizedTensor q;
    q.scheme = QuantScheme::Int4Rtn;
    q.orig_shape = w.shape();
    q.group_size = group;
    q.scales = int4_group_scales(wf, group);
    q.qdata = Tensor(Dtype::U8, {d, ceil_div(k, 2)});

    const float* p = wf.f32();
    const float* s = q.scales.f32();
    for (int64_t r = 0; r < d; ++r) {
        uint8_t* row = q.qdata.u8() + r * ceil_div(k, 2);
        for (int64_t c = 0; c < k; ++c) {
            float scale = s[r * ng + c / group];
            int code = static_cast<int>(rne(p[r * k + c] / scale));
            code = std::clamp(code, -8, 7);
            pack_nibble(row, c, code);
        }
    }
    return q;
}

Tensor dequant_int4(const QuantizedTensor& q) {
    if (q.orig_shape.size() != 2) data_error("dequant_int4: quantized tensor is not rank-2");
    if (q.group_size < 1) data_error("dequant_int4: missing group size");
    int64_t d = q.orig_shape[0], k = q.orig_shape[1];
    int64_t ng = q.scales.dim(1);
    int64_t group = q.group_size;
    if (ng != ceil_div(k, group))
        data_error("dequant_int4: scales shape does not match the group size");
    Tensor t(Dtype::F32, q.orig_shape);
    const float* s = q.scales.f32();
    float* out = t.f32();
    for (int64_t r = 0; r < d; ++r) {
        const uint8_t* row = q.qdata.u8() + r * ceil_div(k, 2);
        for (int64_t c = 0; c < k; ++c)
            out[r * k + c] = static_cast<float>(unpack_nibble(row, c)) * s[r * ng + c / group];
    }
    return t;
}

// ---- GPTQ ----

Tensor hessian_from_calib(const Tensor& x, double damping) {
    if (x.rank() != 2) data_error("hessian_from_calib: expected [k, N] activations");
    if (damping < 0) config_error("hessian_from_calib: damping must be >= 0");
    int64_t k = x.dim(0), n = x.dim(1);
    if (n < 1) data_error("hessian_from_calib: need at least one calibration column");

    Tensor xf = x.dtype() == Dtype::F64 ? x : cast(x, Dtype::F64);
    Tensor h(Dtype::F64, {k, k});
    const double* px = xf.f64();
    double* ph = h.f64();
    for (int64_t i = 0; i < k; ++i) {
        for (int64_t j = i; j < k; ++j) {
            double acc = 0;
            for (int64_t c = 0; c < n; ++c) acc += px[i * n + c] * px[j * n + c];
            double v = 2.0 * acc / static_cast<double>(n);
            ph[i * k + j] = v;
            ph[j * k + i] = v;
        }
    }
    double mean_diag = 0;
    for (int64_t i = 0; i < k; ++i) mean_diag += ph[i * k + i];
    mean_diag /= static_cast<double>(k);
    if (mean_diag == 0.0)
        numeric_error("hessian_from_calib: all-zero activations give a singular Hessian" +
                      std::string(damping == 0.0 ? " (damping is 0)" : ""));
    double lambda = damping * mean_diag;
    for (int64_t i = 0; i < k; ++i) ph[i * k + i] += lambda;
    return h;
}

namespace {

// in-place lower Cholesky, returns false when the matrix is not SPD
bool chol_lower(std::vector<double>& a, int64_t n) {
    for (int64_t j = 0; j < n; ++j) {
        double diag = a[j * n + j];
        for (int64_t p = 0; p < j; ++p) diag -= a[j * n + p] * a[j * n + p];
        if (!(diag > 0)) return false;
        double lj = std::sqrt(diag);
        a[j * n + j] = lj;
        for (int64_t i = j + 1; i < n; ++i) {
            double v = a[i * n + j];
            for (int64_t p = 0; p < j; ++p) v -= a[i * n + p] * a[j * n + p];
            a[i * n + j] = v / lj;
        }
        for (int64_t i = 0; i < j; ++i) a[i * n + j] = 0.0;
    }
    return true;
}

// upper Cholesky factor U of H^-1 (H^-1 = U^T U), computed via
// H = L L^T, H^-1 = L^-T L^-1, then the identity chol_upper(A) = chol_lower(A)^T.
std::vector<double> chol_upper_of_inverse(const Tensor& h) {
    int64_t n = h.dim(0);
    std::vector<double> l(static_cast<size_t>(n * n));
    for (int64_t i = 0; i < n * n; ++i) l[static_cast<size_t>(i)] = h.dtype() == Dtype::F64 ? h.f64()[i] : h.get(i);
    if (!chol_lower(l, n))
        numeric_error("gptq: Hessian is not positive definite; increase damping");

    // linv = L^-1 by forward substitution on identity columns
    std::vector<double> linv(static_cast<size_t>(n * n), 0.0);
    for (int64_t c = 0; c < n; ++c) {
        for (int64_t i = c; i < n; ++i) {
            double v = (i == c) ? 1.0 : 0.0;
            for (int64_t p = c; p < i; ++p) v -= l[i * n + p] * linv[p * n + c];
            linv[i * n + c] = v / l[i * n + i];
        }
    }
    // hinv = L^-T L^-1 (symmetric)
    std::vector<double> hinv(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = i; j < n; ++j) {
            double acc = 0;
            for (int64_t p = std::max(i, j); p < n; ++p) acc += linv[p * n + i] * linv[p * n + j];
            hinv[i * n + j] = acc;
            hinv[j * n + i] = acc;
        }
    }
    if (!chol_lower(hinv, n))
        numeric_error("gptq: inverse Hessian lost positive definiteness; increase damping");
    // transpose the lower factor to get U with H^-1 = U^T U
    std::vector<double> u(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j <= i; ++j) u[j * n + i] = hinv[i * n + j];
    return u;
}

}  // namespace

QuantizedTensor gptq_quant(const Tensor& w, const Tensor& hessian, int64_t group) {
    if (w.rank() != 2) data_error("gptq_quant: expected rank-2 weights");
    if (hessian.rank() != 2 || hessian.dim(0) != hessian.dim(1) || hessian.dim(0) != w.dim(1))
        data_error("gptq_quant: Hessian shape " + shape_str(hessian.shape()) +
                   " does not match weight columns " + std::to_string(w.dim(1)));
    if (group < 1) config_error("gptq_quant: group must be >= 1");

    Tensor wf = cast(w, Dtype::F64);
    int64_t d = w.dim(0), k = w.dim(1);
    int64_t ng = ceil_div(k, group);

    // scales frozen from the pre-update weights, identical to RTN's
    Tensor wf32 = cast(w, Dtype::F32);
    Tensor scales = int4_group_scales(wf32, group);

    std::vector<double> u = chol_upper_of_inverse(hessian);

    QuantizedTensor q;
    q.scheme = QuantScheme::Int4Gptq;
    q.orig_shape = w.shape();
    q.group_size = group;
    q.scales = scales;
    q.qdata = Tensor(Dtype::U8, {d, ceil_div(k, 2)});

    double* pw = wf.f64();
    const float* ps = scales.f32();
    for (int64_t c = 0; c < k; ++c) {
        double diag = u[c * k + c];
        for (int64_t r = 0; r < d; ++r) {
            float scale_f = ps[r * ng + c / group];
            double scale = static_cast<double>(scale_f);
            double val = pw[r * k + c];
            // float rounding path matches quant_int4_rtn exactly, so an
            // identity Hessian reproduces RTN codes bit-for-bit
            int code = static_cast<int>(rne(static_cast<float>(val) / scale_f));
            code = std::clamp(code, -8, 7);
            pack_nibble(q.qdata.u8() + r * ceil_div(k, 2), c, code);
            double err = (val - static_cast<double>(code) * scale) / diag;
            for (int64_t j = c + 1; j < k; ++j) pw[r * k + j] -= err * u[c * k + j];
        }
    }
    return q;
}

double gptq_proxy_loss(const Tensor& w, const Tensor& w_hat, const Tensor& hessian) {
    Tensor dw = sub(cast(w, Dtype::F64), cast(w_hat, Dtype::F64));
    Tensor h = cast(hessian, Dtype::F64);
    // tr(D H D^T) = sum_r d_r^T H d_r
    int64_t d = dw.dim(0), k = dw.dim(1);
    const double* pd = dw.f64();
    const double* ph = h.f64();
    double total = 0;
    for (int64_t r = 0; r < d; ++r) {
        for (int64_t i = 0; i < k; ++i) {
            if (pd[r * k + i] == 0.0) continue;
            double acc = 0;
            for (int64_t j = 0; j < k; ++j) acc += ph[i * k + j] * pd[r * k + j];
            total += pd[r * k + i] * acc;
        }
    }
    return total;
}

// ---- whole-checkpoint application ----

namespace {

bool excluded(const std::string& name, const std::vector<std::string>& exclusions) {
    for (const auto& e : exclusions)
        if (!e.empty() && name.size() >= e.size() && name.ends_with(e)) return true;
    return false;
}

}  // namespace

CalibActivations collect_calib_activations(const TinyLM& model,
                                           const std::vector<std::vector<int32_t>>& samples) {
    CalibActivations acts;
    std::map<std::string, std::vector<std::vector<float>>> cols;  // name -> list of columns [k]
    for (const auto& tokens : samples) {
        detail::ForwardTrace trace;
        detail::forward_traced(model, tokens, {}, &trace);
        for (int64_t l = 0; l < model.config.n_layers; ++l) {
            const std::string pfx = "layers." + std::to_string(l) + ".";
            const auto& lt = trace.layers[static_cast<size_t>(l)];
            auto push_rows = [&](const std::string& name, const Tensor& x) {
                Tensor xf = x.dtype() == Dtype::F32 ? x : cast(x, Dtype::F32);
                int64_t t_len = xf.dim(0), k = xf.dim(1);
                auto& dst = cols[name];
                for (int64_t t = 0; t < t_len; ++t) {
                    std::vector<float> col(static_cast<size_t>(k));
                    std::memcpy(col.data(), xf.f32() + t * k, static_cast<size_t>(k) * sizeof(float));
                    dst.push_back(std::move(col));
                }
            };
            for (const char* t : {"q_proj", "k_proj", "v_proj"}) push_rows(pfx + t, lt.h_attn);
            push_rows(pfx + "o_proj", lt.attn_ctx);
            for (const char* t : {"gate_proj", "up_proj"}) push_rows(pfx + t, lt.h_mlp);
            push_rows(pfx + "down_proj", lt.inner);
        }
    }
    for (auto& [name, columns] : cols) {
        if (columns.empty()) continue;
        int64_t k = static_cast<int64_t>(columns.front().size());
        int64_t n = static_cast<int64_t>(columns.size());
        Tensor x(Dtype::F32, {k, n});
        float* px = x.f32();
        for (int64_t c = 0; c < n; ++c)
            for (int64_t i = 0; i < k; ++i) px[i * n + c] = columns[static_cast<size_t>(c)][static_cast<size_t>(i)];
        acts.emplace(name, std::move(x));
    }
    return acts;
}

Checkpoint quantize_checkpoint(const Checkpoint& ckpt, const QuantSpec& spec,
                               const CalibActivations* calib) {
    spec.validate();
    if (is_quantized(ckpt)) data_error("quantize_checkpoint: input is already quantized");

    Checkpoint out;
    out.meta = ckpt.meta;
    out.meta["quant.scheme"] = scheme_name(spec.scheme);
    out.meta["quant.group_size"] = std::to_string(spec.group_size);

    for (const auto& [name, t] : ckpt.tensors) {
        if (t.rank() != 2 || excluded(name, spec.exclusions)) {
            out.tensors.emplace(name, t);
            continue;
        }
        QuantizedTensor q;
        switch (spec.scheme) {
            case QuantScheme::Fp8Dynamic:
                q = quant_fp8(t);
                break;
            case QuantScheme::Int4Rtn:
                q = quant_int4_rtn(t, spec.group_size);
                break;
            case QuantScheme::Int4Gptq: {
                const Tensor* x = nullptr;
                if (calib != nullptr) {
                    auto it = calib->find(name);
                    if (it != calib->end()) x = &it->second;
                }
                if (x != nullptr) {
                    Tensor h = hessian_from_calib(*x, spec.damping);
                    q = gptq_quant(t, h, spec.group_size);
                } else {
                    // identity Hessian: error compensation vanishes, RTN codes
                    q = quant_int4_rtn(t, spec.group_size);
                    q.scheme = QuantScheme::Int4Gptq;
                }
                break;
            }
        }
        out.meta["quant.shape." + name] =
            std::to_string(t.dim(0)) + " " + std::to_string(t.dim(1));
        out.meta["quant.dtype." + name] = dtype_name(t.dtype());
        out.tensors.emplace(name + ".qdata", std::move(q.qdata));
        out.tensors.emplace(name + ".scales", std::move(q.scales));
    }
    return out;
}

bool is_quantized(const Checkpoint& ckpt) { return ckpt.meta.count("quant.scheme") != 0; }

Checkpoint dequantize_checkpoint(const Checkpoint& ckpt) {
    if (!is_quantized(ckpt)) return ckpt;
    auto scheme = scheme_from_name(ckpt.meta.at("quant.scheme"));
    if (!scheme) data_error("dequantize_checkpoint: unknown scheme tag '" + ckpt.meta.at("quant.scheme") + "'");

    Checkpoint out;
    for (const auto& [k, v] : ckpt.meta)
        if (!k.starts_with("quant.")) out.meta[k] = v;

    for (const auto& [name, t] : ckpt.tensors) {
        if (name.ends_with(".scales")) continue;
        if (!name.ends_with(".qdata")) {
            out.tensors.emplace(name, t);
            continue;
        }
        std::string base = name.substr(0, name.size() - 6);
        auto shape_it = ckpt.meta.find("quant.shape." + base);
        if (shape_it == ckpt.meta.end())
            data_error("dequantize_checkpoint: missing quant.shape for '" + base + "'");
        long long d = 0, k = 0;
        if (std::sscanf(shape_it->second.c_str(), "%lld %lld", &d, &k) != 2 || d < 0 || k < 0)
            data_error("dequantize_checkpoint: malformed quant.shape for '" + base + "'");

        QuantizedTensor q;
        q.scheme = *scheme;
        q.orig_shape = {static_cast<int64_t>(d), static_cast<int64_t>(k)};
        q.group_size = std::stoll(ckpt.meta.at("quant.group_size"));
        q.qdata = t;
        q.scales = ckpt.at(base + ".scales");
        Tensor dense = (*scheme == QuantScheme::Fp8Dynamic) ? dequant_fp8(q) : dequant_int4(q);
        out.tensors.emplace(base, std::move(dense));
    }
    return out;
}

// ---- footprint ----

namespace {

uint64_t dtype_bytes_of(const Tensor& t) { return t.numel() * dtype_size(t.dtype()); }

}  // namespace

FootprintReport footprint(const Checkpoint& ckpt, const std::optional<QuantSpec>& spec) {
    FootprintReport r;
    if (is_quantized(ckpt)) {
        r.scheme = ckpt.meta.at("quant.scheme");
        uint64_t params = 0;
        for (const auto& [name, t] : ckpt.tensors) {
            if (name.ends_with(".qdata")) {
                std::string base = name.substr(0, name.size() - 6);
                const auto& shape_s = ckpt.meta.at("quant.shape." + base);
                long long d = 0, k = 0;
                std::sscanf(shape_s.c_str(), "%lld %lld", &d, &k);
                params += static_cast<uint64_t>(d) * static_cast<uint64_t>(k);
                r.total_bytes += dtype_bytes_of(t);
            } else if (name.ends_with(".scales")) {
                r.total_bytes += dtype_bytes_of(t);
            } else {
                params += static_cast<uint64_t>(t.numel());
                r.total_bytes += dtype_bytes_of(t);
            }
        }
        r.baseline_bf16_bytes = params * 2;
    } else if (spec.has_value()) {
        r.scheme = scheme_name(spec->scheme);
        uint64_t params = 0;
        for (const auto& [name, t] : ckpt.tensors) {
            params += static_cast<uint64_t>(t.numel());
            if (t.rank() != 2 || excluded(name, spec->exclusions)) {
                r.total_bytes += dtype_bytes_of(t);
                continue;
            }
            uint64_t n = static_cast<uint64_t>(t.numel());
            if (spec->scheme == QuantScheme::Fp8Dynamic) {
                r.total_bytes += n + 4;
            } else {
                uint64_t groups = static_cast<uint64_t>(t.dim(0)) *
                                  static_cast<uint64_t>(ceil_div(t.dim(1), spec->group_size));
                r.total_bytes += n / 2 + (n % 2) + groups * 4;
            }
        }
        r.baseline_bf16_bytes = params * 2;
    } else {
        r.scheme = "stored";
        uint64_t params = 0;
        for (const auto& [name, t] : ckpt.tensors) {
            (void)name;
            params += static_cast<uint64_t>(t.numel());
            r.total_bytes += dtype_bytes_of(t);
        }
        r.baseline_bf16_bytes = params * 2;
    }
    r.ratio = r.total_bytes == 0 ? 0.0
                                 : static_cast<double>(r.baseline_bf16_bytes) /
                                       static_cast<double>(r.total_bytes);
    return r;
}

std::string footprint_table(const FootprintReport& r, const std::string& variant) {
    std::ostringstream os;
    os << "variant           precision   bytes        bf16-baseline  ratio\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-17s %-11s %-12llu %-14llu %.2fx\n", variant.c_str(),
                  r.scheme.c_str(), static_cast<unsigned long long>(r.total_bytes),
                  static_cast<unsigned long long>(r.baseline_bf16_bytes), r.ratio);
    os << line;
    return os.str();
}

}  // namespace lmadapt
