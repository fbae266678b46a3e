#include "lmadapt/model.hpp"

#include <cmath>
#include <cstring>

#include "lmadapt/quant.hpp"
#include "lmadapt/rng.hpp"
#include "model_internal.hpp"

namespace lmadapt {

namespace {

constexpr double kRmsEps = 1e-6;
constexpr double kInitStd = 0.02;

bool all_zero(const Tensor& t) {
    if (t.dtype() == Dtype::F32) {
        const float* p = t.f32();
        for (int64_t i = 0; i < t.numel(); ++i)
            if (p[i] != 0.0f) return false;
        return true;
    }
    if (t.dtype() == Dtype::F64) {
        const double* p = t.f64();
        for (int64_t i = 0; i < t.numel(); ++i)
            if (p[i] != 0.0) return false;
        return true;
    }
    for (int64_t i = 0; i < t.numel(); ++i)
        if (t.get(i) != 0.0) return false;
    return true;
}

bool suffix_match(const std::string& name, const std::vector<std::string>& patterns) {
    for (const auto& p : patterns)
        if (!p.empty() && name.size() >= p.size() && name.ends_with(p)) return true;
    return false;
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size < 1 || d_model < 1 || n_layers < 1 || n_heads < 1 || head_dim < 1 || d_ff < 1)
        config_error("model config: all dimensions must be positive");
    if (n_heads * head_dim != d_model)
        config_error("model config: n_heads * head_dim must equal d_model");
    if (head_dim % 2 != 0) config_error("model config: head_dim must be even for rotary embeddings");
    if (!(rope_base > 0)) config_error("model config: rope_base must be positive");
    if (max_seq < 1) config_error("model config: max_seq must be >= 1");
}

std::string ModelConfig::digest() const {
    std::string s = std::to_string(vocab_size) + "," + std::to_string(d_model) + "," +
                    std::to_string(n_layers) + "," + std::to_string(n_heads) + "," +
                    std::to_string(head_dim) + "," + std::to_string(d_ff) + "," +
                    std::to_string(rope_base) + "," + std::to_string(max_seq) + "," +
                    (tie_lm_head ? "tied" : "untied");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(s)));
    return buf;
}

std::vector<std::string> canonical_param_names(const ModelConfig& cfg) {
    std::vector<std::string> names;
    names.push_back("embed_tokens");
    for (int64_t i = 0; i < cfg.n_layers; ++i) {
        std::string pfx = "layers." + std::to_string(i) + ".";
        for (const char* t : {"q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj",
                              "down_proj", "ln_attn", "ln_mlp"})
            names.push_back(pfx + t);
    }
    names.push_back("ln_final");
    if (!cfg.tie_lm_head) names.push_back("lm_head");
    return names;
}

std::vector<int64_t> param_shape(const ModelConfig& cfg, const std::string& name) {
    auto suffix = [&](const char* s) { return name.ends_with(s); };
    if (name == "embed_tokens" || name == "lm_head") return {cfg.vocab_size, cfg.d_model};
    if (name == "ln_final") return {cfg.d_model};
    if (suffix(".q_proj") || suffix(".k_proj") || suffix(".v_proj") || suffix(".o_proj"))
        return {cfg.d_model, cfg.d_model};
    if (suffix(".gate_proj") || suffix(".up_proj")) return {cfg.d_ff, cfg.d_model};
    if (suffix(".down_proj")) return {cfg.d_model, cfg.d_ff};
    if (suffix(".ln_attn") || suffix(".ln_mlp")) return {cfg.d_model};
    data_error("model: unknown parameter name '" + name + "'");
}

void TinyLM::validate_and_normalize() {
    config.validate();
    auto names = canonical_param_names(config);
    for (const auto& name : names) {
        auto it = params.tensors.find(name);
        if (it == params.tensors.end()) data_error("model: missing parameter '" + name + "'");
        if (it->second.dtype() == Dtype::BF16) it->second = cast(it->second, Dtype::F32);
        if (it->second.dtype() != Dtype::F32 && it->second.dtype() != Dtype::F64)
            data_error("model: parameter '" + name + "' must be floating point");
        if (it->second.shape() != param_shape(config, name))
            data_error("model: parameter '" + name + "' has shape " + shape_str(it->second.shape()) +
                       ", expected " + shape_str(param_shape(config, name)));
    }
    if (params.tensors.size() != names.size()) {
        for (const auto& [name, t] : params.tensors) {
            (void)t;
            if (std::find(names.begin(), names.end(), name) == names.end())
                data_error("model: unexpected parameter '" + name + "'");
        }
    }
    Dtype dt = params.at("embed_tokens").dtype();
    for (const auto& [name, t] : params.tensors)
        if (t.dtype() != dt)
            data_error("model: parameter '" + name + "' dtype differs from the rest of the checkpoint");
}

TinyLM init_params(const ModelConfig& cfg, uint64_t seed, Dtype dtype) {
    cfg.validate();
    if (dtype != Dtype::F32 && dtype != Dtype::F64)
        config_error("init_params: dtype must be F32 or F64");
    TinyLM m;
    m.config = cfg;
    RandomStream root(seed);
    for (const auto& name : canonical_param_names(cfg)) {
        Tensor t(dtype, param_shape(cfg, name));
        if (name.ends_with("ln_attn") || name.ends_with("ln_mlp") || name == "ln_final") {
            for (int64_t i = 0; i < t.numel(); ++i) t.set(i, 1.0);
        } else {
            fill_normal(t, root.fork("init/" + name), 0.0, kInitStd);
        }
        m.params.tensors.emplace(name, std::move(t));
    }
    m.params.meta["format_version"] = "1";
    m.params.meta["model.config_digest"] = cfg.digest();
    m.validate_and_normalize();
    return m;
}

TinyLM load_model(const ModelConfig& cfg, const Checkpoint& params) {
    TinyLM m;
    m.config = cfg;
    m.params = params;
    m.validate_and_normalize();
    return m;
}

namespace detail {

std::pair<Tensor, Tensor> rms_norm_traced(const Tensor& x, const Tensor& gain, double eps) {
    int64_t d = x.dim(x.rank() - 1);
    int64_t rows = x.numel() / d;
    Tensor y(x.dtype(), x.shape());
    Tensor inv(x.dtype(), {rows});
    auto run = [&](auto* px, auto* pg, auto* py, auto* pinv) {
        using T = std::remove_pointer_t<decltype(py)>;
        for (int64_t r = 0; r < rows; ++r) {
            T ms = 0;
            for (int64_t i = 0; i < d; ++i) ms += px[r * d + i] * px[r * d + i];
            ms /= static_cast<T>(d);
            T iv = T(1) / std::sqrt(ms + static_cast<T>(eps));
            pinv[r] = iv;
            for (int64_t i = 0; i < d; ++i) py[r * d + i] = px[r * d + i] * iv * pg[i];
        }
    };
    if (x.dtype() == Dtype::F64)
        run(x.f64(), gain.f64(), y.f64(), inv.f64());
    else
        run(x.f32(), gain.f32(), y.f32(), inv.f32());
    return {std::move(y), std::move(inv)};
}

Tensor rope_apply(const Tensor& x, int64_t n_heads, int64_t head_dim, double base, int direction,
                  int64_t pos0) {
    int64_t T = x.dim(0);
    int64_t half = head_dim / 2;
    Tensor y(x.dtype(), x.shape());
    auto run = [&](auto* px, auto* py) {
        using S = std::remove_pointer_t<decltype(py)>;
        for (int64_t t = 0; t < T; ++t) {
            for (int64_t h = 0; h < n_heads; ++h) {
                const int64_t off = t * n_heads * head_dim + h * head_dim;
                for (int64_t i = 0; i < half; ++i) {
                    double freq = std::pow(base, -(2.0 * static_cast<double>(i)) / static_cast<double>(head_dim));
                    double angle = static_cast<double>(pos0 + t) * freq;
                    S c = static_cast<S>(std::cos(angle));
                    S s = static_cast<S>(std::sin(angle) * direction);
                    S a = px[off + i];
                    S b = px[off + i + half];
                    py[off + i] = a * c - b * s;
                    py[off + i + half] = a * s + b * c;
                }
            }
        }
    };
    if (x.dtype() == Dtype::F64)
        run(x.f64(), y.f64());
    else
        run(x.f32(), y.f32());
    return y;
}

namespace {

// probs [H, T, T]: causal row softmax of q.k^T / sqrt(hd); entries past the
// diagonal stay exactly zero.
Tensor attention_probs(const Tensor& q, const Tensor& k, int64_t H, int64_t hd) {
    int64_t T = q.dim(0);
    Tensor probs(q.dtype(), {H, T, T});
    double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    auto run = [&](auto* pq, auto* pk, auto* pp) {
        using S = std::remove_pointer_t<decltype(pp)>;
        std::vector<S> row;
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t t = 0; t < T; ++t) {
                row.assign(static_cast<size_t>(t) + 1, S(0));
                S mx = std::numeric_limits<S>::lowest();
                for (int64_t s = 0; s <= t; ++s) {
                    S acc = 0;
                    const S* qv = pq + t * H * hd + h * hd;
                    const S* kv = pk + s * H * hd + h * hd;
                    for (int64_t i = 0; i < hd; ++i) acc += qv[i] * kv[i];
                    acc *= static_cast<S>(scale);
                    row[s] = acc;
                    mx = std::max(mx, acc);
                }
                S sum = 0;
                for (int64_t s = 0; s <= t; ++s) {
                    row[s] = std::exp(row[s] - mx);
                    sum += row[s];
                }
                S* prow = pp + h * T * T + t * T;
                for (int64_t s = 0; s <= t; ++s) prow[s] = row[s] / sum;
                for (int64_t s = t + 1; s < T; ++s) prow[s] = 0;
            }
        }
    };
    if (q.dtype() == Dtype::F64)
        run(q.f64(), k.f64(), probs.f64());
    else
        run(q.f32(), k.f32(), probs.f32());
    return probs;
}

// ctx[t, h*hd+i] = sum_s probs[h,t,s] * v[s, h*hd+i]
Tensor attention_ctx(const Tensor& probs, const Tensor& v, int64_t H, int64_t hd) {
    int64_t T = v.dim(0);
    Tensor ctx(v.dtype(), {T, H * hd});
    auto run = [&](auto* pp, auto* pv, auto* pc) {
        using S = std::remove_pointer_t<decltype(pc)>;
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t t = 0; t < T; ++t) {
                S* out = pc + t * H * hd + h * hd;
                for (int64_t i = 0; i < hd; ++i) out[i] = 0;
                const S* prow = pp + h * T * T + t * T;
                for (int64_t s = 0; s <= t; ++s) {
                    const S p = prow[s];
                    if (p == S(0)) continue;
                    const S* vv = pv + s * H * hd + h * hd;
                    for (int64_t i = 0; i < hd; ++i) out[i] += p * vv[i];
                }
            }
        }
    };
    if (v.dtype() == Dtype::F64)
        run(probs.f64(), v.f64(), ctx.f64());
    else
        run(probs.f32(), v.f32(), ctx.f32());
    return ctx;
}

struct LinearCtx {
    const TinyLM& model;
    const ForwardOptions& opts;
};

Tensor dropout_multiplier(const Tensor& x, double p, uint64_t key, const std::string& wname) {
    Tensor m(x.dtype(), x.shape());
    RandomStream stream = RandomStream::with_key(key).fork("dropout/" + wname);
    double keep = 1.0 - p;
    for (int64_t i = 0; i < m.numel(); ++i)
        m.set(i, stream.uniform_at(static_cast<uint64_t>(i)) < p ? 0.0 : 1.0 / keep);
    return m;
}

// y = x W^T plus the low-rank branch; fills the trace entry when requested.
Tensor linear_fwd(const LinearCtx& ctx, const Tensor& x, const std::string& wname,
                  LayerTrace* lt) {
    const Tensor& W = ctx.model.params.at(wname);
    Tensor xq = x;
    if (ctx.opts.act_quant.fp8 && !suffix_match(wname, ctx.opts.act_quant.exclusions))
        xq = fp8_fakequant(x);
    Tensor y = matmul_nt(xq, W);

    const LoraAdapter* ad = ctx.opts.adapter;
    if (ad != nullptr) {
        auto [an, bn] = ad->pair_names(wname);
        if (!an.empty() && ad->has(an)) {
            const Tensor& A = ad->at(an);
            const Tensor& B = ad->at(bn);
            bool b_zero = all_zero(B);
            if (!b_zero || lt != nullptr) {
                Tensor xd = xq;
                Tensor dropmul;
                if (ctx.opts.training && ad->config.dropout_p > 0.0) {
                    dropmul = dropout_multiplier(xq, ad->config.dropout_p, ctx.opts.dropout_key, wname);
                    xd = mul(xq, dropmul);
                }
                Tensor u = matmul_nt(xd, A);  // [T, r]
                if (!b_zero) {
                    double s = ad->config.alpha / static_cast<double>(ad->config.rank);
                    add_inplace(y, scale(matmul_nt(u, B), s));
                }
                if (lt != nullptr) lt->lora[wname] = LoraBranchTrace{std::move(u), std::move(dropmul)};
            }
        }
    }
    return y;
}

}  // namespace

Tensor forward_traced(const TinyLM& model, std::span<const int32_t> tokens,
                      const ForwardOptions& opts, ForwardTrace* trace) {
    const ModelConfig& cfg = model.config;
    const int64_t T = static_cast<int64_t>(tokens.size());
    if (T > cfg.max_seq)
        data_error("forward: sequence length " + std::to_string(T) + " exceeds max_seq " +
                   std::to_string(cfg.max_seq));
    for (int32_t id : tokens)
        if (id < 0 || id >= cfg.vocab_size)
            data_error("forward: token id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(cfg.vocab_size) + ")");

    const int64_t d = cfg.d_model, H = cfg.n_heads, hd = cfg.head_dim;
    Dtype dt = model.params.at("embed_tokens").dtype();

    // effective embeddings: base plus trainable delta when present and nonzero
    Tensor embed_eff = model.params.at("embed_tokens");
    if (opts.adapter != nullptr && opts.adapter->has("embed_tokens.delta")) {
        const Tensor& delta = opts.adapter->at("embed_tokens.delta");
        if (!all_zero(delta)) embed_eff = add(embed_eff, delta);
    }

    Tensor x(dt, {T, d});
    size_t row_bytes = static_cast<size_t>(d) * dtype_size(dt);
    for (int64_t t = 0; t < T; ++t)
        std::memcpy(x.raw() + t * row_bytes, embed_eff.raw() + tokens[t] * row_bytes, row_bytes);

    LinearCtx lctx{model, opts};
    if (trace != nullptr) {
        trace->embed_eff = embed_eff;
        trace->x0 = x;
        trace->layers.resize(static_cast<size_t>(cfg.n_layers));
    }

    for (int64_t l = 0; l < cfg.n_layers; ++l) {
        const std::string pfx = "layers." + std::to_string(l) + ".";
        LayerTrace* lt = trace != nullptr ? &trace->layers[static_cast<size_t>(l)] : nullptr;
        if (lt != nullptr) lt->x_in = x;

        auto [h_attn, inv_attn] = rms_norm_traced(x, model.params.at(pfx + "ln_attn"), kRmsEps);
        Tensor q = linear_fwd(lctx, h_attn, pfx + "q_proj", lt);
        Tensor k = linear_fwd(lctx, h_attn, pfx + "k_proj", lt);
        Tensor v = linear_fwd(lctx, h_attn, pfx + "v_proj", lt);
        Tensor q_rot = rope_apply(q, H, hd, cfg.rope_base, +1);
        Tensor k_rot = rope_apply(k, H, hd, cfg.rope_base, +1);
        Tensor probs = attention_probs(q_rot, k_rot, H, hd);
        Tensor ctx_t = attention_ctx(probs, v, H, hd);
        Tensor attn_out = linear_fwd(lctx, ctx_t, pfx + "o_proj", lt);
        Tensor x_mid = add(x, attn_out);

        auto [h_mlp, inv_mlp] = rms_norm_traced(x_mid, model.params.at(pfx + "ln_mlp"), kRmsEps);
        Tensor gate_out = linear_fwd(lctx, h_mlp, pfx + "gate_proj", lt);
        Tensor up_out = linear_fwd(lctx, h_mlp, pfx + "up_proj", lt);
        Tensor inner = mul(silu(gate_out), up_out);
        Tensor mlp_out = linear_fwd(lctx, inner, pfx + "down_proj", lt);
        x = add(x_mid, mlp_out);

        if (lt != nullptr) {
            lt->h_attn = std::move(h_attn);
            lt->inv_rms_attn = std::move(inv_attn);
            lt->q_rot = std::move(q_rot);
            lt->k_rot = std::move(k_rot);
            lt->v = std::move(v);
            lt->probs = std::move(probs);
            lt->attn_ctx = std::move(ctx_t);
            lt->x_mid = std::move(x_mid);
            lt->h_mlp = std::move(h_mlp);
            lt->inv_rms_mlp = std::move(inv_mlp);
            lt->gate_out = std::move(gate_out);
            lt->up_out = std::move(up_out);
            lt->inner = std::move(inner);
        }
    }

    auto [h_final, inv_final] = rms_norm_traced(x, model.params.at("ln_final"), kRmsEps);
    Tensor hq = h_final;
    if (opts.act_quant.fp8 && !suffix_match("lm_head", opts.act_quant.exclusions))
        hq = fp8_fakequant(h_final);
    Tensor logits = cfg.tie_lm_head ? matmul_nt(hq, embed_eff)
                                    : matmul_nt(hq, model.params.at("lm_head"));

    if (trace != nullptr) {
        trace->x_last = std::move(x);
        trace->h_final = std::move(h_final);
        trace->inv_rms_final = std::move(inv_final);
        trace->logits = logits;
    }
    return logits;
}

}  // namespace detail

Tensor forward(const TinyLM& model, std::span<const int32_t> tokens, const ForwardOptions& opts) {
    return detail::forward_traced(model, tokens, opts, nullptr);
}

}  // namespace lmadapt
