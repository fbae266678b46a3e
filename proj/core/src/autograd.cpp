#include <cmath>
#include <cstring>

#include "lmadapt/train.hpp"
#include "model_internal.hpp"

namespace lmadapt {

double cross_entropy(const Tensor& logits, std::span<const int32_t> targets) {
    if (logits.rank() != 2) data_error("cross_entropy: logits must be [T, V]");
    const int64_t T = logits.dim(0), V = logits.dim(1);
    if (static_cast<int64_t>(targets.size()) != T)
        data_error("cross_entropy: target count " + std::to_string(targets.size()) +
                   " does not match T = " + std::to_string(T));

    double total = 0.0;
    int64_t n_eff = 0;
    for (int64_t t = 0; t < T; ++t) {
        int32_t tgt = targets[static_cast<size_t>(t)];
        if (tgt == -1) continue;
        if (tgt < 0 || tgt >= V)
            data_error("cross_entropy: target id " + std::to_string(tgt) + " out of range");
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < V; ++j) mx = std::max(mx, logits.get(t * V + j));
        double sum = 0.0;
        for (int64_t j = 0; j < V; ++j) sum += std::exp(logits.get(t * V + j) - mx);
        total += (mx + std::log(sum)) - logits.get(t * V + tgt);
        ++n_eff;
    }
    if (n_eff == 0) data_error("cross_entropy: no effective positions (all targets ignored)");
    return total / static_cast<double>(n_eff);
}

namespace {

using detail::ForwardTrace;
using detail::LayerTrace;

std::pair<double, Tensor> ce_loss_and_dlogits(const Tensor& logits,
                                              std::span<const int32_t> targets) {
    const int64_t T = logits.dim(0), V = logits.dim(1);
    int64_t n_eff = 0;
    for (int32_t tgt : targets)
        if (tgt != -1) ++n_eff;
    if (n_eff == 0) data_error("cross_entropy: no effective positions (all targets ignored)");

    Tensor dlogits(logits.dtype(), logits.shape());
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n_eff);
    for (int64_t t = 0; t < T; ++t) {
        int32_t tgt = targets[static_cast<size_t>(t)];
        if (tgt == -1) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < V; ++j) mx = std::max(mx, logits.get(t * V + j));
        double sum = 0.0;
        for (int64_t j = 0; j < V; ++j) sum += std::exp(logits.get(t * V + j) - mx);
        total += (mx + std::log(sum)) - logits.get(t * V + tgt);
        for (int64_t j = 0; j < V; ++j) {
            double p = std::exp(logits.get(t * V + j) - mx) / sum;
            dlogits.set(t * V + j, (p - (j == tgt ? 1.0 : 0.0)) * inv_n);
        }
    }
    return {total / static_cast<double>(n_eff), std::move(dlogits)};
}

// dx for y = x * inv_rms * gain; gain is frozen so its gradient is not needed
Tensor rms_backward(const Tensor& dy, const Tensor& x, const Tensor& inv, const Tensor& gain) {
    const int64_t d = x.dim(x.rank() - 1);
    const int64_t rows = x.numel() / d;
    Tensor dx(x.dtype(), x.shape());
    auto run = [&](auto* pdy, auto* px, auto* pinv, auto* pg, auto* pdx) {
        using S = std::remove_pointer_t<decltype(pdx)>;
        for (int64_t r = 0; r < rows; ++r) {
            const S iv = pinv[r];
            S dot = 0;
            for (int64_t i = 0; i < d; ++i) dot += pdy[r * d + i] * pg[i] * px[r * d + i];
            const S c = iv * iv * iv * dot / static_cast<S>(d);
            for (int64_t i = 0; i < d; ++i)
                pdx[r * d + i] = iv * pdy[r * d + i] * pg[i] - c * px[r * d + i];
        }
    };
    if (x.dtype() == Dtype::F64)
        run(dy.f64(), x.f64(), inv.f64(), gain.f64(), dx.f64());
    else
        run(dy.f32(), x.f32(), inv.f32(), gain.f32(), dx.f32());
    return dx;
}

Tensor silu_grad_times(const Tensor& z, const Tensor& upstream) {
    Tensor out(z.dtype(), z.shape());
    auto run = [&](auto* pz, auto* pu, auto* po) {
        using S = std::remove_pointer_t<decltype(po)>;
        for (int64_t i = 0; i < z.numel(); ++i) {
            S sig = S(1) / (S(1) + std::exp(-pz[i]));
            po[i] = pu[i] * sig * (S(1) + pz[i] * (S(1) - sig));
        }
    };
    if (z.dtype() == Dtype::F64)
        run(z.f64(), upstream.f64(), out.f64());
    else
        run(z.f32(), upstream.f32(), out.f32());
    return out;
}

struct BwdCtx {
    const TinyLM& model;
    const LoraAdapter& adapter;
    std::map<std::string, Tensor>& grads;
};

void accum_grad(std::map<std::string, Tensor>& grads, const std::string& name, Tensor g) {
    auto it = grads.find(name);
    if (it == grads.end())
        grads.emplace(name, std::move(g));
    else
        add_inplace(it->second, g);
}

// dx for y = x W^T (+ low-rank branch); adapter factor gradients accumulate.
Tensor linear_bwd(const BwdCtx& ctx, const std::string& wname, const Tensor& dy, const Tensor& x,
                  const LayerTrace& lt) {
    const Tensor& w = ctx.model.params.at(wname);
    Tensor dx = matmul(dy, w);  // [T, in]

    auto [an, bn] = ctx.adapter.pair_names(wname);
    if (!an.empty() && ctx.adapter.has(an)) {
        auto trace_it = lt.lora.find(wname);
        if (trace_it == lt.lora.end()) data_error("backward: missing low-rank trace for '" + wname + "'");
        const Tensor& a = ctx.adapter.at(an);
        const Tensor& b = ctx.adapter.at(bn);
        const Tensor& u = trace_it->second.u;
        const Tensor& dropmul = trace_it->second.dropmul;
        const double s = ctx.adapter.config.alpha / static_cast<double>(ctx.adapter.config.rank);

        Tensor du = scale(matmul(dy, b), s);        // [T, r]
        accum_grad(ctx.grads, bn, scale(matmul_tn(dy, u), s));  // [out, r]
        Tensor xd = dropmul.numel() > 0 && dropmul.rank() == x.rank() ? mul(x, dropmul) : x;
        accum_grad(ctx.grads, an, matmul_tn(du, xd));  // [r, in]
        Tensor dxd = matmul(du, a);                    // [T, in]
        if (dropmul.numel() > 0 && dropmul.rank() == x.rank()) dxd = mul(dxd, dropmul);
        add_inplace(dx, dxd);
    }
    return dx;
}

struct AttnGrads {
    Tensor dq_rot, dk_rot, dv;
};

AttnGrads attention_backward(const Tensor& probs, const Tensor& q_rot, const Tensor& k_rot,
                             const Tensor& v, const Tensor& dctx, int64_t H, int64_t hd) {
    const int64_t T = v.dim(0);
    const double scale_d = 1.0 / std::sqrt(static_cast<double>(hd));
    AttnGrads g{Tensor(v.dtype(), v.shape()), Tensor(v.dtype(), v.shape()),
                Tensor(v.dtype(), v.shape())};
    auto run = [&](auto* pp, auto* pq, auto* pk, auto* pv, auto* pdc, auto* pdq, auto* pdk,
                   auto* pdv) {
        using S = std::remove_pointer_t<decltype(pdq)>;
        const S sc = static_cast<S>(scale_d);
        std::vector<S> dp(static_cast<size_t>(T));
        std::vector<S> ds(static_cast<size_t>(T));
        for (int64_t h = 0; h < H; ++h) {
            const S* ph = pp + h * T * T;
            for (int64_t t = 0; t < T; ++t) {
                const S* dct = pdc + t * H * hd + h * hd;
                // dp[s] = dctx[t] . v[s]
                for (int64_t s_i = 0; s_i <= t; ++s_i) {
                    const S* vv = pv + s_i * H * hd + h * hd;
                    S acc = 0;
                    for (int64_t i = 0; i < hd; ++i) acc += dct[i] * vv[i];
                    dp[static_cast<size_t>(s_i)] = acc;
                }
                // dv[s] += p[t,s] * dctx[t]
                const S* prow = ph + t * T;
                for (int64_t s_i = 0; s_i <= t; ++s_i) {
                    const S p = prow[s_i];
                    if (p == S(0)) continue;
                    S* dvv = pdv + s_i * H * hd + h * hd;
                    for (int64_t i = 0; i < hd; ++i) dvv[i] += p * dct[i];
                }
                // softmax backward on the causal row
                S dot = 0;
                for (int64_t s_i = 0; s_i <= t; ++s_i) dot += dp[static_cast<size_t>(s_i)] * prow[s_i];
                for (int64_t s_i = 0; s_i <= t; ++s_i)
                    ds[static_cast<size_t>(s_i)] = prow[s_i] * (dp[static_cast<size_t>(s_i)] - dot);
                // dq_rot[t] += ds[s] * k_rot[s] * sc ; dk_rot[s] += ds[s] * q_rot[t] * sc
                S* dqv = pdq + t * H * hd + h * hd;
                const S* qv = pq + t * H * hd + h * hd;
                for (int64_t s_i = 0; s_i <= t; ++s_i) {
                    const S dsv = ds[static_cast<size_t>(s_i)] * sc;
                    if (dsv == S(0)) continue;
                    const S* kv = pk + s_i * H * hd + h * hd;
                    S* dkv = pdk + s_i * H * hd + h * hd;
                    for (int64_t i = 0; i < hd; ++i) {
                        dqv[i] += dsv * kv[i];
                        dkv[i] += dsv * qv[i];
                    }
                }
            }
        }
    };
    if (v.dtype() == Dtype::F64)
        run(probs.f64(), q_rot.f64(), k_rot.f64(), v.f64(), dctx.f64(), g.dq_rot.f64(),
            g.dk_rot.f64(), g.dv.f64());
    else
        run(probs.f32(), q_rot.f32(), k_rot.f32(), v.f32(), dctx.f32(), g.dq_rot.f32(),
            g.dk_rot.f32(), g.dv.f32());
    return g;
}

}  // namespace

BackwardResult loss_and_grads(const TinyLM& model, const LoraAdapter& adapter,
                              std::span<const int32_t> tokens, std::span<const int32_t> targets,
                              const BackwardOptions& opts) {
    ForwardOptions fo;
    fo.adapter = &adapter;
    fo.training = opts.training;
    fo.dropout_key = opts.dropout_key;

    ForwardTrace tr;
    detail::forward_traced(model, tokens, fo, &tr);

    BackwardResult res;
    auto [loss, dlogits] = ce_loss_and_dlogits(tr.logits, targets);
    res.loss = loss;
    if (!std::isfinite(loss)) return res;

    const ModelConfig& cfg = model.config;
    const int64_t T = static_cast<int64_t>(tokens.size());
    const int64_t d = cfg.d_model, H = cfg.n_heads, hd = cfg.head_dim;
    Dtype dt = tr.logits.dtype();
    const bool train_embed = adapter.has("embed_tokens.delta");

    BwdCtx ctx{model, adapter, res.grads};

    Tensor de;
    if (train_embed) de = Tensor(dt, {cfg.vocab_size, d});

    const Tensor& w_lm = cfg.tie_lm_head ? tr.embed_eff : model.params.at("lm_head");
    Tensor dh_final = matmul(dlogits, w_lm);
    if (cfg.tie_lm_head && train_embed) add_inplace(de, matmul_tn(dlogits, tr.h_final));

    Tensor dx = rms_backward(dh_final, tr.x_last, tr.inv_rms_final, model.params.at("ln_final"));

    for (int64_t l = cfg.n_layers - 1; l >= 0; --l) {
        const std::string pfx = "layers." + std::to_string(l) + ".";
        const LayerTrace& lt = tr.layers[static_cast<size_t>(l)];

        // MLP half: x = x_mid + down(silu(gate) * up)
        Tensor dinner = linear_bwd(ctx, pfx + "down_proj", dx, lt.inner, lt);
        Tensor dgate_out = silu_grad_times(lt.gate_out, mul(dinner, lt.up_out));
        Tensor dup_out = mul(dinner, silu(lt.gate_out));
        Tensor dh_mlp = linear_bwd(ctx, pfx + "gate_proj", dgate_out, lt.h_mlp, lt);
        add_inplace(dh_mlp, linear_bwd(ctx, pfx + "up_proj", dup_out, lt.h_mlp, lt));
        Tensor dx_mid = rms_backward(dh_mlp, lt.x_mid, lt.inv_rms_mlp,
                                     model.params.at(pfx + "ln_mlp"));
        add_inplace(dx_mid, dx);  // residual

        // attention half: x_mid = x_in + o_proj(ctx)
        Tensor dctx_t = linear_bwd(ctx, pfx + "o_proj", dx_mid, lt.attn_ctx, lt);
        AttnGrads ag = attention_backward(lt.probs, lt.q_rot, lt.k_rot, lt.v, dctx_t, H, hd);
        Tensor dq = detail::rope_apply(ag.dq_rot, H, hd, cfg.rope_base, -1);
        Tensor dk = detail::rope_apply(ag.dk_rot, H, hd, cfg.rope_base, -1);
        Tensor dh_attn = linear_bwd(ctx, pfx + "q_proj", dq, lt.h_attn, lt);
        add_inplace(dh_attn, linear_bwd(ctx, pfx + "k_proj", dk, lt.h_attn, lt));
        add_inplace(dh_attn, linear_bwd(ctx, pfx + "v_proj", ag.dv, lt.h_attn, lt));
        Tensor dx_in = rms_backward(dh_attn, lt.x_in, lt.inv_rms_attn,
                                    model.params.at(pfx + "ln_attn"));
        add_inplace(dx_in, dx_mid);  // residual
        dx = std::move(dx_in);
    }

    if (train_embed) {
        size_t row_bytes = static_cast<size_t>(d) * dtype_size(dt);
        for (int64_t t = 0; t < T; ++t) {
            if (dt == Dtype::F64) {
                double* dst = de.f64() + tokens[static_cast<size_t>(t)] * d;
                const double* src = dx.f64() + t * d;
                for (int64_t i = 0; i < d; ++i) dst[i] += src[i];
            } else {
                float* dst = de.f32() + tokens[static_cast<size_t>(t)] * d;
                const float* src = dx.f32() + t * d;
                for (int64_t i = 0; i < d; ++i) dst[i] += src[i];
            }
        }
        (void)row_bytes;
        accum_grad(res.grads, "embed_tokens.delta", std::move(de));
    }

    // every trainable tensor reports a gradient, zero when untouched
    for (const auto& [name, t] : adapter.tensors)
        if (res.grads.find(name) == res.grads.end())
            res.grads.emplace(name, Tensor(t.dtype(), t.shape()));

    return res;
}

}  // namespace lmadapt
