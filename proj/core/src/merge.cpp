#include "lmadapt/merge.hpp"

#include <algorithm>
#include <sstream>

namespace lmadapt {

void MergeSpec::validate() const {
    if (weight_a < 0.0 || weight_a > 1.0)
        config_error("merge: weight_a must be in [0, 1], got " + std::to_string(weight_a));
}

namespace {

Tensor mix_tensor(const Tensor& a, const Tensor& b, double wa, double wb) {
    Dtype ct = (a.dtype() == Dtype::F64 || b.dtype() == Dtype::F64) ? Dtype::F64 : Dtype::F32;
    Tensor ca = cast(a, ct), cb = cast(b, ct);
    Tensor out(ct, a.shape());
    if (ct == Dtype::F64) {
        const double *pa = ca.f64(), *pb = cb.f64();
        double* po = out.f64();
        for (int64_t i = 0; i < a.numel(); ++i) po[i] = wa * pa[i] + wb * pb[i];
    } else {
        const float *pa = ca.f32(), *pb = cb.f32();
        float* po = out.f32();
        const float fwa = static_cast<float>(wa), fwb = static_cast<float>(wb);
        for (int64_t i = 0; i < a.numel(); ++i) po[i] = fwa * pa[i] + fwb * pb[i];
    }
    // one rounding when the storage dtype is narrower than the compute dtype
    return out.dtype() == a.dtype() ? out : cast(out, a.dtype());
}

}  // namespace

Checkpoint linear_merge(const Checkpoint& a, const Checkpoint& b, const MergeSpec& spec) {
    spec.validate();

    std::vector<std::string> only_a, only_b;
    for (const auto& [name, t] : a.tensors) {
        (void)t;
        if (!b.has(name)) only_a.push_back(name);
    }
    for (const auto& [name, t] : b.tensors) {
        (void)t;
        if (!a.has(name)) only_b.push_back(name);
    }
    if (!only_a.empty() || !only_b.empty()) {
        std::ostringstream os;
        os << "merge: checkpoints disagree on tensor names;";
        if (!only_a.empty()) {
            os << " only in a:";
            for (const auto& n : only_a) os << " " << n;
        }
        if (!only_b.empty()) {
            os << " only in b:";
            for (const auto& n : only_b) os << " " << n;
        }
        data_error(os.str());
    }

    Checkpoint out;
    out.meta = a.meta;
    for (const auto& [name, ta] : a.tensors) {
        const Tensor& tb = b.at(name);
        bool merge_this = !spec.name_filter.has_value() || spec.name_filter->count(name) != 0;
        if (!merge_this) {
            out.tensors.emplace(name, ta);
            continue;
        }
        if (ta.shape() != tb.shape())
            data_error("merge: tensor '" + name + "' shapes differ: " + shape_str(ta.shape()) +
                       " vs " + shape_str(tb.shape()));
        if (ta.dtype() != tb.dtype())
            data_error("merge: tensor '" + name + "' dtypes differ");
        if (spec.weight_a == 1.0 && spec.weight_b == 0.0) {
            out.tensors.emplace(name, ta);  // endpoint: bit-identical to a
        } else if (spec.weight_a == 0.0 && spec.weight_b == 1.0) {
            out.tensors.emplace(name, tb);
        } else {
            out.tensors.emplace(name, mix_tensor(ta, tb, spec.weight_a, spec.weight_b));
        }
    }
    out.meta["merge.weight_a"] = std::to_string(spec.weight_a);
    out.meta["merge.weight_b"] = std::to_string(spec.weight_b);
    out.meta["merge.digest_a"] = checkpoint_digest(a);
    out.meta["merge.digest_b"] = checkpoint_digest(b);
    return out;
}

std::vector<SweepRow> merge_sweep(const Checkpoint& a, const Checkpoint& b,
                                  const std::vector<double>& ratios,
                                  const std::vector<McqItem>& benchmark, const SweepConfig& cfg) {
    std::vector<SweepRow> rows;
    for (double r : ratios) {
        SweepRow row;
        row.ratio = r;
        try {
            MergeSpec spec(r);
            Checkpoint merged = linear_merge(a, b, spec);
            TinyLM model = load_model(cfg.model, merged);
            EvalReport rep = evaluate(model, benchmark, cfg.tmpl, *cfg.tok, cfg.eval);
            row.accuracy = rep.overall;
        } catch (const Error& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(),
              [](const SweepRow& x, const SweepRow& y) { return x.ratio < y.ratio; });
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "weight_a,mean_accuracy\n";
    for (const auto& r : rows) {
        if (r.error.empty()) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6g,%.6f\n", r.ratio, r.accuracy);
            os << buf;
        } else {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6g,error\n", r.ratio);
            os << buf;
        }
    }
    return os.str();
}

}  // namespace lmadapt
