#include "lmadapt/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "lmadapt/rng.hpp"

namespace lmadapt {

const char* dtype_name(Dtype dt) noexcept {
    switch (dt) {
        case Dtype::F64: return "F64";
        case Dtype::F32: return "F32";
        case Dtype::BF16: return "BF16";
        case Dtype::I32: return "I32";
        case Dtype::U8: return "U8";
    }
    return "?";
}

std::optional<Dtype> dtype_from_name(std::string_view name) noexcept {
    if (name == "F64") return Dtype::F64;
    if (name == "F32") return Dtype::F32;
    if (name == "BF16") return Dtype::BF16;
    if (name == "I32") return Dtype::I32;
    if (name == "U8") return Dtype::U8;
    return std::nullopt;
}

size_t dtype_size(Dtype dt) noexcept {
    switch (dt) {
        case Dtype::F64: return 8;
        case Dtype::F32: return 4;
        case Dtype::BF16: return 2;
        case Dtype::I32: return 4;
        case Dtype::U8: return 1;
    }
    return 0;
}

uint16_t f32_to_bf16(float f) noexcept {
    uint32_t u = std::bit_cast<uint32_t>(f);
    if (std::isnan(f)) return static_cast<uint16_t>((u >> 16) | 0x0040);  // keep sign, quiet
    uint32_t rounding_bias = 0x7fff + ((u >> 16) & 1);
    return static_cast<uint16_t>((u + rounding_bias) >> 16);
}

float bf16_to_f32(uint16_t b) noexcept {
    return std::bit_cast<float>(static_cast<uint32_t>(b) << 16);
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Dtype dt, std::vector<int64_t> shape) : dtype_(dt), shape_(std::move(shape)) {
    int64_t n = 1;
    for (int64_t d : shape_) {
        if (d < 0) data_error("tensor extent must be non-negative, got shape " + shape_str(shape_));
        n *= d;
    }
    data_.assign(static_cast<size_t>(n) * dtype_size(dt), 0);
}

Tensor Tensor::from_f32(std::vector<int64_t> shape, std::vector<float> values) {
    Tensor t(Dtype::F32, std::move(shape));
    if (static_cast<int64_t>(values.size()) != t.numel())
        data_error("from_f32: value count does not match shape " + shape_str(t.shape()));
    std::memcpy(t.raw(), values.data(), values.size() * sizeof(float));
    return t;
}

Tensor Tensor::from_f64(std::vector<int64_t> shape, std::vector<double> values) {
    Tensor t(Dtype::F64, std::move(shape));
    if (static_cast<int64_t>(values.size()) != t.numel())
        data_error("from_f64: value count does not match shape " + shape_str(t.shape()));
    std::memcpy(t.raw(), values.data(), values.size() * sizeof(double));
    return t;
}

Tensor Tensor::scalar(Dtype dt, double v) {
    Tensor t(dt, {});
    t.set(0, v);
    return t;
}

int64_t Tensor::numel() const noexcept {
    int64_t n = 1;
    for (int64_t d : shape_) n *= d;
    return n;
}

void Tensor::check_dtype(Dtype dt) const {
    if (dtype_ != dt)
        data_error(std::string("tensor dtype is ") + dtype_name(dtype_) + ", expected " +
                   dtype_name(dt));
}

float* Tensor::f32() { check_dtype(Dtype::F32); return reinterpret_cast<float*>(data_.data()); }
const float* Tensor::f32() const { check_dtype(Dtype::F32); return reinterpret_cast<const float*>(data_.data()); }
double* Tensor::f64() { check_dtype(Dtype::F64); return reinterpret_cast<double*>(data_.data()); }
const double* Tensor::f64() const { check_dtype(Dtype::F64); return reinterpret_cast<const double*>(data_.data()); }
uint16_t* Tensor::bf16() { check_dtype(Dtype::BF16); return reinterpret_cast<uint16_t*>(data_.data()); }
const uint16_t* Tensor::bf16() const { check_dtype(Dtype::BF16); return reinterpret_cast<const uint16_t*>(data_.data()); }
int32_t* Tensor::i32() { check_dtype(Dtype::I32); return reinterpret_cast<int32_t*>(data_.data()); }
const int32_t* Tensor::i32() const { check_dtype(Dtype::I32); return reinterpret_cast<const int32_t*>(data_.data()); }
uint8_t* Tensor::u8() { check_dtype(Dtype::U8); return data_.data(); }
const uint8_t* Tensor::u8() const { check_dtype(Dtype::U8); return data_.data(); }

double Tensor::get(int64_t flat) const {
    switch (dtype_) {
        case Dtype::F64: return f64()[flat];
        case Dtype::F32: return f32()[flat];
        case Dtype::BF16: return bf16_to_f32(bf16()[flat]);
        case Dtype::I32: return i32()[flat];
        case Dtype::U8: return u8()[flat];
    }
    return 0;
}

void Tensor::set(int64_t flat, double v) {
    switch (dtype_) {
        case Dtype::F64: f64()[flat] = v; return;
        case Dtype::F32: f32()[flat] = static_cast<float>(v); return;
        case Dtype::BF16: bf16()[flat] = f32_to_bf16(static_cast<float>(v)); return;
        case Dtype::I32: i32()[flat] = static_cast<int32_t>(v); return;
        case Dtype::U8: u8()[flat] = static_cast<uint8_t>(v); return;
    }
}

namespace {

Tensor to_compute(const Tensor& a, Dtype target) {
    if (a.dtype() == target) return a;
    return cast(a, target);
}

Dtype promote(const Tensor& a, const Tensor& b) {
    return (a.dtype() == Dtype::F64 || b.dtype() == Dtype::F64) ? Dtype::F64 : Dtype::F32;
}

template <typename T>
void matmul_kernel(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] = 0;
        for (int64_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            if (av == T(0)) continue;
            const T* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void matmul_nt_kernel(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        for (int64_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc = 0;
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void matmul_tn_kernel(const T* a, const T* b, T* c, int64_t k, int64_t m, int64_t n) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) c[i * n + j] = 0;
    for (int64_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void require_2d(const Tensor& t, const char* who) {
    if (t.rank() != 2) data_error(std::string(who) + ": expected rank-2 tensor, got shape " + shape_str(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.dim(1) != b.dim(0))
        data_error("matmul: inner extents differ: " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
    Dtype ct = promote(a, b);
    Tensor ca = to_compute(a, ct), cb = to_compute(b, ct);
    Tensor c(ct, {a.dim(0), b.dim(1)});
    if (ct == Dtype::F64)
        matmul_kernel(ca.f64(), cb.f64(), c.f64(), a.dim(0), a.dim(1), b.dim(1));
    else
        matmul_kernel(ca.f32(), cb.f32(), c.f32(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    if (a.dim(1) != b.dim(1))
        data_error("matmul_nt: inner extents differ: " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
    Dtype ct = promote(a, b);
    Tensor ca = to_compute(a, ct), cb = to_compute(b, ct);
    Tensor c(ct, {a.dim(0), b.dim(0)});
    if (ct == Dtype::F64)
        matmul_nt_kernel(ca.f64(), cb.f64(), c.f64(), a.dim(0), a.dim(1), b.dim(0));
    else
        matmul_nt_kernel(ca.f32(), cb.f32(), c.f32(), a.dim(0), a.dim(1), b.dim(0));
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_tn");
    require_2d(b, "matmul_tn");
    if (a.dim(0) != b.dim(0))
        data_error("matmul_tn: inner extents differ: " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
    Dtype ct = promote(a, b);
    Tensor ca = to_compute(a, ct), cb = to_compute(b, ct);
    Tensor c(ct, {a.dim(1), b.dim(1)});
    if (ct == Dtype::F64)
        matmul_tn_kernel(ca.f64(), cb.f64(), c.f64(), a.dim(0), a.dim(1), b.dim(1));
    else
        matmul_tn_kernel(ca.f32(), cb.f32(), c.f32(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

namespace {

template <typename T>
void softmax_lanes(const T* x, T* y, int64_t outer, int64_t axis_n, int64_t inner) {
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const T* xs = x + o * axis_n * inner + in;
            T* ys = y + o * axis_n * inner + in;
            T mx = xs[0];
            for (int64_t i = 1; i < axis_n; ++i) mx = std::max(mx, xs[i * inner]);
            T sum = 0;
            for (int64_t i = 0; i < axis_n; ++i) {
                T e = std::exp(xs[i * inner] - mx);
                ys[i * inner] = e;
                sum += e;
            }
            for (int64_t i = 0; i < axis_n; ++i) ys[i * inner] /= sum;
        }
    }
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
    if (x.rank() == 0) data_error("softmax: scalar input");
    int r = static_cast<int>(x.rank());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) data_error("softmax: axis out of range");

    Dtype ct = x.dtype() == Dtype::F64 ? Dtype::F64 : Dtype::F32;
    Tensor cx = to_compute(x, ct);
    if (ct == Dtype::F64) {
        const double* p = cx.f64();
        for (int64_t i = 0; i < cx.numel(); ++i)
            if (std::isnan(p[i])) numeric_error("softmax: NaN input");
    } else {
        const float* p = cx.f32();
        for (int64_t i = 0; i < cx.numel(); ++i)
            if (std::isnan(p[i])) numeric_error("softmax: NaN input");
    }

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);
    int64_t axis_n = x.dim(axis);
    if (axis_n == 0) return cx;

    Tensor y(ct, x.shape());
    if (ct == Dtype::F64)
        softmax_lanes(cx.f64(), y.f64(), outer, axis_n, inner);
    else
        softmax_lanes(cx.f32(), y.f32(), outer, axis_n, inner);
    return y;
}

namespace {

template <typename T>
void rms_norm_rows(const T* x, const T* g, T* y, int64_t rows, int64_t d, T eps) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * d;
        T* yr = y + r * d;
        T ms = 0;
        for (int64_t i = 0; i < d; ++i) ms += xr[i] * xr[i];
        ms /= static_cast<T>(d);
        T inv = T(1) / std::sqrt(ms + eps);
        for (int64_t i = 0; i < d; ++i) yr[i] = xr[i] * inv * g[i];
    }
}

}  // namespace

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
    if (x.rank() == 0) data_error("rms_norm: scalar input");
    int64_t d = x.dim(x.rank() - 1);
    if (d < 1) data_error("rms_norm: trailing dimension must be >= 1");
    if (eps < 0.0) data_error("rms_norm: eps must be >= 0");
    if (gain.rank() != 1 || gain.dim(0) != d)
        data_error("rms_norm: gain shape " + shape_str(gain.shape()) + " does not match trailing dimension " + std::to_string(d));

    Dtype ct = promote(x, gain);
    Tensor cx = to_compute(x, ct), cg = to_compute(gain, ct);
    Tensor y(ct, x.shape());
    int64_t rows = x.numel() / d;
    if (ct == Dtype::F64)
        rms_norm_rows(cx.f64(), cg.f64(), y.f64(), rows, d, eps);
    else
        rms_norm_rows(cx.f32(), cg.f32(), y.f32(), rows, d, static_cast<float>(eps));
    return y;
}

namespace {

template <typename F>
Tensor elementwise2(const Tensor& a, const Tensor& b, const char* who, F&& f) {
    if (!a.same_shape(b))
        data_error(std::string(who) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
    Dtype ct = promote(a, b);
    Tensor ca = to_compute(a, ct), cb = to_compute(b, ct);
    Tensor y(ct, a.shape());
    int64_t n = a.numel();
    if (ct == Dtype::F64) {
        const double *pa = ca.f64(), *pb = cb.f64();
        double* out = y.f64();
        for (int64_t i = 0; i < n; ++i) out[i] = f(pa[i], pb[i]);
    } else {
        const float *pa = ca.f32(), *pb = cb.f32();
        float* out = y.f32();
        for (int64_t i = 0; i < n; ++i) out[i] = static_cast<float>(f(pa[i], pb[i]));
    }
    return y;
}

}  // namespace

Tensor silu(const Tensor& x) {
    Dtype ct = x.dtype() == Dtype::F64 ? Dtype::F64 : Dtype::F32;
    Tensor cx = to_compute(x, ct);
    Tensor y(ct, x.shape());
    int64_t n = x.numel();
    if (ct == Dtype::F64) {
        const double* a = cx.f64();
        double* out = y.f64();
        for (int64_t i = 0; i < n; ++i) out[i] = a[i] / (1.0 + std::exp(-a[i]));
    } else {
        const float* a = cx.f32();
        float* out = y.f32();
        for (int64_t i = 0; i < n; ++i) out[i] = a[i] / (1.0f + std::exp(-a[i]));
    }
    return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise2(a, b, "add", [](auto x, auto y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise2(a, b, "sub", [](auto x, auto y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise2(a, b, "mul", [](auto x, auto y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
    Dtype ct = a.dtype() == Dtype::F64 ? Dtype::F64 : Dtype::F32;
    Tensor ca = to_compute(a, ct);
    Tensor y(ct, a.shape());
    int64_t n = a.numel();
    if (ct == Dtype::F64) {
        const double* pa = ca.f64();
        double* out = y.f64();
        for (int64_t i = 0; i < n; ++i) out[i] = pa[i] * s;
    } else {
        const float* pa = ca.f32();
        float* out = y.f32();
        float fs = static_cast<float>(s);
        for (int64_t i = 0; i < n; ++i) out[i] = pa[i] * fs;
    }
    return y;
}

void add_inplace(Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        data_error("add_inplace: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    if (a.dtype() == Dtype::F64 && b.dtype() == Dtype::F64) {
        double* pa = a.f64();
        const double* pb = b.f64();
        for (int64_t i = 0; i < a.numel(); ++i) pa[i] += pb[i];
    } else if (a.dtype() == Dtype::F32 && b.dtype() == Dtype::F32) {
        float* pa = a.f32();
        const float* pb = b.f32();
        for (int64_t i = 0; i < a.numel(); ++i) pa[i] += pb[i];
    } else {
        for (int64_t i = 0; i < a.numel(); ++i) a.set(i, a.get(i) + b.get(i));
    }
}

Tensor transpose2d(const Tensor& a) {
    require_2d(a, "transpose2d");
    Tensor y(a.dtype(), {a.dim(1), a.dim(0)});
    size_t es = dtype_size(a.dtype());
    for (int64_t i = 0; i < a.dim(0); ++i)
        for (int64_t j = 0; j < a.dim(1); ++j)
            std::memcpy(y.raw() + (j * a.dim(0) + i) * es, a.raw() + (i * a.dim(1) + j) * es, es);
    return y;
}

Tensor cast(const Tensor& a, Dtype dt) {
    if (a.dtype() == dt) return a;
    Tensor y(dt, a.shape());
    // BF16 -> F32 -> target keeps the round-half-even store semantics in set()
    for (int64_t i = 0; i < a.numel(); ++i) y.set(i, a.get(i));
    return y;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
    if (a.dtype() != b.dtype() || a.shape() != b.shape()) return false;
    return a.byte_size() == b.byte_size() &&
           std::memcmp(a.raw(), b.raw(), a.byte_size()) == 0;
}

bool allclose(const Tensor& a, const Tensor& b, double atol, double rtol) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double x = a.get(i), y = b.get(i);
        if (std::isnan(x) || std::isnan(y)) return false;
        if (std::abs(x - y) > atol + rtol * std::abs(y)) return false;
    }
    return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        data_error("max_abs_diff: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double m = 0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.get(i) - b.get(i)));
    return m;
}

void fill_normal(Tensor& t, const RandomStream& stream, double mean, double stddev) {
    int64_t n = t.numel();
    if (t.dtype() == Dtype::F64) {
        double* p = t.f64();
        for (int64_t i = 0; i < n; ++i) p[i] = mean + stddev * stream.normal_at(static_cast<uint64_t>(i));
    } else if (t.dtype() == Dtype::F32) {
        float* p = t.f32();
        for (int64_t i = 0; i < n; ++i)
            p[i] = static_cast<float>(mean + stddev * stream.normal_at(static_cast<uint64_t>(i)));
    } else {
        for (int64_t i = 0; i < n; ++i)
            t.set(i, mean + stddev * stream.normal_at(static_cast<uint64_t>(i)));
    }
}

}  // namespace lmadapt
