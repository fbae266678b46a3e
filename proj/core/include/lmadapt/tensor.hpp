#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lmadapt/error.hpp"

namespace lmadapt {

enum class Dtype : uint8_t { F64, F32, BF16, I32, U8 };

const char* dtype_name(Dtype dt) noexcept;
std::optional<Dtype> dtype_from_name(std::string_view name) noexcept;
size_t dtype_size(Dtype dt) noexcept;

// Round-half-to-even narrowing; NaN maps to a quiet-NaN payload.
uint16_t f32_to_bf16(float f) noexcept;
float bf16_to_f32(uint16_t b) noexcept;

// Dense row-major n-dimensional array. BF16 is storage only; kernels compute
// in F32 or F64. Kernels treat tensors as immutable inputs and are safe to
// call concurrently on distinct outputs.
class Tensor {
public:
    Tensor() : dtype_(Dtype::F32), shape_{0} {}
    Tensor(Dtype dt, std::vector<int64_t> shape);  // zero-filled

    static Tensor from_f32(std::vector<int64_t> shape, std::vector<float> values);
    static Tensor from_f64(std::vector<int64_t> shape, std::vector<double> values);
    static Tensor scalar(Dtype dt, double v);

    Dtype dtype() const noexcept { return dtype_; }
    const std::vector<int64_t>& shape() const noexcept { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t rank() const noexcept { return shape_.size(); }
    int64_t numel() const noexcept;
    size_t byte_size() const noexcept { return data_.size(); }

    float* f32();
    const float* f32() const;
    double* f64();
    const double* f64() const;
    uint16_t* bf16();
    const uint16_t* bf16() const;
    int32_t* i32();
    const int32_t* i32() const;
    uint8_t* u8();
    const uint8_t* u8() const;

    uint8_t* raw() noexcept { return data_.data(); }
    const uint8_t* raw() const noexcept { return data_.data(); }

    // Converting element access by flat index. Slow path for generic code.
    double get(int64_t flat) const;
    void set(int64_t flat, double v);

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

private:
    void check_dtype(Dtype dt) const;

    Dtype dtype_;
    std::vector<int64_t> shape_;
    std::vector<uint8_t> data_;
};

std::string shape_str(const std::vector<int64_t>& shape);

// ---- kernels ----

// c[i,j] = sum_k a[i,k] * b[k,j]. Accumulates in F32 at minimum; if either
// input is F64 the whole product runs in F64. Non-float inputs convert to F32.
Tensor matmul(const Tensor& a, const Tensor& b);
// a [m,k] times b[n,k] transposed -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// a [k,m] transposed times b [k,n] -> [m,n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// Max-subtraction stabilized softmax along `axis` (negative counts from the
// back). NaN input raises a numeric error.
Tensor softmax(const Tensor& x, int axis = -1);

// y = x / sqrt(mean(x^2) + eps) * gain over the trailing dimension.
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps);

Tensor silu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
void add_inplace(Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);

Tensor cast(const Tensor& a, Dtype dt);
bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;
bool allclose(const Tensor& a, const Tensor& b, double atol, double rtol = 0.0);
double max_abs_diff(const Tensor& a, const Tensor& b);

class RandomStream;
// element i <- mean + stddev * normal_at(i)
void fill_normal(Tensor& t, const RandomStream& stream, double mean, double stddev);

}  // namespace lmadapt
