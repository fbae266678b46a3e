#include "lmadapt/rng.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace lmadapt {

uint64_t fnv1a64(std::string_view s) noexcept {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t mix64(uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double portable_log(double x) noexcept {
    if (std::isnan(x) || x < 0.0) return std::numeric_limits<double>::quiet_NaN();
    if (x == 0.0) return -std::numeric_limits<double>::infinity();
    if (std::isinf(x)) return x;

    constexpr double kLn2Hi = 0x1.62e42fefa39efp-1;   // high part of ln 2
    constexpr double kLn2Lo = 0x1.abc9e3b39803fp-56;  // low part of ln 2

    uint64_t bits = std::bit_cast<uint64_t>(x);
    int e = static_cast<int>((bits >> 52) & 0x7ff);
    if (e == 0) {
        // subnormal: rescale exactly by 2^64 and recurse
        return portable_log(x * 0x1.0p64) - (64.0 * kLn2Hi + 64.0 * kLn2Lo);
    }
    // m in [1,2), x = m * 2^(e-1023)
    double m = std::bit_cast<double>((bits & 0x800fffffffffffffULL) | 0x3ff0000000000000ULL);
    int k = e - 1023;
    // center m into [sqrt(1/2), sqrt(2)) so the series argument stays small
    if (m > 1.41421356237309504880) {
        m *= 0.5;
        k += 1;
    }
    // ln(m) = 2 * atanh((m-1)/(m+1)), |s| <= 0.1716
    double s = (m - 1.0) / (m + 1.0);
    double s2 = s * s;
    double t = 0.0;
    // 13 odd terms cover full double precision (s2 < 0.0295)
    for (int n = 25; n >= 1; n -= 2) {
        t = t * s2 + 1.0 / static_cast<double>(n);
    }
    double kd = static_cast<double>(k);
    return kd * kLn2Hi + (kd * kLn2Lo + 2.0 * s * t);
}

double inverse_normal_cdf(double p) noexcept {
    if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
    if (!(p < 1.0)) return std::numeric_limits<double>::infinity();

    const double q = p - 0.5;
    if (q >= -0.425 && q <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num = (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                                 6.7265770927008700853e+4) * r +
                                4.5921953931549871457e+4) * r +
                               1.3731693765509461125e+4) * r +
                              1.9715909503065514427e+3) * r +
                             1.3314166789178437745e+2) * r +
                            3.3871328727963666080e+0);
        const double den = (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                                 3.9307895800092710610e+4) * r +
                                2.1213794301586595867e+4) * r +
                               5.3941960214247511077e+3) * r +
                              6.8718700749205790830e+2) * r +
                             4.2313330701600911252e+1) * r +
                            1.0);
        return q * num / den;
    }

    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-portable_log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        const double num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                                 2.41780725177450611770e-1) * r +
                                1.27045825245236838258e+0) * r +
                               3.64784832476320460504e+0) * r +
                              5.76949722146069140550e+0) * r +
                             4.63033784615654529590e+0) * r +
                            1.42343711074968357734e+0);
        const double den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                                 1.51986665636164571966e-2) * r +
                                1.48103976427480074590e-1) * r +
                               6.89767334985100004550e-1) * r +
                              1.67638483018380384940e+0) * r +
                             2.05319162663775882187e+0) * r +
                            1.0);
        val = num / den;
    } else {
        r -= 5.0;
        const double num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                                 1.24266094738807843860e-3) * r +
                                2.65321895265761230930e-2) * r +
                               2.96560571828504891230e-1) * r +
                              1.78482653991729133580e+0) * r +
                             5.46378491116411436990e+0) * r +
                            6.65790464350110377720e+0);
        const double den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                                 1.84631831751005468180e-5) * r +
                                7.86869131145613259100e-4) * r +
                               1.48753612908506148525e-2) * r +
                              1.36929880922735805310e-1) * r +
                             5.99832206555887937690e-1) * r +
                            1.0);
        val = num / den;
    }
    return (q < 0.0) ? -val : val;
}

}  // namespace lmadapt
