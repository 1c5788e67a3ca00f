#pragma once

#include <cmath>
#include <string>

#include "townsend/errors.hpp"

namespace townsend {

/// Townsend ionization coefficients and carrier mobilities.
struct ModelParams {
    double a = 1.0;    ///< ionization amplitude
    double b = 1.0;    ///< ionization activation field
    double k_i = 1.0;  ///< ion mobility
    double k_e = 1.0;  ///< electron mobility (and diffusivity)

    void validate() const {
        auto finite = [](double v) { return std::isfinite(v); };
        if (!finite(a) || !finite(b) || !finite(k_i) || !finite(k_e))
            throw DomainError("model parameters must be finite");
        if (a < 0.0) throw DomainError("ionization amplitude a must be >= 0");
        if (b < 0.0) throw DomainError("activation field b must be >= 0");
        if (k_i <= 0.0) throw DomainError("ion mobility k_i must be > 0");
        if (k_e <= 0.0) throw DomainError("electron mobility k_e must be > 0");
    }
};

namespace detail {
inline void check_field(double s) {
    if (!(s >= 0.0)) throw DomainError("field magnitude must be >= 0, got " + std::to_string(s));
}
}  // namespace detail

/// Ionization rate h(s) = a s exp(-b/s), continuously extended by h(0) = 0.
inline double townsend_h(double s, const ModelParams& p) {
    detail::check_field(s);
    if (s == 0.0) return 0.0;
    return p.a * s * std::exp(-p.b / s);
}

/// h'(s) = a exp(-b/s) (1 + b/s).
inline double townsend_h_prime(double s, const ModelParams& p) {
    detail::check_field(s);
    if (s == 0.0) return p.b > 0.0 ? 0.0 : p.a;
    return p.a * std::exp(-p.b / s) * (1.0 + p.b / s);
}

/// Net growth potential g(s) = h(s) - s^2/4.
inline double g(double s, const ModelParams& p) { return townsend_h(s, p) - 0.25 * s * s; }

inline double g_prime(double s, const ModelParams& p) { return townsend_h_prime(s, p) - 0.5 * s; }

/// The b -> 0 comparison function a s - s^2/4. Bounds g from above.
inline double g_tilde(double s, const ModelParams& p) {
    detail::check_field(s);
    return p.a * s - 0.25 * s * s;
}

inline double g_tilde_prime(double s, const ModelParams& p) {
    detail::check_field(s);
    return p.a - 0.5 * s;
}

}  // namespace townsend
