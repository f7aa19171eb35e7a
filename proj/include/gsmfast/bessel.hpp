#pragma once

// Modified Bessel function of the second kind, evaluated in the log domain.
//
// Small orders |mu| <= 1/2 come from Temme's series (x <= 2) or the
// Steed/Temme continued fraction CF2 (x > 2); both yield exp(x) K_mu and
// exp(x) K_{mu+1}. Larger orders follow by forward recurrence
// K_{v+1} = K_{v-1} + (2v/x) K_v, which is stable for K, with a running
// log-scale so that K_50(1e-6) ~ 1e370 does not overflow.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "gsmfast/errors.hpp"

namespace gsmfast::special {

namespace detail {

// Taylor coefficients of 1/Gamma(z) = sum_{k>=1} c_k z^k, c_1 .. c_26.
inline constexpr std::array<double, 26> kRecipGamma = {
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.042002635034095235529,
    0.1665386113822914895,
    -0.042197734555544336748,
    -0.0096219715278769735621,
    0.0072189432466630995424,
    -0.0011651675918590651121,
    -0.00021524167411495097282,
    0.00012805028238811618615,
    -0.000020134854780788238656,
    -1.2504934821426706573e-6,
    1.1330272319816958824e-6,
    -2.0563384169776071035e-7,
    6.1160951044814158179e-9,
    5.0020076444692229301e-9,
    -1.1812745704870201446e-9,
    1.0434267116911005105e-10,
    7.782263439905071254e-12,
    -3.6968056186422057082e-12,
    5.100370287454475979e-13,
    -2.0583260535665067832e-14,
    -5.3481225394230179824e-15,
    1.2267786282382607902e-15,
    -1.1812593016974587695e-16,
};

/// Temme's auxiliary gamma functions for |mu| <= 1/2.
struct TemmeGamma {
    double g1;     // (1/G(1-mu) - 1/G(1+mu)) / (2 mu)
    double g2;     // (1/G(1-mu) + 1/G(1+mu)) / 2
    double rg_1p;  // 1/G(1+mu)
    double rg_1m;  // 1/G(1-mu)
};

inline TemmeGamma temme_gamma(double mu) {
    // 1/G(1+mu) = sum_k c_k mu^(k-1); split into even and odd powers.
    const double mu2 = mu * mu;
    double even = 0.0; // c_1 + c_3 mu^2 + c_5 mu^4 + ...
    double odd = 0.0;  // c_2 + c_4 mu^2 + ...
    for (std::size_t j = kRecipGamma.size() / 2; j-- > 0;) {
        even = even * mu2 + kRecipGamma[2 * j];
        odd = odd * mu2 + kRecipGamma[2 * j + 1];
    }
    TemmeGamma t{};
    t.g1 = -odd;
    t.g2 = even;
    t.rg_1p = even + mu * odd;
    t.rg_1m = even - mu * odd;
    return t;
}

struct ScaledPair {
    double k_mu;  // exp(x) K_mu(x)
    double k_mu1; // exp(x) K_{mu+1}(x)
};

inline ScaledPair temme_series(double mu, double x) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    const double half_x = 0.5 * x;
    const double d = -std::log(half_x);
    const double e = mu * d;
    const double pimu = std::numbers::pi * mu;
    const double fact = std::abs(pimu) < eps ? 1.0 : pimu / std::sin(pimu);
    const double fact2 = std::abs(e) < eps ? 1.0 : std::sinh(e) / e;
    const TemmeGamma tg = temme_gamma(mu);

    double ff = fact * (tg.g1 * std::cosh(e) + tg.g2 * fact2 * d);
    double sum = ff;
    const double ee = std::exp(e);
    double p = 0.5 * ee / tg.rg_1p;
    double q = 0.5 / (ee * tg.rg_1m);
    double c = 1.0;
    const double dd = half_x * half_x;
    double sum1 = p;
    for (int i = 1; i < 500; ++i) {
        const double fi = i;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= dd / fi;
        p /= (fi - mu);
        q /= (fi + mu);
        const double del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if (std::abs(del) < std::abs(sum) * eps)
            break;
    }
    const double ex = std::exp(x);
    return {sum * ex, sum1 * (2.0 / x) * ex};
}

inline ScaledPair steed_cf2(double mu, double x) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25 - mu * mu;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    for (int i = 1; i < 100000; ++i) {
        a -= 2.0 * i;
        c = -a * c / (i + 1.0);
        const double qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        const double dels = q * delh;
        s += dels;
        if (std::abs(dels / s) < eps)
            break;
    }
    h = a1 * h;
    const double k_mu = std::sqrt(std::numbers::pi / (2.0 * x)) / s;
    return {k_mu, k_mu * (mu + x + 0.5 - h) / x};
}

inline ScaledPair small_order_pair(double mu, double x) {
    return x <= 2.0 ? temme_series(mu, x) : steed_cf2(mu, x);
}

/// True when 2*order is an odd integer.
inline bool is_half_integer(double order) {
    const double twice = 2.0 * order;
    return twice == std::round(twice) && std::fmod(std::abs(twice), 2.0) == 1.0;
}

inline void require_positive(double x, const char* op) {
    if (!(x > 0.0) || !std::isfinite(x))
        throw InvalidArgument(std::string(op) + ": argument must be positive and finite");
}

} // namespace detail

/// log K_order(x) via the generic Temme/CF2 + recurrence path.
inline double log_bessel_k_generic(double order, double x) {
    detail::require_positive(x, "log_bessel_k");
    const double nu = std::abs(order);
    const int n = static_cast<int>(std::floor(nu + 0.5));
    const double mu = nu - n; // in [-1/2, 1/2)
    auto [k_lo, k_hi] = detail::small_order_pair(mu, x);
    double log_scale = 0.0;
    for (int i = 1; i <= n; ++i) {
        const double next = k_lo + (2.0 * (mu + i) / x) * k_hi;
        k_lo = k_hi;
        k_hi = next;
        if (k_hi > 1e250) {
            log_scale += std::log(k_hi);
            k_lo /= k_hi;
            k_hi = 1.0;
        }
    }
    return std::log(k_lo) + log_scale - x;
}

/// log K_{n+1/2}(x) from the closed form K_{1/2} = sqrt(pi/2x) e^{-x} and
/// the three-term recurrence. Requires a half-integer order.
inline double log_bessel_k_half_integer(double order, double x) {
    detail::require_positive(x, "log_bessel_k_half_integer");
    if (!detail::is_half_integer(order))
        throw InvalidArgument("log_bessel_k_half_integer: order must be n + 1/2");
    const int n = static_cast<int>(std::abs(order) - 0.5 + 0.25);
    // scaled so that K_{1/2} -> 1
    double k_lo = 1.0;
    double k_hi = 1.0 + 1.0 / x;
    double log_scale = 0.0;
    for (int i = 1; i <= n; ++i) {
        const double next = k_lo + (2.0 * (i + 0.5) / x) * k_hi;
        k_lo = k_hi;
        k_hi = next;
        if (k_hi > 1e250) {
            log_scale += std::log(k_hi);
            k_lo /= k_hi;
            k_hi = 1.0;
        }
    }
    return 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x + std::log(k_lo) +
           log_scale;
}

/// log K_order(x) for real order and x > 0; K_{-v} = K_v.
inline double log_bessel_k(double order, double x) {
    if (detail::is_half_integer(order))
        return log_bessel_k_half_integer(order, x);
    return log_bessel_k_generic(order, x);
}

namespace detail {

/// K_{v+1}/K_v for v >= 0 via r_v = 2v/x + 1/r_{v-1}, seeded at the small order.
inline double forward_ratio(double nu, double x) {
    const int n = static_cast<int>(std::floor(nu + 0.5));
    const double mu = nu - n;
    const auto [k_mu, k_mu1] = small_order_pair(mu, x);
    double r = k_mu1 / k_mu;
    for (int i = 1; i <= n; ++i)
        r = 2.0 * (mu + i) / x + 1.0 / r;
    return r;
}

inline double forward_ratio_half_integer(double nu, double x) {
    const int n = static_cast<int>(nu - 0.5 + 0.25);
    double r = 1.0 + 1.0 / x; // K_{3/2}/K_{1/2}
    for (int i = 1; i <= n; ++i)
        r = 2.0 * (i + 0.5) / x + 1.0 / r;
    return r;
}

} // namespace detail

/// K_{order+1}(x) / K_order(x).
///
/// For order >= 0 (and order <= -1, through K_{-v} = K_v) the ratio comes from
/// the forward ratio recurrence, exact arithmetic on the half-integer path.
/// Orders in (-1, 0) mix two fractional parts and fall back to a log-domain
/// difference.
inline double bessel_k_ratio(double order, double x) {
    detail::require_positive(x, "bessel_k_ratio");
    const bool half = detail::is_half_integer(order);
    if (order >= 0.0)
        return half ? detail::forward_ratio_half_integer(order, x)
                    : detail::forward_ratio(order, x);
    if (order <= -1.0) {
        // K_{v+1}/K_v = K_{|v|-1}/K_{|v|} = 1 / ratio(|v|-1)
        const double lower = -order - 1.0;
        return 1.0 / (half ? detail::forward_ratio_half_integer(lower, x)
                           : detail::forward_ratio(lower, x));
    }
    if (half) // order == -1/2: K_{1/2}/K_{-1/2} = 1
        return 1.0;
    return std::exp(log_bessel_k_generic(order + 1.0, x) -
                    log_bessel_k_generic(order, x));
}

} // namespace gsmfast::special
