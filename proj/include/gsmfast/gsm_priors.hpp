#pragma once

// Gaussian scale mixture priors on the impulse variable phi.
//
// A projected bin x (M complex entries, covariance phi * Diag(y)) is
// conditionally Gaussian given phi. Everything here depends on the bin only
// through s = sum_m |x_m|^2 / y_m and log det Diag(y).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <variant>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>

#include "gsmfast/bessel.hpp"
#include "gsmfast/errors.hpp"

namespace gsmfast {

struct Gaussian {
    bool operator==(const Gaussian&) const = default;
};

struct StudentT {
    double nu;

    bool operator==(const StudentT&) const = default;
};

struct LeptokurticGG {
    double beta;

    bool operator==(const LeptokurticGG&) const = default;
};

/// Generalized hyperbolic: GIG(gamma, rho, eta) prior on phi.
struct GH {
    double gamma;
    double rho;
    double eta;

    bool operator==(const GH&) const = default;
};

/// Normal-inverse Gaussian, i.e. GH with gamma = -1/2.
struct NIG {
    double rho;
    double eta;

    bool operator==(const NIG&) const = default;
};

using GsmVariant = std::variant<Gaussian, StudentT, LeptokurticGG, GH, NIG>;

inline void validate(const GsmVariant& v) {
    auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, StudentT>) {
                if (!positive(p.nu))
                    throw InvalidArgument("StudentT: nu must be positive");
            } else if constexpr (std::is_same_v<T, LeptokurticGG>) {
                if (!positive(p.beta) || p.beta > 2.0)
                    throw InvalidArgument("LeptokurticGG: beta must lie in (0, 2]");
            } else if constexpr (std::is_same_v<T, GH>) {
                if (!std::isfinite(p.gamma) || !positive(p.rho) || !positive(p.eta))
                    throw InvalidArgument("GH: need finite gamma, rho > 0, eta > 0");
            } else if constexpr (std::is_same_v<T, NIG>) {
                if (!positive(p.rho) || !positive(p.eta))
                    throw InvalidArgument("NIG: need rho > 0, eta > 0");
            }
        },
        v);
}

inline GsmVariant make_gaussian() { return Gaussian{}; }

inline GsmVariant make_student_t(double nu) {
    GsmVariant v = StudentT{nu};
    validate(v);
    return v;
}

inline GsmVariant make_leptokurtic_gg(double beta) {
    GsmVariant v = LeptokurticGG{beta};
    validate(v);
    return v;
}

inline GsmVariant make_gh(double gamma, double rho, double eta) {
    GsmVariant v = GH{gamma, rho, eta};
    validate(v);
    return v;
}

inline GsmVariant make_nig(double rho, double eta) {
    GsmVariant v = NIG{rho, eta};
    validate(v);
    return v;
}

/// GIG in the (a, b) form phi^{gamma-1} exp(-(a phi + b / phi) / 2):
/// rho = sqrt(a b), eta = sqrt(b / a).
inline GH gh_from_ab(double gamma, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0))
        throw InvalidArgument("gh_from_ab: a and b must be positive");
    return GH{gamma, std::sqrt(a * b), std::sqrt(b / a)};
}

/// Inverse of gh_from_ab: returns {a, b} = {rho / eta, rho * eta}.
inline std::pair<double, double> gh_to_ab(const GH& gh) {
    return {gh.rho / gh.eta, gh.rho * gh.eta};
}

inline GH as_gh(const NIG& nig) { return GH{-0.5, nig.rho, nig.eta}; }

inline std::string variant_name(const GsmVariant& v) {
    static constexpr const char* names[] = {"gaussian", "student_t", "gg", "gh", "nig"};
    return names[v.index()];
}

/// Bin-level sufficient statistic s = sum_m ztilde_m / ytilde_m.
struct BinStatistic {
    double s = 0.0;
    std::size_t m_dims = 1;

    static BinStatistic from(std::span<const double> ztilde,
                             std::span<const double> ytilde) {
        if (ztilde.size() != ytilde.size() || ztilde.empty())
            throw ShapeMismatch("BinStatistic: ztilde and ytilde sizes differ");
        double s = 0.0;
        for (std::size_t m = 0; m < ztilde.size(); ++m) {
            if (!(ytilde[m] > 0.0))
                throw InvalidArgument("BinStatistic: ytilde must be positive");
            s += ztilde[m] / ytilde[m];
        }
        return BinStatistic{s, ztilde.size()};
    }
};

inline constexpr double kGgStatFloor = 1e-12;

/// Per-variant evaluator with the constants that depend only on (variant, M)
/// hoisted out. Used by the optimizer on every time-frequency bin.
class GsmKernel {
  public:
    GsmKernel(const GsmVariant& variant, std::size_t m_dims)
        : variant_(variant), m_(static_cast<double>(m_dims)) {
        validate(variant_);
        if (m_dims == 0)
            throw InvalidArgument("GsmKernel: M must be positive");
        if (const auto* nig = std::get_if<NIG>(&variant_)) {
            gh_ = as_gh(*nig);
            is_gh_ = true;
        } else if (const auto* gh = std::get_if<GH>(&variant_)) {
            gh_ = *gh;
            is_gh_ = true;
        }
        const double M = m_;
        if (const auto* t = std::get_if<StudentT>(&variant_)) {
            // log Gamma(M + nu/2) - log Gamma(nu/2) as a finite product
            double lg = 0.0;
            for (std::size_t j = 0; j < m_dims; ++j)
                lg += std::log(0.5 * t->nu + static_cast<double>(j));
            log_const_ = M * std::log(2.0) + lg - M * std::log(std::numbers::pi * t->nu);
        } else if (const auto* g = std::get_if<LeptokurticGG>(&variant_)) {
            log_const_ = std::log(0.5 * g->beta) + std::lgamma(M) -
                         M * std::log(std::numbers::pi) - std::lgamma(2.0 * M / g->beta);
        } else if (is_gh_) {
            log_const_ = -M * std::log(std::numbers::pi * gh_.eta) -
                         special::log_bessel_k(gh_.gamma, gh_.rho);
        } else {
            log_const_ = -M * std::log(std::numbers::pi);
        }
    }

    const GsmVariant& variant() const noexcept { return variant_; }
    std::size_t m_dims() const noexcept { return static_cast<std::size_t>(m_); }

    /// E[1/phi | x] for a bin with statistic s.
    double inv_phi(double s) const {
        switch (variant_.index()) {
        case 0:
            return 1.0;
        case 1: {
            const double h = 0.5 * std::get<StudentT>(variant_).nu;
            return (h + m_) / (h + s);
        }
        case 2: {
            const double beta = std::get<LeptokurticGG>(variant_).beta;
            if (beta == 2.0)
                return 1.0;
            return 0.5 * beta * std::pow(std::max(s, kGgStatFloor), 0.5 * (beta - 2.0));
        }
        default:
            return gh_inv_phi(s);
        }
    }

    /// log p(x) for a bin with statistic s and log_det_y = sum_m log ytilde_m.
    double log_density(double s, double log_det_y) const {
        switch (variant_.index()) {
        case 0:
            return log_const_ - log_det_y - s;
        case 1: {
            const double nu = std::get<StudentT>(variant_).nu;
            return log_const_ - log_det_y - (m_ + 0.5 * nu) * std::log1p(2.0 * s / nu);
        }
        case 2: {
            const double beta = std::get<LeptokurticGG>(variant_).beta;
            return log_const_ - log_det_y - std::pow(s, 0.5 * beta);
        }
        default: {
            const double u = 1.0 + 2.0 * s / (gh_.rho * gh_.eta);
            const double lambda = gh_.gamma - m_;
            return log_const_ - log_det_y + 0.5 * lambda * std::log(u) +
                   special::log_bessel_k(lambda, gh_.rho * std::sqrt(u));
        }
        }
    }

  private:
    double gh_inv_phi(double s) const {
        // Posterior of phi is GIG(lambda, a, b + 2s) with lambda = gamma - M.
        const double u = 1.0 + 2.0 * s / (gh_.rho * gh_.eta);
        const double root_u = std::sqrt(u);
        const double omega = gh_.rho * root_u;
        const double lambda = gh_.gamma - m_;
        const double scale = 1.0 / (gh_.eta * root_u); // sqrt(a / b')
        if (lambda > 0.0)
            return scale / special::bessel_k_ratio(lambda - 1.0, omega);
        return -2.0 * lambda / (gh_.rho * gh_.eta * u) +
               scale * special::bessel_k_ratio(lambda, omega);
    }

    GsmVariant variant_;
    double m_;
    GH gh_{};
    bool is_gh_ = false;
    double log_const_ = 0.0;
};

inline double posterior_inv_phi(const BinStatistic& stat, const GsmVariant& variant) {
    if (!std::isfinite(stat.s) || stat.s < 0.0)
        throw InvalidArgument("posterior_inv_phi: s must be finite and nonnegative");
    return GsmKernel(variant, stat.m_dims).inv_phi(stat.s);
}

/// Fully normalized log p(x) given |x_m|^2 = ztilde_m and variances ytilde_m.
inline double log_marginal_density(std::span<const double> ztilde,
                                   std::span<const double> ytilde,
                                   const GsmVariant& variant) {
    const BinStatistic stat = BinStatistic::from(ztilde, ytilde);
    double log_det = 0.0;
    for (double y : ytilde)
        log_det += std::log(y);
    return GsmKernel(variant, stat.m_dims).log_density(stat.s, log_det);
}

/// Same density evaluated at a complex vector x.
inline double log_marginal_density(std::span<const std::complex<double>> x,
                                   std::span<const double> ytilde,
                                   const GsmVariant& variant) {
    if (x.size() != ytilde.size())
        throw ShapeMismatch("log_marginal_density: x and ytilde sizes differ");
    std::vector<double> z(x.size());
    for (std::size_t m = 0; m < x.size(); ++m)
        z[m] = std::norm(x[m]);
    return log_marginal_density(std::span<const double>(z), ytilde, variant);
}

/// Normalized log density of the impulse prior p(phi).
inline double prior_log_pdf(double phi, const GsmVariant& variant) {
    if (!(phi > 0.0) || !std::isfinite(phi))
        throw InvalidArgument("prior_log_pdf: phi must be positive");
    validate(variant);
    if (const auto* t = std::get_if<StudentT>(&variant)) {
        const double a = 0.5 * t->nu; // IG(nu/2, nu/2)
        return a * std::log(a) - std::lgamma(a) - (a + 1.0) * std::log(phi) - a / phi;
    }
    GH gh{};
    if (const auto* p = std::get_if<GH>(&variant))
        gh = *p;
    else if (const auto* q = std::get_if<NIG>(&variant))
        gh = as_gh(*q);
    else
        throw UnsupportedVariant("prior_log_pdf: " + variant_name(variant) +
                                 " has no closed-form impulse prior");
    return -std::log(2.0) - gh.gamma * std::log(gh.eta) -
           special::log_bessel_k(gh.gamma, gh.rho) + (gh.gamma - 1.0) * std::log(phi) -
           0.5 * gh.rho * (phi / gh.eta + gh.eta / phi);
}

namespace detail {

/// log p(e^u) up to a phi-free constant, arranged so that sharply peaked
/// priors (large nu) do not lose digits to cancellation.
inline double prior_log_kernel_u(double u, const GsmVariant& variant) {
    if (const auto* t = std::get_if<StudentT>(&variant)) {
        const double a = 0.5 * t->nu;
        return -u - a * (u + std::expm1(-u));
    }
    const GH gh = std::holds_alternative<NIG>(variant) ? as_gh(std::get<NIG>(variant))
                                                        : std::get<GH>(variant);
    return (gh.gamma - 1.0) * u - 0.5 * gh.rho * (std::exp(u) / gh.eta + gh.eta * std::exp(-u));
}

} // namespace detail

/// E[1/phi | x] by adaptive quadrature of the compound integral, in u = log phi.
inline double quadrature_posterior_inv_phi(std::span<const double> ztilde,
                                           std::span<const double> ytilde,
                                           const GsmVariant& variant) {
    const BinStatistic stat = BinStatistic::from(ztilde, ytilde);
    const double M = static_cast<double>(stat.m_dims);
    const double s = stat.s;
    prior_log_pdf(1.0, variant); // rejects Gaussian / GG
    // log of p(x | phi) p(phi) phi up to a phi-free constant
    auto log_f = [&](double u) {
        return -M * u - s * std::exp(-u) + detail::prior_log_kernel_u(u, variant) + u;
    };

    const auto peak = boost::math::tools::brent_find_minima(
        [&](double u) { return -log_f(u); }, -150.0, 150.0, 60);
    const double u_star = peak.first;
    const double l_star = log_f(u_star);

    auto drop = [&](double u) {
        return std::min(l_star - log_f(u), (l_star - u_star) - (log_f(u) - u));
    };
    auto reach = [&](double dir, double level) {
        double d = 1e-9;
        while (d < 400.0 && drop(u_star + dir * d) < level)
            d *= 2.0;
        return d;
    };
    // integrate in v = (u - u_star) / width so the peak has unit scale
    const double width = std::min(reach(-1.0, 0.5), reach(1.0, 0.5));
    const double lo = -reach(-1.0, 60.0) / width;
    const double hi = reach(1.0, 60.0) / width;

    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    auto den_f = [&](double v) { return std::exp(log_f(u_star + width * v) - l_star); };
    auto num_f = [&](double v) {
        const double u = u_star + width * v;
        return std::exp(log_f(u) - l_star - width * v);
    };
    double err[4] = {};
    const double den = GK::integrate(den_f, lo, 0.0, 15, 1e-12, &err[0]) +
                       GK::integrate(den_f, 0.0, hi, 15, 1e-12, &err[1]);
    const double num = GK::integrate(num_f, lo, 0.0, 15, 1e-12, &err[2]) +
                       GK::integrate(num_f, 0.0, hi, 15, 1e-12, &err[3]);
    const double rel = (err[0] + err[1]) / den + (err[2] + err[3]) / num;
    if (!std::isfinite(rel) || rel > 1e-8)
        throw QuadratureError("quadrature_posterior_inv_phi: error target not met", rel);
    return num / den * std::exp(-u_star);
}

} // namespace gsmfast
