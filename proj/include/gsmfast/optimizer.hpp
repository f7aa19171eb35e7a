#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gsmfast/errors.hpp"
#include "gsmfast/gsm_priors.hpp"
#include "gsmfast/linalg.hpp"
#include "gsmfast/model.hpp"
#include "gsmfast/stft.hpp"
#include "gsmfast/tensor.hpp"

namespace gsmfast {

/// Per-bin statistics for one outer iteration.
struct EStepCache {
    Tensor3<double> z_tilde; // (f, t, m) |q_fm^H x_ft|^2
    Tensor3<double> y_tilde; // (f, t, m) floored model variances
    Tensor2<double> stat;    // (f, t) s = sum_m z/y at E-step time
    Tensor2<double> inv_phi; // (f, t) E[1/phi | x]
    Tensor3<double> z_hat;   // (f, t, m) inv_phi * z_tilde
    Tensor3<double> lambda;  // (n, f, t) source PSDs matching y_tilde
    double floor = kDefaultFloor;
};

struct LikelihoodTrace {
    double initial = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> values; // one per iteration, after normalization
};

namespace detail {

inline void check_shapes(const MixtureSpectrogram& X, const ModelParams& p) {
    const ModelDims d = p.dims();
    if (X.bins() != d.F || X.frames() != d.T || X.channels() != d.M)
        throw ShapeMismatch("spectrogram (F, T, M) = (" + std::to_string(X.bins()) + ", " +
                            std::to_string(X.frames()) + ", " + std::to_string(X.channels()) +
                            ") does not match the model (" + std::to_string(d.F) + ", " +
                            std::to_string(d.T) + ", " + std::to_string(d.M) + ")");
}

/// z_tilde(f, t, m) = |sum_j Q(f, m, j) x(f, t, j)|^2
inline void project(const MixtureSpectrogram& X, const Tensor3<cplx>& Q, Tensor3<double>& z) {
    const std::size_t F = X.bins(), T = X.frames(), M = X.channels();
    if (z.extent(0) != F || z.extent(1) != T || z.extent(2) != M)
        z = Tensor3<double>(F, T, M);
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t t = 0; t < T; ++t) {
            const auto x = X.data.row(f, t);
            auto out = z.row(f, t);
            for (std::size_t m = 0; m < M; ++m) {
                const auto q = Q.row(f, m);
                cplx s{};
                for (std::size_t j = 0; j < M; ++j)
                    s += q[j] * x[j];
                out[m] = std::norm(s);
            }
        }
}

inline void refresh_model(const ModelParams& p, EStepCache& c) {
    c.lambda = source_psd(p);
    ytilde_from_psd(c.lambda, p.G, c.floor, c.y_tilde);
}

} // namespace detail

/// Projects the mixture, evaluates the model and the posterior expectations.
inline EStepCache e_step(const MixtureSpectrogram& X, const ModelParams& p,
                         const GsmKernel& kernel, double floor = kDefaultFloor) {
    detail::check_shapes(X, p);
    const ModelDims d = p.dims();
    if (kernel.m_dims() != d.M)
        throw ShapeMismatch("e_step: kernel built for a different channel count");
    EStepCache c;
    c.floor = floor;
    detail::project(X, p.Q, c.z_tilde);
    detail::refresh_model(p, c);
    c.stat = Tensor2<double>(d.F, d.T);
    c.inv_phi = Tensor2<double>(d.F, d.T);
    c.z_hat = Tensor3<double>(d.F, d.T, d.M);
    for (std::size_t f = 0; f < d.F; ++f)
        for (std::size_t t = 0; t < d.T; ++t) {
            const auto z = c.z_tilde.row(f, t);
            const auto y = c.y_tilde.row(f, t);
            double s = 0.0;
            for (std::size_t m = 0; m < d.M; ++m)
                s += z[m] / y[m];
            const double ip = kernel.inv_phi(s);
            c.stat(f, t) = s;
            c.inv_phi(f, t) = ip;
            auto zh = c.z_hat.row(f, t);
            for (std::size_t m = 0; m < d.M; ++m)
                zh[m] = ip * z[m];
        }
    return c;
}

inline EStepCache e_step(const MixtureSpectrogram& X, const ModelParams& p,
                         const GsmVariant& variant, double floor = kDefaultFloor) {
    return e_step(X, p, GsmKernel(variant, p.dims().M), floor);
}

namespace detail {

/// A(n, f, t) = sum_m g_nm zhat_ftm / y_ftm^2 and B(n, f, t) = sum_m g_nm / y_ftm.
inline void weighted_ratios(const ModelParams& p, const EStepCache& c, Tensor3<double>& A,
                            Tensor3<double>& B) {
    const ModelDims d = p.dims();
    A = Tensor3<double>(d.N, d.F, d.T);
    B = Tensor3<double>(d.N, d.F, d.T);
    std::vector<double> r1(d.M), r2(d.M);
    for (std::size_t f = 0; f < d.F; ++f)
        for (std::size_t t = 0; t < d.T; ++t) {
            const auto y = c.y_tilde.row(f, t);
            const auto zh = c.z_hat.row(f, t);
            for (std::size_t m = 0; m < d.M; ++m) {
                r2[m] = 1.0 / y[m];
                r1[m] = zh[m] * r2[m] * r2[m];
            }
            for (std::size_t n = 0; n < d.N; ++n) {
                double a = 0.0, b = 0.0;
                for (std::size_t m = 0; m < d.M; ++m) {
                    a += p.G(n, m) * r1[m];
                    b += p.G(n, m) * r2[m];
                }
                A(n, f, t) = a;
                B(n, f, t) = b;
            }
        }
}

inline double mu_ratio(double num, double den) {
    if (!(den > 0.0))
        return 1.0;
    return std::sqrt(num / den);
}

} // namespace detail

/// Multiplicative update of W; refreshes the model part of the cache.
inline void update_w(ModelParams& p, EStepCache& c) {
    const ModelDims d = p.dims();
    Tensor3<double> A, B;
    detail::weighted_ratios(p, c, A, B);
    for (std::size_t n = 0; n < d.N; ++n)
        for (std::size_t k = 0; k < d.K; ++k) {
            const auto h = p.H.row(n, k);
            for (std::size_t f = 0; f < d.F; ++f) {
                const auto a = A.row(n, f);
                const auto b = B.row(n, f);
                double num = 0.0, den = 0.0;
                for (std::size_t t = 0; t < d.T; ++t) {
                    num += h[t] * a[t];
                    den += h[t] * b[t];
                }
                p.W(n, k, f) *= detail::mu_ratio(num, den);
            }
        }
    detail::refresh_model(p, c);
}

inline void update_h(ModelParams& p, EStepCache& c) {
    const ModelDims d = p.dims();
    Tensor3<double> A, B;
    detail::weighted_ratios(p, c, A, B);
    std::vector<double> num(d.T), den(d.T);
    for (std::size_t n = 0; n < d.N; ++n)
        for (std::size_t k = 0; k < d.K; ++k) {
            std::fill(num.begin(), num.end(), 0.0);
            std::fill(den.begin(), den.end(), 0.0);
            for (std::size_t f = 0; f < d.F; ++f) {
                const double w = p.W(n, k, f);
                const auto a = A.row(n, f);
                const auto b = B.row(n, f);
                for (std::size_t t = 0; t < d.T; ++t) {
                    num[t] += w * a[t];
                    den[t] += w * b[t];
                }
            }
            auto h = p.H.row(n, k);
            for (std::size_t t = 0; t < d.T; ++t)
                h[t] *= detail::mu_ratio(num[t], den[t]);
        }
    detail::refresh_model(p, c);
}

inline void update_g(ModelParams& p, EStepCache& c) {
    const ModelDims d = p.dims();
    Tensor2<double> num(d.N, d.M), den(d.N, d.M);
    std::vector<double> r1(d.M), r2(d.M);
    for (std::size_t f = 0; f < d.F; ++f)
        for (std::size_t t = 0; t < d.T; ++t) {
            const auto y = c.y_tilde.row(f, t);
            const auto zh = c.z_hat.row(f, t);
            for (std::size_t m = 0; m < d.M; ++m) {
                r2[m] = 1.0 / y[m];
                r1[m] = zh[m] * r2[m] * r2[m];
            }
            for (std::size_t n = 0; n < d.N; ++n) {
                const double l = c.lambda(n, f, t);
                auto nu = num.row(n);
                auto de = den.row(n);
                for (std::size_t m = 0; m < d.M; ++m) {
                    nu[m] += l * r1[m];
                    de[m] += l * r2[m];
                }
            }
        }
    for (std::size_t n = 0; n < d.N; ++n)
        for (std::size_t m = 0; m < d.M; ++m)
            p.G(n, m) *= detail::mu_ratio(num(n, m), den(n, m));
    detail::refresh_model(p, c);
}

struct SingularBin {
    std::size_t f;
    std::size_t m;
    double condition_estimate;
};

struct UpdateQStats {
    /// max over (f, m) of |q_fm^H V_fm q_fm - 1| after the update
    double max_ip_residual = 0.0;
    std::vector<SingularBin> singular;
};

/// V(f, m) = (1/T) sum_t inv_phi_ft x_ft x_ft^H / y_ftm.
inline linalg::SmallComplexMatrix weighted_covariance(const MixtureSpectrogram& X,
                                                      const EStepCache& c, std::size_t f,
                                                      std::size_t m) {
    const std::size_t T = X.frames(), M = X.channels();
    linalg::SmallComplexMatrix V(M);
    for (std::size_t t = 0; t < T; ++t) {
        const double w = c.inv_phi(f, t) / c.y_tilde(f, t, m);
        const auto x = X.data.row(f, t);
        for (std::size_t i = 0; i < M; ++i) {
            const cplx wx = w * x[i];
            for (std::size_t j = i; j < M; ++j)
                V(i, j) += wx * std::conj(x[j]);
        }
    }
    const double inv_t = 1.0 / static_cast<double>(T);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = i; j < M; ++j) {
            V(i, j) *= inv_t;
            V(j, i) = std::conj(V(i, j));
        }
    for (std::size_t i = 0; i < M; ++i)
        V(i, i) = V(i, i).real();
    return V;
}

/// Iterative projection, rows m = 0..M-1 in order for every frequency. A row
/// whose system is singular keeps its previous value and is reported.
inline UpdateQStats update_q(ModelParams& p, const MixtureSpectrogram& X, EStepCache& c) {
    detail::check_shapes(X, p);
    const ModelDims d = p.dims();
    UpdateQStats stats;
    for (std::size_t f = 0; f < d.F; ++f) {
        for (std::size_t m = 0; m < d.M; ++m) {
            const auto V = weighted_covariance(X, c, f, m);
            auto Qf = linalg::slice(p.Q, f);
            linalg::SmallComplexVector q;
            try {
                q = linalg::solve_column(Qf * V, m);
            } catch (const SingularMatrix& e) {
                stats.singular.push_back({f, m, e.condition_estimate()});
                continue;
            }
            const double quad = linalg::hermitian_form(q, V);
            if (!(quad > 0.0) || !std::isfinite(quad)) {
                stats.singular.push_back({f, m, std::numeric_limits<double>::infinity()});
                continue;
            }
            const double scale = 1.0 / std::sqrt(quad);
            for (std::size_t j = 0; j < d.M; ++j)
                q[j] *= scale;
            for (std::size_t j = 0; j < d.M; ++j)
                p.Q(f, m, j) = std::conj(q[j]);
            const double residual = std::abs(linalg::hermitian_form(q, V) - 1.0);
            stats.max_ip_residual = std::max(stats.max_ip_residual, residual);
        }
    }
    detail::project(X, p.Q, c.z_tilde);
    return stats;
}

/// T sum_f log|Q_f Q_f^H|.
inline double log_det_term(const ModelParams& p) {
    const ModelDims d = p.dims();
    double s = 0.0;
    for (std::size_t f = 0; f < d.F; ++f)
        s += linalg::log_abs_det_gram(linalg::slice(p.Q, f));
    return static_cast<double>(d.T) * s;
}

/// Marginal log-likelihood from a cache whose z_tilde / y_tilde match p.
inline double log_likelihood_from(const EStepCache& c, const ModelParams& p,
                                  const GsmKernel& kernel) {
    const ModelDims d = p.dims();
    double total = 0.0;
    for (std::size_t f = 0; f < d.F; ++f)
        for (std::size_t t = 0; t < d.T; ++t) {
            const auto z = c.z_tilde.row(f, t);
            const auto y = c.y_tilde.row(f, t);
            double s = 0.0, ld = 0.0;
            for (std::size_t m = 0; m < d.M; ++m) {
                s += z[m] / y[m];
                ld += std::log(y[m]);
            }
            total += kernel.log_density(s, ld);
        }
    return total + log_det_term(p);
}

/// sum_ft log p(z_ft) + T sum_f log|Q_f Q_f^H| with fully normalized densities.
inline double log_likelihood(const MixtureSpectrogram& X, const ModelParams& p,
                             const GsmVariant& variant, double floor = kDefaultFloor) {
    detail::check_shapes(X, p);
    const GsmKernel kernel(variant, p.dims().M);
    EStepCache c;
    c.floor = floor;
    detail::project(X, p.Q, c.z_tilde);
    detail::refresh_model(p, c);
    return log_likelihood_from(c, p, kernel);
}

struct MonotonicityViolation {
    std::size_t iteration;
    double previous;
    double current;
};

struct RunOptions {
    /// Called after every iteration with (1-based iteration, log-likelihood).
    std::function<void(std::size_t, double)> progress;
    /// Receives monotonicity diagnostics; defaults to stderr.
    std::function<void(const std::string&)> warn;
    std::size_t checkpoint_every = 0;
    std::filesystem::path checkpoint_path;
    std::optional<ModelParams> initial_params;
    double monotone_slack = 1e-8;
    /// Evaluate the log-likelihood of the starting point as well.
    bool record_initial = true;
};

struct RunResult {
    ModelParams params;
    LikelihoodTrace trace;
    std::vector<MonotonicityViolation> violations;
    std::vector<SingularBin> singular;
    double max_ip_residual = 0.0;
};

/// MU-VEM: E-step, W, H, G (skipped for rank1), Q, normalize, log-likelihood.
inline RunResult run(const MixtureSpectrogram& X, const SeparationConfig& cfg,
                     const RunOptions& opts = {}) {
    const std::size_t M = X.channels();
    cfg.validate(M);
    const ModelDims dims{cfg.sources_for(M), cfg.n_bases, X.bins(), X.frames(), M};
    dims.validate();
    for (const cplx& v : X.data)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw InvalidArgument("run: spectrogram contains non-finite entries");

    RunResult r;
    if (opts.initial_params) {
        r.params = *opts.initial_params;
        r.params.validate();
        if (!(r.params.dims() == dims))
            throw ShapeMismatch("run: initial parameters do not match the data");
    } else {
        r.params = init_params(dims, cfg);
    }
    const GsmKernel kernel(cfg.variant, M);
    auto warn = opts.warn ? opts.warn
                          : [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };

    EStepCache cache = e_step(X, r.params, kernel, cfg.floor);
    double previous = std::numeric_limits<double>::quiet_NaN();
    if (opts.record_initial && cfg.iterations > 0) {
        previous = log_likelihood_from(cache, r.params, kernel);
        r.trace.initial = previous;
    }
    r.trace.values.reserve(cfg.iterations);
    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        update_w(r.params, cache);
        update_h(r.params, cache);
        if (!cfg.rank1)
            update_g(r.params, cache);
        const UpdateQStats qs = update_q(r.params, X, cache);
        r.max_ip_residual = std::max(r.max_ip_residual, qs.max_ip_residual);
        r.singular.insert(r.singular.end(), qs.singular.begin(), qs.singular.end());
        normalize_in_place(r.params);

        cache = e_step(X, r.params, kernel, cfg.floor);
        const double ll = log_likelihood_from(cache, r.params, kernel);
        r.trace.values.push_back(ll);
        if (std::isfinite(previous) && ll < previous - opts.monotone_slack * std::abs(previous)) {
            r.violations.push_back({it, previous, ll});
            warn("log-likelihood decreased at iteration " + std::to_string(it) + " (" +
                 std::to_string(previous) + " -> " + std::to_string(ll) + ")");
        }
        previous = ll;
        if (opts.progress)
            opts.progress(it, ll);
        if (opts.checkpoint_every > 0 && it % opts.checkpoint_every == 0 &&
            !opts.checkpoint_path.empty())
            save_checkpoint(opts.checkpoint_path, r.params);
    }
    return r;
}

} // namespace gsmfast
