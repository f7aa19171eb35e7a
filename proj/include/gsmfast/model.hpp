#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "gsmfast/errors.hpp"
#include "gsmfast/gsm_priors.hpp"
#include "gsmfast/linalg.hpp"
#include "gsmfast/tensor.hpp"

namespace gsmfast {

struct ModelDims {
    std::size_t N = 0; // sources
    std::size_t K = 0; // NMF bases per source
    std::size_t F = 0; // frequency bins
    std::size_t T = 0; // frames
    std::size_t M = 0; // channels

    bool operator==(const ModelDims&) const = default;

    void validate() const {
        if (N == 0 || K == 0 || F == 0 || T == 0 || M == 0)
            throw InvalidArgument("ModelDims: all dimensions must be positive");
        if (M > linalg::kMaxDim)
            throw InvalidArgument("ModelDims: at most " + std::to_string(linalg::kMaxDim) +
                                  " channels are supported");
    }
};

/// Theta = {W, H, Q, G}.
struct ModelParams {
    Tensor3<double> W; // (n, k, f)
    Tensor3<double> H; // (n, k, t)
    Tensor3<cplx> Q;   // (f, m, m'), row m is q_fm^H
    Tensor2<double> G; // (n, m)

    ModelParams() = default;
    explicit ModelParams(const ModelDims& d)
        : W(d.N, d.K, d.F), H(d.N, d.K, d.T), Q(d.F, d.M, d.M), G(d.N, d.M) {}

    ModelDims dims() const noexcept {
        return {W.extent(0), W.extent(1), W.extent(2), H.extent(2), G.extent(1)};
    }

    /// Shape agreement and entrywise nonnegativity / finiteness.
    void validate() const {
        const ModelDims d = dims();
        d.validate();
        if (H.extent(0) != d.N || H.extent(1) != d.K)
            throw ShapeMismatch("ModelParams: H shape disagrees with W");
        if (Q.extent(0) != d.F || Q.extent(1) != d.M || Q.extent(2) != d.M)
            throw ShapeMismatch("ModelParams: Q shape disagrees with W/G");
        if (G.extent(0) != d.N)
            throw ShapeMismatch("ModelParams: G shape disagrees with W");
        auto check = [](const auto& t, const char* name) {
            for (double v : t)
                if (!std::isfinite(v) || v < 0.0)
                    throw InvalidArgument(std::string("ModelParams: ") + name +
                                          " must be finite and nonnegative");
        };
        check(W, "W");
        check(H, "H");
        check(G, "G");
        for (const cplx& q : Q)
            if (!std::isfinite(q.real()) || !std::isfinite(q.imag()))
                throw InvalidArgument("ModelParams: Q must be finite");
    }
};

inline constexpr double kDefaultFloor = 1e-10;

struct SeparationConfig {
    std::size_t n_sources = 0; // 0 means "same as the channel count"
    std::size_t n_bases = 8;
    std::size_t iterations = 300;
    bool rank1 = false;
    double eps_init = 1e-2;
    double floor = kDefaultFloor;
    std::uint64_t seed = 0;
    GsmVariant variant = NIG{15.0, 1.0};

    bool operator==(const SeparationConfig&) const = default;

    std::size_t sources_for(std::size_t channels) const {
        return n_sources == 0 ? channels : n_sources;
    }

    void validate(std::size_t channels) const {
        validate_variant();
        if (n_bases == 0)
            throw InvalidArgument("SeparationConfig: n_bases must be positive");
        if (!(floor > 0.0) || !std::isfinite(floor))
            throw InvalidArgument("SeparationConfig: floor must be positive");
        if (!(eps_init >= 0.0) || !std::isfinite(eps_init))
            throw InvalidArgument("SeparationConfig: eps_init must be nonnegative");
        if (rank1 && sources_for(channels) != channels)
            throw InvalidArgument("SeparationConfig: rank1 requires N = M");
    }

  private:
    void validate_variant() const { gsmfast::validate(variant); }
};

/// Seedable generator for initialization. mt19937_64 words are mapped to
/// (0, 1] doubles with 53 random bits; normals come from Box-Muller
/// (both outputs of each pair are used, cosine branch first). All of this is
/// fully specified, so a seed gives the same draws on every platform.
class InitRng {
  public:
    explicit InitRng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double theta = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Circulant direction weights: row n has 1 at columns m = n (mod N) and eps
/// elsewhere. With N > M, row n puts its 1 at column n mod M.
inline Tensor2<double> circulant_weights(std::size_t N, std::size_t M, double eps) {
    Tensor2<double> G(N, M);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) {
            const bool one = N <= M ? m % N == n : m == n % M;
            G(n, m) = one ? 1.0 : eps;
        }
    return G;
}

/// W, H = |N(0, 1)| draws (W in (n, k, f) order, then H); Q_f = I; circulant G.
inline ModelParams init_params(const ModelDims& dims, const SeparationConfig& cfg) {
    dims.validate();
    cfg.validate(dims.M);
    if (cfg.sources_for(dims.M) != dims.N)
        throw InvalidArgument("init_params: dims.N disagrees with cfg.n_sources");
    ModelParams p(dims);
    InitRng rng(cfg.seed);
    for (double& w : p.W)
        w = std::abs(rng.normal());
    for (double& h : p.H)
        h = std::abs(rng.normal());
    for (std::size_t f = 0; f < dims.F; ++f)
        for (std::size_t m = 0; m < dims.M; ++m)
            p.Q(f, m, m) = 1.0;
    p.G = circulant_weights(dims.N, dims.M, cfg.rank1 ? 0.0 : cfg.eps_init);
    return p;
}

/// Removes the scale ambiguities between Q, W, G and W, H (in that order).
inline void normalize_in_place(ModelParams& p) {
    const ModelDims d = p.dims();
    auto bad = [](double v) { return !(v > 0.0) || !std::isfinite(v); };
    for (std::size_t f = 0; f < d.F; ++f) {
        double tr = 0.0;
        for (std::size_t i = 0; i < d.M; ++i)
            for (std::size_t j = 0; j < d.M; ++j)
                tr += std::norm(p.Q(f, i, j));
        const double r = static_cast<double>(d.M) * tr;
        if (bad(r))
            throw DegenerateParameters("normalize: Tr(Q_f Q_f^H) vanished at f = " +
                                       std::to_string(f));
        const double qs = 1.0 / std::sqrt(r);
        for (std::size_t i = 0; i < d.M; ++i)
            for (std::size_t j = 0; j < d.M; ++j)
                p.Q(f, i, j) *= qs;
        for (std::size_t n = 0; n < d.N; ++n)
            for (std::size_t k = 0; k < d.K; ++k)
                p.W(n, k, f) /= r;
    }
    for (std::size_t n = 0; n < d.N; ++n) {
        double u = 0.0;
        for (std::size_t m = 0; m < d.M; ++m)
            u += p.G(n, m);
        if (bad(u))
            throw DegenerateParameters("normalize: direction weights of source " +
                                       std::to_string(n) + " vanished");
        for (std::size_t m = 0; m < d.M; ++m)
            p.G(n, m) /= u;
        for (std::size_t k = 0; k < d.K; ++k)
            for (double& w : p.W.row(n, k))
                w *= u;
    }
    for (std::size_t n = 0; n < d.N; ++n)
        for (std::size_t k = 0; k < d.K; ++k) {
            auto w = p.W.row(n, k);
            double v = 0.0;
            for (double x : w)
                v += x;
            if (bad(v))
                throw DegenerateParameters("normalize: basis (" + std::to_string(n) + ", " +
                                           std::to_string(k) + ") vanished");
            for (double& x : w)
                x /= v;
            for (double& h : p.H.row(n, k))
                h *= v;
        }
}

inline ModelParams normalize(ModelParams p) {
    normalize_in_place(p);
    return p;
}

/// lambda(n, f, t) = sum_k W(n, k, f) H(n, k, t).
inline Tensor3<double> source_psd(const ModelParams& p) {
    const ModelDims d = p.dims();
    Tensor3<double> lambda(d.N, d.F, d.T);
    for (std::size_t n = 0; n < d.N; ++n)
        for (std::size_t k = 0; k < d.K; ++k) {
            const auto h = p.H.row(n, k);
            for (std::size_t f = 0; f < d.F; ++f) {
                const double w = p.W(n, k, f);
                auto out = lambda.row(n, f);
                for (std::size_t t = 0; t < d.T; ++t)
                    out[t] += w * h[t];
            }
        }
    return lambda;
}

/// ytilde(f, t, m) = max(floor, sum_n lambda(n, f, t) G(n, m)) from a precomputed lambda.
inline void ytilde_from_psd(const Tensor3<double>& lambda, const Tensor2<double>& G,
                            double floor, Tensor3<double>& y) {
    const std::size_t N = lambda.extent(0), F = lambda.extent(1), T = lambda.extent(2);
    const std::size_t M = G.extent(1);
    if (y.extent(0) != F || y.extent(1) != T || y.extent(2) != M)
        y = Tensor3<double>(F, T, M);
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t t = 0; t < T; ++t) {
            auto out = y.row(f, t);
            for (std::size_t m = 0; m < M; ++m) {
                double s = 0.0;
                for (std::size_t n = 0; n < N; ++n)
                    s += lambda(n, f, t) * G(n, m);
                out[m] = std::max(s, floor);
            }
        }
}

inline Tensor3<double> compute_ytilde(const ModelParams& p, double floor = kDefaultFloor) {
    Tensor3<double> y;
    ytilde_from_psd(source_psd(p), p.G, floor, y);
    return y;
}

/// Full-rank spatial covariance G_nf = Q_f^{-1} Diag(g_n) Q_f^{-H}.
inline linalg::SmallComplexMatrix reconstruct_scm(const ModelParams& p, std::size_t n,
                                                  std::size_t f) {
    const ModelDims d = p.dims();
    if (n >= d.N || f >= d.F)
        throw InvalidArgument("reconstruct_scm: index out of range");
    const auto A = linalg::invert(linalg::slice(p.Q, f));
    linalg::SmallComplexMatrix S(d.M);
    for (std::size_t i = 0; i < d.M; ++i)
        for (std::size_t j = i; j < d.M; ++j) {
            cplx s{};
            for (std::size_t m = 0; m < d.M; ++m)
                s += A(i, m) * p.G(n, m) * std::conj(A(j, m));
            S(i, j) = s;
            S(j, i) = std::conj(s);
        }
    for (std::size_t i = 0; i < d.M; ++i)
        S(i, i) = S(i, i).real();
    return S;
}

// Checkpoints: JSON object with a shape header and row-major arrays.
//   {"format": "gsmfast-checkpoint", "version": 1,
//    "dims": {"N", "K", "F", "T", "M"},
//    "W": [...], "H": [...], "G": [...], "Q_re": [...], "Q_im": [...]}

inline nlohmann::json params_to_json(const ModelParams& p) {
    const ModelDims d = p.dims();
    nlohmann::json j;
    j["format"] = "gsmfast-checkpoint";
    j["version"] = 1;
    j["dims"] = {{"N", d.N}, {"K", d.K}, {"F", d.F}, {"T", d.T}, {"M", d.M}};
    j["W"] = std::vector<double>(p.W.begin(), p.W.end());
    j["H"] = std::vector<double>(p.H.begin(), p.H.end());
    j["G"] = std::vector<double>(p.G.begin(), p.G.end());
    std::vector<double> re, im;
    re.reserve(p.Q.size());
    im.reserve(p.Q.size());
    for (const cplx& q : p.Q) {
        re.push_back(q.real());
        im.push_back(q.imag());
    }
    j["Q_re"] = std::move(re);
    j["Q_im"] = std::move(im);
    return j;
}

inline ModelParams params_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "gsmfast-checkpoint" ||
            j.at("version").get<int>() != 1)
            throw FormatError("checkpoint: unknown format or version");
        const auto& jd = j.at("dims");
        const ModelDims d{jd.at("N").get<std::size_t>(), jd.at("K").get<std::size_t>(),
                          jd.at("F").get<std::size_t>(), jd.at("T").get<std::size_t>(),
                          jd.at("M").get<std::size_t>()};
        d.validate();
        ModelParams p(d);
        auto fill_real = [&](const char* key, auto& t) {
            const auto v = j.at(key).get<std::vector<double>>();
            if (v.size() != t.size())
                throw FormatError(std::string("checkpoint: wrong length for ") + key);
            std::copy(v.begin(), v.end(), t.begin());
        };
        fill_real("W", p.W);
        fill_real("H", p.H);
        fill_real("G", p.G);
        const auto re = j.at("Q_re").get<std::vector<double>>();
        const auto im = j.at("Q_im").get<std::vector<double>>();
        if (re.size() != p.Q.size() || im.size() != p.Q.size())
            throw FormatError("checkpoint: wrong length for Q");
        for (std::size_t i = 0; i < re.size(); ++i)
            p.Q.data()[i] = {re[i], im[i]};
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& p) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("save_checkpoint: cannot open " + path.string());
    out << params_to_json(p).dump() << '\n';
    if (!out)
        throw IoError("save_checkpoint: write failed for " + path.string());
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw FileNotFound("load_checkpoint: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_checkpoint: ") + e.what());
    }
    return params_from_json(j);
}

} // namespace gsmfast
