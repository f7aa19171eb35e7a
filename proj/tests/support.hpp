#pragma once

#include <complex>
#include <random>

#include "gsmfast/gsmfast.hpp"

namespace testing_support {

using gsmfast::cplx;

inline gsmfast::MixtureSpectrogram random_spectrogram(std::size_t F, std::size_t T,
                                                      std::size_t M, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    gsmfast::MixtureSpectrogram X(F, T, M);
    for (auto& v : X.data)
        v = cplx(g(rng), g(rng));
    return X;
}

/// Random positive W, H, G and a well-conditioned random Q.
inline gsmfast::ModelParams random_params(const gsmfast::ModelDims& d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    std::normal_distribution<double> g;
    gsmfast::ModelParams p(d);
    for (double& w : p.W)
        w = u(rng);
    for (double& h : p.H)
        h = u(rng);
    for (double& x : p.G)
        x = u(rng);
    for (std::size_t f = 0; f < d.F; ++f)
        for (std::size_t i = 0; i < d.M; ++i)
            for (std::size_t j = 0; j < d.M; ++j)
                p.Q(f, i, j) = (i == j ? 2.0 : 0.0) + 0.3 * cplx(g(rng), g(rng));
    return p;
}

inline double rel_diff(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

} // namespace testing_support
