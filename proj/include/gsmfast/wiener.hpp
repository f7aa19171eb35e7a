#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "gsmfast/audio_io.hpp"
#include "gsmfast/linalg.hpp"
#include "gsmfast/model.hpp"
#include "gsmfast/stft.hpp"

namespace gsmfast {

/// Estimated multichannel source images x_hat(n, f, t, m).
struct SourceImages {
    Tensor4<cplx> data;

    std::size_t sources() const noexcept { return data.extent(0); }
    std::size_t bins() const noexcept { return data.extent(1); }
    std::size_t frames() const noexcept { return data.extent(2); }
    std::size_t channels() const noexcept { return data.extent(3); }
};

/// x_hat_nft = Q_f^{-1} Diag(lambda_nft g_n / y_ft) Q_f x_ft. The gains use the
/// unfloored model variance so that they sum to one exactly; an all-zero
/// model bin is split evenly.
inline SourceImages separate(const MixtureSpectrogram& X, const ModelParams& p) {
    p.validate();
    const ModelDims d = p.dims();
    if (X.bins() != d.F || X.frames() != d.T || X.channels() != d.M)
        throw ShapeMismatch("separate: spectrogram does not match the model");
    const Tensor3<double> lambda = source_psd(p);
    SourceImages out{Tensor4<cplx>(d.N, d.F, d.T, d.M)};
    std::vector<double> y(d.M);
    std::vector<cplx> z(d.M), g(d.M);
    for (std::size_t f = 0; f < d.F; ++f) {
        const auto Qf = linalg::slice(p.Q, f);
        const auto Qinv = linalg::invert(Qf);
        for (std::size_t t = 0; t < d.T; ++t) {
            const auto x = X.data.row(f, t);
            for (std::size_t m = 0; m < d.M; ++m) {
                cplx s{};
                for (std::size_t j = 0; j < d.M; ++j)
                    s += Qf(m, j) * x[j];
                z[m] = s;
                double ym = 0.0;
                for (std::size_t n = 0; n < d.N; ++n)
                    ym += lambda(n, f, t) * p.G(n, m);
                y[m] = ym;
            }
            for (std::size_t n = 0; n < d.N; ++n) {
                for (std::size_t m = 0; m < d.M; ++m) {
                    const double gain = y[m] > 0.0 ? lambda(n, f, t) * p.G(n, m) / y[m]
                                                   : 1.0 / static_cast<double>(d.N);
                    g[m] = gain * z[m];
                }
                for (std::size_t i = 0; i < d.M; ++i) {
                    cplx s{};
                    for (std::size_t m = 0; m < d.M; ++m)
                        s += Qinv(i, m) * g[m];
                    out.data(n, f, t, i) = s;
                }
            }
        }
    }
    return out;
}

/// Source indices by decreasing mean |x_hat|^2; ties keep the lower index first.
inline std::vector<std::size_t> rank_sources_by_energy(const SourceImages& images) {
    const std::size_t N = images.sources();
    const std::size_t per = images.bins() * images.frames() * images.channels();
    std::vector<double> energy(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        const cplx* p = images.data.data() + n * per;
        double e = 0.0;
        for (std::size_t i = 0; i < per; ++i)
            e += std::norm(p[i]);
        energy[n] = per > 0 ? e / static_cast<double>(per) : 0.0;
    }
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return energy[a] > energy[b]; });
    return order;
}

/// Spectrogram of one source image, shaped like the mixture.
inline MixtureSpectrogram image_spectrogram(const SourceImages& images, std::size_t n) {
    MixtureSpectrogram S(images.bins(), images.frames(), images.channels());
    const std::size_t per = S.data.size();
    std::copy_n(images.data.data() + n * per, per, S.data.data());
    return S;
}

/// Time-domain multichannel images, one buffer per source.
inline std::vector<AudioBuffer> render_images(const SourceImages& images, const StftConfig& cfg,
                                              std::size_t length, unsigned sample_rate) {
    std::vector<AudioBuffer> out;
    out.reserve(images.sources());
    for (std::size_t n = 0; n < images.sources(); ++n)
        out.push_back(stft_inverse(image_spectrogram(images, n), cfg, length, sample_rate));
    return out;
}

} // namespace gsmfast
