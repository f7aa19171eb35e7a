#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <new>
#include <numbers>
#include <vector>

#include <fftw3.h>

#include "gsmfast/audio_io.hpp"
#include "gsmfast/errors.hpp"
#include "gsmfast/tensor.hpp"

namespace gsmfast {

struct StftConfig {
    std::size_t n_fft = 1024;
    std::size_t hop = 256;

    std::size_t bins() const noexcept { return n_fft / 2 + 1; }
    /// Zeros added before the signal (and at least this many after it).
    std::size_t pad() const noexcept { return n_fft - hop; }

    void validate() const {
        if (n_fft < 2 || n_fft % 2 != 0)
            throw InvalidArgument("StftConfig: n_fft must be even and >= 2");
        if (hop == 0 || n_fft % hop != 0)
            throw InvalidArgument("StftConfig: hop must divide n_fft");
    }

    /// Number of frames covering a signal of `length` samples.
    std::size_t frames_for(std::size_t length) const {
        const std::size_t padded = length + 2 * pad();
        return (padded - n_fft + hop - 1) / hop + 1;
    }
};

/// Multichannel spectrogram X(f, t, m).
struct MixtureSpectrogram {
    Tensor3<cplx> data;

    MixtureSpectrogram() = default;
    MixtureSpectrogram(std::size_t F, std::size_t T, std::size_t M) : data(F, T, M) {}

    std::size_t bins() const noexcept { return data.extent(0); }
    std::size_t frames() const noexcept { return data.extent(1); }
    std::size_t channels() const noexcept { return data.extent(2); }
};

/// Periodic Hann window 0.5 (1 - cos(2 pi i / n)).
inline std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                      static_cast<double>(n)));
    return w;
}

namespace detail {

// FFTW's planner is not reentrant; execution on distinct arrays is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

class RealFft {
  public:
    explicit RealFft(std::size_t n) : n_(n) {
        real_ = fftw_alloc_real(n);
        spec_ = fftw_alloc_complex(n / 2 + 1);
        if (!real_ || !spec_) {
            release();
            throw std::bad_alloc();
        }
        const int ni = static_cast<int>(n);
        std::lock_guard lock(fftw_planner_mutex());
        fwd_ = fftw_plan_dft_r2c_1d(ni, real_, spec_, FFTW_ESTIMATE);
        inv_ = fftw_plan_dft_c2r_1d(ni, spec_, real_, FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;
    ~RealFft() { release(); }

    double* real() noexcept { return real_; }
    cplx* spectrum() noexcept { return reinterpret_cast<cplx*>(spec_); }
    void forward() { fftw_execute(fwd_); }
    /// Unnormalized inverse (result is n times the true inverse).
    void inverse() { fftw_execute(inv_); }
    std::size_t size() const noexcept { return n_; }

  private:
    void release() {
        std::lock_guard lock(fftw_planner_mutex());
        if (fwd_)
            fftw_destroy_plan(fwd_);
        if (inv_)
            fftw_destroy_plan(inv_);
        if (real_)
            fftw_free(real_);
        if (spec_)
            fftw_free(spec_);
        fwd_ = inv_ = nullptr;
        real_ = nullptr;
        spec_ = nullptr;
    }

    std::size_t n_;
    double* real_ = nullptr;
    fftw_complex* spec_ = nullptr;
    fftw_plan fwd_ = nullptr;
    fftw_plan inv_ = nullptr;
};

} // namespace detail

/// Frame t covers samples [t hop, t hop + n_fft) of the signal zero-padded by
/// n_fft - hop on the left (and at least that on the right).
inline MixtureSpectrogram stft_forward(const AudioBuffer& buffer, const StftConfig& cfg = {}) {
    cfg.validate();
    const std::size_t M = buffer.channels();
    const std::size_t L = buffer.frames();
    if (M == 0)
        throw InvalidArgument("stft_forward: buffer has no channels");
    if (L < cfg.n_fft)
        throw InvalidArgument("stft_forward: signal shorter than one window");
    const std::size_t N = cfg.n_fft;
    const std::size_t F = cfg.bins();
    const std::size_t T = cfg.frames_for(L);
    const std::size_t pad = cfg.pad();
    const auto w = hann_window(N);

    MixtureSpectrogram X(F, T, M);
    detail::RealFft fft(N);
    for (std::size_t m = 0; m < M; ++m) {
        const auto x = buffer.channel(m);
        for (std::size_t t = 0; t < T; ++t) {
            double* frame = fft.real();
            const std::size_t start = t * cfg.hop; // in padded coordinates
            for (std::size_t i = 0; i < N; ++i) {
                const std::size_t p = start + i;
                const bool inside = p >= pad && p - pad < L;
                frame[i] = inside ? w[i] * x[p - pad] : 0.0;
            }
            fft.forward();
            const cplx* spec = fft.spectrum();
            for (std::size_t f = 0; f < F; ++f)
                X.data(f, t, m) = spec[f];
        }
    }
    return X;
}

struct InverseStftResult {
    AudioBuffer audio;
    /// Output samples whose squared-window envelope fell below the floor
    /// (set to zero).
    std::size_t underflow_samples = 0;
};

inline constexpr double kEnvelopeFloor = 1e-10;

/// Weighted overlap-add with a Hann synthesis window, divided by the summed
/// squared window. Returns `length` samples per channel.
inline InverseStftResult stft_inverse_checked(const MixtureSpectrogram& spec,
                                              const StftConfig& cfg, std::size_t length,
                                              unsigned sample_rate = 16000) {
    cfg.validate();
    const std::size_t F = spec.bins();
    const std::size_t T = spec.frames();
    const std::size_t M = spec.channels();
    if (F != cfg.bins())
        throw ShapeMismatch("stft_inverse: bin count does not match n_fft");
    if (T == 0 || M == 0 || length == 0)
        throw InvalidArgument("stft_inverse: empty spectrogram or zero length");
    const std::size_t N = cfg.n_fft;
    const std::size_t pad = cfg.pad();
    const std::size_t padded = (T - 1) * cfg.hop + N;
    const auto w = hann_window(N);

    std::vector<double> env(padded, 0.0);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < N; ++i)
            env[t * cfg.hop + i] += w[i] * w[i];

    InverseStftResult out{AudioBuffer(M, length, sample_rate), 0};
    detail::RealFft fft(N);
    std::vector<double> acc(padded);
    const double inv_n = 1.0 / static_cast<double>(N);
    for (std::size_t m = 0; m < M; ++m) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            cplx* s = fft.spectrum();
            for (std::size_t f = 0; f < F; ++f)
                s[f] = spec.data(f, t, m);
            // c2r ignores the imaginary parts of the DC and Nyquist bins
            fft.inverse();
            const double* frame = fft.real();
            for (std::size_t i = 0; i < N; ++i)
                acc[t * cfg.hop + i] += w[i] * frame[i] * inv_n;
        }
        auto y = out.audio.channel(m);
        for (std::size_t i = 0; i < length; ++i) {
            const std::size_t p = i + pad;
            if (p < padded && env[p] >= kEnvelopeFloor) {
                y[i] = acc[p] / env[p];
            } else {
                y[i] = 0.0;
                if (m == 0)
                    ++out.underflow_samples;
            }
        }
    }
    return out;
}

inline AudioBuffer stft_inverse(const MixtureSpectrogram& spec, const StftConfig& cfg,
                                std::size_t length, unsigned sample_rate = 16000) {
    return stft_inverse_checked(spec, cfg, length, sample_rate).audio;
}

} // namespace gsmfast
