#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include "gsmfast/stft.hpp"

using namespace gsmfast;

namespace {

AudioBuffer noise(std::size_t channels, std::size_t frames, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> g;
    AudioBuffer b(channels, frames, 16000);
    for (double& v : b.samples)
        v = g(rng);
    return b;
}

// Naive one-sided DFT of one analysis frame, taken straight from the definition.
std::vector<cplx> naive_frame_dft(const std::vector<double>& x, const StftConfig& cfg,
                                  std::size_t t) {
    const std::size_t N = cfg.n_fft;
    const auto w = hann_window(N);
    std::vector<cplx> out(cfg.bins());
    for (std::size_t k = 0; k < cfg.bins(); ++k) {
        cplx s{};
        for (std::size_t i = 0; i < N; ++i) {
            const long p = static_cast<long>(t * cfg.hop + i) - static_cast<long>(cfg.pad());
            if (p < 0 || p >= static_cast<long>(x.size()))
                continue;
            s += w[i] * x[p] *
                 std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) /
                                     static_cast<double>(N));
        }
        out[k] = s;
    }
    return out;
}

} // namespace

TEST(Stft, PeriodicHannValues) {
    const auto w = hann_window(1024);
    EXPECT_DOUBLE_EQ(w[512], 1.0);
    EXPECT_DOUBLE_EQ(w[0], 0.0);
    EXPECT_NEAR(w[256], 0.5, 1e-15);
    EXPECT_NEAR(w[768], 0.5, 1e-15);
}

TEST(Stft, ConfigInvariants) {
    StftConfig cfg;
    EXPECT_EQ(cfg.n_fft, 1024u);
    EXPECT_EQ(cfg.hop, 256u);
    EXPECT_EQ(cfg.bins(), 513u);
    EXPECT_THROW((StftConfig{1024, 300}.validate()), InvalidArgument);
    EXPECT_THROW((StftConfig{1023, 1}.validate()), InvalidArgument);
    EXPECT_THROW((StftConfig{1024, 0}.validate()), InvalidArgument);
}

TEST(Stft, FrameCountCoversPaddedSignal) {
    const StftConfig cfg{64, 16};
    for (std::size_t L : {64u, 65u, 100u, 1000u}) {
        const std::size_t T = cfg.frames_for(L);
        EXPECT_GE((T - 1) * cfg.hop + cfg.n_fft, L + 2 * cfg.pad());
        EXPECT_LT((T - 2) * cfg.hop + cfg.n_fft, L + 2 * cfg.pad());
    }
}

TEST(Stft, ZeroInZeroOut) {
    AudioBuffer b(2, 5000, 16000);
    const auto X = stft_forward(b);
    for (const auto& v : X.data)
        EXPECT_EQ(v, cplx(0.0));
    const auto y = stft_inverse(X, {}, 5000);
    for (double v : y.samples)
        EXPECT_EQ(v, 0.0);
}

TEST(Stft, MatchesNaiveDft) {
    const StftConfig cfg{64, 16};
    const auto b = noise(1, 300, 4);
    const auto X = stft_forward(b, cfg);
    const std::vector<double> x(b.channel(0).begin(), b.channel(0).end());
    for (std::size_t t : {std::size_t{0}, std::size_t{3}, std::size_t{7}, X.frames() - 1}) {
        const auto ref = naive_frame_dft(x, cfg, t);
        for (std::size_t f = 0; f < cfg.bins(); ++f)
            EXPECT_LT(std::abs(X.data(f, t, 0) - ref[f]), 1e-12) << "t=" << t << " f=" << f;
    }
}

TEST(Stft, BinCenterCosineConcentratesInOneBin) {
    const StftConfig cfg{256, 64};
    const std::size_t k0 = 20;
    AudioBuffer b(1, 4096, 16000);
    for (std::size_t i = 0; i < 4096; ++i)
        b.samples(0, i) =
            std::cos(2.0 * std::numbers::pi * static_cast<double>(k0 * i) / cfg.n_fft);
    const auto X = stft_forward(b, cfg);
    const std::vector<double> x(b.channel(0).begin(), b.channel(0).end());
    const std::size_t t = X.frames() / 2; // interior frame
    const auto ref = naive_frame_dft(x, cfg, t);
    double total = 0.0, near = 0.0;
    for (std::size_t f = 0; f < cfg.bins(); ++f) {
        EXPECT_LT(std::abs(X.data(f, t, 0) - ref[f]), 1e-10);
        total += std::norm(X.data(f, t, 0));
        if (f + 1 >= k0 && f <= k0 + 1)
            near += std::norm(X.data(f, t, 0));
    }
    // Hann leakage reaches only the two neighbouring bins
    EXPECT_NEAR(near / total, 1.0, 1e-12);
    EXPECT_NEAR(std::abs(X.data(k0, t, 0)), cfg.n_fft / 4.0, 1e-9);
}

TEST(Stft, PerfectReconstructionOfNoise) {
    const auto b = noise(2, 16000, 11);
    const StftConfig cfg;
    const auto X = stft_forward(b, cfg);
    const auto r = stft_inverse_checked(X, cfg, b.frames());
    EXPECT_EQ(r.underflow_samples, 0u);
    double err = 0.0, ref = 0.0;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < b.frames(); ++i) {
            err = std::max(err, std::abs(r.audio.samples(c, i) - b.samples(c, i)));
            ref = std::max(ref, std::abs(b.samples(c, i)));
        }
    EXPECT_LT(err / ref, 1e-10);
}

TEST(Stft, PerfectReconstructionOtherHops) {
    for (const StftConfig cfg : {StftConfig{512, 128}, StftConfig{256, 64}, StftConfig{64, 16}}) {
        const auto b = noise(1, 3001, 5);
        const auto y = stft_inverse(stft_forward(b, cfg), cfg, b.frames());
        for (std::size_t i = 0; i < b.frames(); ++i)
            ASSERT_NEAR(y.samples(0, i), b.samples(0, i), 1e-10);
    }
}

TEST(Stft, SingleFrameInverseIsDirectSynthesis) {
    const StftConfig cfg{64, 16};
    const std::size_t N = cfg.n_fft;
    const auto w = hann_window(N);
    // one frame holding the windowed sinusoid w[i] s[i]
    std::vector<double> s(N), framed(N);
    for (std::size_t i = 0; i < N; ++i) {
        s[i] = std::sin(2.0 * std::numbers::pi * 3.3 * static_cast<double>(i) / N + 0.4);
        framed[i] = w[i] * s[i];
    }
    MixtureSpectrogram X(cfg.bins(), 1, 1);
    for (std::size_t k = 0; k < cfg.bins(); ++k) {
        cplx acc{};
        for (std::size_t i = 0; i < N; ++i)
            acc += framed[i] * std::polar(1.0, -2.0 * std::numbers::pi *
                                                   static_cast<double>(k * i) / N);
        X.data(k, 0, 0) = acc;
    }
    // direct inverse DFT of the one-sided spectrum
    std::vector<double> frame(N);
    for (std::size_t i = 0; i < N; ++i) {
        double acc = X.data(0, 0, 0).real() +
                     X.data(N / 2, 0, 0).real() * (i % 2 == 0 ? 1.0 : -1.0);
        for (std::size_t k = 1; k < N / 2; ++k)
            acc += 2.0 * (X.data(k, 0, 0) *
                          std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(k * i) / N))
                             .real();
        frame[i] = acc / N;
    }
    const std::size_t length = N - cfg.pad();
    const auto r = stft_inverse_checked(X, cfg, length);
    for (std::size_t i = 0; i < length; ++i) {
        const std::size_t p = i + cfg.pad();
        const double env = w[p] * w[p];
        const double expected = env >= kEnvelopeFloor ? w[p] * frame[p] / env : 0.0;
        EXPECT_NEAR(r.audio.samples(0, i), expected, 1e-10);
        if (env >= kEnvelopeFloor) {
            EXPECT_NEAR(r.audio.samples(0, i), s[p], 1e-10);
        }
    }
}

TEST(Stft, EnvelopeUnderflowIsReported) {
    const StftConfig cfg{64, 16};
    MixtureSpectrogram X(cfg.bins(), 1, 1);
    // asking for more samples than one frame covers leaves an uncovered tail
    const auto r = stft_inverse_checked(X, cfg, 64);
    EXPECT_GT(r.underflow_samples, 0u);
}

TEST(Stft, ParsevalWithWindowConstant) {
    const StftConfig cfg{128, 32};
    const auto b = noise(1, 2000, 9);
    const auto X = stft_forward(b, cfg);
    double spec = 0.0;
    for (std::size_t t = 0; t < X.frames(); ++t)
        for (std::size_t f = 0; f < cfg.bins(); ++f) {
            const double mult = (f == 0 || f == cfg.bins() - 1) ? 1.0 : 2.0;
            spec += mult * std::norm(X.data(f, t, 0));
        }
    spec /= static_cast<double>(cfg.n_fft);
    double sig = 0.0;
    for (double v : b.samples)
        sig += v * v;
    // sum_t w^2 = 3/2 everywhere for Hann at 75% overlap
    EXPECT_NEAR(spec / sig, 1.5, 1e-12);
}

TEST(Stft, ErrorsReported) {
    AudioBuffer shortb(1, 100, 16000);
    EXPECT_THROW(stft_forward(shortb), InvalidArgument);
    MixtureSpectrogram X(33, 4, 1);
    EXPECT_THROW(stft_inverse(X, StftConfig{}, 100), ShapeMismatch);
}

TEST(Stft, ConcurrentTransformsAgree) {
    const auto b = noise(1, 8000, 2);
    const auto ref = stft_forward(b);
    std::vector<MixtureSpectrogram> out(4);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < out.size(); ++i)
        threads.emplace_back([&, i] { out[i] = stft_forward(b); });
    for (auto& t : threads)
        t.join();
    for (const auto& X : out)
        EXPECT_TRUE(X.data == ref.data);
}
