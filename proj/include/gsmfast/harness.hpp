#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <fftw3.h>
#include <nlohmann/json.hpp>

#include "gsmfast/audio_io.hpp"
#include "gsmfast/errors.hpp"
#include "gsmfast/gsm_priors.hpp"
#include "gsmfast/metrics.hpp"
#include "gsmfast/model.hpp"
#include "gsmfast/optimizer.hpp"
#include "gsmfast/stft.hpp"
#include "gsmfast/wiener.hpp"

namespace gsmfast {

struct SceneSpec {
    std::size_t n_sources = 2;
    std::size_t n_mics = 2;
    double duration_s = 3.0;
    std::uint64_t seed = 0;
    std::optional<double> noise_snr_db;
    unsigned sample_rate = 16000;
    /// Per source and mic: gain g_nm (unit norm over m) and delay tau_nm in samples.
    /// The steering vector at angular frequency w is a_nm(w) = g_nm exp(-i w tau_nm).
    std::vector<std::vector<double>> gains;
    std::vector<std::vector<double>> delays;

    std::vector<cplx> steering(std::size_t n, double omega) const {
        std::vector<cplx> a(n_mics);
        for (std::size_t m = 0; m < n_mics; ++m)
            a[m] = gains[n][m] * std::polar(1.0, -omega * delays[n][m]);
        return a;
    }
};

struct SyntheticScene {
    AudioBuffer mixture;
    std::vector<AudioBuffer> images; // multichannel image of each source
    std::optional<AudioBuffer> noise;
    SceneSpec spec;

    /// Reference signal of source n: its image at channel 1.
    std::vector<double> reference(std::size_t n) const {
        const auto c = images.at(n).channel(0);
        return {c.begin(), c.end()};
    }

    std::vector<std::vector<double>> references() const {
        std::vector<std::vector<double>> r;
        for (std::size_t n = 0; n < images.size(); ++n)
            r.push_back(reference(n));
        return r;
    }
};

namespace detail {

/// Full-length real FFT round trip: y = irfft(rfft(x) * H(k)).
template <typename Filter>
std::vector<double> filter_spectrum(const std::vector<double>& x, Filter&& filter) {
    const std::size_t L = x.size();
    const std::size_t bins = L / 2 + 1;
    std::vector<double> buf(x);
    std::vector<cplx> spec(bins);
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(L), buf.data(),
                                             reinterpret_cast<fftw_complex*>(spec.data()),
                                             FFTW_ESTIMATE);
        fftw_execute(fwd);
        fftw_destroy_plan(fwd);
    }
    for (std::size_t k = 0; k < bins; ++k)
        spec[k] *= filter(k, 2.0 * std::numbers::pi * static_cast<double>(k) /
                                 static_cast<double>(L));
    std::vector<double> out(L);
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_plan inv = fftw_plan_dft_c2r_1d(static_cast<int>(L),
                                             reinterpret_cast<fftw_complex*>(spec.data()),
                                             out.data(), FFTW_ESTIMATE);
        fftw_execute(inv);
        fftw_destroy_plan(inv);
    }
    for (double& v : out)
        v /= static_cast<double>(L);
    return out;
}

inline double energy(std::span<const double> x) {
    double e = 0.0;
    for (double v : x)
        e += v * v;
    return e;
}

} // namespace detail

/// Rank-1 anechoic-style scene. Source n is white noise band-passed to the
/// n-th of n_sources disjoint bands in [100, 7000] Hz over a broadband floor
/// 6 dB down, amplitude-modulated by a slow envelope of its own; each image is
/// the source filtered by a per-mic gain and fractional delay.
inline SyntheticScene synth_scene(std::size_t n_sources, std::size_t n_mics, double duration_s,
                                  std::uint64_t seed,
                                  std::optional<double> noise_snr_db = std::nullopt,
                                  unsigned sample_rate = 16000) {
    if (n_sources == 0 || n_mics == 0 || n_sources > n_mics || n_mics > 8)
        throw InvalidArgument("synth_scene: need 1 <= n_sources <= n_mics <= 8");
    if (!(duration_s >= 1.0) || !std::isfinite(duration_s))
        throw InvalidArgument("synth_scene: duration must be at least 1 s");
    if (noise_snr_db && !std::isfinite(*noise_snr_db))
        throw InvalidArgument("synth_scene: noise SNR must be finite");
    const std::size_t L = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
    InitRng rng(seed);

    SyntheticScene scene;
    scene.spec.n_sources = n_sources;
    scene.spec.n_mics = n_mics;
    scene.spec.duration_s = duration_s;
    scene.spec.seed = seed;
    scene.spec.noise_snr_db = noise_snr_db;
    scene.spec.sample_rate = sample_rate;
    scene.mixture = AudioBuffer(n_mics, L, sample_rate);

    const double lo_hz = 100.0, hi_hz = 7000.0;
    const double band = (hi_hz - lo_hz) / static_cast<double>(n_sources);
    const double floor_amp = std::pow(10.0, -6.0 / 20.0);
    for (std::size_t n = 0; n < n_sources; ++n) {
        std::vector<double> white(L);
        for (double& v : white)
            v = rng.normal();
        const double f0 = lo_hz + band * static_cast<double>(n);
        const double f1 = f0 + band;
        const double band_gain = 1.0 / std::sqrt(band / (0.5 * sample_rate));
        auto src = detail::filter_spectrum(white, [&](std::size_t, double omega) {
            const double hz = omega * sample_rate / (2.0 * std::numbers::pi);
            return cplx(hz >= f0 && hz < f1 ? band_gain : floor_amp);
        });
        const double rate1 = 0.7 + 0.45 * static_cast<double>(n) + 0.2 * rng.uniform();
        const double rate2 = 2.3 + 0.8 * static_cast<double>(n) + 0.3 * rng.uniform();
        const double ph1 = 2.0 * std::numbers::pi * rng.uniform();
        const double ph2 = 2.0 * std::numbers::pi * rng.uniform();
        for (std::size_t i = 0; i < L; ++i) {
            const double t = static_cast<double>(i) / sample_rate;
            const double e1 = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * rate1 * t + ph1);
            const double e2 = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * rate2 * t + ph2);
            src[i] *= 0.05 + e1 * e1 * e2;
        }
        const double rms = std::sqrt(detail::energy(src) / static_cast<double>(L));
        for (double& v : src)
            v *= 0.1 / rms;

        std::vector<double> g(n_mics), tau(n_mics);
        double norm = 0.0;
        for (std::size_t m = 0; m < n_mics; ++m) {
            g[m] = 0.3 + rng.uniform();
            tau[m] = 8.0 * rng.uniform();
            norm += g[m] * g[m];
        }
        for (double& v : g)
            v /= std::sqrt(norm);
        scene.spec.gains.push_back(g);
        scene.spec.delays.push_back(tau);

        AudioBuffer image(n_mics, L, sample_rate);
        for (std::size_t m = 0; m < n_mics; ++m) {
            const auto y = detail::filter_spectrum(src, [&](std::size_t, double omega) {
                return g[m] * std::polar(1.0, -omega * tau[m]);
            });
            std::copy(y.begin(), y.end(), image.channel(m).begin());
        }
        scene.images.push_back(std::move(image));
    }
    for (std::size_t m = 0; m < n_mics; ++m) {
        auto mix = scene.mixture.channel(m);
        for (const auto& image : scene.images) {
            const auto c = image.channel(m);
            for (std::size_t i = 0; i < L; ++i)
                mix[i] += c[i];
        }
    }
    if (noise_snr_db) {
        double source_power = 0.0;
        for (const auto& image : scene.images)
            source_power += detail::energy(image.samples.flat());
        AudioBuffer noise(n_mics, L, sample_rate);
        for (double& v : noise.samples)
            v = rng.normal();
        const double target = source_power / std::pow(10.0, *noise_snr_db / 10.0);
        const double scale = std::sqrt(target / detail::energy(noise.samples.flat()));
        for (double& v : noise.samples)
            v *= scale;
        for (std::size_t m = 0; m < n_mics; ++m) {
            auto mix = scene.mixture.channel(m);
            const auto c = noise.channel(m);
            for (std::size_t i = 0; i < L; ++i)
                mix[i] += c[i];
        }
        scene.noise = std::move(noise);
    }
    return scene;
}

// ---- configuration echo ----------------------------------------------------

inline nlohmann::json variant_to_json(const GsmVariant& v) {
    nlohmann::json j;
    j["model"] = variant_name(v);
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, StudentT>) {
                j["nu"] = p.nu;
            } else if constexpr (std::is_same_v<T, LeptokurticGG>) {
                j["beta"] = p.beta;
            } else if constexpr (std::is_same_v<T, GH>) {
                j["gamma"] = p.gamma;
                j["rho"] = p.rho;
                j["eta"] = p.eta;
            } else if constexpr (std::is_same_v<T, NIG>) {
                j["rho"] = p.rho;
                j["eta"] = p.eta;
            }
        },
        v);
    return j;
}

/// Accepts "gaussian", "t"/"student_t", "gg", "gh", "nig"; missing
/// hyperparameters take the tuned defaults (nu 40, beta 1, gamma -1/2, rho 15, eta 1).
inline GsmVariant variant_from_json(const nlohmann::json& j) {
    const std::string model = j.value("model", std::string("nig"));
    if (model == "gaussian")
        return make_gaussian();
    if (model == "t" || model == "student_t")
        return make_student_t(j.value("nu", 40.0));
    if (model == "gg")
        return make_leptokurtic_gg(j.value("beta", 1.0));
    if (model == "gh")
        return make_gh(j.value("gamma", -0.5), j.value("rho", 15.0), j.value("eta", 1.0));
    if (model == "nig")
        return make_nig(j.value("rho", 15.0), j.value("eta", 1.0));
    throw InvalidArgument("unknown model '" + model + "'");
}

inline nlohmann::json config_to_json(const SeparationConfig& c) {
    nlohmann::json j = variant_to_json(c.variant);
    j["n_sources"] = c.n_sources;
    j["n_bases"] = c.n_bases;
    j["iterations"] = c.iterations;
    j["rank1"] = c.rank1;
    j["eps_init"] = c.eps_init;
    j["floor"] = c.floor;
    j["seed"] = c.seed;
    return j;
}

inline SeparationConfig config_from_json(const nlohmann::json& j) {
    try {
        SeparationConfig c;
        c.variant = variant_from_json(j);
        c.n_sources = j.value("n_sources", c.n_sources);
        c.n_bases = j.value("n_bases", c.n_bases);
        c.iterations = j.value("iterations", c.iterations);
        c.rank1 = j.value("rank1", c.rank1);
        c.eps_init = j.value("eps_init", c.eps_init);
        c.floor = j.value("floor", c.floor);
        c.seed = j.value("seed", c.seed);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
}

/// 64-bit FNV-1a of the canonical (key-sorted, compact) JSON text, as hex.
inline std::string config_hash(const nlohmann::json& j) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---- reports ---------------------------------------------------------------

struct SeparationReport {
    nlohmann::json config; // SeparationConfig echo plus "stft" and "scene"
    std::string config_hash;
    std::uint64_t seed = 0;
    double ll_initial = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> ll_trace;
    std::vector<SourceMetric> per_source_metrics;
    double mean_si_sdr = 0.0;
    double input_si_sdr = 0.0;
    double runtime_ms = 0.0;
    std::size_t monotonicity_violations = 0;
    std::size_t singular_updates = 0;
    double max_ip_residual = 0.0;

    double improvement_db() const { return mean_si_sdr - input_si_sdr; }
};

namespace detail {

inline nlohmann::json finite_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline double number_or_nan(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

} // namespace detail

inline nlohmann::json report_to_json(const SeparationReport& r) {
    nlohmann::json j;
    j["config"] = r.config;
    j["config_hash"] = r.config_hash;
    j["seed"] = r.seed;
    j["ll_initial"] = detail::finite_or_null(r.ll_initial);
    j["ll_trace"] = r.ll_trace;
    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& m : r.per_source_metrics)
        metrics.push_back({{"si_sdr", m.si_sdr}, {"assigned_reference", m.assigned_reference}});
    j["per_source_metrics"] = metrics;
    j["mean_si_sdr"] = r.mean_si_sdr;
    j["input_si_sdr"] = r.input_si_sdr;
    j["improvement_db"] = r.improvement_db();
    j["runtime_ms"] = r.runtime_ms;
    j["monotonicity_violations"] = r.monotonicity_violations;
    j["singular_updates"] = r.singular_updates;
    j["max_ip_residual"] = r.max_ip_residual;
    return j;
}

inline SeparationReport report_from_json(const nlohmann::json& j) {
    try {
        SeparationReport r;
        r.config = j.at("config");
        r.config_hash = j.at("config_hash").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.ll_initial = detail::number_or_nan(j.at("ll_initial"));
        r.ll_trace = j.at("ll_trace").get<std::vector<double>>();
        for (const auto& m : j.at("per_source_metrics"))
            r.per_source_metrics.push_back(
                {m.at("si_sdr").get<double>(), m.at("assigned_reference").get<std::size_t>()});
        r.mean_si_sdr = j.at("mean_si_sdr").get<double>();
        r.input_si_sdr = j.at("input_si_sdr").get<double>();
        r.runtime_ms = j.at("runtime_ms").get<double>();
        r.monotonicity_violations = j.at("monotonicity_violations").get<std::size_t>();
        r.singular_updates = j.at("singular_updates").get<std::size_t>();
        r.max_ip_residual = j.at("max_ip_residual").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
}

inline nlohmann::json scene_to_json(const SceneSpec& s) {
    nlohmann::json j = {{"n_sources", s.n_sources},
                        {"n_mics", s.n_mics},
                        {"duration_s", s.duration_s},
                        {"seed", s.seed},
                        {"sample_rate", s.sample_rate}};
    j["noise_snr_db"] = s.noise_snr_db ? nlohmann::json(*s.noise_snr_db) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json experiment_json(const SeparationConfig& cfg, const StftConfig& stft,
                                      const nlohmann::json& scene) {
    nlohmann::json j = config_to_json(cfg);
    j["stft"] = {{"n_fft", stft.n_fft}, {"hop", stft.hop}, {"window", "hann"}};
    j["scene"] = scene;
    return j;
}

struct ExperimentOutput {
    SeparationReport report;
    RunResult run;
    std::vector<std::vector<double>> estimates; // channel-1 signals, ranked order
};

/// STFT, MU-VEM, Wiener filtering, energy ranking, iSTFT and SI-SDR scoring.
inline ExperimentOutput run_experiment_full(const SyntheticScene& scene,
                                            const SeparationConfig& cfg,
                                            const StftConfig& stft_cfg = {},
                                            const RunOptions& opts = {}) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t L = scene.mixture.frames();
    const auto X = stft_forward(scene.mixture, stft_cfg);
    ExperimentOutput out;
    RunOptions run_opts = opts;
    run_opts.record_initial = true;
    out.run = run(X, cfg, run_opts);
    const auto images = separate(X, out.run.params);
    const auto order = rank_sources_by_energy(images);
    const auto refs = scene.references();
    if (order.size() < refs.size())
        throw InvalidArgument("run_experiment: fewer model sources than references");
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto y = stft_inverse(image_spectrogram(images, order[i]), stft_cfg, L,
                                    scene.mixture.sample_rate);
        const auto c = y.channel(0);
        out.estimates.emplace_back(c.begin(), c.end());
    }
    const MetricReport metrics = permutation_si_sdr(out.estimates, refs);
    const auto mix0 = scene.mixture.channel(0);

    SeparationReport& r = out.report;
    r.config = experiment_json(cfg, stft_cfg, scene_to_json(scene.spec));
    r.config_hash = config_hash(r.config);
    r.seed = cfg.seed;
    r.ll_initial = out.run.trace.initial;
    r.ll_trace = out.run.trace.values;
    r.per_source_metrics = metrics.per_source;
    r.mean_si_sdr = metrics.mean_si_sdr;
    r.input_si_sdr = input_si_sdr(mix0, refs);
    r.monotonicity_violations = out.run.violations.size();
    r.singular_updates = out.run.singular.size();
    r.max_ip_residual = out.run.max_ip_residual;
    r.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
}

inline SeparationReport run_experiment(const SyntheticScene& scene, const SeparationConfig& cfg,
                                       const StftConfig& stft_cfg = {},
                                       const RunOptions& opts = {}) {
    return run_experiment_full(scene, cfg, stft_cfg, opts).report;
}

inline const char* kCsvHeader =
    "config_hash,model,n_bases,n_sources,iterations,seed,mean_si_sdr,input_si_sdr,"
    "improvement_db,runtime_ms";

/// One CSV row per report, header first.
inline void write_csv(std::ostream& out, const std::vector<SeparationReport>& reports) {
    out << kCsvHeader << '\n';
    out << std::setprecision(10);
    for (const auto& r : reports) {
        out << r.config_hash << ',' << r.config.value("model", std::string()) << ','
            << r.config.value("n_bases", std::size_t{0}) << ','
            << r.config.value("n_sources", std::size_t{0}) << ','
            << r.config.value("iterations", std::size_t{0}) << ',' << r.seed << ','
            << r.mean_si_sdr << ',' << r.input_si_sdr << ',' << r.improvement_db() << ','
            << r.runtime_ms << '\n';
    }
}

} // namespace gsmfast
