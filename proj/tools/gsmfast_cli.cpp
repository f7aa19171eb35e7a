// gsmfast: separate, synth, evaluate, bench.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gsmfast/gsmfast.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelOptions {
    std::string model = "nig";
    double nu = 40.0;
    double beta = 1.0;
    double gamma = -0.5;
    double rho = 15.0;
    double eta = 1.0;
    std::size_t bases = 8;
    std::size_t sources = 0;
    std::size_t iters = 300;
    bool rank1 = false;
    std::uint64_t seed = 0;
    double floor = gsmfast::kDefaultFloor;
    double eps = 1e-2;
    std::size_t n_fft = 1024;
    std::size_t hop = 256;

    gsmfast::SeparationConfig config() const {
        gsmfast::SeparationConfig c;
        json v = {{"model", model}, {"nu", nu},   {"beta", beta},
                  {"gamma", gamma}, {"rho", rho}, {"eta", eta}};
        c.variant = gsmfast::variant_from_json(v);
        c.n_bases = bases;
        c.n_sources = sources;
        c.iterations = iters;
        c.rank1 = rank1;
        c.seed = seed;
        c.floor = floor;
        c.eps_init = eps;
        return c;
    }

    gsmfast::StftConfig stft() const {
        gsmfast::StftConfig s{n_fft, hop};
        s.validate();
        return s;
    }
};

const CLI::Validator kLeptokurtic =
    CLI::Validator(
        [](std::string& s) -> std::string {
            double b = 0.0;
            if (!CLI::detail::lexical_cast(s, b))
                return "not a number: " + s;
            if (!(b > 0.0 && b <= 2.0))
                return "beta must lie in (0, 2]";
            return {};
        },
        "(0,2]")
        .name("LEPTOKURTIC");

const CLI::Validator kStrictlyPositive =
    CLI::Validator(
        [](std::string& s) -> std::string {
            double v = 0.0;
            if (!CLI::detail::lexical_cast(s, v))
                return "not a number: " + s;
            if (!(v > 0.0) || !std::isfinite(v))
                return "value must be positive, got " + s;
            return {};
        },
        "POSITIVE")
        .name("STRICTLY_POSITIVE");

void add_model_options(CLI::App* app, ModelOptions& o) {
    app->add_option("--model", o.model, "Prior: gaussian, t, gg, gh, nig")
        ->check(CLI::IsMember({"gaussian", "t", "gg", "gh", "nig"}))
        ->capture_default_str();
    app->add_option("--nu", o.nu, "Student's t degrees of freedom")
        ->check(kStrictlyPositive)
        ->capture_default_str();
    app->add_option("--beta", o.beta, "Generalized Gaussian shape, (0, 2]")
        ->check(kLeptokurtic)
        ->capture_default_str();
    app->add_option("--gamma", o.gamma, "GH order")->capture_default_str();
    app->add_option("--rho", o.rho, "GH/NIG rho")->check(kStrictlyPositive)->capture_default_str();
    app->add_option("--eta", o.eta, "GH/NIG eta")->check(kStrictlyPositive)->capture_default_str();
    app->add_option("-K,--bases", o.bases, "NMF bases per source")
        ->check(CLI::Range(std::size_t{1}, std::size_t{4096}))
        ->capture_default_str();
    app->add_option("-N,--sources", o.sources, "Number of sources (default: channel count)")
        ->check(CLI::Range(std::size_t{1}, std::size_t{64}));
    app->add_option("--iters", o.iters, "MU-VEM iterations")
        ->check(CLI::Range(std::size_t{1}, std::size_t{1000000}))
        ->capture_default_str();
    app->add_flag("--rank1", o.rank1, "Rank-1 spatial model (G fixed to identity)");
    app->add_option("--seed", o.seed, "Initialization seed")->capture_default_str();
    app->add_option("--floor", o.floor, "Model variance floor")
        ->check(kStrictlyPositive)
        ->capture_default_str();
    app->add_option("--eps", o.eps, "Off-pattern value of the initial G")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app->add_option("--n-fft", o.n_fft, "STFT window length")
        ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20))
        ->capture_default_str();
    app->add_option("--hop", o.hop, "STFT hop")
        ->check(CLI::Range(std::size_t{1}, std::size_t{1} << 20))
        ->capture_default_str();
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw gsmfast::IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::vector<double> first_channel(const gsmfast::AudioBuffer& b) {
    const auto c = b.channel(0);
    return {c.begin(), c.end()};
}

gsmfast::AudioBuffer mono(const std::vector<double>& x, unsigned rate) {
    gsmfast::AudioBuffer b(1, x.size(), rate);
    std::copy(x.begin(), x.end(), b.channel(0).begin());
    return b;
}

// ---- separate --------------------------------------------------------------

struct SeparateArgs {
    std::string input;
    std::string out_dir = "separated";
    std::string report;
    bool images = false;
    bool quiet = false;
    std::size_t checkpoint_every = 0;
    std::string resume;
};

int cmd_separate(const SeparateArgs& a, const ModelOptions& o) {
    const auto mix = gsmfast::read_wav(a.input);
    const auto cfg = o.config();
    const auto stft = o.stft();
    try {
        cfg.validate(mix.channels());
    } catch (const gsmfast::InvalidArgument& e) {
        throw UsageError(e.what());
    }
    if (mix.frames() < stft.n_fft)
        throw UsageError("input is shorter than one STFT window");

    const auto start = std::chrono::steady_clock::now();
    const auto X = gsmfast::stft_forward(mix, stft);
    gsmfast::RunOptions opts;
    if (!a.quiet)
        opts.progress = [&](std::size_t it, double ll) {
            if (it % 10 == 0 || it == cfg.iterations)
                std::cerr << "iter " << it << "  log-likelihood " << ll << '\n';
        };
    if (a.checkpoint_every > 0) {
        opts.checkpoint_every = a.checkpoint_every;
        opts.checkpoint_path = fs::path(a.out_dir) / "checkpoint.json";
        fs::create_directories(a.out_dir);
    }
    if (!a.resume.empty())
        opts.initial_params = gsmfast::load_checkpoint(a.resume);
    const auto result = gsmfast::run(X, cfg, opts);
    const auto images = gsmfast::separate(X, result.params);
    const auto order = gsmfast::rank_sources_by_energy(images);

    fs::create_directories(a.out_dir);
    json outputs = json::array();
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const auto y = gsmfast::stft_inverse(gsmfast::image_spectrogram(images, order[rank]), stft,
                                             mix.frames(), mix.sample_rate);
        const auto name = "source_" + std::to_string(rank + 1) + ".wav";
        gsmfast::write_wav(fs::path(a.out_dir) / name, mono(first_channel(y), mix.sample_rate),
                           gsmfast::WavEncoding::float32);
        json entry = {{"rank", rank + 1}, {"model_source", order[rank]}, {"file", name}};
        if (a.images) {
            const auto img = "image_" + std::to_string(rank + 1) + ".wav";
            gsmfast::write_wav(fs::path(a.out_dir) / img, y, gsmfast::WavEncoding::float32);
            entry["image_file"] = img;
        }
        outputs.push_back(entry);
    }
    const double runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    json cfg_json = gsmfast::experiment_json(cfg, stft, {{"input", a.input}});
    json report = {{"config", cfg_json},
                   {"config_hash", gsmfast::config_hash(cfg_json)},
                   {"seed", cfg.seed},
                   {"ll_initial", std::isfinite(result.trace.initial) ? json(result.trace.initial)
                                                                       : json(nullptr)},
                   {"ll_trace", result.trace.values},
                   {"runtime_ms", runtime_ms},
                   {"monotonicity_violations", result.violations.size()},
                   {"singular_updates", result.singular.size()},
                   {"max_ip_residual", result.max_ip_residual},
                   {"outputs", outputs}};
    write_json(a.report.empty() ? fs::path(a.out_dir) / "report.json" : fs::path(a.report),
               report);
    if (!a.quiet)
        std::cerr << "wrote " << order.size() << " sources to " << a.out_dir << '\n';
    return 0;
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
    std::size_t sources = 2;
    std::size_t mics = 2;
    double duration = 3.0;
    std::uint64_t seed = 0;
    std::optional<double> snr;
    std::string out_dir = "scene";
};

int cmd_synth(const SynthArgs& a) {
    gsmfast::SyntheticScene scene;
    try {
        scene = gsmfast::synth_scene(a.sources, a.mics, a.duration, a.seed, a.snr);
    } catch (const gsmfast::InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    const unsigned rate = scene.mixture.sample_rate;
    gsmfast::write_wav(dir / "mixture.wav", scene.mixture, gsmfast::WavEncoding::float32);
    json refs = json::array();
    for (std::size_t n = 0; n < scene.images.size(); ++n) {
        const auto name = "reference_" + std::to_string(n + 1) + ".wav";
        gsmfast::write_wav(dir / name, mono(scene.reference(n), rate),
                           gsmfast::WavEncoding::float32);
        refs.push_back(name);
    }
    json j = gsmfast::scene_to_json(scene.spec);
    j["gains"] = scene.spec.gains;
    j["delays"] = scene.spec.delays;
    j["mixture"] = "mixture.wav";
    j["references"] = refs;
    write_json(dir / "scene.json", j);
    std::cerr << "wrote scene to " << dir.string() << '\n';
    return 0;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateArgs {
    std::vector<std::string> estimates;
    std::vector<std::string> references;
    std::string mixture;
    std::string report;
};

int cmd_evaluate(const EvaluateArgs& a) {
    if (a.estimates.size() != a.references.size())
        throw UsageError("need as many estimates as references");
    if (a.estimates.size() > 8)
        throw UsageError("at most 8 sources");
    std::vector<std::vector<double>> est, ref;
    std::size_t length = 0;
    for (const auto& p : a.references) {
        ref.push_back(first_channel(gsmfast::read_wav(p)));
        length = length == 0 ? ref.back().size() : std::min(length, ref.back().size());
    }
    for (const auto& p : a.estimates) {
        est.push_back(first_channel(gsmfast::read_wav(p)));
        length = std::min(length, est.back().size());
    }
    for (auto* group : {&est, &ref})
        for (auto& x : *group)
            x.resize(length);
    const auto report = gsmfast::permutation_si_sdr(est, ref);
    json per = json::array();
    for (std::size_t i = 0; i < report.per_source.size(); ++i)
        per.push_back({{"estimate", a.estimates[i]},
                       {"reference", a.references[report.per_source[i].assigned_reference]},
                       {"si_sdr", report.per_source[i].si_sdr}});
    json j = {{"per_source", per}, {"mean_si_sdr", report.mean_si_sdr}};
    if (!a.mixture.empty()) {
        auto mix = first_channel(gsmfast::read_wav(a.mixture));
        if (mix.size() < length)
            throw gsmfast::ShapeMismatch("mixture is shorter than the references");
        mix.resize(length);
        const double input = gsmfast::input_si_sdr(mix, ref);
        j["input_si_sdr"] = input;
        j["improvement_db"] = report.mean_si_sdr - input;
    }
    if (a.report.empty())
        std::cout << j.dump(2) << '\n';
    else
        write_json(a.report, j);
    return 0;
}

// ---- bench -----------------------------------------------------------------

struct BenchArgs {
    std::string grid;
    std::string out = "-";
    std::string report_dir;
    std::size_t jobs = 1;
};

struct BenchJob {
    gsmfast::SeparationConfig cfg;
    gsmfast::StftConfig stft;
    gsmfast::SceneSpec scene;
    std::string hash;
};

BenchJob parse_bench_entry(const json& e) {
    if (!e.is_object())
        throw gsmfast::FormatError("grid entries must be objects");
    BenchJob job;
    job.cfg = gsmfast::config_from_json(e);
    try {
        const json s = e.value("stft", json::object());
        job.stft.n_fft = s.value("n_fft", job.stft.n_fft);
        job.stft.hop = s.value("hop", job.stft.hop);
        const json sc = e.value("scene", json::object());
        job.scene.n_sources = sc.value("n_sources", std::size_t{2});
        job.scene.n_mics = sc.value("n_mics", std::size_t{2});
        job.scene.duration_s = sc.value("duration_s", 3.0);
        job.scene.seed = sc.value("seed", std::uint64_t{0});
        if (sc.contains("noise_snr_db") && !sc["noise_snr_db"].is_null())
            job.scene.noise_snr_db = sc["noise_snr_db"].get<double>();
    } catch (const json::exception& ex) {
        throw gsmfast::FormatError(std::string("grid entry: ") + ex.what());
    }
    job.stft.validate();
    job.cfg.validate(job.scene.n_mics);
    job.hash = gsmfast::config_hash(
        gsmfast::experiment_json(job.cfg, job.stft, gsmfast::scene_to_json(job.scene)));
    return job;
}

int cmd_bench(const BenchArgs& a) {
    std::ifstream in(a.grid);
    if (!in)
        throw gsmfast::FileNotFound("cannot open grid spec " + a.grid);
    json grid;
    try {
        grid = json::parse(in);
    } catch (const json::exception& e) {
        throw gsmfast::FormatError(std::string("grid spec: ") + e.what());
    }
    if (!grid.is_array())
        throw gsmfast::FormatError("grid spec must be a JSON list of configs");

    std::vector<BenchJob> jobs;
    std::set<std::string> seen;
    for (const auto& e : grid) {
        auto job = parse_bench_entry(e);
        if (seen.insert(job.hash).second)
            jobs.push_back(std::move(job));
        else
            std::cerr << "skipping duplicate config " << job.hash << '\n';
    }

    std::vector<gsmfast::SeparationReport> reports(jobs.size());
    std::vector<std::string> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                const auto& j = jobs[i];
                const auto scene =
                    gsmfast::synth_scene(j.scene.n_sources, j.scene.n_mics, j.scene.duration_s,
                                         j.scene.seed, j.scene.noise_snr_db);
                gsmfast::RunOptions opts;
                opts.warn = [&](const std::string& msg) {
                    std::lock_guard lock(log_mutex);
                    std::cerr << j.hash << ": " << msg << '\n';
                };
                reports[i] = gsmfast::run_experiment(scene, j.cfg, j.stft, opts);
                std::lock_guard lock(log_mutex);
                std::cerr << "done " << j.hash << "  mean SI-SDR " << reports[i].mean_si_sdr
                          << " dB\n";
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(a.jobs, jobs.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t)
        pool.emplace_back(worker);
    for (auto& t : pool)
        t.join();
    for (std::size_t i = 0; i < jobs.size(); ++i)
        if (!errors[i].empty())
            throw gsmfast::Error("config " + jobs[i].hash + " failed: " + errors[i]);

    if (!a.report_dir.empty())
        for (const auto& r : reports)
            write_json(fs::path(a.report_dir) / (r.config_hash + ".json"),
                       gsmfast::report_to_json(r));
    if (a.out == "-") {
        gsmfast::write_csv(std::cout, reports);
    } else {
        const fs::path p(a.out);
        if (p.has_parent_path())
            fs::create_directories(p.parent_path());
        std::ofstream out(p);
        if (!out)
            throw gsmfast::IoError("cannot write " + a.out);
        gsmfast::write_csv(out, reports);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GSM-FastMNMF blind source separation"};
    app.require_subcommand(1);

    ModelOptions model;
    SeparateArgs sep;
    auto* separate = app.add_subcommand("separate", "Separate a multichannel WAV file");
    separate->add_option("input", sep.input, "Mixture WAV")->required()->check(CLI::ExistingFile);
    add_model_options(separate, model);
    separate->add_option("--out-dir", sep.out_dir, "Output directory")->capture_default_str();
    separate->add_option("--report", sep.report, "Report path (default: <out-dir>/report.json)");
    separate->add_flag("--images", sep.images, "Also write multichannel source images");
    separate->add_option("--checkpoint-every", sep.checkpoint_every,
                         "Write <out-dir>/checkpoint.json every n iterations");
    separate->add_option("--resume", sep.resume, "Start from a checkpoint")
        ->check(CLI::ExistingFile);
    separate->add_flag("-q,--quiet", sep.quiet, "No progress output");

    SynthArgs syn;
    auto* synth = app.add_subcommand("synth", "Write a synthetic scene");
    synth->add_option("--sources", syn.sources, "Number of sources")
        ->check(CLI::Range(1, 8))
        ->capture_default_str();
    synth->add_option("--mics", syn.mics, "Number of microphones")
        ->check(CLI::Range(1, 8))
        ->capture_default_str();
    synth->add_option("--duration", syn.duration, "Seconds")
        ->check(CLI::Range(1.0, 3600.0))
        ->capture_default_str();
    synth->add_option("--seed", syn.seed, "Scene seed")->capture_default_str();
    synth->add_option("--snr", syn.snr, "Diffuse noise SNR in dB");
    synth->add_option("--out-dir", syn.out_dir, "Output directory")->capture_default_str();

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Permutation-resolved SI-SDR");
    evaluate->add_option("--estimates", ev.estimates, "Estimated source WAVs")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate->add_option("--references", ev.references, "Reference WAVs")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate->add_option("--mixture", ev.mixture, "Mixture WAV for the input SI-SDR")
        ->check(CLI::ExistingFile);
    evaluate->add_option("--report", ev.report, "JSON output path (default: stdout)");

    BenchArgs bn;
    auto* bench = app.add_subcommand("bench", "Run a grid of synthetic experiments");
    bench->add_option("grid", bn.grid, "JSON list of configs")->required();
    bench->add_option("--out", bn.out, "CSV path, - for stdout")->capture_default_str();
    bench->add_option("--report-dir", bn.report_dir, "Write one JSON report per config");
    bench->add_option("-j,--jobs", bn.jobs, "Worker threads")
        ->check(CLI::Range(std::size_t{1}, std::size_t{256}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*separate)
            return cmd_separate(sep, model);
        if (*synth)
            return cmd_synth(syn);
        if (*evaluate)
            return cmd_evaluate(ev);
        return cmd_bench(bn);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
