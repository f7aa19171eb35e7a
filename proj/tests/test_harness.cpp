#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gsmfast/harness.hpp"

using namespace gsmfast;

namespace {

double power(std::span<const double> x) {
    double e = 0.0;
    for (double v : x)
        e += v * v;
    return e;
}

SeparationConfig short_config(const GsmVariant& v, std::size_t iters) {
    SeparationConfig c;
    c.variant = v;
    c.n_bases = 2;
    c.iterations = iters;
    c.seed = 3;
    return c;
}

RunOptions quiet() {
    RunOptions o;
    o.warn = [](const std::string&) {};
    return o;
}

} // namespace

TEST(Scene, SingleSourceMixtureIsItsImage) {
    const auto s = synth_scene(1, 2, 1.0, 1);
    ASSERT_EQ(s.images.size(), 1u);
    EXPECT_FALSE(s.noise.has_value());
    for (std::size_t m = 0; m < 2; ++m) {
        const auto a = s.mixture.channel(m), b = s.images[0].channel(m);
        for (std::size_t i = 0; i < a.size(); ++i)
            EXPECT_EQ(a[i], b[i]);
    }
}

TEST(Scene, MixtureIsSumOfImagesAndNoise) {
    const auto s = synth_scene(2, 3, 1.0, 2, 10.0);
    ASSERT_TRUE(s.noise.has_value());
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t i = 0; i < s.mixture.frames(); ++i) {
            const double sum = s.images[0].channel(m)[i] + s.images[1].channel(m)[i] +
                               s.noise->channel(m)[i];
            EXPECT_NEAR(s.mixture.channel(m)[i], sum, 1e-12);
        }
}

TEST(Scene, NoiseMatchesRequestedSnr) {
    const auto s = synth_scene(2, 2, 1.0, 3, 0.0);
    double src = 0.0;
    for (const auto& img : s.images)
        src += power(img.samples.flat());
    const double nse = power(s.noise.value().samples.flat());
    EXPECT_NEAR(nse / src, 1.0, 1e-6);
}

TEST(Scene, Deterministic) {
    const auto a = synth_scene(2, 2, 1.0, 4);
    const auto b = synth_scene(2, 2, 1.0, 4);
    const auto c = synth_scene(2, 2, 1.0, 5);
    EXPECT_TRUE(a.mixture.samples == b.mixture.samples);
    EXPECT_FALSE(a.mixture.samples == c.mixture.samples);
}

TEST(Scene, ShapeAndReferences) {
    const auto s = synth_scene(2, 4, 1.5, 6, std::nullopt, 8000);
    EXPECT_EQ(s.mixture.channels(), 4u);
    EXPECT_EQ(s.mixture.frames(), 12000u);
    EXPECT_EQ(s.mixture.sample_rate, 8000u);
    const auto r = s.references();
    ASSERT_EQ(r.size(), 2u);
    const auto c = s.images[1].channel(0);
    EXPECT_TRUE(std::equal(r[1].begin(), r[1].end(), c.begin()));
    for (std::size_t n = 0; n < 2; ++n) {
        double g = 0.0;
        for (double v : s.spec.gains[n])
            g += v * v;
        EXPECT_NEAR(g, 1.0, 1e-12);
    }
}

TEST(Scene, InvalidArguments) {
    EXPECT_THROW(synth_scene(0, 2, 1.0, 0), InvalidArgument);
    EXPECT_THROW(synth_scene(3, 2, 1.0, 0), InvalidArgument);
    EXPECT_THROW(synth_scene(2, 9, 1.0, 0), InvalidArgument);
    EXPECT_THROW(synth_scene(2, 2, 0.5, 0), InvalidArgument);
    EXPECT_THROW(synth_scene(2, 2, 1.0, 0, std::nan("")), InvalidArgument);
}

TEST(Experiment, ZeroIterationsStillScores) {
    const auto s = synth_scene(2, 2, 1.0, 7);
    const auto r = run_experiment(s, short_config(make_gaussian(), 0), {}, quiet());
    EXPECT_TRUE(r.ll_trace.empty());
    EXPECT_EQ(r.per_source_metrics.size(), 2u);
    EXPECT_TRUE(std::isfinite(r.mean_si_sdr));
}

TEST(Experiment, ReportsAreWellFormed) {
    const auto s = synth_scene(2, 2, 1.0, 8);
    for (const auto& v : {make_gaussian(), make_nig(15.0, 1.0)}) {
        const auto cfg = short_config(v, 5);
        const auto r = run_experiment(s, cfg, {512, 128}, quiet());
        ASSERT_EQ(r.ll_trace.size(), 5u);
        EXPECT_TRUE(std::isfinite(r.ll_initial));
        EXPECT_EQ(r.monotonicity_violations, 0u);
        EXPECT_LE(r.max_ip_residual, 1e-10);
        EXPECT_EQ(r.seed, 3u);
        EXPECT_EQ(r.config.at("model"), variant_name(v));
        EXPECT_EQ(r.config.at("stft").at("n_fft"), 512);
        EXPECT_EQ(r.config_hash, config_hash(r.config));
        EXPECT_GT(r.runtime_ms, 0.0);
        std::vector<std::size_t> assigned;
        for (const auto& m : r.per_source_metrics)
            assigned.push_back(m.assigned_reference);
        std::sort(assigned.begin(), assigned.end());
        EXPECT_EQ(assigned, (std::vector<std::size_t>{0, 1}));
    }
}

TEST(Serialization, ReportRoundTrip) {
    SeparationReport r;
    r.config = experiment_json(short_config(make_student_t(7.0), 4), {}, nlohmann::json::object());
    r.config_hash = config_hash(r.config);
    r.seed = 11;
    r.ll_trace = {-3.5, -2.25};
    r.per_source_metrics = {{4.5, 1}, {7.25, 0}};
    r.mean_si_sdr = 5.875;
    r.input_si_sdr = 0.5;
    r.runtime_ms = 12.0;
    r.monotonicity_violations = 1;
    r.singular_updates = 2;
    r.max_ip_residual = 1e-14;
    const auto j = report_to_json(r);
    EXPECT_TRUE(j.at("ll_initial").is_null());
    EXPECT_DOUBLE_EQ(j.at("improvement_db").get<double>(), 5.375);
    const auto back = report_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(report_to_json(back), j);
    EXPECT_TRUE(std::isnan(back.ll_initial));
    EXPECT_THROW(report_from_json(nlohmann::json::object()), FormatError);
}

TEST(Serialization, ConfigRoundTrip) {
    for (const auto& v : {make_gaussian(), make_student_t(3.0), make_leptokurtic_gg(0.5),
                          make_gh(-2.0, 4.0, 0.5), make_nig(15.0, 1.0)}) {
        auto c = short_config(v, 17);
        c.rank1 = true;
        c.eps_init = 0.0;
        EXPECT_EQ(config_from_json(config_to_json(c)), c);
    }
    EXPECT_THROW(variant_from_json({{"model", "laplace"}}), InvalidArgument);
    EXPECT_EQ(variant_from_json({{"model", "t"}}), make_student_t(40.0));
}

TEST(Serialization, ConfigHash) {
    EXPECT_EQ(config_hash(nlohmann::json::object()), "08f44b07b5901a25");
    EXPECT_EQ(config_hash(nlohmann::json{{"b", {2, 3}}, {"a", 1}}), "55bed68470220de4");
    const auto a = config_to_json(short_config(make_nig(15.0, 1.0), 10));
    auto b = a;
    EXPECT_EQ(config_hash(a), config_hash(b));
    b["seed"] = 4;
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Csv, HeaderOnlyForEmptyList) {
    std::ostringstream os;
    write_csv(os, {});
    EXPECT_EQ(os.str(), std::string(kCsvHeader) + "\n");
}

TEST(Csv, OneRowPerReport) {
    SeparationReport r;
    r.config = config_to_json(short_config(make_gaussian(), 9));
    r.config_hash = "abc";
    r.mean_si_sdr = 3.0;
    r.input_si_sdr = 1.0;
    std::ostringstream os;
    write_csv(os, {r, r});
    std::istringstream is(os.str());
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line))
        lines.push_back(line);
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[1].rfind("abc,gaussian,2,0,9,0,3,1,2,", 0), 0u) << lines[1];
}
