#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "gsmfast/harness.hpp"

#ifdef GSMFAST_CLI_PATH

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Runs the CLI with the given arguments, capturing stdout.
Result cli(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt";
    const std::string cmd = std::string("\"") + GSMFAST_CLI_PATH + "\" " + args + " > \"" +
                            out.string() + "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

class Cli : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("gsmfast_cli_" + std::string(::testing::UnitTest::GetInstance()
                                                 ->current_test_info()
                                                 ->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    void write(const std::string& name, const std::string& text) {
        std::ofstream(dir_ / name) << text;
    }

    fs::path dir_;
};

} // namespace

TEST_F(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(cli("", dir_).code, 1); }

TEST_F(Cli, BetaOutsideLeptokurticRange) {
    const auto r = cli("synth --out-dir \"" + (dir_ / "s").string() + "\"", dir_);
    ASSERT_EQ(r.code, 0);
    const auto in = (dir_ / "s" / "mixture.wav").string();
    EXPECT_EQ(cli("separate \"" + in + "\" --model gg --beta 2.5", dir_).code, 1);
    EXPECT_EQ(cli("separate \"" + in + "\" --model nig --rho 0", dir_).code, 1);
    EXPECT_EQ(cli("separate \"" + in + "\" --model laplace", dir_).code, 1);
}

TEST_F(Cli, MissingInputFile) {
    EXPECT_EQ(cli("separate \"" + (dir_ / "nope.wav").string() + "\"", dir_).code, 1);
}

TEST_F(Cli, EmptyGridGivesHeaderOnly) {
    write("grid.json", "[]");
    const auto r = cli("bench \"" + (dir_ / "grid.json").string() + "\"", dir_);
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, std::string(gsmfast::kCsvHeader) + "\n");
}

TEST_F(Cli, MalformedGridIsRuntimeError) {
    write("grid.json", "{\"model\": \"nig\"}");
    EXPECT_EQ(cli("bench \"" + (dir_ / "grid.json").string() + "\"", dir_).code, 2);
}

TEST_F(Cli, BenchDeduplicatesConfigs) {
    const std::string entry = R"({"model": "gaussian", "n_bases": 2, "iterations": 2,
        "stft": {"n_fft": 256, "hop": 64}, "scene": {"duration_s": 1.0, "seed": 5}})";
    write("grid.json", "[" + entry + "," + entry + "]");
    const auto r = cli("bench \"" + (dir_ / "grid.json").string() + "\" --report-dir \"" +
                           dir_.string() + "\"",
                       dir_);
    ASSERT_EQ(r.code, 0) << slurp(dir_ / "stderr.txt");
    std::istringstream is(r.out);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line))
        lines.push_back(line);
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[0], gsmfast::kCsvHeader);
    const auto hash = lines[1].substr(0, lines[1].find(','));
    const auto rep = gsmfast::report_from_json(nlohmann::json::parse(slurp(dir_ / (hash + ".json"))));
    EXPECT_EQ(rep.ll_trace.size(), 2u);
}

TEST_F(Cli, BenchBasisGridGivesOneRowPerConfig) {
    std::string grid = "[";
    for (int K : {2, 4, 8, 16, 32})
        grid += std::string(K == 2 ? "" : ",") + R"({"model": "nig", "iterations": 1, "n_bases": )" +
                std::to_string(K) + R"(, "stft": {"n_fft": 256, "hop": 64}, "scene": {"duration_s": 1.0}})";
    write("grid.json", grid + "]");
    const auto csv = dir_ / "out" / "bench.csv";
    const auto r = cli("bench \"" + (dir_ / "grid.json").string() + "\" -j 2 --out \"" +
                           csv.string() + "\"",
                       dir_);
    ASSERT_EQ(r.code, 0) << slurp(dir_ / "stderr.txt");
    std::istringstream is(slurp(csv));
    std::string line;
    std::vector<std::string> bases;
    std::getline(is, line);
    while (std::getline(is, line)) {
        std::stringstream cells(line);
        std::string cell;
        for (int i = 0; i < 3; ++i)
            std::getline(cells, cell, ',');
        bases.push_back(cell);
    }
    EXPECT_EQ(bases, (std::vector<std::string>{"2", "4", "8", "16", "32"}));
}

TEST_F(Cli, SynthSeparateEvaluate) {
    const auto scene = dir_ / "scene", sep = dir_ / "sep";
    ASSERT_EQ(cli("synth --sources 2 --mics 2 --duration 1 --seed 3 --out-dir \"" +
                      scene.string() + "\"",
                  dir_)
                  .code,
              0);
    const auto meta = nlohmann::json::parse(slurp(scene / "scene.json"));
    EXPECT_EQ(meta.at("n_sources"), 2);

    const auto r = cli("separate \"" + (scene / "mixture.wav").string() +
                           "\" --model nig --iters 3 -K 2 --n-fft 512 --hop 128 -q --images "
                           "--checkpoint-every 2 --out-dir \"" +
                           sep.string() + "\"",
                       dir_);
    ASSERT_EQ(r.code, 0) << slurp(dir_ / "stderr.txt");
    for (const char* f : {"source_1.wav", "source_2.wav", "image_1.wav", "image_2.wav",
                          "report.json", "checkpoint.json"})
        EXPECT_TRUE(fs::exists(sep / f)) << f;
    const auto report = nlohmann::json::parse(slurp(sep / "report.json"));
    EXPECT_EQ(report.at("ll_trace").size(), 3u);
    EXPECT_EQ(report.at("config").at("model"), "nig");
    EXPECT_EQ(gsmfast::read_wav(sep / "source_1.wav").channels(), 1u);
    EXPECT_EQ(gsmfast::read_wav(sep / "image_1.wav").channels(), 2u);

    const auto resumed = cli("separate \"" + (scene / "mixture.wav").string() +
                                 "\" --model nig --iters 1 -K 2 --n-fft 512 --hop 128 -q "
                                 "--resume \"" +
                                 (sep / "checkpoint.json").string() + "\" --out-dir \"" +
                                 (dir_ / "sep2").string() + "\"",
                             dir_);
    EXPECT_EQ(resumed.code, 0) << slurp(dir_ / "stderr.txt");

    const auto ev = cli("evaluate --estimates \"" + (sep / "source_1.wav").string() + "\" \"" +
                            (sep / "source_2.wav").string() + "\" --references \"" +
                            (scene / "reference_1.wav").string() + "\" \"" +
                            (scene / "reference_2.wav").string() + "\" --mixture \"" +
                            (scene / "mixture.wav").string() + "\"",
                        dir_);
    ASSERT_EQ(ev.code, 0) << slurp(dir_ / "stderr.txt");
    const auto j = nlohmann::json::parse(ev.out);
    EXPECT_EQ(j.at("per_source").size(), 2u);
    EXPECT_TRUE(j.contains("improvement_db"));
    EXPECT_NEAR(j.at("improvement_db").get<double>(),
                j.at("mean_si_sdr").get<double>() - j.at("input_si_sdr").get<double>(), 1e-9);
}

TEST_F(Cli, EvaluateCountMismatch) {
    ASSERT_EQ(cli("synth --duration 1 --out-dir \"" + dir_.string() + "\"", dir_).code, 0);
    const auto ref = (dir_ / "reference_1.wav").string();
    EXPECT_EQ(cli("evaluate --estimates \"" + ref + "\" \"" + ref + "\" --references \"" + ref +
                      "\"",
                  dir_)
                  .code,
              1);
}

#endif
