#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "adaptreg/cli.hpp"

namespace fs = std::filesystem;
using namespace adaptreg;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args) {
    std::vector<const char*> argv{"adaptreg_cli"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("adaptreg_cli_" + std::to_string(::getpid()) + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path path(const std::string& name) const { return dir_ / name; }

    /// synth with a small problem; returns the output directory
    fs::path synth(const std::string& name, const std::string& extra = "", std::size_t n = 16) {
        spit(path(name + ".cfg"), "[problem]\np = 1\nnu = 0.5\nn = " + std::to_string(n) + "\n" + extra);
        const auto r = run_cli({"synth", "--config", path(name + ".cfg").string(), "--out", path(name).string()});
        EXPECT_EQ(r.code, 0) << r.err;
        return path(name);
    }

    fs::path dir_;
};

std::size_t count_lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_F(CliTest, SynthWritesExpectedFiles) {
    const auto out = synth("s");
    const auto data = slurp(out / "data.csv");
    EXPECT_EQ(count_lines(data), 17u);
    // d_m0 = 3 for n = 16 and p = 1
    EXPECT_EQ(data.substr(0, data.find('\n')), "t,y,Tx0,T_1,T_2,T_3");
    EXPECT_EQ(slurp(out / "truth.csv").substr(0, 11), "j,lambda,x0");
    const auto manifest = slurp(out / "manifest.txt");
    EXPECT_NE(manifest.find("command: synth"), std::string::npos);
    EXPECT_NE(manifest.find("  data.csv\n"), std::string::npos);
    EXPECT_NE(manifest.find("n = 16"), std::string::npos);
}

TEST_F(CliTest, SynthIsDeterministic) {
    const auto a = synth("a"), b = synth("b");
    EXPECT_EQ(slurp(a / "data.csv"), slurp(b / "data.csv"));
    EXPECT_EQ(slurp(a / "truth.csv"), slurp(b / "truth.csv"));
    const auto r = run_cli({"synth", "--config", path("a.cfg").string(), "--out", path("c").string(), "--seed", "2"});
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(slurp(a / "data.csv"), slurp(path("c") / "data.csv"));
    EXPECT_NE(slurp(path("c") / "manifest.txt").find("seed: 2"), std::string::npos);
}

TEST_F(CliTest, SynthWithoutNoiseReproducesTheSignal) {
    const auto out = synth("s", "sigma = 0\n");
    const auto table = read_csv_file((out / "data.csv").string());
    EXPECT_EQ(table.values(table.column("y")), table.values(table.column("Tx0")));
}

TEST_F(CliTest, SelectSingleCandidate) {
    const auto out = synth("s", "", 64);
    spit(path("sel.cfg"), "[family]\nkind = tikhonov\ncount = 1\n[penalty]\nsigma2 = 0.01\n");
    const auto r = run_cli({"select", "--config", path("sel.cfg").string(), "--data", (out / "data.csv").string(),
                            "--out", path("o").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto sel = slurp(path("o") / "selection.csv");
    EXPECT_EQ(count_lines(sel), 2u);
    EXPECT_NE(sel.find(",1\n"), std::string::npos);
    EXPECT_NE(slurp(path("o") / "summary.txt").find("chosen = 0"), std::string::npos);
}

TEST_F(CliTest, SelectProjectionAgreesWithThresholding) {
    const auto out = synth("s", "", 128);
    spit(path("sel.cfg"), "[family]\nkind = projection\n[penalty]\nsigma2 = 0.01\nL = auto\n");
    const auto r = run_cli({"select", "--config", path("sel.cfg").string(), "--data", (out / "data.csv").string(),
                            "--out", path("o").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(slurp(path("o") / "summary.txt").find("agreement = true"), std::string::npos);
    const auto est = read_csv_file((path("o") / "estimate.csv").string());
    EXPECT_EQ(est.rows.size(), 6u);  // d_m0 for n = 128, p = 1
}

TEST_F(CliTest, SelectRejectsMalformedData) {
    spit(path("bad.csv"), "t,y,T_1\n0.25,1,1\n0.75,oops,1\n");
    spit(path("sel.cfg"), "[penalty]\nsigma2 = 0.01\n");
    const auto r = run_cli({"select", "--config", path("sel.cfg").string(), "--data", path("bad.csv").string(),
                            "--out", path("o").string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("row 3"), std::string::npos) << r.err;
}

TEST_F(CliTest, SelectNeedsKnownNoiseVariance) {
    const auto out = synth("s");
    spit(path("sel.cfg"), "[family]\nkind = tikhonov\n");
    const auto r = run_cli({"select", "--config", path("sel.cfg").string(), "--data", (out / "data.csv").string(),
                            "--out", path("o").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("assumption AN"), std::string::npos) << r.err;
}

TEST_F(CliTest, BadConfigLineIsReported) {
    spit(path("bad.cfg"), "[problem]\np = 1\nbogus = 3\n");
    auto r = run_cli({"synth", "--config", path("bad.cfg").string(), "--out", path("o").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 3: unknown key 'problem.bogus'"), std::string::npos) << r.err;
    spit(path("bad2.cfg"), "[problem]\np = one\n");
    r = run_cli({"synth", "--config", path("bad2.cfg").string(), "--out", path("o").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
    r = run_cli({"synth", "--config", path("missing.cfg").string()});
    EXPECT_EQ(r.code, 2);
    r = run_cli({});
    EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, RatesNeedFourSampleSizes) {
    spit(path("r.cfg"), "[experiment]\nn_grid = 64, 128, 256\nreplications = 2\n");
    const auto r = run_cli({"rates", "--config", path("r.cfg").string(), "--out", path("o").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("4 distinct"), std::string::npos) << r.err;
}

TEST_F(CliTest, RatesWritesFits) {
    spit(path("r.cfg"), "[experiment]\nn_grid = 256, 512, 1024, 2048\nreplications = 10\nfamilies = tikhonov\n"
                        "[check]\nwindow = 10\n");
    const auto r = run_cli({"rates", "--config", path("r.cfg").string(), "--out", path("o").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rates = slurp(path("o") / "rates.csv");
    EXPECT_EQ(rates.substr(0, rates.find('\n')), "method,slope,intercept,half_width,theoretical,window,within");
    EXPECT_NE(rates.find(",-0.4,10,true"), std::string::npos) << rates;
}

TEST_F(CliTest, RiskWithOneReplicationWritesNA) {
    spit(path("r.cfg"), "[experiment]\nn_grid = 64, 128\nreplications = 1\n");
    const auto r = run_cli({"risk", "--config", path("r.cfg").string(), "--out", path("o").string()});
    ASSERT_TRUE(r.code == 0 || r.code == 4) << r.err;
    EXPECT_NE(slurp(path("o") / "risk.csv").find(",NA,"), std::string::npos);
    EXPECT_NE(slurp(path("o") / "plot.dat").find("# log_n log_risk_tikhonov log_risk_projection"), std::string::npos);
}

TEST_F(CliTest, ConcentrationSmallRun) {
    spit(path("c.cfg"), "[concentration]\nmatrices = identity2, harmonic3\nreplications = 500\nu = 0, 1, 4\n"
                        "[identity]\ntrials = 10\n");
    const auto r = run_cli({"concentration", "--config", path("c.cfg").string(), "--out", path("o").string()});
    ASSERT_EQ(r.code, 0) << r.err << r.out;
    for (const char* f : {"tail_identity2_L0.csv", "tail_harmonic3_L1.csv", "moment.csv", "identity.csv",
                          "an_moments.csv", "summary.txt", "manifest.txt"})
        EXPECT_TRUE(fs::exists(path("o") / f)) << f;
    const auto an = slurp(path("o") / "an_moments.csv");
    const auto q1 = an.substr(an.find("\n1,") + 1);
    EXPECT_EQ(q1.substr(0, 16), "1,0.797884560802");  // E|Z| = sqrt(2/pi)
    EXPECT_EQ(q1.substr(q1.find(",0.5,"), 11), ",0.5,false\n");
    spit(path("c2.cfg"), "[concentration]\nmatrices = nonsense\n");
    EXPECT_EQ(run_cli({"concentration", "--config", path("c2.cfg").string(), "--out", path("o2").string()}).code, 2);
}

TEST_F(CliTest, DiagnosticsOnShippedConfig) {
    const auto r = run_cli({"diagnostics", "--config", std::string(ADAPTREG_CONFIG_DIR) + "/diagnostics.cfg", "--out",
                            path("o").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto d = slurp(path("o") / "diagnostics.txt");
    EXPECT_NE(d.find("k1 = 1\n"), std::string::npos) << d;
    EXPECT_NE(d.find("sv_ok = 1"), std::string::npos);
}

TEST_F(CliTest, ShippedConfigsParse) {
    for (const char* name : {"synth", "select", "risk", "rates", "concentration", "diagnostics"}) {
        const auto cfg = Config::load(std::string(ADAPTREG_CONFIG_DIR) + "/" + name + ".cfg");
        EXPECT_FALSE(cfg.echo().empty()) << name;
    }
    EXPECT_EQ(Config::load(std::string(ADAPTREG_CONFIG_DIR) + "/rates.cfg").get_double("problem.nu", 0), 0.5);
}

TEST_F(CliTest, BinaryExitCodes) {
    const std::string bin = ADAPTREG_CLI_PATH;
    auto status = [](const std::string& cmd) {
        const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    EXPECT_EQ(status(bin + " --help"), 0);
    EXPECT_EQ(status(bin + " nosuchcommand"), 2);
    EXPECT_EQ(status(bin + " synth --config " + std::string(ADAPTREG_CONFIG_DIR) + "/synth.cfg --out " +
                     path("bin").string()),
              0);
    EXPECT_TRUE(fs::exists(path("bin") / "data.csv"));
}
