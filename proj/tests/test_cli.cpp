#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ocpfem/app.hpp"
#include "ocpfem/io.hpp"

using namespace ocpfem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result cli(std::vector<std::string> args) {
    args.insert(args.begin(), "ocpfem");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("ocpfem_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

std::vector<std::string> data_lines(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') out.push_back(line);
    return out;
}

}  // namespace

TEST(ParseConfig, Defaults) {
    const RunConfig c = parse_config("");
    EXPECT_EQ(c.gamma, 1.0);
    EXPECT_EQ(c.bound, 0.5);
    EXPECT_EQ(c.schedule, (std::vector<int>{8, 16, 32, 64}));
    EXPECT_EQ(c.control, ControlRule::same);
    EXPECT_EQ(c.tol, 1e-10);
    EXPECT_EQ(c.max_iter, 50);
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.period, 0.03125);
    EXPECT_EQ(c.contrast, 100.0);
}

TEST(ParseConfig, KeysAndComments) {
    const RunConfig c = parse_config("schedule=8,16,32 control=variational\n# comment\nmax_iter=7  # trailing\n");
    EXPECT_EQ(c.schedule, (std::vector<int>{8, 16, 32}));
    EXPECT_EQ(c.control, ControlRule::variational);
    EXPECT_EQ(c.max_iter, 7);
    EXPECT_EQ(parse_config("control=h-squared").control, ControlRule::h_squared);
    EXPECT_EQ(parse_config("command=lod-study").command, Command::lod_study);
}

TEST(ParseConfig, Errors) {
    try {
        validate(parse_config("gamma=0"));
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("gamma must be in (0,1]"), std::string::npos);
    }
    try {
        parse_config("colour=red");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("unknown key 'colour'"), std::string::npos);
    }
    EXPECT_THROW(parse_config("gamma"), ConfigError);
    EXPECT_THROW(parse_config("gamma=abc"), ConfigError);
    EXPECT_THROW(parse_config("schedule=8,x"), ConfigError);
    EXPECT_THROW(parse_config("control=random"), ConfigError);
    EXPECT_THROW(validate(parse_config("tol=-1")), ConfigError);
    EXPECT_THROW(validate(parse_config("max_iter=0")), ConfigError);
}

TEST(ParseConfig, OverridesWin) {
    const RunConfig c = parse_config("gamma=0.5\nn=8", {{"gamma", "0.25"}});
    EXPECT_EQ(c.gamma, 0.25);
    EXPECT_EQ(c.n, 8);
}

TEST(FormatConfig, RoundTrips) {
    RunConfig c = parse_config("gamma=0.1 schedule=4,8 control=fixed-n control_n=2 seed=7");
    std::string text;
    for (const auto& line : format_config(c)) text += line + '\n';
    const RunConfig back = parse_config(text);
    EXPECT_EQ(format_config(back), format_config(c));
    EXPECT_EQ(back.gamma, 0.1);
    EXPECT_EQ(back.control, ControlRule::fixed_n);
}

TEST(Cli, StudyDefaultsWritesFourRows) {
    const auto dir = temp_dir();
    const auto csv = dir / "table.csv";
    const Result r = cli({"study", "--output", csv.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string text = slurp(csv);
    const auto lines = data_lines(text);
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_EQ(lines[0], "h,rho,err_y_l2,err_u_l2,err_p_l2,err_y_a,err_p_a,thm41_ratio,thm43_ratio,iters");
    EXPECT_NE(text.find("# gamma=1\n"), std::string::npos);
    EXPECT_NE(text.find("# schedule=8,16,32,64\n"), std::string::npos);
    EXPECT_NE(text.find("# seed=42\n"), std::string::npos);
    EXPECT_NE(text.find("# rate err_u_l2="), std::string::npos);
    EXPECT_NE(r.out.find("rate err_u_l2"), std::string::npos);
}

TEST(Cli, Deterministic) {
    const auto dir = temp_dir();
    const auto path = dir / "table.csv";
    ASSERT_EQ(cli({"study", "--schedule", "4,8,16", "--output", path.string()}).code, 0);
    const std::string first = slurp(path);
    std::filesystem::remove(path);
    ASSERT_EQ(cli({"study", "--schedule", "4,8,16", "--output", path.string()}).code, 0);
    EXPECT_EQ(slurp(path), first);
    EXPECT_FALSE(first.empty());
}

TEST(Cli, ConfigErrorsExitTwo) {
    const auto dir = temp_dir();
    const auto cfg = dir / "bad.cfg";
    write_file(cfg, "gamma 1\n");
    const Result bad = cli({"study", "--config", cfg.string()});
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.err.find("expected key=value"), std::string::npos);
    EXPECT_EQ(cli({"study", "--gamma", "0"}).code, 2);
    EXPECT_EQ(cli({"study", "--gamma", "2"}).code, 2);
    EXPECT_EQ(cli({"study", "--config", (dir / "missing.cfg").string()}).code, 2);
    EXPECT_EQ(cli({"frobnicate"}).code, 2);
    EXPECT_EQ(cli({}).code, 2);
    EXPECT_EQ(cli({"solve", "--no-such-flag", "1"}).code, 2);
}

TEST(Cli, FlagsOverrideConfigFile) {
    const auto dir = temp_dir();
    const auto cfg = dir / "run.cfg";
    const auto csv = dir / "t.csv";
    write_file(cfg, "schedule=4,8\ngamma=0.5\n");
    ASSERT_EQ(cli({"study", "--config", cfg.string(), "--gamma", "0.25", "--output", csv.string()}).code, 0);
    const std::string text = slurp(csv);
    EXPECT_NE(text.find("# gamma=0.25\n"), std::string::npos);
    EXPECT_NE(text.find("# schedule=4,8\n"), std::string::npos);
    EXPECT_EQ(data_lines(text).size(), 3u);
}

TEST(Cli, SolverFailureExitsOneWithHistory) {
    const Result r = cli({"solve", "--gamma", "0.1", "--bound", "5", "--n", "16", "--max-iter", "1"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("residual history:"), std::string::npos);
    const Result ok = cli({"solve", "--gamma", "0.1", "--bound", "5", "--n", "16"});
    EXPECT_EQ(ok.code, 0) << ok.err;
    EXPECT_NE(ok.out.find("converged in 2 iterations"), std::string::npos);
}

TEST(Cli, SolveWritesFields) {
    const auto dir = temp_dir();
    const auto prefix = (dir / "m1").string();
    const auto json = dir / "solve.json";
    ASSERT_EQ(cli({"solve", "--n", "4", "--fields", prefix, "--json", json.string()}).code, 0);
    const std::string y = slurp(prefix + "_y.csv");
    EXPECT_NE(y.find("vertex_index,x,y,value\n"), std::string::npos);
    EXPECT_EQ(data_lines(y).size(), 26u);
    EXPECT_EQ(data_lines(slurp(prefix + "_u.csv")).size(), 33u);
    EXPECT_NE(slurp(json).find("\"iterations\""), std::string::npos);
}

TEST(Cli, DumpMeshFormat) {
    const Result r = cli({"dump-mesh", "--n", "2"});
    ASSERT_EQ(r.code, 0);
    std::istringstream in(r.out);
    std::string line;
    int vertices = 0, cells = 0;
    bool blank = false;
    while (std::getline(in, line)) {
        if (line.empty()) {
            blank = true;
            continue;
        }
        (blank ? cells : vertices)++;
    }
    EXPECT_EQ(vertices, 9);
    EXPECT_EQ(cells, 8);
}

TEST(Cli, CheckTheoremsPasses) {
    const Result r = cli({"check-theorems", "--schedule", "4,8,16"});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_NE(r.out.find("PASS thm41 boundedness"), std::string::npos);
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(cli({"--help"}).code, 0); }

TEST(CliBinary, StudyThroughExecutable) {
    const auto dir = temp_dir();
    const auto csv = dir / "bin.csv";
    const std::string cmd = std::string(OCPFEM_CLI_PATH) + " study --schedule 4,8 --output " + csv.string() +
                            " > " + (dir / "stdout.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    EXPECT_EQ(status, 0);
    EXPECT_EQ(data_lines(slurp(csv)).size(), 3u);
    const std::string bad = std::string(OCPFEM_CLI_PATH) + " study --gamma 0 > /dev/null 2>&1";
    const int bad_status = std::system(bad.c_str());
    ASSERT_TRUE(WIFEXITED(bad_status));
    EXPECT_EQ(WEXITSTATUS(bad_status), 2);
}
