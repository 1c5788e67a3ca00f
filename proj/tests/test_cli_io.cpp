#include "support.hpp"

#include "townsend/cli_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace townsend;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "townsend_cli_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

int cli(const std::string& args) {
    const std::string cmd = std::string(TOWNSEND_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string footer_value(const std::string& csv, const std::string& key) {
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("# " + key + "=", 0) == 0) return line.substr(key.size() + 3);
    return {};
}

}  // namespace

TEST_CASE("numbers are written with 17 significant digits") {
    CHECK(format_number(0.1) == "0.10000000000000001");
    CHECK(format_number(2.0) == "2");
    CHECK(std::stod(format_number(M_PI)) == M_PI);
}

TEST_CASE("config sections and keys are parsed") {
    RunConfig cfg;
    parse_config(cfg, "# comment\n[geometry]\nd = 2\nn=64\nanode_at = outer\n\n[model]\n; comment\na = 5\n");
    CHECK(cfg.d == 2);
    CHECK(cfg.n == 64);
    CHECK(cfg.anode_at == Electrode::outer);
    CHECK(cfg.model.a == 5.0);
}

TEST_CASE("config errors name the file and line") {
    RunConfig cfg;
    auto message = [&](const std::string& text) {
        try {
            parse_config(cfg, text, "bad.ini");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message("[model]\na = abc\n") == "bad.ini:2: model.a: 'abc' is not a finite number");
    CHECK(message("[nope]\n").rfind("bad.ini:1: unknown section", 0) == 0);
    CHECK(message("[model]\n\nz = 1\n").rfind("bad.ini:3: unknown key 'z'", 0) == 0);
    CHECK(message("a = 1\n").rfind("bad.ini:1: key outside", 0) == 0);
    CHECK(message("[model\n").rfind("bad.ini:1: malformed", 0) == 0);
    CHECK(message("[geometry]\nd = 4\n").rfind("bad.ini:2:", 0) == 0);
}

TEST_CASE("overrides win over the config file") {
    RunConfig cfg;
    parse_config(cfg, "[model]\na = 5\n");
    apply_setting(cfg, "model.a=7");
    apply_setting(cfg, " solver.s0 = 2e-3 ");
    CHECK(cfg.model.a == 7.0);
    CHECK(cfg.s0 == 2e-3);
    CHECK_THROWS_AS(apply_setting(cfg, "model.a"), ConfigError);
    CHECK_THROWS_AS(apply_setting(cfg, "a=1"), ConfigError);
    CHECK_THROWS_AS(apply_setting(cfg, "model.q=1"), ConfigError);
}

TEST_CASE("invalid values are rejected by validation") {
    RunConfig cfg;
    cfg.r_outer = 0.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RunConfig{};
    cfg.cfl = 2.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RunConfig{};
    cfg.model.k_i = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("echoed config reproduces the run byte for byte") {
    RunConfig cfg;
    cfg.n = 40;
    cfg.samples = 30;
    cfg.model.a = 5.0;
    const auto first = cmd_sparking(cfg).table.str();
    RunConfig again;
    parse_config(again, first, "echo.csv");
    CHECK(config_lines(again) == config_lines(cfg));
    CHECK(cmd_sparking(again).table.str() == first);
}

TEST_CASE("no ionization reports no sparking voltage") {
    RunConfig cfg;
    cfg.n = 40;
    cfg.samples = 20;
    cfg.model.a = 0.0;
    const auto csv = cmd_sparking(cfg).table.str();
    CHECK(csv.find("# no sparking voltage\n") != std::string::npos);
    CHECK(csv.find("# roots=0\n") != std::string::npos);
}

TEST_CASE("transport check reports second order") {
    RunConfig cfg;
    const auto t = cmd_transport_check(cfg).table;
    REQUIRE(t.rows.size() == 4);
    CHECK(std::stod(t.rows[1][3]) > 1.8);
    CHECK(std::stod(t.rows[2][3]) > 1.8);
    CHECK(t.rows[3][0] == "homogeneous");
    CHECK(std::stod(t.rows[3][2]) == 0.0);
}

TEST_CASE("command line exit codes") {
    const auto out = scratch("spark.csv");
    const auto bad = scratch("bad.ini");
    {
        std::ofstream f(bad);
        f << "[model]\na = oops\n";
    }
    CHECK(cli("sparking --set geometry.n=30 --set scan.samples=20 --out " + out.string()) == 0);
    CHECK(footer_value(slurp(out), "roots") == "2");
    CHECK(cli("sparking --config " + bad.string()) == 2);
    CHECK(cli("sparking --set model.a=-1") == 2);
    CHECK(cli("sparking --set nonsense") == 2);
    CHECK(cli("frobnicate") == 2);
    CHECK(cli("null-triple --set geometry.n=30 --set branch.lambda_star=0.5") == 3);
}

TEST_CASE("command line output is deterministic and honours --config") {
    const auto a = scratch("a.csv"), b = scratch("b.csv"), c = scratch("c.csv");
    const std::string args = "kappa-scan --set geometry.n=40 --set scan.samples=25 --threads 3 --out ";
    REQUIRE(cli(args + a.string()) == 0);
    REQUIRE(cli(args + b.string()) == 0);
    CHECK(slurp(a) == slurp(b));
    REQUIRE(cli("kappa-scan --threads 1 --config " + a.string() + " --out " + c.string()) == 0);
    CHECK(slurp(a) == slurp(c));
}
