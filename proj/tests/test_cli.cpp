#include "qlab/cli.hpp"

#include <doctest.h>

#include <json.hpp>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qlab;
namespace fs = std::filesystem;

namespace {

const char* kConfig = R"({
  "model": {"r0": 0.8, "r1": [0], "R2": [[0.2]], "a": [0.1], "A": [[0]], "b": [0], "B": [[-1]],
            "Lambda": [[0.2]], "Sigma": [[0.2]]},
  "y0": [0.3],
  "utilities": {
    "pareto": {"type": "pareto", "weights": [0.5, 0.5], "exponents": [-2, -1]},
    "power": {"type": "power", "p": -1},
    "log": {"type": "log"}
  },
  "pairs": {
    "acceptance": {"general": "pareto", "reference": "power"},
    "degenerate": {"general": "power", "reference": "power"}
  },
  "experiment": {"pair": "acceptance", "x": 10, "horizons": [2, 4, 6, 8, 10], "paths": 2000,
                 "steps_per_unit": 10, "seed": 7}
})";

struct Scratch {
    fs::path dir;
    Scratch() {
        dir = fs::temp_directory_path() / ("qlab_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(dir / name) << text;
        return (dir / name).string();
    }
    std::string read(const std::string& rel) const {
        std::ifstream in(dir / rel);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
};

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "qlab");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string with_model(const std::string& key, const std::string& value) {
    auto j = nlohmann::ordered_json::parse(kConfig);
    j["model"][key] = nlohmann::ordered_json::parse(value);
    return j.dump();
}

}  // namespace

TEST_CASE("validate exit codes") {
    Scratch s;
    CHECK(run({"--config", s.write("ok.json", kConfig), "validate"}).code == kExitPass);

    const auto bad = run({"validate", "--config", s.write("unstable.json", with_model("B", "[[1]]"))});
    CHECK(bad.code == kExitFail);
    CHECK(bad.out.find("(iv)") != std::string::npos);

    const auto broken = run({"--config", s.write("broken.json", "{\"model\": [1, 2,,]}"), "validate"});
    CHECK(broken.code == kExitParse);
    CHECK(broken.err.find("broken.json:1:") != std::string::npos);

    CHECK(run({"--config", (s.dir / "missing.json").string(), "validate"}).code == kExitParse);
    CHECK(run({"--config", s.write("dims.json", with_model("A", "[[0, 1]]")), "validate"}).code == kExitParse);
    CHECK(run({"validate"}).code == kExitParse);
    CHECK(run({"frobnicate"}).code == kExitParse);
}

TEST_CASE("bond command") {
    Scratch s;
    const auto cfg = s.write("c.json", kConfig);
    const auto r = run({"--config", cfg, "--out", s.dir.string(), "bond", "--horizons", "0,1"});
    CHECK(r.code == kExitPass);
    CHECK(r.out.rfind("T,closed_form\n0,1\n", 0) == 0);

    const auto flat = s.write("flat.json", with_model("R2", "[[0]]"));
    const auto f = run({"--config", flat, "--out", s.dir.string(), "bond", "--horizons", "1"});
    const auto pos = f.out.find("\n1,");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stod(f.out.substr(pos + 3)) == doctest::Approx(std::exp(-0.8)).epsilon(1e-12));

    const auto mc = run({"--config", cfg, "--out", s.dir.string(), "--paths", "20000", "bond", "--horizons", "0,2"});
    CHECK(mc.code == kExitPass);
    std::istringstream rows(mc.out);
    std::string line;
    std::getline(rows, line);
    CHECK(line == "T,closed_form,mc_mean,mc_se");
    std::getline(rows, line);
    CHECK(line == "0,1,1,0");
    std::getline(rows, line);
    double T, closed, mean, se;
    char c;
    std::istringstream(line) >> T >> c >> closed >> c >> mean >> c >> se;
    CHECK(std::abs(closed - mean) <= 3.0 * se);
    CHECK(fs::exists(s.dir / "manifest.json"));
}

TEST_CASE("portfolio command") {
    Scratch s;
    const auto cfg = s.write("c.json", kConfig);
    const auto log = run({"--config", cfg, "--out", s.dir.string(), "portfolio", "--utility", "log", "--T", "2"});
    CHECK(log.code == kExitPass);
    CHECK(log.out.find("hedging,0,0,0") != std::string::npos);

    const auto one = run({"--config", cfg, "--out", s.dir.string(), "portfolio", "--utility", "power", "--x", "1"});
    const auto two = run({"--config", cfg, "--out", s.dir.string(), "portfolio", "--utility", "power", "--x", "2"});
    const auto total = [](const std::string& out) {
        const auto pos = out.find("total,0,");
        return std::stod(out.substr(pos + 8));
    };
    CHECK(total(two.out) == doctest::Approx(2.0 * total(one.out)).epsilon(1e-9));
    CHECK(run({"--config", cfg, "portfolio", "--utility", "nosuch"}).code == kExitParse);
}

TEST_CASE("riccati command writes its CSV") {
    Scratch s;
    const auto r = run({"--config", s.write("c.json", kConfig), "--out", s.dir.string(), "riccati", "--system", "gamma",
                        "--param", "0.5", "--T", "3"});
    CHECK(r.code == kExitPass);
    CHECK(r.out.find("ARE limit") != std::string::npos);
    CHECK(s.read("riccati.csv").rfind("t,", 0) == 0);
    CHECK(run({"--config", s.write("c2.json", kConfig), "riccati", "--system", "nope"}).code == kExitParse);
}

TEST_CASE("turnpike command: degenerate pair, insufficient signal and reproducible outputs") {
    Scratch s;
    const auto cfg = s.write("c.json", kConfig);
    const auto deg = run({"--config", cfg, "--out", (s.dir / "deg").string(), "turnpike", "--pair", "degenerate"});
    CHECK(deg.out.find("verdict=degenerate") != std::string::npos);

    auto j = nlohmann::ordered_json::parse(kConfig);
    j["experiment"]["components"] = {"wealth_gap"};
    const auto thin = run({"--config", s.write("thin.json", j.dump()), "--out", (s.dir / "thin").string(), "--paths",
                           "4", "turnpike"});
    CHECK(thin.out.find("verdict=insufficient-signal") != std::string::npos);
    CHECK(thin.out.find("increase paths") != std::string::npos);

    const auto a = run({"--config", cfg, "--out", (s.dir / "a").string(), "turnpike", "--threads", "1"});
    const auto b = run({"--config", cfg, "--out", (s.dir / "b").string(), "turnpike", "--threads", "2"});
    CHECK(a.out.find("theory=0.3333") != std::string::npos);
    for (const char* f : {"report.csv", "rates.csv", "plot_myopic.svg"})
        CHECK(s.read(std::string("a/") + f) == s.read(std::string("b/") + f));
    const auto man = nlohmann::json::parse(s.read("a/manifest.json"));
    CHECK(man["files"].size() == 5);
    CHECK(man["effective_config"]["experiment"]["threads"] == 1);
    CHECK(man.contains("config_hash"));
}
