#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "cantor_forge/cantor1d.hpp"
#include "cantor_forge/scenario.hpp"

using namespace cantor;
namespace fs = std::filesystem;

namespace {

const std::string kBin = CF_BINARY;
const std::string kScenarios = CF_SCENARIOS;
const std::string kData = CF_TESTDATA;

fs::path scratch() {
    fs::path p = fs::temp_directory_path() / ("cantor_forge_cli_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
}

int run(const std::string& args) {
    int rc = std::system((kBin + " " + args + " 2>/dev/null").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("companion-1d report") {
    fs::path out = scratch() / "c1.json";
    CHECK(run("run " + kScenarios + "/companion_1d.json --out " + out.string()) == 0);
    json r = json::parse(slurp(out));
    CHECK(r["status"] == "ok");
    CHECK(r["version"] == kVersion);
    CHECK(r["pipeline"] == "companion-1d");
    CHECK(interval_from_json(r["results"]["interior"]) == Interval1(Rat(-1, 10), Rat(1, 10)));
    CHECK(r["results"]["dominance"]["overall"] == true);
    CHECK_FALSE(r.contains("timing"));
}

TEST_CASE("degenerate geometry exits 2 and names the root") {
    fs::path out = scratch() / "deg.json";
    CHECK(run("run " + kScenarios + "/fail_degenerate.json --out " + out.string()) == 2);
    json r = json::parse(slurp(out));
    CHECK(r["status"] == "failed");
    CHECK(r["error"]["kind"] == "CertificateNotFound");
    CHECK(r["error"]["message"].get<std::string>().find("'root'") != std::string::npos);
}

TEST_CASE("config errors exit 1") {
    fs::path out = scratch() / "bad.json";
    CHECK(run("run " + kData + "/malformed.json --out " + out.string()) == 1);
    json r = json::parse(slurp(out));
    CHECK(r["error"]["kind"] == "ConfigError");
    CHECK(r["error"]["line"] == 3);

    RunOutcome unknown = run_scenario(json{{"pipeline", "teleport"}});
    CHECK(unknown.exit_code == 1);
    RunOutcome missing = run_scenario(json{{"pipeline", "companion-1d"}});
    CHECK(missing.exit_code == 1);
    CHECK(missing.report["error"]["message"].get<std::string>().find("'k'") != std::string::npos);
    CHECK(run("run /nonexistent/config.json") == 1);
    CHECK(run("frobnicate") == 1);
}

TEST_CASE("interval dump") {
    fs::path dir = scratch();
    std::ofstream(dir / "mt.json") << tree_to_json(middle_thirds(2)).dump();
    CHECK(run("dump " + (dir / "mt.json").string() + " --format csv-intervals --out " + (dir / "mt.csv").string()) == 0);
    CHECK(slurp(dir / "mt.csv") ==
          "addr,lo_num,lo_den,hi_num,hi_den\n"
          "00,0,1,1,9\n"
          "01,2,9,1,3\n"
          "10,2,3,7,9\n"
          "11,8,9,1,1\n");
    CHECK(run("dump " + (dir / "mt.json").string() + " --format csv-boxes") == 1);
    CHECK(emit_geometry(tree_to_json(middle_thirds(3)), "csv-intervals", 1) ==
          "addr,lo_num,lo_den,hi_num,hi_den\n0,0,1,1,3\n1,2,3,1,1\n");
    CHECK_THROWS_AS(emit_geometry(tree_to_json(middle_thirds(3)), "csv-boxes"), Error);
}

TEST_CASE("box dump of a nondegeneracy report") {
    fs::path dir = scratch();
    CHECK(run("run " + kScenarios + "/nondegeneracy.json --out " + (dir / "nd.json").string()) == 0);
    CHECK(run("dump " + (dir / "nd.json").string() + " --format csv-boxes --out " + (dir / "nd.csv").string()) == 0);
    std::string csv = slurp(dir / "nd.csv");
    CHECK(csv.rfind("level,lo_1,hi_1,lo_2,hi_2\n", 0) == 0);
    // level 4: four pieces per axis
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);
    CHECK(run("dump " + (dir / "nd.json").string() + " --format csv-intervals") == 1);
    try {
        emit_geometry(json::parse(slurp(dir / "nd.json")), "csv-intervals");
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == "KindMismatch");
    }
}

TEST_CASE("reports are deterministic; timing and seeds are opt-in") {
    json cfg = json::parse(slurp(fs::path(kScenarios) / "erdos_demo.json"));
    RunOutcome a = run_scenario(cfg), b = run_scenario(cfg);
    CHECK(a.exit_code == 0);
    CHECK(report_text(a.report) == report_text(b.report));
    RunOutcome c = run_scenario(cfg, {std::nullopt, 7, false});
    CHECK(c.report["seed"] == 7);
    CHECK(c.report["results"]["maps"] != a.report["results"]["maps"]);
    RunOutcome t = run_scenario(cfg, {2, std::nullopt, true});
    CHECK(t.report.contains("timing"));
    CHECK(t.report["results"] == a.report["results"]);
}

TEST_CASE("every golden scenario runs") {
    for (auto& e : fs::directory_iterator(kScenarios)) {
        if (e.path().extension() != ".json") continue;
        RunOutcome r = run_scenario_file(e.path().string());
        bool expect_fail = e.path().stem().string().rfind("fail_", 0) == 0;
        INFO(e.path().string());
        CHECK(r.exit_code == (expect_fail ? 2 : 0));
    }
}

} // TEST_SUITE
