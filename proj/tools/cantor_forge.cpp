#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cantor_forge/scenario.hpp"

namespace {

bool write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    return static_cast<bool>(out);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cantor-forge: finite-depth Cantor set containment certificates"};
    app.require_subcommand(1);

    std::string config, out_path;
    int threads = 0;
    std::uint64_t seed = 0;
    bool timing = false;
    auto* run = app.add_subcommand("run", "run a scenario file and write its report");
    run->add_option("config", config, "scenario JSON")->required();
    run->add_option("--out", out_path, "report path (stdout when omitted)");
    auto* threads_opt = run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    auto* seed_opt = run->add_option("--seed", seed, "seed for random candidates and sampled families");
    run->add_flag("--timing", timing, "record wall-clock time (reports stop being reproducible)");

    std::string report, format, dump_out;
    int level = -1;
    auto* dump = app.add_subcommand("dump", "export geometry from a report or gap-tree JSON as CSV");
    dump->add_option("report", report, "report or tree JSON")->required();
    dump->add_option("--format", format, "csv-intervals or csv-boxes")->required();
    dump->add_option("--out", dump_out, "CSV path (stdout when omitted)");
    dump->add_option("--level", level, "interval level for trees");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (*run) {
        cantor::RunOptions opt;
        if (*threads_opt) opt.threads = threads;
        if (*seed_opt) opt.seed = seed;
        opt.timing = timing;
        cantor::RunOutcome r = cantor::run_scenario_file(config, opt);
        std::string text = cantor::report_text(r.report);
        if (out_path.empty()) {
            std::cout << text;
        } else if (!write_file(out_path, text)) {
            std::cerr << "cannot write " << out_path << "\n";
            return 1;
        }
        if (r.exit_code != 0 && r.report.contains("error"))
            std::cerr << r.report["error"].value("message", std::string("failed")) << "\n";
        return r.exit_code;
    }

    try {
        std::ifstream in(report);
        if (!in) throw cantor::Error("ConfigError", "cannot read " + report);
        cantor::json j = cantor::json::parse(in);
        std::string csv = cantor::emit_geometry(j, format, level >= 0 ? std::optional<int>(level) : std::nullopt);
        if (dump_out.empty()) std::cout << csv;
        else if (!write_file(dump_out, csv)) throw cantor::Error("ConfigError", "cannot write " + dump_out);
        return 0;
    } catch (const cantor::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const cantor::json::exception& e) {
        std::cerr << "ConfigError: " << e.what() << "\n";
        return 1;
    }
}
