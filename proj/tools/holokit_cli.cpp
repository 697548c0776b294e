#include "holokit/cli_reports.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace holokit;

namespace {

bool write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) return false;
    out << text;
    return static_cast<bool>(out);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"holokit: numerical experiments on holomorphic self-maps of the ball and convex domains"};
    app.require_subcommand(1);

    std::string config_path, output_override, csv_override;
    auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
    run->add_option("config", config_path, "Config file with [domain], [map], [run], [tolerances]")->required();
    run->add_option("-o,--output", output_override, "Report path (overrides output.path; '-' for stdout)");
    run->add_option("--csv", csv_override, "CSV path for the orbit or trend table (overrides output.csv)");

    std::string check_path;
    auto* validate = app.add_subcommand("validate", "Check a config against the schema without running it");
    validate->add_option("config", check_path, "Config file")->required();

    app.add_subcommand("verbs", "List the accepted run.verb values");

    CLI11_PARSE(app, argc, argv);

    if (app.got_subcommand("verbs")) {
        for (const auto& v : report_verbs()) std::cout << v << "\n";
        return 0;
    }

    const std::string path = app.got_subcommand("validate") ? check_path : config_path;
    ExperimentConfig cfg;
    try {
        cfg = load_config(path);
    } catch (const Error& e) {
        std::cout << report_text(error_report(Json::object(), e));
        std::cerr << e.what() << "\n";
        return static_cast<int>(e.kind());
    }
    if (app.got_subcommand("validate")) {
        std::cout << "ok: verb " << cfg.verb << "\n";
        return 0;
    }

    if (!output_override.empty()) cfg.output = output_override == "-" ? "" : output_override;
    if (!csv_override.empty()) cfg.csv = csv_override;

    const Report report = run_experiment(cfg);
    const std::string text = report_text(report);
    if (cfg.output.empty()) {
        std::cout << text;
    } else if (!write_file(cfg.output, text)) {
        std::cerr << "cannot write report to " << cfg.output << "\n";
        return static_cast<int>(ErrorKind::schema);
    }
    if (!cfg.csv.empty() && !report.table.header.empty() && !write_file(cfg.csv, csv_text(report.table))) {
        std::cerr << "cannot write CSV to " << cfg.csv << "\n";
        return static_cast<int>(ErrorKind::schema);
    }
    if (report.exit_code != 0 && report.body.contains("error")) {
        std::cerr << report.body["error"]["message"].get<std::string>() << "\n";
    }
    return report.exit_code;
}
