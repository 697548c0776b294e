#pragma once

#include "holokit/localization.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace holokit {

using Json = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "holokit-report-v1";

/// The twelve verbs accepted in run.verb.
[[nodiscard]] const std::vector<std::string>& report_verbs();

/// Parsed experiment. `run` and `tolerances` keep the verb-specific keys; every key is
/// consumed by the dispatcher, and leftovers are reported as schema errors.
struct ExperimentConfig {
    Json source;  ///< the config as read, echoed into the report
    std::string verb;
    DomainSpec domain;
    Json map;     ///< null when the verb needs no map
    std::uint64_t seed = 1;
    Json run;
    Json tolerances;
    std::string output;  ///< report path, "" for stdout
    std::string csv;     ///< CSV path, "" for none
};

/// Throws ErrorKind::schema naming the offending field.
[[nodiscard]] ExperimentConfig parse_config(const Json& source);
[[nodiscard]] ExperimentConfig load_config(const std::string& path);

[[nodiscard]] DomainSpec domain_from_json(const Json& j);
[[nodiscard]] HoloMap map_from_json(const Json& j, const DomainSpec& declared);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

struct Report {
    Json body;
    int exit_code = 0;
    CsvTable table;  ///< empty unless the verb produces an orbit or trend table
};

/// Dispatches the verb. Library errors become reports with status "error" and the
/// exit code of their kind; nothing is thrown.
[[nodiscard]] Report run_experiment(const ExperimentConfig& config);

/// Wraps an error raised before dispatch (unreadable or invalid config).
[[nodiscard]] Report error_report(const Json& source, const Error& e);

/// Report body without the "timing" block, for byte-for-byte comparisons.
[[nodiscard]] std::string canonical_text(const Report& r);
[[nodiscard]] std::string report_text(const Report& r);
[[nodiscard]] std::string csv_text(const CsvTable& t);

}  // namespace holokit
