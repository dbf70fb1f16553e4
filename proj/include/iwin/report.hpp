#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace iwin {

struct CheckResult {
    std::string name;
    bool pass = false;
    nlohmann::json details = nlohmann::json::object();
};

// Machine-readable run report. Serialized documents validate against
// schemas/run_report.schema.json (shipped in the repo; an identical copy is
// embedded here and the tests assert they stay in sync).
struct RunReport {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    nlohmann::json metrics = nlohmann::json::object();
    std::vector<CheckResult> checks;
    double wall_clock_seconds = 0.0;

    bool all_passed() const;
    nlohmann::json to_json() const;
};

// Writes the JSON document to `path`, or to stdout when path is empty.
void emit_report(const RunReport& report, const std::string& path);

// Minimal structural JSON-schema validator covering the subset the report
// schema uses: type, required, properties, items, enum. Returns the list of
// violations (empty = valid).
std::vector<std::string> validate_schema(const nlohmann::json& doc, const nlohmann::json& schema);

const nlohmann::json& run_report_schema();

}  // namespace iwin
