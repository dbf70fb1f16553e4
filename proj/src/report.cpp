#include "iwin/report.hpp"

#include <fstream>
#include <iostream>

#include "iwin/error.hpp"

namespace iwin {

bool RunReport::all_passed() const {
    for (const auto& c : checks) {
        if (!c.pass) return false;
    }
    return true;
}

nlohmann::json RunReport::to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["metrics"] = metrics;
    j["checks"] = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json details = c.details.is_null() ? nlohmann::json::object() : c.details;
        j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"details", details}});
    }
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["pass"] = all_passed();
    return j;
}

void emit_report(const RunReport& report, const std::string& path) {
    const nlohmann::json j = report.to_json();
    const auto errors = validate_schema(j, run_report_schema());
    if (!errors.empty()) {
        throw ContractError("generated report violates its schema: " + errors.front());
    }
    if (path.empty()) {
        std::cout << j.dump(2) << std::endl;
    } else {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write report to " + path);
        out << j.dump(2) << std::endl;
    }
}

namespace {

bool type_matches(const nlohmann::json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "integer") return v.is_number_integer() || v.is_number_unsigned();
    if (type == "number") return v.is_number();
    if (type == "null") return v.is_null();
    return false;
}

void validate_node(const nlohmann::json& doc, const nlohmann::json& schema, const std::string& at,
                   std::vector<std::string>& errors) {
    if (schema.contains("type")) {
        const auto type = schema.at("type").get<std::string>();
        if (!type_matches(doc, type)) {
            errors.push_back(at + ": expected " + type);
            return;
        }
    }
    if (schema.contains("enum")) {
        bool ok = false;
        for (const auto& candidate : schema.at("enum")) ok = ok || candidate == doc;
        if (!ok) errors.push_back(at + ": not in enum");
    }
    if (doc.is_object()) {
        if (schema.contains("required")) {
            for (const auto& key : schema.at("required")) {
                if (!doc.contains(key.get<std::string>())) {
                    errors.push_back(at + ": missing required field " + key.get<std::string>());
                }
            }
        }
        if (schema.contains("properties")) {
            for (const auto& [key, sub] : schema.at("properties").items()) {
                if (doc.contains(key)) validate_node(doc.at(key), sub, at + "." + key, errors);
            }
        }
    }
    if (doc.is_array() && schema.contains("items")) {
        for (std::size_t i = 0; i < doc.size(); ++i) {
            validate_node(doc.at(i), schema.at("items"), at + "[" + std::to_string(i) + "]", errors);
        }
    }
}

// kept byte-identical with schemas/run_report.schema.json (tested)
constexpr const char* kReportSchema = R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "RunReport",
  "type": "object",
  "required": ["command", "config", "seed", "metrics", "checks", "wall_clock_seconds", "pass"],
  "properties": {
    "command": { "type": "string" },
    "config": { "type": "object" },
    "seed": { "type": "integer" },
    "metrics": { "type": "object" },
    "checks": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["name", "pass"],
        "properties": {
          "name": { "type": "string" },
          "pass": { "type": "boolean" },
          "details": { "type": "object" }
        }
      }
    },
    "wall_clock_seconds": { "type": "number" },
    "pass": { "type": "boolean" }
  }
})";

}  // namespace

std::vector<std::string> validate_schema(const nlohmann::json& doc, const nlohmann::json& schema) {
    std::vector<std::string> errors;
    validate_node(doc, schema, "$", errors);
    return errors;
}

const nlohmann::json& run_report_schema() {
    static const nlohmann::json schema = nlohmann::json::parse(kReportSchema);
    return schema;
}

}  // namespace iwin
