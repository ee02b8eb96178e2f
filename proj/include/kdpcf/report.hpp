#pragma once

// Experiment tables: CSV and a JSON mirror with the same fields.

#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "kdpcf/eval.hpp"

namespace kdpcf {

inline constexpr const char* kTableHeader =
    "scheme,param,value,recall,precision,stddev_recall,stddev_precision,runs";

inline void write_table_csv(std::ostream& out, std::span<const ExperimentRow> rows,
                            bool header = true) {
  if (header) out << kTableHeader << '\n';
  std::ostringstream line;
  line << std::setprecision(10);
  for (const auto& row : rows) {
    line.str({});
    line << to_string(row.scheme) << ',' << row.parameter << ',';
    if (row.value) line << *row.value;
    line << ',' << row.recall << ',' << row.precision << ',' << row.stddev_recall << ','
         << row.stddev_precision << ',' << row.runs;
    out << line.str() << '\n';
  }
}

inline nlohmann::json table_json(std::span<const ExperimentRow> rows) {
  auto out = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json j;
    j["scheme"] = to_string(row.scheme);
    j["param"] = row.parameter;
    j["value"] = row.value ? nlohmann::json(*row.value) : nlohmann::json(nullptr);
    j["recall"] = row.recall;
    j["precision"] = row.precision;
    j["stddev_recall"] = row.stddev_recall;
    j["stddev_precision"] = row.stddev_precision;
    j["runs"] = row.runs;
    j["run_recalls"] = row.run_recalls;
    j["run_precisions"] = row.run_precisions;
    j["undefined_metric"] = row.undefined_metric;
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace kdpcf
