#pragma once

// Datasets and reports: turns session logs or flat CSV tables into boxplot
// summaries and ANOVA tables.

#include "echogrid/session_log.hpp"
#include "echogrid/stats.hpp"
#include "echogrid/tasks.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace echogrid::analysis {

using nlohmann::json;

inline constexpr std::string_view kReportSchema = "echogrid-report/1";

// ---------------------------------------------------------------------------
// CSV (RFC 4180)

/// Nine significant digits, shortest form.
std::string format_number(double value);
std::string csv_field(std::string_view text);
std::string csv_row(std::span<const std::string> fields);
/// Quoted fields may contain commas, quotes ("") and line breaks.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// One observation of the flat dataset format: subject, factor1, factor2, value.
struct Record {
  std::string subject;
  std::string factor1;
  std::string factor2;
  double value = 0.0;
};

std::vector<Record> records_from_csv(std::string_view text);
std::string records_to_csv(std::span<const Record> records);

// ---------------------------------------------------------------------------
// Metrics of a recorded session

struct Metrics {
  bool complete = false;
  double time = 0.0;                // total (localization) or course (navigation) time
  std::vector<double> errors;       // localization error per object
  std::optional<double> mean_error;
  std::optional<int> missed;
};

/// Regenerates the task from the header seed and judges the log.
Metrics evaluate(const SessionLog& log);

// ---------------------------------------------------------------------------
// Reports

enum class Analysis { RmOne, RmTwo, BetweenTwo, Pearson };

std::string_view to_string(Analysis analysis);
Analysis parse_analysis(std::string_view text);

/// rm-one: factor1 is the within-subject condition and factor2 splits the
/// data into independent analyses. rm-two: factor1 x factor2 within subject.
/// between-two: both factors between subjects. pearson: factor1 has two
/// levels paired by (subject, factor2). Every report carries boxplots per
/// (factor1, factor2). Missing or duplicate cells throw DesignError.
json dataset_report(std::span<const Record> records, Analysis analysis, std::string_view metric = "value");

/// Boxplots per (task, session, mode, course) for every metric, one-factor
/// repeated-measures ANOVA of mode per group for localization, and mode x
/// course per group for navigation.
json logs_report(std::span<const SessionLog> logs);

/// Plain-text rendering of a report.
std::string report_table(const json& report);

}  // namespace echogrid::analysis
