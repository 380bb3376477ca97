#include "echogrid/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace echogrid::analysis {

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_row(std::span<const std::string> fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_field(fields[i]);
  }
  line += "\r\n";
  return line;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    row_started = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      row_started = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw DataError("csv: unterminated quoted field");
  if (row_started) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string trimmed_lower(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  std::string out(s.substr(b, e - b + 1));
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

std::vector<Record> records_from_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw DataError("csv: empty input");
  const std::vector<std::string> expected{"subject", "factor1", "factor2", "value"};
  std::vector<std::string> header;
  for (const auto& h : rows.front()) header.push_back(trimmed_lower(h));
  if (header != expected) throw DataError("csv line 1: expected header subject,factor1,factor2,value");
  std::vector<Record> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string where = "csv line " + std::to_string(i + 1) + ": ";
    if (r.size() == 1 && r[0].empty()) continue;
    if (r.size() != 4) throw DataError(where + "expected 4 fields, got " + std::to_string(r.size()));
    const char* begin = r[3].c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(v)) throw DataError(where + "value '" + r[3] + "' is not a finite number");
    out.push_back({r[0], r[1], r[2], v});
  }
  return out;
}

std::string records_to_csv(std::span<const Record> records) {
  std::string out = csv_row(std::vector<std::string>{"subject", "factor1", "factor2", "value"});
  for (const Record& r : records) out += csv_row(std::vector<std::string>{r.subject, r.factor1, r.factor2, format_number(r.value)});
  return out;
}

// ---------------------------------------------------------------------------

Metrics evaluate(const SessionLog& log) {
  Metrics m;
  m.complete = log.header.complete && log.has_complete_events();
  if (!m.complete) return m;
  if (log.header.task == TaskKind::Localization) {
    const LocalizationResult r = judge_localization(log, gen_localization(log.header.seed));
    m.time = r.total_time;
    double sum = 0.0;
    for (const ObjectScore& o : r.objects) {
      m.errors.push_back(o.error_distance);
      sum += o.error_distance;
    }
    if (!m.errors.empty()) m.mean_error = sum / static_cast<double>(m.errors.size());
  } else {
    const NavigationResult r = judge_obstacles(log, gen_navigation(log.header.seed));
    m.time = r.course_time;
    m.missed = r.missed_count;
  }
  return m;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Analysis analysis) {
  switch (analysis) {
    case Analysis::RmOne: return "rm-one";
    case Analysis::RmTwo: return "rm-two";
    case Analysis::BetweenTwo: return "between-two";
    case Analysis::Pearson: return "pearson";
  }
  return "?";
}

Analysis parse_analysis(std::string_view text) {
  const std::string s = trimmed_lower(text);
  if (s == "rm-one" || s == "rm1") return Analysis::RmOne;
  if (s == "rm-two" || s == "rm2") return Analysis::RmTwo;
  if (s == "between-two" || s == "between") return Analysis::BetweenTwo;
  if (s == "pearson") return Analysis::Pearson;
  throw std::invalid_argument("unknown analysis '" + std::string(text) + "'");
}

namespace {

json boxplot_json(const stats::BoxplotSummary& b) {
  return {{"n", b.n},
          {"q1", b.q1},
          {"median", b.median},
          {"q3", b.q3},
          {"mean", b.mean},
          {"whisker_low", b.whisker_low},
          {"whisker_high", b.whisker_high},
          {"outliers", b.outliers}};
}

json anova_json(const stats::AnovaResult& r) {
  json j{{"effect", r.effect}, {"F", r.F},         {"df1", r.df1},
         {"df2", r.df2},       {"p", r.p},         {"ss_effect", r.ss_effect},
         {"ss_error", r.ss_error}};
  if (r.epsilon) j["epsilon"] = *r.epsilon;
  return j;
}

template <class F>
json guarded(const std::string& effect, F&& f) {
  try {
    return f();
  } catch (const stats::DegenerateError& e) {
    return json::array({json{{"effect", effect}, {"error", e.what()}}});
  }
}

std::vector<std::string> levels_of(std::span<const Record> rs, std::string Record::*field) {
  std::set<std::string> s;
  for (const Record& r : rs) s.insert(r.*field);
  return {s.begin(), s.end()};
}

std::size_t index_of(const std::vector<std::string>& levels, const std::string& v) {
  return static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), v) - levels.begin());
}

json boxplots_for(std::span<const Record> records) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const Record& r : records) groups[{r.factor1, r.factor2}].push_back(r.value);
  json out = json::array();
  for (const auto& [key, values] : groups) {
    json b = boxplot_json(stats::boxplot_summary(values));
    b["factor1"] = key.first;
    b["factor2"] = key.second;
    out.push_back(std::move(b));
  }
  return out;
}

// Subjects x (levels1 x levels2) matrix; every cell must be filled exactly once.
Eigen::MatrixXd within_matrix(std::span<const Record> rs, const std::vector<std::string>& subjects,
                              const std::vector<std::string>& l1, const std::vector<std::string>& l2) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(subjects.size()),
                                                static_cast<Eigen::Index>(l1.size() * l2.size()), std::nan(""));
  for (const Record& r : rs) {
    const auto i = static_cast<Eigen::Index>(index_of(subjects, r.subject));
    const auto j = static_cast<Eigen::Index>(index_of(l1, r.factor1) * l2.size() + index_of(l2, r.factor2));
    if (!std::isnan(m(i, j)))
      throw DesignError("duplicate value for subject '" + r.subject + "' at factor1='" + r.factor1 + "', factor2='" +
                        r.factor2 + "'");
    m(i, j) = r.value;
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (std::isnan(m(i, j))) {
        const auto a = static_cast<std::size_t>(j) / l2.size();
        const auto b = static_cast<std::size_t>(j) % l2.size();
        throw DesignError("unbalanced design: subject '" + subjects[static_cast<std::size_t>(i)] +
                          "' has no value for factor1='" + l1[a] + "', factor2='" + l2[b] + "'");
      }
  return m;
}

json rm_one_analyses(std::span<const Record> records, std::string_view metric) {
  json out = json::array();
  for (const std::string& split : levels_of(records, &Record::factor2)) {
    std::vector<Record> part;
    for (const Record& r : records)
      if (r.factor2 == split) part.push_back(r);
    const auto subjects = levels_of(part, &Record::subject);
    const auto conditions = levels_of(part, &Record::factor1);
    if (conditions.size() < 2)
      throw DesignError("factor2='" + split + "' has a single factor1 level; a within-subject test needs two");
    const Eigen::MatrixXd m = within_matrix(part, subjects, conditions, {split});
    const std::string effect = "factor1";
    out.push_back({{"analysis", "rm-one"},
                   {"metric", metric},
                   {"split", split},
                   {"subjects", subjects.size()},
                   {"levels", conditions},
                   {"anova", guarded(effect, [&] { return json::array({anova_json(stats::anova_rm_one(m, effect))}); })}});
  }
  return out;
}

json rm_two_analysis(std::span<const Record> records, std::string_view metric) {
  const auto subjects = levels_of(records, &Record::subject);
  const auto l1 = levels_of(records, &Record::factor1);
  const auto l2 = levels_of(records, &Record::factor2);
  const Eigen::MatrixXd m = within_matrix(records, subjects, l1, l2);
  json anova = guarded("factor1", [&] {
    json a = json::array();
    for (const auto& r : stats::anova_rm_two(m, static_cast<int>(l1.size()), static_cast<int>(l2.size()), "factor1", "factor2"))
      a.push_back(anova_json(r));
    return a;
  });
  return {{"analysis", "rm-two"}, {"metric", metric}, {"subjects", subjects.size()}, {"levels1", l1}, {"levels2", l2},
          {"anova", anova}};
}

}  // namespace

json dataset_report(std::span<const Record> records, Analysis analysis, std::string_view metric) {
  if (records.empty()) throw DataError("dataset is empty");
  json report{{"schema", kReportSchema}, {"source", "dataset"}, {"analysis", to_string(analysis)}};
  report["boxplots"] = boxplots_for(records);
  json analyses = json::array();
  switch (analysis) {
    case Analysis::RmOne: analyses = rm_one_analyses(records, metric); break;
    case Analysis::RmTwo: analyses.push_back(rm_two_analysis(records, metric)); break;
    case Analysis::BetweenTwo: {
      const auto l1 = levels_of(records, &Record::factor1);
      const auto l2 = levels_of(records, &Record::factor2);
      std::vector<double> values;
      std::vector<int> a, b;
      for (const Record& r : records) {
        values.push_back(r.value);
        a.push_back(static_cast<int>(index_of(l1, r.factor1)));
        b.push_back(static_cast<int>(index_of(l2, r.factor2)));
      }
      for (std::size_t i = 0; i < l1.size(); ++i)
        for (std::size_t j = 0; j < l2.size(); ++j) {
          const bool filled = std::any_of(records.begin(), records.end(), [&](const Record& r) {
            return r.factor1 == l1[i] && r.factor2 == l2[j];
          });
          if (!filled) throw DesignError("empty cell factor1='" + l1[i] + "', factor2='" + l2[j] + "'");
        }
      json anova = guarded("factor1", [&] {
        json arr = json::array();
        for (const auto& r : stats::anova_between_two(values, a, b, "factor1", "factor2")) arr.push_back(anova_json(r));
        return arr;
      });
      analyses.push_back({{"analysis", "between-two"}, {"metric", metric}, {"observations", values.size()},
                          {"levels1", l1}, {"levels2", l2}, {"anova", anova}});
      break;
    }
    case Analysis::Pearson: {
      const auto l1 = levels_of(records, &Record::factor1);
      if (l1.size() != 2) throw DesignError("pearson needs exactly two factor1 levels");
      std::map<std::pair<std::string, std::string>, std::array<std::optional<double>, 2>> pairs;
      for (const Record& r : records) {
        auto& slot = pairs[{r.subject, r.factor2}][index_of(l1, r.factor1)];
        if (slot) throw DesignError("duplicate value for subject '" + r.subject + "' at factor1='" + r.factor1 + "'");
        slot = r.value;
      }
      std::vector<double> x, y;
      for (const auto& [key, p] : pairs) {
        if (!p[0] || !p[1])
          throw DesignError("unbalanced design: subject '" + key.first + "' lacks a value for factor1='" +
                            l1[p[0] ? 1 : 0] + "'");
        x.push_back(*p[0]);
        y.push_back(*p[1]);
      }
      const stats::CorrelationResult c = stats::pearson(x, y);
      analyses.push_back({{"analysis", "pearson"}, {"metric", metric}, {"x", l1[0]}, {"y", l1[1]},
                          {"pairs", x.size()}, {"r", c.r}, {"df", c.df}, {"p", c.p}});
      break;
    }
  }
  report["analyses"] = analyses;
  return report;
}

// ---------------------------------------------------------------------------

json logs_report(std::span<const SessionLog> logs) {
  if (logs.empty()) throw DataError("no session logs given");
  struct Row {
    std::string task, metric, participant, group, mode;
    int session, course;
    double value;
  };
  std::vector<Row> rows;
  json skipped = json::array();
  for (const SessionLog& log : logs) {
    const SessionHeader& h = log.header;
    const std::string participant = h.participant_id.empty() ? "seed" + std::to_string(h.seed) : h.participant_id;
    const Metrics m = evaluate(log);
    if (!m.complete) {
      skipped.push_back({{"participant", participant}, {"session", h.session_number}, {"task", to_string(h.task)},
                         {"course", h.course}, {"reason", "incomplete"}});
      continue;
    }
    auto add = [&](const char* metric, double v) {
      rows.push_back({std::string(to_string(h.task)), metric, participant, std::string(to_string(h.group)),
                      std::string(to_string(h.mode)), h.session_number, h.course, v});
    };
    if (h.task == TaskKind::Localization) {
      for (double e : m.errors) add("error_m", e);
      if (m.mean_error) add("mean_error_m", *m.mean_error);
      add("time_s", m.time);
    } else {
      add("course_time_s", m.time);
      add("missed", *m.missed);
    }
  }

  json report{{"schema", kReportSchema}, {"source", "logs"}, {"logs", logs.size()}, {"skipped", skipped}};

  // Boxplots mirror the figure groupings: session x mode (x course).
  std::map<std::tuple<std::string, std::string, int, std::string, int>, std::vector<double>> groups;
  for (const Row& r : rows) groups[{r.task, r.metric, r.session, r.mode, r.course}].push_back(r.value);
  json boxplots = json::array();
  for (const auto& [key, values] : groups) {
    json b = boxplot_json(stats::boxplot_summary(values));
    b["task"] = std::get<0>(key);
    b["metric"] = std::get<1>(key);
    b["session"] = std::get<2>(key);
    b["mode"] = std::get<3>(key);
    if (std::get<4>(key) > 0) b["course"] = std::get<4>(key);
    boxplots.push_back(std::move(b));
  }
  report["boxplots"] = boxplots;

  json analyses = json::array();
  for (const std::string group : {"2D3D", "3D2D"}) {
    auto collect = [&](const std::string& task, const std::string& metric, bool by_course) {
      std::vector<Record> recs;
      for (const Row& r : rows)
        if (r.task == task && r.metric == metric && r.group == group)
          recs.push_back({r.participant, r.mode, by_course ? "course" + std::to_string(r.course) : group, r.value});
      return recs;
    };
    auto crossed = [](std::span<const Record> recs) {
      std::map<std::string, std::set<std::string>> modes;
      for (const Record& r : recs) modes[r.subject].insert(r.factor1);
      return std::any_of(modes.begin(), modes.end(), [](const auto& kv) { return kv.second.size() >= 2; });
    };
    // A cohort too small or too ragged for one analysis should not sink the report.
    auto add = [&](const std::string& task, const char* metric, auto&& build) {
      json list;
      try {
        list = build();
      } catch (const DesignError& e) {
        list = json::array({json{{"metric", metric}, {"error", e.what()}, {"anova", json::array()}}});
      }
      for (json& a : list) {
        a["task"] = task;
        a["group"] = group;
        analyses.push_back(std::move(a));
      }
    };
    for (const char* metric : {"mean_error_m", "time_s"}) {
      const auto recs = collect("localization", metric, false);
      if (!crossed(recs)) continue;
      add("localization", metric, [&] { return rm_one_analyses(recs, metric); });
    }
    for (const char* metric : {"course_time_s", "missed"}) {
      const auto recs = collect("navigation", metric, true);
      if (!crossed(recs)) continue;
      add("navigation", metric, [&] {
        return levels_of(recs, &Record::factor2).size() >= 2 ? json::array({rm_two_analysis(recs, metric)})
                                                              : rm_one_analyses(recs, metric);
      });
    }
  }
  report["analyses"] = analyses;
  return report;
}

std::string report_table(const json& report) {
  std::ostringstream out;
  out << "boxplots\n";
  for (const json& b : report.at("boxplots")) {
    std::string key;
    for (const char* k : {"task", "metric", "session", "mode", "course", "factor1", "factor2"})
      if (b.contains(k)) key += (key.empty() ? "" : " ") + std::string(k) + "=" + (b[k].is_string() ? b[k].get<std::string>() : b[k].dump());
    out << "  " << key << "  n=" << b["n"].get<std::size_t>() << " q1=" << format_number(b["q1"].get<double>())
        << " median=" << format_number(b["median"].get<double>()) << " q3=" << format_number(b["q3"].get<double>())
        << " mean=" << format_number(b["mean"].get<double>()) << " outliers=" << b["outliers"].size() << "\n";
  }
  out << "analyses\n";
  for (const json& a : report.at("analyses")) {
    std::string head = "  " + a.value("analysis", std::string()) + " " + a.value("metric", std::string());
    for (const char* k : {"task", "group", "split"})
      if (a.contains(k)) head += " " + std::string(k) + "=" + a[k].get<std::string>();
    out << head << "\n";
    if (a.contains("error")) out << "    not analysed: " << a["error"].get<std::string>() << "\n";
    if (a.contains("r")) {
      out << "    r(" << format_number(a["df"].get<double>()) << ") = " << format_number(a["r"].get<double>())
          << ", p = " << format_number(a["p"].get<double>()) << "\n";
      continue;
    }
    for (const json& r : a.at("anova")) {
      if (r.contains("error")) {
        out << "    " << r["effect"].get<std::string>() << ": " << r["error"].get<std::string>() << "\n";
        continue;
      }
      out << "    " << r["effect"].get<std::string>() << ": F(" << format_number(r["df1"].get<double>()) << ", "
          << format_number(r["df2"].get<double>()) << ") = " << format_number(r["F"].get<double>())
          << ", p = " << format_number(r["p"].get<double>());
      if (r.contains("epsilon")) out << ", epsilon = " << format_number(r["epsilon"].get<double>());
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace echogrid::analysis
