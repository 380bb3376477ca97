#include "echogrid/analysis.hpp"
#include "echogrid/batch.hpp"
#include "echogrid/error.hpp"

#include <doctest.h>

#include <sstream>

using namespace echogrid;
using namespace echogrid::analysis;
using doctest::Approx;

namespace {

// The RM1 and BETWEEN fixtures of tests/oracles/stats_oracle.py, as CSV.
std::string rm1_csv() {
  const double v[8][3] = {{4.1, 5.0, 6.2}, {3.8, 4.1, 5.9}, {5.2, 5.9, 6.1}, {4.4, 5.5, 7.8},
                          {3.9, 3.7, 5.0}, {4.8, 6.0, 6.6}, {5.1, 5.2, 7.3}, {4.0, 4.9, 5.1}};
  std::ostringstream out;
  out << "subject,factor1,factor2,value\n";
  for (int s = 0; s < 8; ++s)
    for (int c = 0; c < 3; ++c) out << "s" << s << ",c" << c << ",all," << v[s][c] << "\n";
  return out.str();
}

std::string between_csv() {
  const std::vector<std::tuple<int, int, std::vector<double>>> cells{
      {0, 0, {2.1, 2.9, 3.3}}, {0, 1, {3.9, 4.4, 3.1, 4.8}}, {1, 0, {2.5, 3.6, 2.2, 3.0, 2.7}}, {1, 1, {5.2, 4.9, 6.1, 5.5}}};
  std::ostringstream out;
  out << "subject,factor1,factor2,value\r\n";
  int id = 0;
  for (const auto& [a, b, vs] : cells)
    for (double x : vs) out << "n" << id++ << ",a" << a << ",b" << b << "," << x << "\r\n";
  return out.str();
}

const json& effect(const json& analysis, const std::string& name) {
  for (const json& e : analysis.at("anova"))
    if (e.at("effect") == name) return e;
  throw std::runtime_error("no effect " + name);
}

}  // namespace

TEST_SUITE("csv") {
  TEST_CASE("numbers") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(2.0) == "2");
    CHECK(format_number(1.0 / 3.0) == "0.333333333");
    CHECK(format_number(-1234567891.0) == "-1.23456789e+09");
  }

  TEST_CASE("quoting") {
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_field("two\nlines") == "\"two\nlines\"");
    const std::vector<std::string> row{"x", "y,z"};
    CHECK(csv_row(row) == "x,\"y,z\"\r\n");
  }

  TEST_CASE("parsing quoted fields, CRLF and a missing final newline") {
    const auto rows = parse_csv("a,\"b,c\",\"d\"\"e\"\r\n\"multi\nline\",,x");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<std::string>{"a", "b,c", "d\"e"});
    CHECK(rows[1] == std::vector<std::string>{"multi\nline", "", "x"});
    CHECK_THROWS_AS(parse_csv("\"open"), DataError);
  }

  TEST_CASE("fields survive a write and parse") {
    const std::vector<std::string> row{"", "a", "b,c", "\"", "x\r\ny", " padded "};
    CHECK(parse_csv(csv_row(row)) == std::vector<std::vector<std::string>>{row});
  }

  TEST_CASE("records") {
    const auto recs = records_from_csv("Subject,Factor1,Factor2,Value\np1,2d,\"course 1\",3.5\np1,3d,\"course 1\",4\n");
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].factor2 == "course 1");
    CHECK(recs[1].value == 4.0);
    CHECK(records_from_csv(records_to_csv(recs))[0].factor2 == "course 1");
  }

  TEST_CASE("bad records name the line") {
    CHECK_THROWS_WITH_AS(records_from_csv("a,b,c,d\n"), doctest::Contains("line 1"), DataError);
    CHECK_THROWS_WITH_AS(records_from_csv("subject,factor1,factor2,value\np,a,b,1\np,a,b\n"),
                         doctest::Contains("line 3"), DataError);
    CHECK_THROWS_WITH_AS(records_from_csv("subject,factor1,factor2,value\np,a,b,nan\n"), doctest::Contains("line 2"),
                         DataError);
    CHECK_THROWS_WITH_AS(records_from_csv("subject,factor1,factor2,value\np,a,b,1x\n"), doctest::Contains("1x"),
                         DataError);
    CHECK_THROWS_AS(records_from_csv(""), DataError);
  }
}

TEST_SUITE("dataset reports") {
  TEST_CASE("rm-one matches the scipy oracle") {
    const auto recs = records_from_csv(rm1_csv());
    const json r = dataset_report(recs, Analysis::RmOne, "score");
    CHECK(r["schema"] == "echogrid-report/1");
    CHECK(r["boxplots"].size() == 3);
    REQUIRE(r["analyses"].size() == 1);
    const json& e = effect(r["analyses"][0], "factor1");
    CHECK(e["F"].get<double>() == Approx(26.180093729078326).epsilon(1e-9));
    CHECK(e["epsilon"].get<double>() == Approx(0.7840770209935494).epsilon(1e-9));
    CHECK(r["analyses"][0]["metric"] == "score");
  }

  TEST_CASE("between-two matches the statsmodels Type II oracle") {
    const json r = dataset_report(records_from_csv(between_csv()), Analysis::BetweenTwo);
    const json& a = r["analyses"][0];
    CHECK(effect(a, "factor1")["ss_effect"].get<double>() == Approx(2.0413306451612887).epsilon(1e-9));
    CHECK(effect(a, "factor1")["F"].get<double>() == Approx(5.717790564155333).epsilon(1e-9));
    CHECK(effect(a, "factor1")["p"].get<double>() == Approx(0.03406131437613477).epsilon(1e-9));
    CHECK(effect(a, "factor2")["ss_effect"].get<double>() == Approx(16.393830645161284).epsilon(1e-9));
    CHECK(effect(a, "factor1 x factor2")["p"].get<double>() == Approx(0.04737140484522125).epsilon(1e-9));
  }

  TEST_CASE("rm-two and pearson") {
    std::ostringstream csv;
    csv << "subject,factor1,factor2,value\n";
    for (int s = 0; s < 6; ++s)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 3; ++b) csv << "s" << s << ",m" << a << ",c" << b << "," << (s * 0.7 + a * 1.3 + b * b * 0.4 + ((s * 7 + a * 3 + b) % 5) * 0.21) << "\n";
    const auto recs = records_from_csv(csv.str());
    const json two = dataset_report(recs, Analysis::RmTwo);
    CHECK(two["analyses"][0]["anova"].size() == 3);
    CHECK(two["boxplots"].size() == 6);
    const json p = dataset_report(recs, Analysis::Pearson);
    CHECK(p["analyses"][0]["pairs"] == 18);
    CHECK(p["analyses"][0]["df"] == 16);
  }

  TEST_CASE("a missing cell names the subject and the cell") {
    auto recs = records_from_csv(rm1_csv());
    recs.erase(recs.begin() + 4);  // s1, c1
    CHECK_THROWS_WITH_AS(dataset_report(recs, Analysis::RmOne), doctest::Contains("subject 's1'"), DesignError);
    CHECK_THROWS_WITH_AS(dataset_report(recs, Analysis::RmOne), doctest::Contains("factor1='c1'"), DesignError);
  }

  TEST_CASE("duplicates are rejected") {
    auto recs = records_from_csv(rm1_csv());
    recs.push_back(recs.front());
    CHECK_THROWS_WITH_AS(dataset_report(recs, Analysis::RmOne), doctest::Contains("duplicate"), DesignError);
    CHECK_THROWS_AS(dataset_report(recs, Analysis::Pearson), DesignError);
  }

  TEST_CASE("an empty between-subjects cell is rejected") {
    auto recs = records_from_csv(between_csv());
    std::erase_if(recs, [](const Record& r) { return r.factor1 == "a1" && r.factor2 == "b1"; });
    CHECK_THROWS_WITH_AS(dataset_report(recs, Analysis::BetweenTwo), doctest::Contains("factor1='a1', factor2='b1'"),
                         DesignError);
  }

  TEST_CASE("constant data is reported, not thrown") {
    std::vector<Record> recs;
    for (int s = 0; s < 4; ++s)
      for (const char* m : {"2d", "3d"}) recs.push_back({"s" + std::to_string(s), m, "g", 1.0 + s});
    const json r = dataset_report(recs, Analysis::RmOne);
    const json& e = r["analyses"][0]["anova"][0];
    CHECK(e["F"] == 0.0);
    CHECK(e["p"] == 1.0);
    recs[0].value += 1.0;
    recs[3].value += 1.0;
    recs[4].value += 1.0;
    CHECK_NOTHROW(dataset_report(recs, Analysis::RmOne));
  }

  TEST_CASE("analysis names") {
    CHECK(parse_analysis("rm-one") == Analysis::RmOne);
    CHECK(parse_analysis("between-two") == Analysis::BetweenTwo);
    CHECK(to_string(Analysis::Pearson) == "pearson");
    CHECK_THROWS(parse_analysis("manova"));
    CHECK_THROWS_AS(dataset_report({}, Analysis::RmOne), DataError);
  }

  TEST_CASE("the table mentions every effect") {
    const std::string t = report_table(dataset_report(records_from_csv(between_csv()), Analysis::BetweenTwo));
    CHECK(t.find("factor1 x factor2: F(1, 12)") != std::string::npos);
  }
}

TEST_SUITE("log reports") {
  TEST_CASE("metrics regenerate the task from the seed") {
    const LocalizationTask task = gen_localization(8);
    const SessionLog log = run_scripted(AgentKind::Sweep, task, Mode::ThreeD, 8);
    const Metrics m = evaluate(log);
    const LocalizationResult r = judge_localization(log, task);
    CHECK(m.complete);
    CHECK(m.time == r.total_time);
    REQUIRE(m.errors.size() == 3);
    CHECK(*m.mean_error == Approx((r.objects[0].error_distance + r.objects[1].error_distance + r.objects[2].error_distance) / 3));
    CHECK_FALSE(m.missed);
  }

  TEST_CASE("a two-participant cohort") {
    batch::CrossoverOptions opt;
    opt.participants = 2;
    std::vector<SessionLog> logs;  // p01 in 2D3D, p02 in 3D2D
    for (const auto& o : batch::run_all(batch::plan_crossover(opt))) logs.push_back(o.log);
    SessionLog partial = logs.front();
    partial.events.pop_back();
    partial.header.complete = false;
    logs.push_back(partial);

    const json r = logs_report(logs);
    CHECK(r["source"] == "logs");
    CHECK(r["logs"] == 17);
    CHECK(r["skipped"].size() == 1);
    int loc = 0, nav = 0;
    for (const json& a : r["analyses"]) {
      (a["task"] == "localization" ? loc : nav) += 1;
      CHECK((a["group"] == "2D3D" || a["group"] == "3D2D"));
    }
    // per group: two localization metrics, two navigation metrics
    CHECK(loc == 4);
    CHECK(nav == 4);
    bool course_box = false;
    for (const json& b : r["boxplots"]) course_box = course_box || (b.contains("course") && b["course"] == 3);
    CHECK(course_box);
    // one subject per group: each analysis says why it was not run
    for (const json& a : r["analyses"]) CHECK(a["error"].get<std::string>().find("at least 2 subjects") != std::string::npos);
    CHECK(report_table(r).find("not analysed") != std::string::npos);
    CHECK_THROWS_AS(logs_report({}), DataError);
  }
}
