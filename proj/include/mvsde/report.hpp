#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace mvsde {

/// One asserted (or advisory) inequality lower ≤ value ≤ upper.
struct Check {
  std::string name;
  double value = 0.0;
  double lower = -HUGE_VAL;
  double upper = HUGE_VAL;
  bool passed = false;
  bool advisory = false;  // reported, never fails the run
  std::string note;
};

Check make_check(std::string name, double value, double lower, double upper, std::string note = {});
Check advisory_check(std::string name, double value, double lower, double upper, std::string note = {});

/// A table written as series_<name>.csv with a matching plot_<name>.gp.
/// The first column is the abscissa.
struct Series {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  bool log_x = false;
  bool log_y = false;
};

struct Report {
  std::string kind;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<Check> checks;
  std::vector<Series> series;
  bool smoke = false;

  /// Every non-advisory check passed.
  bool passed() const;
};

nlohmann::json to_json(const Check& c);
nlohmann::json to_json(const Report& r);

/// Shortest round-trip decimal form.
std::string format_number(double x);

void write_series_csv(std::ostream& os, const Series& s);
void write_plot_script(std::ostream& os, const Series& s);

/// Writes summary.json, series_*.csv and plot_*.gp into dir (created if
/// needed). Output depends only on the report.
void emit_report(const Report& r, const std::filesystem::path& dir);

}  // namespace mvsde
