#include "mvsde/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "mvsde/errors.hpp"

namespace mvsde {

Check make_check(std::string name, double value, double lower, double upper, std::string note) {
  Check c{std::move(name), value, lower, upper, false, false, std::move(note)};
  c.passed = std::isfinite(value) && value >= lower && value <= upper;
  return c;
}

Check advisory_check(std::string name, double value, double lower, double upper, std::string note) {
  Check c = make_check(std::move(name), value, lower, upper, std::move(note));
  c.advisory = true;
  return c;
}

bool Report::passed() const {
  for (const Check& c : checks)
    if (!c.advisory && !c.passed) return false;
  return true;
}

namespace {

nlohmann::json bound(double x) {
  if (std::isinf(x)) return nullptr;
  return x;
}

}  // namespace

nlohmann::json to_json(const Check& c) {
  nlohmann::json j{{"name", c.name},       {"value", std::isfinite(c.value) ? nlohmann::json(c.value) : nullptr},
                   {"lower", bound(c.lower)}, {"upper", bound(c.upper)},
                   {"passed", c.passed},   {"advisory", c.advisory}};
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

nlohmann::json to_json(const Report& r) {
  nlohmann::json checks = nlohmann::json::array();
  for (const Check& c : r.checks) checks.push_back(to_json(c));
  nlohmann::json series = nlohmann::json::array();
  for (const Series& s : r.series) series.push_back("series_" + s.name + ".csv");
  return {{"kind", r.kind}, {"passed", r.passed()}, {"smoke", r.smoke},
          {"checks", checks}, {"series", series}, {"summary", r.summary}};
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

void write_series_csv(std::ostream& os, const Series& s) {
  for (std::size_t i = 0; i < s.columns.size(); ++i) os << (i ? "," : "") << s.columns[i];
  os << '\n';
  for (const auto& row : s.rows) {
    if (row.size() != s.columns.size()) throw DomainError("series " + s.name + ": row width differs from header");
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_number(row[i]);
    os << '\n';
  }
}

void write_plot_script(std::ostream& os, const Series& s) {
  os << "set datafile separator ','\n";
  os << "set terminal pngcairo size 800,600\n";
  os << "set output 'plot_" << s.name << ".png'\n";
  os << "set key autotitle columnhead\n";
  os << "set xlabel '" << s.columns.front() << "'\n";
  if (s.log_x) os << "set logscale x\n";
  if (s.log_y) os << "set logscale y\n";
  os << "plot";
  for (std::size_t i = 1; i < s.columns.size(); ++i)
    os << (i > 1 ? ", \\\n     ''" : " 'series_" + s.name + ".csv'") << " using 1:" << i + 1 << " with linespoints";
  os << '\n';
}

void emit_report(const Report& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(dir / name);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };
  {
    std::ofstream f = open("summary.json");
    f << to_json(r).dump(2) << '\n';
  }
  for (const Series& s : r.series) {
    std::ofstream csv = open("series_" + s.name + ".csv");
    write_series_csv(csv, s);
    std::ofstream gp = open("plot_" + s.name + ".gp");
    write_plot_script(gp, s);
  }
}

}  // namespace mvsde
