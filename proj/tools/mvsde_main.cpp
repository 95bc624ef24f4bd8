#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mvsde/errors.hpp"
#include "mvsde/experiments.hpp"

namespace {

constexpr int kPass = 0;
constexpr int kError = 1;
constexpr int kFailed = 2;

struct Args {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> particles;
  bool smoke = false;
};

int run(const std::string& command, const Args& args) {
  using namespace mvsde;
  ExperimentConfig cfg = parse_config(args.config);
  const ExperimentKind wanted = parse_kind(command, "/kind");
  if (wanted != ExperimentKind::audit && wanted != cfg.kind)
    throw ParseError("/kind", "config describes a '" + to_string(cfg.kind) + "' run, not '" + command + "'");
  cfg.kind = wanted;
  apply_overrides(cfg, RunOverrides{args.seed, args.particles, args.smoke});
  std::string out = args.out.empty() ? cfg.out : args.out;
  if (out.empty()) throw ParseError("/out", "no output directory (use --out)");

  Report report = run_experiment(cfg);
  report.smoke = args.smoke;
  emit_report(report, out);
  for (const Check& c : report.checks)
    std::cout << (c.passed ? "ok   " : (c.advisory ? "note " : "FAIL ")) << c.name << " = " << format_number(c.value)
              << '\n';
  std::cout << report.kind << ": " << (report.passed() ? "passed" : "failed") << " -> " << out << '\n';
  // smoke runs exercise the pipeline at 10^3 particles; their checks are informational
  if (args.smoke) return kPass;
  return report.passed() ? kPass : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field SDE experiments"};
  app.require_subcommand(1);
  Args args;
  for (const char* name : {"audit", "solve", "regularity", "gradient", "stability", "duhamel"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run a ") + name + " experiment");
    sub->add_option("--config", args.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "output directory");
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->add_option("--particles", args.particles, "override the particle count")->check(CLI::PositiveNumber);
    sub->add_flag("--smoke", args.smoke, "10^3 particles, checks reported only");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kError;
  }
  try {
    return run(app.get_subcommands().front()->get_name(), args);
  } catch (const mvsde::AuditFailure& e) {
    std::cerr << "audit failed: " << e.what() << '\n';
    return kFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kError;
  }
}
