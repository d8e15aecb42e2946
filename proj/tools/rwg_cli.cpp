// rwg: run, validate and emit series for random-walk experiments.
//
// Exit codes: 0 success, 2 invalid config or usage, 3 budget refusal, 1 other failures.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "rwg/rwg.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kInvalid = 2;
constexpr int kRefused = 3;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw rwg::UsageError("cannot read " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

int print_issues(const std::vector<rwg::ConfigIssue>& issues, const std::string& path) {
  for (const auto& i : issues) std::cerr << path << ":" << i.line << ": " << i.field << ": " << i.reason << "\n";
  return kInvalid;
}

// RWG_THREADS wins over the config's thread count.
void apply_env(rwg::ExperimentConfig& cfg) {
  if (const char* env = std::getenv("RWG_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v > 0) cfg.threads = static_cast<std::size_t>(v);
  }
}

int cmd_run(const std::string& path, const std::string& out) {
  rwg::ParseOutcome p = rwg::parse_config(read_file(path));
  if (!p.ok()) return print_issues(p.issues, path);
  apply_env(*p.config);
  rwg::RunOptions opt;
  if (!out.empty()) opt.output_dir = out;
  try {
    rwg::RunReport r = rwg::run(*p.config, opt);
    for (const auto& f : r.files) std::cout << "wrote " << f << "\n";
    std::cout << "report digest " << r.digest() << "\n";
    return kOk;
  } catch (const rwg::PartialRunError& e) {
    std::cerr << "refused: " << e.what() << "\n";
    for (const auto& f : e.partial().files) std::cerr << "partial report " << f << "\n";
    return kRefused;
  }
}

int cmd_validate(const std::string& path) {
  rwg::ParseOutcome p = rwg::parse_config(read_file(path));
  if (!p.ok()) return print_issues(p.issues, path);
  std::cout << p.config->canonical().dump(2) << "\n";
  std::cout << "config digest " << p.config->digest() << "\n";
  return kOk;
}

int cmd_emit(const std::string& report_path, const std::string& series, const std::string& out) {
  nlohmann::json report;
  try {
    report = nlohmann::json::parse(read_file(report_path));
  } catch (const nlohmann::json::exception& e) {
    throw rwg::UsageError(report_path + " is not a report: " + e.what());
  }
  std::filesystem::path dir = out.empty() ? std::filesystem::path(report_path).parent_path() : std::filesystem::path(out);
  std::cout << "wrote " << rwg::emit_series(report, series, dir).string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random walks on groups: escape, entropy, heat-kernel and coarse-trajectory experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, report_path, series;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "YAML experiment config")->required();
  run->add_option("--out", out_dir, "Output directory (overrides output.dir)");

  auto* validate = app.add_subcommand("validate", "Check a config and print its canonical form");
  validate->add_option("config", config_path, "YAML experiment config")->required();

  auto* emit = app.add_subcommand("emit", "Write one series of a report as a plot-data file");
  emit->add_option("report", report_path, "report.json written by run")->required();
  emit->add_option("series", series, "Series name")->required();
  emit->add_option("--out", out_dir, "Output directory (default: the report's directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir);
    if (*validate) return cmd_validate(config_path);
    if (*emit) return cmd_emit(report_path, series, out_dir);
  } catch (const rwg::ResourceError& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return kRefused;
  } catch (const rwg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kInvalid;
  } catch (const rwg::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kInvalid;
  } catch (const rwg::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
