// Batch front end: run, validate and list experiment configurations.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "qbsde/config.hpp"

#ifndef QBSDE_CONFIG_DIR
#define QBSDE_CONFIG_DIR "configs"
#endif

namespace {

int report_error(const qbsde::Error& e) {
  std::cerr << "error: " << e.what() << '\n';
  return e.code() == qbsde::ErrorCode::ConfigInvalid ? 2 : 1;
}

std::filesystem::path default_config_dir() {
  if (const char* env = std::getenv("QBSDE_CONFIG_DIR"); env && *env) return env;
  return QBSDE_CONFIG_DIR;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quadratic BSDE / RBSDE solver suite"};
  app.require_subcommand(1);

  std::string run_path;
  std::string out_dir;
  int threads = 0;
  auto* run = app.add_subcommand("run", "Run an experiment config and write its artifacts");
  run->add_option("config", run_path, "Config file (JSON)")->required();
  run->add_option("-o,--output-dir", out_dir, "Override output directory (else QBSDE_OUTPUT_DIR)");
  run->add_option("-j,--threads", threads, "Worker threads (else QBSDE_THREADS, default 1)");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a config against the schema");
  validate->add_option("config", validate_path, "Config file (JSON)")->required();

  std::string catalog_dir = default_config_dir().string();
  auto* list = app.add_subcommand("list-examples", "Print the built-in reproduction catalog");
  list->add_option("--configs", catalog_dir, "Directory holding the catalog configs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (!out_dir.empty()) setenv("QBSDE_OUTPUT_DIR", out_dir.c_str(), 1);
      const int n = threads > 0 ? threads : qbsde::cli::env_threads();
      for (const auto& r : qbsde::cli::run_file(run_path, n)) std::cout << r.summary << '\n';
      return 0;
    }
    if (*validate) {
      const auto plans = qbsde::cli::validate(qbsde::cli::load_json(validate_path));
      std::cout << validate_path << ": ok (" << plans.size() << " experiment"
                << (plans.size() == 1 ? "" : "s") << ")\n";
      return 0;
    }
    for (const auto& e : qbsde::cli::catalog()) {
      const auto path = std::filesystem::path(catalog_dir) / e.file;
      std::cout << e.name << '\t' << path.string() << '\t' << e.description;
      if (*e.expected_error) std::cout << "\t[expected error: " << e.expected_error << ']';
      std::cout << '\n';
    }
    return 0;
  } catch (const qbsde::Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
