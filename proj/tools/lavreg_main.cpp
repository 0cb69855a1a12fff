#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "lab/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"lavreg - a numerical laboratory for Lavrentiev regularization"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int jobs = 1;
  auto* run_cmd = app.add_subcommand("run", "run one experiment from a JSON config");
  run_cmd->add_option("config", config_path, "path to the experiment config")->required();
  run_cmd->add_option("--jobs", jobs, "parallelize independent grid points");
  run_cmd->add_option("--out", out_dir, "output directory (overrides config output_dir)");

  auto* list_cmd = app.add_subcommand("list", "list the experiment registry");

  CLI11_PARSE(app, argc, argv);

  if (list_cmd->parsed()) {
    std::fputs(lavreg::lab::list_experiments().c_str(), stdout);
    return 0;
  }
  return lavreg::lab::run(config_path, out_dir, jobs);
}
