// csforecast: synth, train, forecast, backtest and compare from a JSON run config.
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "csnet/commands.hpp"
#include "csnet/error.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Cross-sectional multivariate forecasting"};
  app.require_subcommand(1);

  std::string config_path;
  csnet::RunOverrides overrides;
  std::uint64_t seed = 0;
  std::string out, variant;
  unsigned threads = 1;
  std::string model_path;
  std::vector<std::string> reports;

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run config")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "run seed (overrides config)");
    cmd->add_option("--out", out, "output directory (overrides config)");
    cmd->add_option("--variant", variant, "csnet1, csnet2, csnet3, var or persistence");
    cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  };

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset and manifest");
  add_run_flags(synth);
  auto* train = app.add_subcommand("train", "train a network forecaster and save it");
  add_run_flags(train);
  auto* forecast = app.add_subcommand("forecast", "forecast the horizon after the data");
  add_run_flags(forecast);
  forecast->add_option("--model", model_path, "model file (default <out>/model.csnet)");
  auto* backtest = app.add_subcommand("backtest", "run the backtest protocol, write a report");
  add_run_flags(backtest);
  auto* cmp = app.add_subcommand("compare", "rank backtest reports by MASE");
  cmp->add_option("reports", reports, "report JSON files")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", out, "output CSV (default comparison.csv)");

  CLI11_PARSE(app, argc, argv);
  csnet::configure_logging();

  try {
    if (cmp->parsed()) {
      std::vector<fs::path> paths(reports.begin(), reports.end());
      std::cout << csnet::cmd_compare(paths, out.empty() ? fs::path("comparison.csv") : fs::path(out));
      return 0;
    }
    CLI::App* cmd = app.get_subcommands().front();
    if (cmd->count("--seed")) overrides.seed = seed;
    if (cmd->count("--out")) overrides.out = out;
    if (cmd->count("--variant")) overrides.variant = variant;
    if (cmd->count("--threads")) overrides.threads = threads;
    const csnet::RunConfig config = csnet::load_run_config(config_path, overrides);

    fs::path written;
    if (synth->parsed()) {
      written = csnet::cmd_synth(config);
    } else if (train->parsed()) {
      written = csnet::cmd_train(config);
    } else if (forecast->parsed()) {
      written = csnet::cmd_forecast(config, model_path.empty() ? std::nullopt
                                                               : std::optional<fs::path>(model_path));
    } else {
      written = csnet::cmd_backtest(config);
    }
    std::cout << written.string() << "\n";
  } catch (const csnet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
