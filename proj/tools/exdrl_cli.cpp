// Command-line front end: train, eval, sweep and report.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.

#include "exdrl/config.hpp"
#include "exdrl/harness.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

namespace fs = std::filesystem;
namespace hx = exdrl::harness;
using exdrl::config::RunConfig;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void print_summary(const hx::EvalReport& r) {
  const auto names = hx::metric_names(r.alpha);
  const auto values = hx::metric_values(r.aggregate);
  std::cout << r.agent << " " << r.risk_measure << " vol=" << r.volatility << " episodes=" << r.pnl.size() << "\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::cout << "  " << names[i] << " = ";
    if (values[i]) {
      std::cout << *values[i];
    } else {
      std::cout << "NA";
    }
    std::cout << "\n";
  }
}

int cmd_train(const fs::path& config_path, const std::optional<std::uint64_t>& seed) {
  RunConfig cfg = exdrl::config::load_config(config_path);
  if (seed) cfg.seed = *seed;
  const fs::path dir = cfg.output_dir;
  const auto out = hx::run_train(cfg, dir);
  std::cout << "trained " << out.steps << " steps, " << out.agent.updates() << " updates\n"
            << "wrote " << (dir / "checkpoint.json").string() << " and " << (dir / "train_metrics.csv").string()
            << "\n";
  return 0;
}

int cmd_eval(const fs::path& config_path, const std::optional<fs::path>& checkpoint) {
  const RunConfig cfg = exdrl::config::load_config(config_path);
  const auto report = hx::run_eval(cfg, checkpoint);
  const auto path = hx::write_report(cfg.output_dir, report);
  print_summary(report);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_sweep(const fs::path& config_path) {
  const RunConfig cfg = exdrl::config::load_config(config_path);
  const fs::path dir = cfg.output_dir;
  const auto reports = hx::run_sweep(cfg, dir);
  for (const auto& r : reports) hx::write_report(dir, r);
  const auto csv = dir / "sweep.csv";
  std::ofstream out(csv, std::ios::binary);
  if (!out) throw std::runtime_error(csv.string() + ": cannot open for writing");
  hx::write_sweep_csv(out, reports);
  out.flush();
  if (!out) throw std::runtime_error(csv.string() + ": write failed");
  for (const auto& r : reports) print_summary(r);
  std::cout << "wrote " << csv.string() << "\n";
  return 0;
}

int cmd_report(const fs::path& in, const std::string& format, const std::optional<fs::path>& out_dir) {
  const auto reports = hx::read_reports(in);
  if (reports.empty()) throw std::runtime_error(in.string() + ": no eval_*.json reports found");
  for (const auto& p : hx::emit_report(reports, hx::format_from_string(format), out_dir.value_or(in)))
    std::cout << "wrote " << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tail-aware distributional RL for option gamma hedging"};
  app.require_subcommand(1);

  fs::path config_path;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> checkpoint;
  fs::path in_dir;
  std::optional<fs::path> out_dir;
  std::string format;

  auto* train = app.add_subcommand("train", "Train an agent; writes checkpoint.json and train_metrics.csv");
  train->add_option("--config", config_path, "TOML run configuration")->required();
  train->add_option("--seed", seed, "Override the master seed");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or scripted policy; writes eval_*.json");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint from train");
  eval->add_option("--config", config_path, "TOML run configuration")->required();

  auto* sweep = app.add_subcommand("sweep", "Train and evaluate every volatility x risk measure cell");
  sweep->add_option("--config", config_path, "TOML run configuration")->required();

  auto* report = app.add_subcommand("report", "Emit CSV or JSON tables from eval_*.json reports");
  report->add_option("--in", in_dir, "Directory holding eval_*.json")->required();
  report->add_option("--format", format, "csv or json")->required()->check(CLI::IsMember({"csv", "json"}));
  report->add_option("--out", out_dir, "Output directory (defaults to --in)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return cmd_train(config_path, seed);
    if (*eval) return cmd_eval(config_path, checkpoint);
    if (*sweep) return cmd_sweep(config_path);
    return cmd_report(in_dir, format, out_dir);
  } catch (const exdrl::config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
