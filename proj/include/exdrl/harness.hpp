#pragma once

#include "exdrl/agent.hpp"
#include "exdrl/config.hpp"
#include "exdrl/market_env.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace exdrl::harness {

namespace fs = std::filesystem;
using config::RunConfig;

/// Significant digits of every number in emitted reports.
inline constexpr int kReportDigits = 6;

/// x rounded to `digits` significant decimal digits; the value printed by %.{digits}g.
double round_sig(double x, int digits = kReportDigits);

struct Aggregates {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single episode
  double var = 0.0;  // sorted[round((1 - alpha) n)]
  double cvar = 0.0; // mean of sorted[0..round((1 - alpha) n)]
  std::optional<double> gamma_hedge_ratio;  // mean over episodes where it is defined
};

/// Statistics of a PnL sample, each rounded to kReportDigits.
Aggregates aggregate(std::span<const double> pnl, std::span<const std::optional<double>> ghr, double alpha);

struct EvalReport {
  std::string agent;         // "EX-D4PG", "QR-D4PG" or "constant(a)"
  std::string risk_measure;  // label of the training risk measure
  double alpha = 0.95;       // level of the reported VaR and CVaR
  double volatility = 0.0;
  std::uint64_t seed = 0;    // master seed of the evaluation episodes
  std::vector<double> pnl;   // per-episode cumulative reward, rounded
  std::vector<std::optional<double>> gamma_hedge_ratio;  // per episode, rounded
  Aggregates aggregate;
  nlohmann::json config;     // echo of the run configuration
};

/// {"mean", "std", "VaR<a>", "CVaR<a>", "gamma_hedge_ratio"}.
std::vector<std::string> metric_names(double alpha);
/// Aggregate values in metric_names order; empty when undefined.
std::vector<std::optional<double>> metric_values(const Aggregates& a);

using Policy = std::function<double(const market::Observation&)>;

/// Seed of evaluation episode i.
std::uint64_t episode_seed(std::uint64_t master, std::uint64_t i);

/// Runs cfg.n_eval_scenarios episodes of `policy` with episode i seeded by
/// episode_seed(cfg.seed, i).
EvalReport evaluate(const RunConfig& cfg, const Policy& policy, const std::string& agent_label);

struct TrainOutput {
  agent::Agent agent;
  std::int64_t steps = 0;
};

/// cfg.n_train_steps training steps from `seed`. Writes one metrics row per
/// step when `metrics_csv` is given.
TrainOutput train(const RunConfig& cfg, std::uint64_t seed, std::ostream* metrics_csv = nullptr);
void write_metrics_header(std::ostream& out);
/// Tail columns hold "NA" in baseline mode; loss columns hold "NA" until learning starts.
void write_metrics_row(std::ostream& out, const agent::TrainMetrics& m, bool baseline_mode);

/// Writes <out_dir>/checkpoint.json and <out_dir>/train_metrics.csv.
TrainOutput run_train(const RunConfig& cfg, const fs::path& out_dir);

/// Evaluates the deterministic policy of `agent`.
EvalReport run_eval(const RunConfig& cfg, const agent::Agent& agent);
/// Evaluates the scripted policy of cfg when set, otherwise the checkpoint,
/// which must match cfg.agent.
EvalReport run_eval(const RunConfig& cfg, const std::optional<fs::path>& checkpoint);

/// Training seed of one sweep cell; a function of the master seed and the cell key only.
std::uint64_t cell_seed(std::uint64_t master, double volatility, const std::string& risk_label);

/// Configuration of one cell: volatility and risk measure substituted.
RunConfig cell_config(const RunConfig& cfg, double volatility, const risk::RiskMeasureSpec& risk);

/// Trains (unless the policy is scripted) and evaluates every
/// (volatility, risk measure) cell. Cell artefacts go under
/// <out_dir>/cells/ when out_dir is given.
std::vector<EvalReport> run_sweep(const RunConfig& cfg, const std::optional<fs::path>& out_dir = std::nullopt);
/// One row per report, keyed by volatility and risk measure.
void write_sweep_csv(std::ostream& out, std::span<const EvalReport> reports);

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
/// Serialised report; stable under parse and re-emit.
std::string dump_report(const EvalReport& r);

/// "eval_<agent>_<risk>_vol<v>.json" with unsafe characters replaced.
std::string report_file_name(const EvalReport& r);
fs::path write_report(const fs::path& dir, const EvalReport& r);
/// Every eval_*.json in `dir`, in file-name order.
std::vector<EvalReport> read_reports(const fs::path& dir);

enum class ReportFormat { csv, json };
ReportFormat format_from_string(const std::string& s);

void write_pnl_csv(std::ostream& out, std::span<const EvalReport> reports);
/// Columns agent, volatility, risk_measure, metric, value; five rows per report.
void write_aggregate_csv(std::ostream& out, std::span<const EvalReport> reports);
/// Rows (volatility, risk_measure, metric), one column per agent.
void write_table_csv(std::ostream& out, std::span<const EvalReport> reports);

/// csv: pnl.csv, aggregate.csv and table.csv; json: report.json.
/// Returns the files written.
std::vector<fs::path> emit_report(std::span<const EvalReport> reports, ReportFormat format, const fs::path& out_dir);

}  // namespace exdrl::harness
