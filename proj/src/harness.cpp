#include "exdrl/harness.hpp"

#include "exdrl/checkpoint.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace exdrl::harness {

namespace {

using nlohmann::json;

constexpr std::uint64_t kEvalStream = 0x6576616cULL;

std::string fmt(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

std::string fmt_report(double x) { return fmt(x, kReportDigits); }

std::string fmt_opt(const std::optional<double>& x) { return x ? fmt_report(*x) : "NA"; }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_';
    if (!ok) c = '_';
  }
  return s;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

json opt_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

std::optional<double> opt_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

double round_sig(double x, int digits) {
  if (!std::isfinite(x)) return x;
  return std::stod(fmt(x, digits));
}

Aggregates aggregate(std::span<const double> pnl, std::span<const std::optional<double>> ghr, double alpha) {
  if (pnl.empty()) throw std::invalid_argument("aggregate: empty PnL sample");
  const double n = static_cast<double>(pnl.size());
  Aggregates a;
  const double mean = std::accumulate(pnl.begin(), pnl.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : pnl) ss += (x - mean) * (x - mean);
  a.mean = round_sig(mean);
  a.std = pnl.size() > 1 ? round_sig(std::sqrt(ss / (n - 1.0))) : 0.0;

  std::vector<double> sorted(pnl.begin(), pnl.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t idx = risk::level_index(1.0 - alpha, sorted.size());
  a.var = round_sig(sorted[idx]);
  a.cvar = round_sig(std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(idx) + 1, 0.0) /
                     static_cast<double>(idx + 1));

  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& g : ghr) {
    if (g) {
      sum += *g;
      ++count;
    }
  }
  if (count > 0) a.gamma_hedge_ratio = round_sig(sum / static_cast<double>(count));
  return a;
}

std::vector<std::string> metric_names(double alpha) {
  const auto var = risk::RiskMeasureSpec{risk::RiskKind::var, alpha}.label();
  const auto cvar = risk::RiskMeasureSpec{risk::RiskKind::cvar, alpha}.label();
  return {"mean", "std", var, cvar, "gamma_hedge_ratio"};
}

std::vector<std::optional<double>> metric_values(const Aggregates& a) {
  return {a.mean, a.std, a.var, a.cvar, a.gamma_hedge_ratio};
}

std::uint64_t episode_seed(std::uint64_t master, std::uint64_t i) {
  return agent::derive_seed(agent::derive_seed(master, kEvalStream), i);
}

EvalReport evaluate(const RunConfig& cfg, const Policy& policy, const std::string& agent_label) {
  cfg.validate();
  EvalReport r;
  r.agent = agent_label;
  r.risk_measure = cfg.agent.risk_measure.label();
  r.alpha = cfg.agent.risk_measure.alpha;
  r.volatility = cfg.market.vol;
  r.seed = cfg.seed;
  r.config = config::to_json(cfg);

  market::HedgingEnv env(cfg.market);
  const auto n = static_cast<std::size_t>(cfg.n_eval_scenarios);
  r.pnl.reserve(n);
  r.gamma_hedge_ratio.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto obs = env.reset(episode_seed(cfg.seed, i));
    double pnl = 0.0;
    while (!env.done()) {
      const auto res = env.step(policy(obs));
      pnl += res.reward;
      obs = res.observation;
    }
    r.pnl.push_back(round_sig(pnl));
    const auto g = market::gamma_hedge_ratio(env.log());
    r.gamma_hedge_ratio.push_back(g ? std::optional<double>(round_sig(*g)) : std::nullopt);
  }
  r.aggregate = aggregate(r.pnl, r.gamma_hedge_ratio, r.alpha);
  return r;
}

void write_metrics_header(std::ostream& out) {
  out << "step,reward,qr_loss,actor_objective,gpd_sigma_mean,gpd_eps_mean,tail_update_skips\n";
}

void write_metrics_row(std::ostream& out, const agent::TrainMetrics& m, bool baseline_mode) {
  const auto num = [](double x) { return fmt(x, 10); };
  out << m.step << ',' << num(m.reward) << ',';
  if (m.learned) {
    out << num(m.qr_loss) << ',' << num(m.actor_objective) << ',';
  } else {
    out << "NA,NA,";
  }
  if (baseline_mode) {
    out << "NA,NA,NA\n";
  } else if (m.learned) {
    out << num(m.gpd_sigma_mean) << ',' << num(m.gpd_eps_mean) << ',' << m.tail_update_skips << '\n';
  } else {
    out << "NA,NA," << m.tail_update_skips << '\n';
  }
}

TrainOutput train(const RunConfig& cfg, std::uint64_t seed, std::ostream* metrics_csv) {
  cfg.validate();
  agent::Trainer trainer(cfg.agent, cfg.market, seed);
  if (metrics_csv != nullptr) write_metrics_header(*metrics_csv);
  for (std::int64_t i = 0; i < cfg.n_train_steps; ++i) {
    const auto m = trainer.train_step();
    if (metrics_csv != nullptr) write_metrics_row(*metrics_csv, m, cfg.agent.baseline_mode);
  }
  return {trainer.agent(), trainer.steps()};
}

TrainOutput run_train(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  const auto metrics_path = out_dir / "train_metrics.csv";
  auto metrics = open_out(metrics_path);
  auto out = train(cfg, cfg.seed, &metrics);
  finish(metrics, metrics_path);
  checkpoint::save(out_dir / "checkpoint.json", out.agent, out.steps);
  return out;
}

EvalReport run_eval(const RunConfig& cfg, const agent::Agent& agent) {
  if (config::config_hash(agent.config()) != config::config_hash(cfg.agent))
    throw config::ConfigError("agent: evaluated agent does not match the configuration");
  return evaluate(cfg, [&agent](const market::Observation& s) { return agent.act(s); }, config::agent_label(cfg));
}

EvalReport run_eval(const RunConfig& cfg, const std::optional<fs::path>& checkpoint_path) {
  if (cfg.scripted_policy) {
    const double a = cfg.scripted_policy->action;
    return evaluate(cfg, [a](const market::Observation&) { return a; }, config::agent_label(cfg));
  }
  if (!checkpoint_path) throw config::ConfigError("eval: a checkpoint is required unless eval.policy = \"constant\"");
  const auto loaded = checkpoint::load(*checkpoint_path, cfg.agent);
  return run_eval(cfg, loaded.agent);
}

std::uint64_t cell_seed(std::uint64_t master, double volatility, const std::string& risk_label) {
  return agent::derive_seed(master, fnv1a("vol=" + fmt(volatility, 17) + "|" + risk_label));
}

RunConfig cell_config(const RunConfig& cfg, double volatility, const risk::RiskMeasureSpec& risk) {
  RunConfig c = cfg;
  c.market.vol = volatility;
  c.agent.risk_measure = risk;
  c.volatilities = {volatility};
  c.risk_measures = {risk};
  return c;
}

std::vector<EvalReport> run_sweep(const RunConfig& cfg, const std::optional<fs::path>& out_dir) {
  cfg.validate();
  std::vector<EvalReport> reports;
  for (double vol : cfg.volatilities) {
    for (const auto& risk : cfg.risk_measures) {
      const RunConfig cell = cell_config(cfg, vol, risk);
      if (cell.scripted_policy) {
        reports.push_back(run_eval(cell, std::nullopt));
        continue;
      }
      const auto seed = cell_seed(cfg.seed, vol, risk.label());
      std::optional<TrainOutput> trained;
      if (out_dir) {
        const auto dir = *out_dir / "cells" / sanitize("vol" + fmt(vol, 6) + "_" + risk.label());
        fs::create_directories(dir);
        const auto metrics_path = dir / "train_metrics.csv";
        auto metrics = open_out(metrics_path);
        trained.emplace(train(cell, seed, &metrics));
        finish(metrics, metrics_path);
        checkpoint::save(dir / "checkpoint.json", trained->agent, trained->steps);
      } else {
        trained.emplace(train(cell, seed));
      }
      auto report = run_eval(cell, trained->agent);
      report.config["train_seed"] = seed;
      reports.push_back(std::move(report));
    }
  }
  return reports;
}

void write_sweep_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "volatility,risk_measure,agent,alpha,n_episodes,mean,std,VaR,CVaR,gamma_hedge_ratio\n";
  for (const auto& r : reports) {
    const auto& a = r.aggregate;
    out << fmt_report(r.volatility) << ',' << r.risk_measure << ',' << r.agent << ',' << fmt_report(r.alpha) << ','
        << r.pnl.size() << ',' << fmt_report(a.mean) << ',' << fmt_report(a.std) << ',' << fmt_report(a.var) << ','
        << fmt_report(a.cvar) << ',' << fmt_opt(a.gamma_hedge_ratio) << '\n';
  }
}

json to_json(const EvalReport& r) {
  json agg = json::object();
  const auto names = metric_names(r.alpha);
  const auto values = metric_values(r.aggregate);
  for (std::size_t i = 0; i < names.size(); ++i) agg[names[i]] = opt_json(values[i]);
  json ghr = json::array();
  for (const auto& g : r.gamma_hedge_ratio) ghr.push_back(opt_json(g));
  return {{"agent", r.agent},
          {"risk_measure", r.risk_measure},
          {"alpha", r.alpha},
          {"volatility", r.volatility},
          {"seed", r.seed},
          {"n_episodes", r.pnl.size()},
          {"aggregate", agg},
          {"episodes", {{"pnl", r.pnl}, {"gamma_hedge_ratio", ghr}}},
          {"config", r.config}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  try {
    j.at("agent").get_to(r.agent);
    j.at("risk_measure").get_to(r.risk_measure);
    j.at("alpha").get_to(r.alpha);
    j.at("volatility").get_to(r.volatility);
    j.at("seed").get_to(r.seed);
    j.at("episodes").at("pnl").get_to(r.pnl);
    for (const auto& g : j.at("episodes").at("gamma_hedge_ratio")) r.gamma_hedge_ratio.push_back(opt_from_json(g));
    r.config = j.at("config");
    const auto names = metric_names(r.alpha);
    const auto& agg = j.at("aggregate");
    r.aggregate.mean = agg.at(names[0]).get<double>();
    r.aggregate.std = agg.at(names[1]).get<double>();
    r.aggregate.var = agg.at(names[2]).get<double>();
    r.aggregate.cvar = agg.at(names[3]).get<double>();
    r.aggregate.gamma_hedge_ratio = opt_from_json(agg.at(names[4]));
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("report: malformed document: ") + e.what());
  }
  if (r.pnl.size() != r.gamma_hedge_ratio.size() || r.pnl.empty())
    throw std::runtime_error("report: episode columns are empty or of unequal length");
  return r;
}

std::string dump_report(const EvalReport& r) { return to_json(r).dump(1); }

std::string report_file_name(const EvalReport& r) {
  return sanitize("eval_" + r.agent + "_" + r.risk_measure + "_vol" + fmt(r.volatility, 6)) + ".json";
}

fs::path write_report(const fs::path& dir, const EvalReport& r) {
  fs::create_directories(dir);
  const auto path = dir / report_file_name(r);
  auto out = open_out(path);
  out << dump_report(r) << '\n';
  finish(out, path);
  return path;
}

std::vector<EvalReport> read_reports(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("eval_", 0) == 0 && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<EvalReport> reports;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    try {
      reports.push_back(report_from_json(json::parse(in)));
    } catch (const std::exception& e) {
      throw std::runtime_error(f.string() + ": " + e.what());
    }
  }
  return reports;
}

ReportFormat format_from_string(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw std::invalid_argument("format must be csv or json, got '" + s + "'");
}

void write_pnl_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "agent,volatility,risk_measure,episode,pnl,gamma_hedge_ratio\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.pnl.size(); ++i) {
      out << r.agent << ',' << fmt_report(r.volatility) << ',' << r.risk_measure << ',' << i << ','
          << fmt_report(r.pnl[i]) << ',' << fmt_opt(r.gamma_hedge_ratio[i]) << '\n';
    }
  }
}

void write_aggregate_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "agent,volatility,risk_measure,metric,value\n";
  for (const auto& r : reports) {
    const auto names = metric_names(r.alpha);
    const auto values = metric_values(r.aggregate);
    for (std::size_t i = 0; i < names.size(); ++i) {
      out << r.agent << ',' << fmt_report(r.volatility) << ',' << r.risk_measure << ',' << names[i] << ','
          << fmt_opt(values[i]) << '\n';
    }
  }
}

void write_table_csv(std::ostream& out, std::span<const EvalReport> reports) {
  std::vector<std::string> agents;
  // Row key in first-seen order: (volatility, risk measure, metric).
  std::vector<std::tuple<std::string, std::string, std::string>> rows;
  std::map<std::tuple<std::string, std::string, std::string>, std::map<std::string, std::string>> cells;
  for (const auto& r : reports) {
    if (std::find(agents.begin(), agents.end(), r.agent) == agents.end()) agents.push_back(r.agent);
    const auto names = metric_names(r.alpha);
    const auto values = metric_values(r.aggregate);
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto key = std::make_tuple(fmt_report(r.volatility), r.risk_measure, names[i]);
      if (!cells.contains(key)) rows.push_back(key);
      auto& slot = cells[key][r.agent];
      if (!slot.empty()) throw std::invalid_argument("report: duplicate run for " + r.agent + " " + r.risk_measure);
      slot = fmt_opt(values[i]);
    }
  }
  out << "volatility,risk_measure,metric";
  for (const auto& a : agents) out << ',' << a;
  out << '\n';
  for (const auto& key : rows) {
    out << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key);
    const auto& row = cells[key];
    for (const auto& a : agents) {
      const auto it = row.find(a);
      out << ',' << (it == row.end() ? "" : it->second);
    }
    out << '\n';
  }
}

std::vector<fs::path> emit_report(std::span<const EvalReport> reports, ReportFormat format, const fs::path& out_dir) {
  if (reports.empty()) throw std::invalid_argument("report: no evaluation reports to emit");
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  const auto write = [&](const std::string& name, const auto& body) {
    const auto path = out_dir / name;
    auto out = open_out(path);
    body(out);
    finish(out, path);
    written.push_back(path);
  };
  if (format == ReportFormat::csv) {
    write("pnl.csv", [&](std::ostream& o) { write_pnl_csv(o, reports); });
    write("aggregate.csv", [&](std::ostream& o) { write_aggregate_csv(o, reports); });
    write("table.csv", [&](std::ostream& o) { write_table_csv(o, reports); });
  } else {
    write("report.json", [&](std::ostream& o) {
      json all = json::array();
      for (const auto& r : reports) all.push_back(to_json(r));
      o << json{{"reports", all}}.dump(1) << '\n';
    });
  }
  return written;
}

}  // namespace exdrl::harness
