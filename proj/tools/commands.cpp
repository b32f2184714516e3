#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "sdemem/chain_io.hpp"
#include "sdemem/config.hpp"
#include "sdemem/dataset_io.hpp"
#include "sdemem/diagnostics.hpp"
#include "sdemem/error.hpp"

namespace fs = std::filesystem;

namespace sdemem::cli {

namespace {

struct CommonOptions {
  std::string config;
  std::string data;
  std::string out = ".";
  std::optional<std::int64_t> seed;
  bool quiet = false;
};

RunConfig load_config(const CommonOptions& o) {
  KeyValueConfig kv = o.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(o.config);
  if (o.seed) kv.set("mcmc.seed", std::to_string(*o.seed));
  return build_run_config(kv);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory '" + dir + "'");
}

std::string join_particles(const std::vector<std::size_t>& n) {
  std::string s;
  for (std::size_t k = 0; k < n.size(); ++k) s += (k ? ";" : "") + std::to_string(n[k]);
  return s;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string truth_path_for(const RunConfig& cfg, const std::string& data_path) {
  if (!cfg.truth_path.empty()) return cfg.truth_path;
  const fs::path candidate = fs::path(data_path).parent_path() / "truth.csv";
  if (fs::exists(candidate)) return candidate.string();
  throw InputError("no parameter values available: set mcmc.truth or place truth.csv next to the data");
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::map<std::string, std::string> kv;
  std::ifstream in(path);
  if (!in) return kv;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto f = split_csv_line(line);
    if (f.size() >= 2) kv[f[0]] = f[1];
  }
  return kv;
}

// ----------------------------------------------------------------------------

int cmd_simulate(const CommonOptions& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const ModelPtr model = cfg.model();
  SimulationSettings s;
  s.units = cfg.units;
  s.observations = cfg.observations;
  s.dt = cfg.dt;
  s.t0 = cfg.t0;
  s.substeps = static_cast<int>(cfg.sim_substeps);
  s.seed = cfg.seed;
  const SimulationResult sim = simulate_dataset(*model, cfg.eta, std::nullopt, cfg.kappa, cfg.xi, s);
  ensure_dir(o.out);
  const std::string data_path = (fs::path(o.out) / "data.csv").string();
  const std::string truth_path = (fs::path(o.out) / "truth.csv").string();
  save_dataset(data_path, sim.data);
  save_truth(truth_path, sim.truth, *model);
  if (!o.quiet) {
    out << "simulated model " << model->name() << ": M = " << sim.data.num_units() << ", n = " << cfg.observations
        << " per unit, times " << num(cfg.t0) << " to " << num(cfg.t0 + cfg.dt * static_cast<double>(cfg.observations - 1))
        << "\n"
        << "wrote " << data_path << " (" << sim.data.total_observations() << " rows) and " << truth_path << "\n";
  }
  return kOk;
}

int cmd_tune(const CommonOptions& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(o);
  if (o.data.empty()) throw InputError("tune needs --data");
  const Dataset data = load_dataset(o.data);
  const ModelPtr model = cfg.model();
  const ParameterState pilot = load_truth(truth_path_for(cfg, o.data), data.num_units(), *model);

  TuningReport report;
  for (std::size_t i = 0; i < data.num_units(); ++i) {
    EstimatorSetup setup;
    setup.model = model.get();
    setup.filter = cfg.filter_spec();
    setup.unit = &data.units[i];
    setup.kappa = pilot.kappa;
    setup.phi = pilot.phi.row(static_cast<Eigen::Index>(i)).transpose();
    setup.xi = pilot.xi;
    Rng rng = substream(cfg.seed, i, 0, StreamPurpose::tuning);
    report.units.push_back(tune_particles(setup, cfg.tuning, rng));
  }
  ensure_dir(o.out);
  const std::string path = (fs::path(o.out) / "tuning.csv").string();
  std::ofstream f(path);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << format_tuning_csv(report);
  f.close();

  if (!o.quiet) {
    out << "unit  rule   N   sigma2   rho_l\n";
    for (const auto& u : report.units) {
      double var = 0.0;
      for (const auto& s : u.steps)
        if (s.particles == u.recommended) var = s.variance;
      out << u.unit_id << "  " << to_string(u.rule) << "  " << u.recommended << "  " << num(var) << "  " << num(u.rho_l)
          << (u.success ? "" : "  FAILED") << "\n";
    }
    out << "recommended common N = " << report.max_recommended() << "\nwrote " << path << "\n";
  }
  if (!report.success()) {
    for (const auto& u : report.units)
      if (!u.success)
        err << "tuning failed for unit '" << u.unit_id << "': variance target not met with N <= "
            << cfg.tuning.max_particles << "\n";
    return kTuningFailure;
  }
  return kOk;
}

int cmd_infer(const CommonOptions& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  if (o.data.empty()) throw InputError("infer needs --data");
  const Dataset data = load_dataset(o.data);
  const ModelPtr model = cfg.model();
  const ParameterState init = cfg.init == "truth"
                                  ? load_truth(truth_path_for(cfg, o.data), data.num_units(), *model)
                                  : cfg.initial_state(data.num_units());
  const GibbsConfig g = cfg.gibbs_config();
  GibbsSampler sampler(data, model, cfg.priors, g, init);

  ensure_dir(o.out);
  const auto columns = chain_columns(*model, data.num_units());
  CsvWriter chain((fs::path(o.out) / "chain.csv").string(), columns, cfg.flush_every);
  std::vector<std::string> acc_cols{"iteration"};
  for (std::size_t i = 0; i < data.num_units(); ++i) acc_cols.push_back("unit_" + std::to_string(i + 1));
  const std::size_t blocks = cfg.joint_common ? 1 : static_cast<std::size_t>(model->num_common() + model->num_obs_params());
  for (std::size_t b = 0; b < blocks; ++b) acc_cols.push_back("common_" + std::to_string(b + 1));
  acc_cols.push_back("loglik");
  CsvWriter acc((fs::path(o.out) / "acceptance.csv").string(), acc_cols, cfg.flush_every);

  const ChainOutput res = sampler.run([&](std::size_t it, const Eigen::VectorXd& row, const IterationTelemetry& tel) {
    chain.write_row(row);
    std::vector<double> a{static_cast<double>(it)};
    for (auto f : tel.unit_accepted) a.push_back(f);
    for (auto f : tel.common_accepted) a.push_back(f);
    a.push_back(tel.total_loglik);
    acc.write_row(a);
  });
  chain.flush();
  acc.flush();

  const double minutes = res.runtime_seconds / 60.0;
  double unit_rate = 0.0;
  for (double r : res.unit_acceptance) unit_rate += r;
  if (!res.unit_acceptance.empty()) unit_rate /= static_cast<double>(res.unit_acceptance.size());
  {
    std::ofstream info(fs::path(o.out) / "run_info.csv");
    info << "key,value\n"
         << "model," << model->name() << "\n"
         << "scheme," << to_string(cfg.scheme) << "\n"
         << "filter," << to_string(g.filter.kind) << "\n"
         << "rho," << format_double(g.rho) << "\n"
         << "N," << join_particles(g.particles) << "\n"
         << "iterations," << g.n_iters << "\n"
         << "burn_in," << g.burn_in << "\n"
         << "seed," << g.seed << "\n"
         << "runtime_minutes," << format_double(minutes) << "\n"
         << "mean_unit_acceptance," << format_double(unit_rate) << "\n";
    for (std::size_t b = 0; b < res.common_acceptance.size(); ++b)
      info << "common_acceptance_" << b + 1 << "," << format_double(res.common_acceptance[b]) << "\n";
    info << "degenerate_proposals," << res.degenerate_proposals << "\n";
  }
  if (!o.quiet) {
    out << "scheme " << to_string(cfg.scheme) << " on model " << model->name() << ": " << g.n_iters
        << " iterations in " << num(minutes) << " min\n"
        << "mean unit acceptance " << num(unit_rate);
    for (double r : res.common_acceptance) out << ", common acceptance " << num(r);
    out << "\n";
    const Eigen::Index start = static_cast<Eigen::Index>(g.burn_in);
    const Eigen::MatrixXd post = res.draws.bottomRows(res.draws.rows() - start);
    out << "posterior means after burn-in:\n";
    for (std::size_t c = static_cast<std::size_t>(data.num_units() * static_cast<std::size_t>(model->num_random_effects()));
         c < columns.size(); ++c)
      out << "  " << columns[c] << " = " << num(post.col(static_cast<Eigen::Index>(c)).mean()) << "\n";
    out << "wrote " << (fs::path(o.out) / "chain.csv").string() << "\n";
  }
  return kOk;
}

struct LoadedChain {
  std::string path;
  std::string label;
  double rho = 0.0;
  std::string particles = "-";
  double minutes = std::nan("");
  ChainTable table;  // burn-in removed
};

LoadedChain load_chain(const std::string& path, std::optional<double> runtime, std::optional<std::int64_t> burn_in) {
  LoadedChain c;
  c.path = path;
  ChainTable t = read_chain_csv(path);
  const auto info = read_key_values(fs::path(path).parent_path() / "run_info.csv");
  auto get = [&](const std::string& k) -> std::optional<std::string> {
    auto it = info.find(k);
    if (it == info.end()) return std::nullopt;
    return it->second;
  };
  c.label = get("scheme").value_or(fs::path(path).stem().string());
  if (auto r = get("rho")) c.rho = std::stod(*r);
  if (auto n = get("N")) c.particles = *n;
  if (runtime) c.minutes = *runtime;
  else if (auto m = get("runtime_minutes")) c.minutes = std::stod(*m);
  std::int64_t skip = 0;
  if (burn_in) skip = *burn_in;
  else if (auto b = get("burn_in")) skip = std::stoll(*b);
  skip = std::clamp<std::int64_t>(skip, 0, t.values.rows());
  c.table.columns = t.columns;
  c.table.values = t.values.bottomRows(t.values.rows() - skip);
  if (c.table.values.rows() < 10)
    throw InputError("chain '" + path + "' has fewer than 10 draws after burn-in");
  return c;
}

struct DiagnoseOptions {
  std::vector<std::string> chains;
  std::string baseline;
  std::vector<double> runtimes;
  std::optional<double> baseline_runtime;
  std::optional<std::int64_t> burn_in;
};

int cmd_diagnose(const CommonOptions& o, const DiagnoseOptions& d, std::ostream& out) {
  if (d.chains.empty()) throw InputError("diagnose needs at least one --chain");
  if (!d.runtimes.empty() && d.runtimes.size() != d.chains.size())
    throw InputError("give one --runtime per --chain");
  std::vector<LoadedChain> chains;
  for (std::size_t k = 0; k < d.chains.size(); ++k)
    chains.push_back(load_chain(d.chains[k], d.runtimes.empty() ? std::nullopt : std::optional<double>(d.runtimes[k]),
                                d.burn_in));
  std::size_t base_index = 0;
  if (!d.baseline.empty()) {
    auto it = std::find(d.chains.begin(), d.chains.end(), d.baseline);
    if (it != d.chains.end()) {
      base_index = static_cast<std::size_t>(it - d.chains.begin());
    } else {
      chains.insert(chains.begin(), load_chain(d.baseline, d.baseline_runtime, d.burn_in));
      base_index = 0;
    }
  }
  const LoadedChain& base = chains[base_index];

  EfficiencyReport report;
  for (const auto& c : chains) {
    EfficiencyRow row;
    row.algorithm = c.label;
    row.rho = c.rho;
    row.particles = c.particles;
    row.cpu_minutes = c.minutes;
    row.mess = mess(c.table.values);
    row.mess_per_minute = row.mess / c.minutes;
    report.rows.push_back(row);
  }
  for (const auto& r : report.rows)
    if (!std::isfinite(r.cpu_minutes))
      throw InputError("runtime unknown for '" + r.algorithm + "'; pass --runtime");
  report.set_relative_to(base_index);

  ensure_dir(o.out);
  {
    std::ofstream f(fs::path(o.out) / "efficiency.csv");
    f << format_efficiency_csv(report);
  }
  {
    std::ofstream f(fs::path(o.out) / "wasserstein.csv");
    f << "chain,parameter,w1,w1_sd_units,perf\n";
    for (const auto& c : chains) {
      for (std::size_t j = 0; j < base.table.columns.size(); ++j) {
        const std::string& name = base.table.columns[j];
        const Eigen::Index cj = c.table.column(name);
        if (cj < 0) continue;
        const Eigen::VectorXd a = base.table.values.col(static_cast<Eigen::Index>(j));
        const Eigen::VectorXd b = c.table.values.col(cj);
        const double w1 = wasserstein1d({a.data(), static_cast<std::size_t>(a.size())},
                                        {b.data(), static_cast<std::size_t>(b.size())});
        const double sd = std::sqrt(sample_variance({a.data(), static_cast<std::size_t>(a.size())}));
        f << c.path << ',' << name << ',' << format_double(w1) << ',' << format_double(sd > 0 ? w1 / sd : 0.0) << ','
          << format_double(perf_measure(w1, c.minutes)) << '\n';
      }
    }
  }
  {
    std::ofstream f(fs::path(o.out) / "densities.csv");
    f << "chain,parameter,x,density\n";
    for (const auto& c : chains) {
      for (std::size_t j = 0; j < c.table.columns.size(); ++j) {
        const Eigen::VectorXd v = c.table.values.col(static_cast<Eigen::Index>(j));
        const DensityGrid g = density_histogram({v.data(), static_cast<std::size_t>(v.size())});
        for (std::size_t k = 0; k < g.x.size(); ++k)
          f << c.path << ',' << c.table.columns[j] << ',' << format_double(g.x[k]) << ',' << format_double(g.density[k])
            << '\n';
      }
    }
  }
  if (!o.quiet) out << format_efficiency_table(report) << "wrote efficiency.csv, wasserstein.csv and densities.csv to "
                    << o.out << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian inference for SDE mixed-effects models"};
  app.require_subcommand(1);
  CommonOptions opts;
  DiagnoseOptions dopts;
  std::int64_t seed = 0;

  auto add_common = [&](CLI::App* sub, bool needs_data) {
    sub->add_option("--config", opts.config, "Configuration file (section.key = value)");
    if (needs_data) sub->add_option("--data", opts.data, "Dataset CSV")->required();
    sub->add_option("--out", opts.out, "Output directory");
    sub->add_option("--seed", seed, "Seed overriding mcmc.seed");
    sub->add_flag("--quiet", opts.quiet, "Suppress the summary");
  };
  auto* sim = app.add_subcommand("simulate", "Simulate a dataset and its ground truth");
  add_common(sim, false);
  auto* tune = app.add_subcommand("tune", "Choose particle counts per unit");
  add_common(tune, true);
  auto* infer = app.add_subcommand("infer", "Run the Gibbs sampler");
  add_common(infer, true);
  auto* diag = app.add_subcommand("diagnose", "Efficiency and Wasserstein diagnostics for chains");
  diag->add_option("--chain", dopts.chains, "Chain CSV (repeatable)")->required();
  diag->add_option("--baseline", dopts.baseline, "Reference chain CSV");
  diag->add_option("--runtime", dopts.runtimes, "Runtime in minutes per --chain (repeatable)");
  diag->add_option("--baseline-runtime", dopts.baseline_runtime, "Runtime in minutes of the baseline chain");
  diag->add_option("--burn-in", dopts.burn_in, "Draws to discard from every chain");
  diag->add_option("--out", opts.out, "Output directory");
  diag->add_flag("--quiet", opts.quiet, "Suppress the summary");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  for (auto* sub : {sim, tune, infer})
    if (sub->parsed() && sub->count("--seed") > 0) opts.seed = seed;

  try {
    if (sim->parsed()) return cmd_simulate(opts, out);
    if (tune->parsed()) return cmd_tune(opts, out, err);
    if (infer->parsed()) return cmd_infer(opts, out);
    if (diag->parsed()) return cmd_diagnose(opts, dopts, out);
  } catch (const StartupDegeneracy& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeDegeneracy;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const InvalidConfiguration& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const UnsupportedModel& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeDegeneracy;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}

}  // namespace sdemem::cli
