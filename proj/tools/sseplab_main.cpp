// Command-line front end: ensemble simulation, exact small-system oracle
// checks, the packaged acceptance suite, and plot-ready comparison tables.
//
// Exit codes: 0 success; 1 acceptance/check failure; 2 usage or
// configuration error; 3 internal invariant violation.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sseplab/harness.hpp"
#include "sseplab/oracle.hpp"
#include "sseplab/stats.hpp"
#include "sseplab/verify.hpp"

namespace {

using namespace sseplab;

std::string num17(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

// The environment seed takes precedence over the spec seed.
void apply_env_seed(harness::ExperimentSpec& spec) {
  const char* env = std::getenv("SSEPLAB_SEED");
  if (env == nullptr) return;
  const std::string token(env);
  if (token.empty() || token[0] == '-') {
    throw config_error("SSEPLAB_SEED must be a nonnegative integer, got '" + token + "'");
  }
  std::size_t used = 0;
  std::uint64_t value = 0;
  try {
    value = std::stoull(token, &used, 0);
  } catch (const std::exception&) {
    throw config_error("SSEPLAB_SEED is not an unsigned integer: '" + token + "'");
  }
  if (used != token.size()) {
    throw config_error("trailing characters in SSEPLAB_SEED: '" + token + "'");
  }
  spec.seed = value;
}

harness::ExperimentSpec load_effective_spec(const std::string& spec_path,
                                            const std::string& out_override) {
  harness::ExperimentSpec spec = harness::load_spec(spec_path);
  apply_env_seed(spec);
  if (!out_override.empty()) spec.out = out_override;
  return spec;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invariant_violation("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw invariant_violation("write failure on '" + path + "'");
}

// Per-time moments of the five observables with standard errors.
std::string summary_csv(const stats::EnsembleSummary& summary) {
  std::string csv = "t,observable,count,mean,se_mean,variance,se_variance,m4,m6\n";
  const char* names[5] = {"J", "X", "K", "M", "A"};
  for (std::size_t ti = 0; ti < summary.times.size(); ++ti) {
    const stats::ObservableMoments& slot = summary.moments[ti];
    const stats::MomentAccumulator* accs[5] = {&slot.current, &slot.tagged, &slot.crossings,
                                               &slot.martingale, &slot.drift};
    for (int i = 0; i < 5; ++i) {
      const stats::MomentAccumulator& acc = *accs[i];
      csv += num17(summary.times[ti]);
      csv += ',';
      csv += names[i];
      csv += ',';
      csv += std::to_string(acc.count());
      csv += ',';
      csv += num17(acc.mean());
      csv += ',';
      csv += num17(std::sqrt(acc.variance() / static_cast<double>(acc.count())));
      csv += ',';
      csv += num17(acc.variance());
      csv += ',';
      csv += num17(acc.variance_se());
      csv += ',';
      csv += num17(acc.central_moment(4));
      csv += ',';
      csv += num17(acc.central_moment(6));
      csv += '\n';
    }
  }
  return csv;
}

// Rows for an ensemble-dependent command: the persisted file when present
// (pure reader), otherwise a fresh run.
stats::EnsembleSummary rows_or_run(const harness::ExperimentSpec& spec, int workers) {
  const std::string rows_path = spec.out + "/rows.csv";
  if (std::filesystem::exists(rows_path)) {
    return stats::summary_from_rows(spec, harness::read_rows(rows_path));
  }
  stats::RunOptions options;
  options.workers = workers;
  options.spacing_depth = 0;
  return stats::run_ensemble(spec, options);
}

int run_simulate(const std::string& spec_path, const std::string& out_override, int workers) {
  harness::ExperimentSpec spec = load_effective_spec(spec_path, out_override);
  std::filesystem::create_directories(spec.out);
  stats::RunOptions options;
  options.workers = workers;
  options.spacing_depth = 0;
  const stats::EnsembleSummary summary = stats::run_ensemble(spec, options);
  harness::write_rows(summary.rows, spec.out + "/rows.csv");
  write_text(spec.out + "/summary.csv", summary_csv(summary));
  std::cout << "wrote " << summary.rows.size() << " rows for " << spec.replicates
            << " replicates to " << spec.out << "/rows.csv and summary.csv\n";
  return 0;
}

int run_verify(const std::string& spec_path, const std::string& out_override,
               const std::string& suite, int workers) {
  if (suite != "acceptance") {
    throw config_error("unknown suite '" + suite + "' (available: acceptance)");
  }
  const harness::ExperimentSpec spec = load_effective_spec(spec_path, out_override);
  const std::string rows_path = spec.out + "/rows.csv";
  const std::string source = std::filesystem::exists(rows_path) ? rows_path : std::string{};
  const verify::AcceptanceReport report =
      verify::run_acceptance(spec, source, std::cout, workers);
  return report.all_pass() ? 0 : 1;
}

int run_report(const std::string& spec_path, const std::string& out_override, int workers) {
  const harness::ExperimentSpec spec = load_effective_spec(spec_path, out_override);
  std::filesystem::create_directories(spec.out);
  const stats::EnsembleSummary summary = rows_or_run(spec, workers);
  const stats::TheoryConstants theory{core::Density(spec.rho)};

  std::string var_current = "t,value,se,theory\n";
  std::string var_tagged = "t,value,se,theory\n";
  std::string mean_crossings = "t,value,se,theory\n";
  for (std::size_t ti = 0; ti < summary.times.size(); ++ti) {
    const double t = summary.times[ti];
    const double root_t = std::sqrt(t);
    const stats::ObservableMoments& slot = summary.moments[ti];
    var_current += num17(t) + "," + num17(slot.current.variance()) + "," +
                   num17(slot.current.variance_se()) + "," +
                   num17(theory.sigma2_J * root_t) + "\n";
    var_tagged += num17(t) + "," + num17(slot.tagged.variance()) + "," +
                  num17(slot.tagged.variance_se()) + "," +
                  num17(theory.sigma2_X * root_t) + "\n";
    mean_crossings +=
        num17(t) + "," + num17(slot.crossings.mean()) + "," +
        num17(std::sqrt(slot.crossings.variance() /
                        static_cast<double>(slot.crossings.count()))) +
        "," + num17(theory.k_limit * root_t) + "\n";
  }
  write_text(spec.out + "/report_var_J.csv", var_current);
  write_text(spec.out + "/report_var_X.csv", var_tagged);
  write_text(spec.out + "/report_mean_K.csv", mean_crossings);

  std::string covariance = "t,s,value,se,theory\n";
  for (const stats::CovarianceCell& cell : stats::covariance_check(summary)) {
    covariance += num17(cell.t) + "," + num17(cell.s) + "," + num17(cell.value) + "," +
                  num17(cell.se) + "," + num17(cell.theory) + "\n";
  }
  write_text(spec.out + "/report_cov_J.csv", covariance);

  std::cout << "wrote report_var_J.csv, report_var_X.csv, report_mean_K.csv, "
               "report_cov_J.csv to "
            << spec.out << '\n';
  return 0;
}

int run_oracle(const std::string& spec_path, const std::string& out_override,
               const std::string& check, int sites, double time_point) {
  double rho = 0.5;
  std::string out_dir = out_override.empty() ? "." : out_override;
  if (!spec_path.empty()) {
    const harness::ExperimentSpec spec = harness::load_spec(spec_path);
    rho = spec.rho;
    if (out_override.empty()) out_dir = spec.out;
  }
  std::filesystem::create_directories(out_dir);

  if (check == "negcorr") {
    const oracle::NegCorrReport report =
        oracle::check_negative_correlation(sites, time_point, 1e-13);
    oracle::write_negcorr_csv(report, out_dir + "/negcorr.csv");
    std::cout << "negative-correlation audit on " << sites << " sites at t=" << time_point
              << ": max violation " << report.max_violation << " (kernel error "
              << report.kernel_error << "), report in " << out_dir << "/negcorr.csv\n";
    return report.max_violation <= 1e-12 ? 0 : 1;
  }
  if (check == "current") {
    const oracle::CurrentPmf pmf =
        oracle::exact_current_distribution(sites, core::Density(rho), time_point);
    std::string csv = "j,probability\n";
    for (std::size_t k = 0; k < pmf.p.size(); ++k) {
      csv += std::to_string(pmf.j_min + static_cast<std::int64_t>(k)) + "," +
             num17(pmf.p[k]) + "\n";
    }
    write_text(out_dir + "/current_pmf.csv", csv);
    std::cout << "exact current law on " << sites << " sites at t=" << time_point
              << " (density " << rho << "): total mass " << pmf.total() << ", pmf in "
              << out_dir << "/current_pmf.csv\n";
    return 0;
  }
  if (check == "walker") {
    const int radius = oracle::default_walker_truncation(time_point);
    const double value = oracle::mean_positive_walk(time_point, radius);
    std::string csv = "t,mean_positive,ratio_to_sqrt_t\n";
    csv += num17(time_point) + "," + num17(value) + "," +
           num17(value / std::sqrt(time_point)) + "\n";
    write_text(out_dir + "/walker.csv", csv);
    std::cout << "mean positive part of the rate-1 walk at t=" << time_point << ": " << value
              << " (truncation radius " << radius << "), table in " << out_dir
              << "/walker.csv\n";
    return 0;
  }
  throw config_error("unknown oracle check '" + check +
                     "' (available: negcorr, current, walker)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-driven exclusion-process simulator and verification laboratory"};
  app.require_subcommand(1);

  std::string spec_path, out_override, check = "negcorr", suite = "acceptance";
  int workers = 0;
  int sites = 4;
  double time_point = 1.0;

  CLI::App* simulate =
      app.add_subcommand("simulate", "run the ensemble; write rows.csv and summary.csv");
  simulate->add_option("--spec", spec_path, "experiment spec file")->required();
  simulate->add_option("--out", out_override, "output directory (overrides the spec)");
  simulate->add_option("--workers", workers, "worker threads (0 = hardware concurrency)");

  CLI::App* oracle_cmd =
      app.add_subcommand("oracle", "exact finite-state reference checks");
  oracle_cmd->add_option("--check", check, "negcorr | current | walker");
  oracle_cmd->add_option("--sites", sites, "small-system size");
  oracle_cmd->add_option("--time", time_point, "evaluation time");
  oracle_cmd->add_option("--spec", spec_path, "optional spec (density, output directory)");
  oracle_cmd->add_option("--out", out_override, "output directory for report CSVs");

  CLI::App* verify_cmd =
      app.add_subcommand("verify", "run the acceptance suite; PASS/FAIL per criterion");
  verify_cmd->add_option("--spec", spec_path, "experiment spec file")->required();
  verify_cmd->add_option("--suite", suite, "suite name (acceptance)");
  verify_cmd->add_option("--out", out_override, "directory holding rows.csv, if any");
  verify_cmd->add_option("--workers", workers, "worker threads (0 = hardware concurrency)");

  CLI::App* report =
      app.add_subcommand("report", "emit empirical-vs-theory comparison tables");
  report->add_option("--spec", spec_path, "experiment spec file")->required();
  report->add_option("--out", out_override, "output directory (overrides the spec)");
  report->add_option("--workers", workers, "worker threads (0 = hardware concurrency)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return run_simulate(spec_path, out_override, workers);
    if (oracle_cmd->parsed()) {
      return run_oracle(spec_path, out_override, check, sites, time_point);
    }
    if (verify_cmd->parsed()) return run_verify(spec_path, out_override, suite, workers);
    if (report->parsed()) return run_report(spec_path, out_override, workers);
    throw sseplab::config_error("no subcommand given");
  } catch (const sseplab::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const sseplab::invariant_violation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
}
