#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ionramsey/campaign.hpp"
#include "ionramsey/errors.hpp"
#include "ionramsey/estimator.hpp"
#include "ionramsey/nonlinear_phase.hpp"
#include "ionramsey/pulse_simulator.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;
using ionramsey::Error;
using ionramsey::ErrorKind;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::validation:
      return 2;
    case ErrorKind::io:
      return 3;
    default:
      return 4;
  }
}

void print_error(const Error& e) {
  ordered_json details = ordered_json::array();
  for (const auto& [field, problem] : e.details()) {
    details.push_back({{"field", field}, {"problem", problem}});
  }
  ordered_json j;
  j["error"] = {{"kind", ionramsey::to_string(e.kind())},
                {"message", e.message()},
                {"details", std::move(details)}};
  std::cerr << j.dump(2) << '\n';
}

std::filesystem::path prepare_out_dir(const std::string& out_dir) {
  std::filesystem::path dir(out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorKind::io, "cannot create output directory",
                {{"path", out_dir}, {"detail", ec.message()}});
  }
  return dir;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::io, "cannot open file for writing", {{"path", path.string()}});
  }
  out << content;
  if (!out) {
    throw Error(ErrorKind::io, "write failed", {{"path", path.string()}});
  }
}

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = ".";
  int threads = 1;
};

ionramsey::CampaignConfig require_config(const GlobalArgs& args) {
  if (args.config_path.empty()) {
    throw Error(ErrorKind::usage, "this subcommand needs --config <path>");
  }
  return ionramsey::load_config(args.config_path);
}

ionramsey::RateMethod parse_method(const std::string& text) {
  if (text == "closed_form") return ionramsey::RateMethod::closed_form;
  if (text == "numeric_secular") return ionramsey::RateMethod::numeric_secular;
  if (text == "numeric_dynamic") return ionramsey::RateMethod::numeric_dynamic;
  throw Error(ErrorKind::usage, "unknown rate method",
              {{"method", text}, {"valid", "closed_form|numeric_secular|numeric_dynamic"}});
}

int run_phase_rate(const GlobalArgs& args, double population, const std::string& method_text,
                   bool cross_terms, double tau) {
  const ionramsey::CampaignConfig config = require_config(args);
  const ionramsey::RateMethod method = parse_method(method_text);
  const auto spec = ionramsey::SuperpositionSpec::from_ground_population(population);
  const double x0 = config.trap.x0_x();

  const double closed = ionramsey::phase_rate_closed_form(spec, x0, config.coupling);

  ordered_json j;
  j["population"] = population;
  j["epsilon_gamma"] = config.coupling.epsilon_gamma;
  j["x0_x"] = x0;
  j["closed_form_rate"] = closed;
  if (method == ionramsey::RateMethod::closed_form) {
    j["method"] = "closed_form";
    j["rate"] = closed;
    j["tolerance"] = 0.0;
    j["cross_terms"] = false;
  } else {
    ionramsey::NumericRateOptions options;
    options.transverse = config.transverse;
    options.cross_terms = cross_terms;
    options.dynamic = method == ionramsey::RateMethod::numeric_dynamic;
    const ionramsey::PhaseRate rate =
        ionramsey::phase_rate_numeric(spec, config.trap, config.coupling, options);
    j["method"] = ionramsey::to_string(rate.method);
    j["rate"] = rate.rate;
    j["tolerance"] = rate.tolerance;
    j["cross_terms"] = rate.cross_terms;
  }
  if (tau > 0.0) {
    j["tau"] = tau;
    j["phi_at_tau"] = j["rate"].get<double>() * tau;
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_oracle_check(const GlobalArgs& args, std::vector<double> populations, double rel_tol,
                     bool cross_terms) {
  ionramsey::CampaignConfig config = require_config(args);
  if (populations.empty()) populations = {0.1, 0.2, 0.5, 0.8, 0.9};

  // The closed form assumes an isotropic ground-state source, so the dynamic
  // integrator is run on that idealization of the configured trap.
  ionramsey::TrapConfig trap = config.trap;
  trap.nu_y = trap.nu_x;
  trap.nu_z = trap.nu_x;
  trap.nbar_y = 0.0;
  trap.nbar_z = 0.0;

  ionramsey::NonlinearCoupling coupling = config.coupling;
  const bool substituted = coupling.epsilon_gamma == 0.0;
  if (substituted) coupling.epsilon_gamma = 1e-12;

  const double x0 = trap.x0_x();
  bool all_pass = true;
  ordered_json points = ordered_json::array();
  for (double p : populations) {
    const auto spec = ionramsey::SuperpositionSpec::from_ground_population(p);
    const double closed = ionramsey::phase_rate_closed_form(spec, x0, coupling);
    ionramsey::NumericRateOptions options;
    options.transverse = ionramsey::TransverseModel::ground;
    options.cross_terms = cross_terms;
    options.dynamic = true;
    const ionramsey::PhaseRate numeric =
        ionramsey::phase_rate_numeric(spec, trap, coupling, options);
    const double rel = std::abs(numeric.rate - closed) / std::abs(closed);
    const bool pass = rel <= rel_tol;
    all_pass = all_pass && pass;
    points.push_back({{"population", p},
                      {"closed_form_rate", closed},
                      {"numeric_rate", numeric.rate},
                      {"numeric_tolerance", numeric.tolerance},
                      {"rel_diff", rel},
                      {"pass", pass}});
  }

  ordered_json j;
  j["epsilon_gamma_used"] = coupling.epsilon_gamma;
  j["epsilon_gamma_substituted"] = substituted;
  j["rel_tol"] = rel_tol;
  j["cross_terms"] = cross_terms;
  j["x0_x"] = x0;
  j["points"] = std::move(points);
  j["pass"] = all_pass;
  std::cout << j.dump(2) << '\n';
  if (!all_pass) {
    print_error(Error(ErrorKind::accuracy,
                      "numeric rate disagrees with the closed form beyond rel_tol",
                      {{"rel_tol", std::to_string(rel_tol)}}));
    return 4;
  }
  return 0;
}

int run_simulate(const GlobalArgs& args, const std::vector<double>& taus, int trajectories) {
  ionramsey::CampaignConfig config = require_config(args);
  if (taus.empty()) {
    throw Error(ErrorKind::usage, "simulate needs at least one --taus value");
  }
  const std::uint64_t seed = args.seed_set ? args.seed : config.master_seed;

  ionramsey::RamseyExperiment experiment;
  experiment.trap = config.trap;
  experiment.coupling = config.coupling;
  experiment.noise = config.noise;
  experiment.rate_method = config.truth_rate_method;
  experiment.transverse = config.transverse;

  const std::vector<ionramsey::ContrastPoint> points =
      ionramsey::contrast_envelope(experiment, taus, trajectories, seed, args.threads);

  const auto dir = prepare_out_dir(args.out_dir);
  const auto csv_path = dir / "contrast_envelope.csv";
  write_text_file(csv_path, ionramsey::emit_contrast_envelope_csv(points));

  ordered_json list = ordered_json::array();
  for (const auto& p : points) {
    list.push_back({{"tau_s", p.tau},
                    {"A_mean", p.contrast},
                    {"A_stderr", p.contrast_stderr},
                    {"offset", p.offset},
                    {"A_predicted_zero_jump", p.predicted_zero_jump}});
  }
  ordered_json j;
  j["seed"] = seed;
  j["trajectories"] = trajectories;
  j["heating_rate"] = config.noise.heating_rate;
  j["heating_mode"] = ionramsey::to_string(config.noise.heating_mode);
  j["points"] = std::move(list);
  j["csv"] = csv_path.string();
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_scan_tau(const GlobalArgs& args, const std::vector<double>& taus,
                 const std::vector<double>& rates, int estimates, int shots,
                 double dead_time, bool dead_time_set) {
  ionramsey::CampaignConfig config = require_config(args);
  ionramsey::TauScanRequest request;
  request.taus = taus;
  request.heating_rates = rates.empty() ? std::vector<double>{10.0} : rates;
  request.estimates_per_point = estimates;
  request.shots_per_point = shots;
  request.dead_time = dead_time_set ? dead_time : config.dead_time;
  request.seed = args.seed_set ? args.seed : config.master_seed;

  const std::vector<ionramsey::TauScanCurve> curves =
      ionramsey::run_tau_scan(config, request, args.threads);

  const auto dir = prepare_out_dir(args.out_dir);
  const auto json_path = dir / "tau_scan.json";
  const auto csv_path = dir / "tau_scan.csv";
  write_text_file(json_path, ionramsey::tau_scan_to_json(curves));
  write_text_file(csv_path, ionramsey::emit_tau_scan_csv(curves));

  ordered_json j;
  j["seed"] = request.seed;
  j["estimates_per_point"] = request.estimates_per_point;
  j["shots_per_point"] = request.shots_per_point;
  j["dead_time"] = request.dead_time;
  j["curves"] = curves.size();
  j["json"] = json_path.string();
  j["csv"] = csv_path.string();
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_campaign_cmd(const GlobalArgs& args) {
  ionramsey::CampaignConfig config = require_config(args);
  if (args.seed_set) config.master_seed = args.seed;

  const ionramsey::CampaignDataset dataset = ionramsey::run_campaign(config, args.threads);

  const auto dir = prepare_out_dir(args.out_dir);
  const auto data_path = dir / "dataset.ndjson";
  const auto csv_path = dir / "shots.csv";
  ionramsey::write_dataset(dataset, data_path.string());
  write_text_file(csv_path, ionramsey::shots_to_csv(dataset));

  std::size_t aborted = 0;
  for (const auto& block : dataset.blocks) {
    if (block.calibration.aborted) ++aborted;
  }
  ordered_json j;
  j["label"] = config.label;
  j["master_seed"] = config.master_seed;
  j["blocks"] = dataset.blocks.size();
  j["aborted_blocks"] = aborted;
  j["dataset"] = data_path.string();
  j["shots_csv"] = csv_path.string();
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_analyze(const GlobalArgs& args, const std::string& data_path) {
  if (data_path.empty()) {
    throw Error(ErrorKind::usage, "analyze needs --data <dataset.ndjson>");
  }
  const ionramsey::CampaignDataset dataset = ionramsey::read_dataset(data_path);
  const ionramsey::CampaignAnalysis analysis = ionramsey::analyze_dataset(dataset);
  const std::string report = ionramsey::analysis_to_json(dataset, analysis);

  const auto dir = prepare_out_dir(args.out_dir);
  write_text_file(dir / "analysis.json", report + "\n");
  std::cout << report << '\n';
  for (const auto& block : analysis.blocks) {
    if (block.aborted) {
      std::cerr << "warning: block " << block.index << " excluded from pooling\n";
    }
  }
  return 0;
}

int run_emit_plot(const GlobalArgs& args, const std::string& figure, const std::string& data_path,
                  const std::string& scan_path) {
  const auto dir = prepare_out_dir(args.out_dir);
  const auto out_path = dir / (figure + ".csv");

  std::string csv;
  if (figure == "tau_scan") {
    if (scan_path.empty()) {
      throw Error(ErrorKind::usage, "figure tau_scan needs --scan <tau_scan.json>",
                  {{"hint", "produce the file with the scan-tau subcommand"}});
    }
    std::ifstream in(scan_path, std::ios::binary);
    if (!in) {
      throw Error(ErrorKind::io, "cannot open scan file", {{"path", scan_path}});
    }
    csv = ionramsey::emit_tau_scan_csv(ionramsey::tau_scan_from_json(in));
  } else {
    if (data_path.empty()) {
      // Delegates unknown ids and the ids served by other subcommands to the
      // library, which raises the explanatory errors.
      ionramsey::emit_plot_data(figure, ionramsey::CampaignDataset{},
                                ionramsey::CampaignAnalysis{});
      throw Error(ErrorKind::usage, "this figure needs --data <dataset.ndjson>",
                  {{"figure_id", figure}});
    }
    const ionramsey::CampaignDataset dataset = ionramsey::read_dataset(data_path);
    const ionramsey::CampaignAnalysis analysis = ionramsey::analyze_dataset(dataset);
    csv = ionramsey::emit_plot_data(figure, dataset, analysis);
  }
  write_text_file(out_path, csv);

  ordered_json j;
  j["figure_id"] = figure;
  j["csv"] = out_path.string();
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trapped-ion Ramsey simulator and non-linearity estimator"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs globals;
  app.add_option("--config", globals.config_path, "campaign configuration JSON");
  auto* seed_opt = app.add_option("--seed", globals.seed, "override the master seed");
  app.add_option("--out", globals.out_dir, "output directory (default: .)");
  app.add_option("--threads", globals.threads, "worker threads (never changes results)")
      ->check(CLI::Range(1, 256));

  auto* phase_rate = app.add_subcommand("phase-rate", "non-linear phase rate for one preparation");
  double population = 0.5;
  std::string method = "closed_form";
  bool cross_terms = false;
  double tau = 0.0;
  phase_rate->add_option("--population", population, "ground-state population of the pair");
  phase_rate->add_option("--method", method, "closed_form|numeric_secular|numeric_dynamic");
  phase_rate->add_flag("--cross-terms", cross_terms, "include the oscillating source term");
  phase_rate->add_option("--tau", tau, "also report the phase accumulated over tau seconds");

  auto* oracle = app.add_subcommand("oracle-check",
                                    "closed form vs dynamic integrator on an ideal trap");
  std::vector<double> oracle_populations;
  double oracle_tol = 0.01;
  bool oracle_cross = false;
  oracle->add_option("--populations", oracle_populations, "ground-state populations to test")
      ->delimiter(',');
  oracle->add_option("--rel-tol", oracle_tol, "relative agreement required (default 0.01)");
  oracle->add_flag("--cross-terms", oracle_cross, "include the oscillating source term");

  auto* simulate = app.add_subcommand("simulate", "heating-limited contrast envelope");
  std::vector<double> sim_taus;
  int trajectories = 4000;
  simulate->add_option("--taus", sim_taus, "free-evolution times, s")->delimiter(',');
  simulate->add_option("--trajectories", trajectories, "trajectory budget per tau")
      ->check(CLI::PositiveNumber);

  auto* scan = app.add_subcommand("scan-tau", "differential-phase spread vs interrogation time");
  std::vector<double> scan_taus;
  std::vector<double> scan_rates;
  int scan_estimates = 48;
  int scan_shots = 200;
  double scan_dead_time = 0.0;
  scan->add_option("--taus", scan_taus, "interrogation times, s")
      ->delimiter(',')
      ->required();
  scan->add_option("--rates", scan_rates, "heating rates, quanta/s (default 10)")
      ->delimiter(',');
  scan->add_option("--estimates", scan_estimates, "differential estimates per grid point");
  scan->add_option("--shots", scan_shots, "shots per analysis point");
  auto* dead_opt = scan->add_option("--dead-time", scan_dead_time, "per-shot dead time, s");

  auto* campaign = app.add_subcommand("campaign", "simulate a full measurement campaign");

  auto* analyze = app.add_subcommand("analyze", "estimate epsilon from a recorded dataset");
  std::string analyze_data;
  analyze->add_option("--data", analyze_data, "dataset.ndjson produced by campaign");

  auto* emit = app.add_subcommand("emit-plot", "write plot-ready CSV for a figure id");
  std::string figure;
  std::string emit_data;
  std::string emit_scan;
  emit->add_option("--figure", figure, "figure id")->required();
  emit->add_option("--data", emit_data, "dataset.ndjson for dataset-backed figures");
  emit->add_option("--scan", emit_scan, "tau_scan.json for the tau_scan figure");

  try {
    app.parse(argc, argv);
    globals.seed_set = seed_opt->count() > 0;

    if (phase_rate->parsed()) {
      return run_phase_rate(globals, population, method, cross_terms, tau);
    }
    if (oracle->parsed()) {
      return run_oracle_check(globals, oracle_populations, oracle_tol, oracle_cross);
    }
    if (simulate->parsed()) {
      return run_simulate(globals, sim_taus, trajectories);
    }
    if (scan->parsed()) {
      return run_scan_tau(globals, scan_taus, scan_rates, scan_estimates, scan_shots,
                          scan_dead_time, dead_opt->count() > 0);
    }
    if (campaign->parsed()) {
      return run_campaign_cmd(globals);
    }
    if (analyze->parsed()) {
      return run_analyze(globals, analyze_data);
    }
    if (emit->parsed()) {
      return run_emit_plot(globals, figure, emit_data, emit_scan);
    }
    throw Error(ErrorKind::usage, "no subcommand selected");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(Error(ErrorKind::usage, e.what()));
    return 2;
  } catch (const Error& e) {
    print_error(e);
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    print_error(Error(ErrorKind::usage, std::string("unexpected failure: ") + e.what()));
    return 1;
  }
}
