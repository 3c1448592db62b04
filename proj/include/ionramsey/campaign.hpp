#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ionramsey/estimator.hpp"
#include "ionramsey/pulse_simulator.hpp"

namespace ionramsey {

inline constexpr const char* dataset_format_version = "1";

// Full description of a measurement campaign. Serialized as JSON; validation
// reports every offending field at once.
struct CampaignConfig {
  TrapConfig trap;
  NonlinearCoupling coupling;       // injected truth for the simulation
  NoiseModel noise;
  RateMethod truth_rate_method = RateMethod::closed_form;
  TransverseModel transverse = TransverseModel::thermal;

  double tau_main = 0.0;            // s
  bool control_block = false;       // interleave a golden-ratio control time
  double population1 = 0.2;         // ground-state population of preparation 1
  double population2 = 0.8;         //  ... preparation 2 (must differ)
  int blocks = 1;
  std::uint64_t master_seed = 0;

  double intensity_drift_sigma = 0.01;        // relative Rabi-angle drift per block
  double detuning_offset = 0.0;               // rad/s, initial
  double stark_phase = 0.0;                   // rad, fixed offset on every fringe
  double dead_time = 0.0;                     // s per shot, bookkeeping only
  double correction_factor = 1.0;             // spread correction used in analysis
  int calibration_shots = 200;                // per theta calibration point
  std::string label;

  // Control interrogation time: tau_main divided by the golden ratio, chosen
  // so no phase that is a multiple of 2 pi at tau_main can also vanish there.
  double tau_control() const;

  double theta1() const;  // carrier angle giving population1
  double theta2() const;

  void validate() const;
};

CampaignConfig load_config(const std::string& path);
CampaignConfig parse_config(std::istream& in, const std::string& origin = "<stream>");
void save_config(const CampaignConfig& config, const std::string& path);
std::string config_to_json(const CampaignConfig& config);

// Per-block calibration outcomes kept alongside the shots.
struct CalibrationRecord {
  int block = 0;
  double theta1_commanded = 0.0;
  double theta2_commanded = 0.0;
  double theta1_estimate = 0.0;   // from the carrier calibration shots
  double theta2_estimate = 0.0;
  double xi1 = 0.0;               // bias chosen from the preliminary triple
  double preliminary_phi = 0.0;
  bool aborted = false;           // degenerate preliminary fringe; block skipped
};

struct BlockData {
  int index = 0;
  CalibrationRecord calibration;
  std::vector<ShotRecord> main;     // randomized over the 6 (theta, xi) cells
  std::vector<ShotRecord> control;  // golden-ratio control cells, if enabled
};

struct CampaignDataset {
  std::string format_version = dataset_format_version;
  CampaignConfig config;
  std::vector<BlockData> blocks;
};

// Simulates the whole campaign. Per block: theta calibration under intensity
// drift, a preliminary balanced triple that sets the bias phase, then the
// randomized main run (and control cells when enabled). Deterministic in
// master_seed; thread count never changes the result.
CampaignDataset run_campaign(const CampaignConfig& config, int threads = 1);

// Newline-delimited JSON: one header object, then one object per record.
void write_dataset(const CampaignDataset& dataset, const std::string& path);
std::string dataset_to_ndjson(const CampaignDataset& dataset);
CampaignDataset read_dataset(const std::string& path);
CampaignDataset parse_dataset(std::istream& in, const std::string& origin = "<stream>");

// Flat CSV export of the shot stream.
std::string shots_to_csv(const CampaignDataset& dataset);

struct BlockAnalysis {
  int index = 0;
  bool aborted = false;
  PhaseEstimate phase1, phase2;
  DifferentialPhase delta;
  EpsilonEstimate epsilon;
  std::optional<DifferentialPhase> control_delta;
};

struct CampaignAnalysis {
  std::vector<BlockAnalysis> blocks;   // aborted blocks carried, excluded from pools
  std::size_t analyzed_blocks = 0;

  double pooled_epsilon = 0.0;
  double pooled_sigma = 0.0;           // sample std / sqrt(n)
  double epsilon_sample_std = 0.0;
  double mean_propagated_sigma = 0.0;
  double predicted_to_sample_ratio = 0.0;
  GaussianFitResult fit;

  std::optional<double> control_delta_mean;
  std::optional<double> control_delta_sigma;  // std of the mean
};

CampaignAnalysis analyze_dataset(const CampaignDataset& dataset);
std::string analysis_to_json(const CampaignDataset& dataset, const CampaignAnalysis& analysis);

// Repeated differential estimates per (tau, heating rate), for sensitivity
// scans. Runs its own reduced protocol at fixed quadrature bias.
struct TauScanRequest {
  std::vector<double> taus;
  std::vector<double> heating_rates;   // quanta/s
  int estimates_per_point = 48;
  int shots_per_point = 200;
  double dead_time = 0.0;
  std::uint64_t seed = 0;
};

struct TauScanCurve {
  double heating_rate = 0.0;
  std::vector<TauScanPoint> points;
};

std::vector<TauScanCurve> run_tau_scan(const CampaignConfig& config, const TauScanRequest& request,
                                       int threads = 1);
std::string tau_scan_to_json(const std::vector<TauScanCurve>& curves);
std::vector<TauScanCurve> tau_scan_from_json(std::istream& in);

// Plot-data emission. figure_id selects the product; unknown ids raise an
// error that lists the valid ones. Returns the CSV text (callers write it).
std::string emit_plot_data(const std::string& figure_id, const CampaignDataset& dataset,
                           const CampaignAnalysis& analysis);
std::string emit_contrast_envelope_csv(const std::vector<ContrastPoint>& points);
std::string emit_tau_scan_csv(const std::vector<TauScanCurve>& curves);
const std::vector<std::string>& plot_figure_ids();

}  // namespace ionramsey
