#include "ionramsey/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <thread>
#include <utility>

#include "json.hpp"

#include "ionramsey/errors.hpp"
#include "ionramsey/numerics.hpp"

namespace ionramsey {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double golden_ratio = 1.6180339887498949;

std::string format_double(double v) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

RateMethod rate_method_from_string(const std::string& text, ErrorDetails& issues,
                                   const std::string& key) {
  if (text == "closed_form") return RateMethod::closed_form;
  if (text == "numeric_secular") return RateMethod::numeric_secular;
  if (text == "numeric_dynamic") return RateMethod::numeric_dynamic;
  issues.emplace_back(key, "must be one of closed_form|numeric_secular|numeric_dynamic");
  return RateMethod::closed_form;
}

const char* to_string(TransverseModel transverse) noexcept {
  return transverse == TransverseModel::ground ? "ground" : "thermal";
}

TransverseModel transverse_from_string(const std::string& text, ErrorDetails& issues,
                                       const std::string& key) {
  if (text == "ground") return TransverseModel::ground;
  if (text == "thermal") return TransverseModel::thermal;
  issues.emplace_back(key, "must be one of ground|thermal");
  return TransverseModel::thermal;
}

NoiseModel::HeatingMode heating_mode_from_string(const std::string& text, ErrorDetails& issues,
                                                 const std::string& key) {
  if (text == "uniform_jump") return NoiseModel::HeatingMode::uniform_jump;
  if (text == "occupation_scaled") return NoiseModel::HeatingMode::occupation_scaled;
  issues.emplace_back(key, "must be one of uniform_jump|occupation_scaled");
  return NoiseModel::HeatingMode::uniform_jump;
}

// Collects every schema problem in one pass so a bad config is rejected with
// the full list instead of the first offender.
class ObjectReader {
 public:
  ObjectReader(ordered_json node, std::string prefix, ErrorDetails& issues)
      : node_(std::move(node)), prefix_(std::move(prefix)), issues_(issues) {
    if (!node_.is_object()) issues_.emplace_back(label(""), "must be a JSON object");
  }

  double number(const char* key) { return number_impl(key, nullptr); }
  double number_or(const char* key, double fallback) { return number_impl(key, &fallback); }

  std::int64_t integer(const char* key) { return integer_impl(key, nullptr); }
  std::int64_t integer_or(const char* key, std::int64_t fallback) {
    return integer_impl(key, &fallback);
  }

  std::uint64_t u64(const char* key) {
    consumed_.push_back(key);
    if (!node_.is_object() || !node_.contains(key)) {
      issues_.emplace_back(label(key), "missing required field");
      return 0;
    }
    const auto& v = node_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      issues_.emplace_back(label(key), "must be a non-negative integer");
      return 0;
    }
    return v.get<std::uint64_t>();
  }

  bool boolean_or(const char* key, bool fallback) {
    consumed_.push_back(key);
    if (!node_.is_object() || !node_.contains(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_boolean()) {
      issues_.emplace_back(label(key), "must be a boolean");
      return fallback;
    }
    return v.get<bool>();
  }

  std::string text_or(const char* key, const std::string& fallback) {
    consumed_.push_back(key);
    if (!node_.is_object() || !node_.contains(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_string()) {
      issues_.emplace_back(label(key), "must be a string");
      return fallback;
    }
    return v.get<std::string>();
  }

  ordered_json object(const char* key) {
    consumed_.push_back(key);
    if (!node_.is_object() || !node_.contains(key)) {
      issues_.emplace_back(label(key), "missing required field");
      return ordered_json::object();
    }
    return node_.at(key);
  }

  void allow(const char* key) { consumed_.push_back(key); }

  void finish() {
    if (!node_.is_object()) return;
    for (const auto& item : node_.items()) {
      if (std::find(consumed_.begin(), consumed_.end(), item.key()) == consumed_.end()) {
        issues_.emplace_back(label(item.key()), "unexpected field");
      }
    }
  }

 private:
  std::string label(const std::string& key) const {
    if (prefix_.empty()) return key.empty() ? "<root>" : key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

  double number_impl(const char* key, const double* fallback) {
    consumed_.push_back(key);
    if (!node_.is_object() || !node_.contains(key)) {
      if (fallback != nullptr) return *fallback;
      issues_.emplace_back(label(key), "missing required field");
      return 0.0;
    }
    const auto& v = node_.at(key);
    if (!v.is_number()) {
      issues_.emplace_back(label(key), "must be a number");
      return fallback != nullptr ? *fallback : 0.0;
    }
    return v.get<double>();
  }

  std::int64_t integer_impl(const char* key, const std::int64_t* fallback) {
    consumed_.push_back(key);
    if (!node_.is_object() || !node_.contains(key)) {
      if (fallback != nullptr) return *fallback;
      issues_.emplace_back(label(key), "missing required field");
      return 0;
    }
    const auto& v = node_.at(key);
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
      issues_.emplace_back(label(key), "must be an integer");
      return fallback != nullptr ? *fallback : 0;
    }
    return v.get<std::int64_t>();
  }

  ordered_json node_;
  std::string prefix_;
  ErrorDetails& issues_;
  std::vector<std::string> consumed_;
};

ordered_json config_json(const CampaignConfig& config) {
  ordered_json j;
  j["label"] = config.label;
  j["trap"] = {{"mass", config.trap.mass},   {"nu_x", config.trap.nu_x},
               {"nu_y", config.trap.nu_y},   {"nu_z", config.trap.nu_z},
               {"nbar_y", config.trap.nbar_y}, {"nbar_z", config.trap.nbar_z}};
  j["coupling"] = {{"epsilon_gamma", config.coupling.epsilon_gamma}};
  j["noise"] = {{"heating_rate", config.noise.heating_rate},
                {"heating_mode", to_string(config.noise.heating_mode)},
                {"detuning_drift_sigma", config.noise.detuning_drift_sigma},
                {"spam_error", config.noise.spam_error},
                {"prep_error", config.noise.prep_error},
                {"shots_per_point", config.noise.shots_per_point}};
  j["truth_rate_method"] = to_string(config.truth_rate_method);
  j["transverse"] = to_string(config.transverse);
  j["tau_main"] = config.tau_main;
  j["control_block"] = config.control_block;
  j["population1"] = config.population1;
  j["population2"] = config.population2;
  j["blocks"] = config.blocks;
  j["master_seed"] = config.master_seed;
  j["intensity_drift_sigma"] = config.intensity_drift_sigma;
  j["detuning_offset"] = config.detuning_offset;
  j["stark_phase"] = config.stark_phase;
  j["dead_time"] = config.dead_time;
  j["correction_factor"] = config.correction_factor;
  j["calibration_shots"] = config.calibration_shots;
  j["derived"] = {{"x0_x", config.trap.x0_x()},     {"x0_y", config.trap.x0_y()},
                  {"x0_z", config.trap.x0_z()},     {"theta1", config.theta1()},
                  {"theta2", config.theta2()},
                  {"tau_control", config.control_block ? config.tau_control() : 0.0}};
  return j;
}

CampaignConfig config_from_json(const ordered_json& root) {
  ErrorDetails issues;
  CampaignConfig config;

  ObjectReader top(root, "", issues);
  config.label = top.text_or("label", "");

  ObjectReader trap(top.object("trap"), "trap", issues);
  config.trap.mass = trap.number("mass");
  config.trap.nu_x = trap.number("nu_x");
  config.trap.nu_y = trap.number("nu_y");
  config.trap.nu_z = trap.number("nu_z");
  config.trap.nbar_y = trap.number_or("nbar_y", 0.0);
  config.trap.nbar_z = trap.number_or("nbar_z", 0.0);
  trap.finish();

  ObjectReader coupling(top.object("coupling"), "coupling", issues);
  config.coupling.epsilon_gamma = coupling.number("epsilon_gamma");
  coupling.finish();

  ObjectReader noise(top.object("noise"), "noise", issues);
  config.noise.heating_rate = noise.number("heating_rate");
  config.noise.heating_mode =
      heating_mode_from_string(noise.text_or("heating_mode", "uniform_jump"), issues,
                               "noise.heating_mode");
  config.noise.detuning_drift_sigma = noise.number_or("detuning_drift_sigma", 0.0);
  config.noise.spam_error = noise.number_or("spam_error", 0.0);
  config.noise.prep_error = noise.number_or("prep_error", 0.01);
  config.noise.shots_per_point = static_cast<int>(noise.integer("shots_per_point"));
  noise.finish();

  config.truth_rate_method = rate_method_from_string(
      top.text_or("truth_rate_method", "closed_form"), issues, "truth_rate_method");
  config.transverse =
      transverse_from_string(top.text_or("transverse", "thermal"), issues, "transverse");
  config.tau_main = top.number("tau_main");
  config.control_block = top.boolean_or("control_block", false);
  config.population1 = top.number("population1");
  config.population2 = top.number("population2");
  config.blocks = static_cast<int>(top.integer("blocks"));
  config.master_seed = top.u64("master_seed");
  config.intensity_drift_sigma = top.number_or("intensity_drift_sigma", 0.01);
  config.detuning_offset = top.number_or("detuning_offset", 0.0);
  config.stark_phase = top.number_or("stark_phase", 0.0);
  config.dead_time = top.number_or("dead_time", 0.0);
  config.correction_factor = top.number_or("correction_factor", 1.0);
  config.calibration_shots = static_cast<int>(top.integer_or("calibration_shots", 200));
  top.allow("derived");  // echoed output, recomputed on load
  top.finish();

  if (!issues.empty()) {
    throw Error(ErrorKind::validation, "invalid campaign configuration", issues);
  }
  config.validate();
  return config;
}

// Deterministic seed labels, one namespace per protocol stage.
constexpr std::uint64_t seed_stage_drift = 1;
constexpr std::uint64_t seed_stage_detuning = 2;
constexpr std::uint64_t seed_stage_main_perm = 6;
constexpr std::uint64_t seed_stage_control_perm = 8;
constexpr std::uint64_t seed_stage_calibration = 30;  // +theta index (1, 2)
constexpr std::uint64_t seed_stage_preliminary = 50;  // +xi index (0..2)
constexpr std::uint64_t seed_stage_main = 70;         // +cell (0..5)
constexpr std::uint64_t seed_stage_control = 90;      // +cell (0..5)

RamseyExperiment experiment_from_config(const CampaignConfig& config) {
  RamseyExperiment experiment;
  experiment.trap = config.trap;
  experiment.coupling = config.coupling;
  experiment.noise = config.noise;
  experiment.rate_method = config.truth_rate_method;
  experiment.transverse = config.transverse;
  return experiment;
}

int calibration_shot(const RamseyExperiment& experiment, double theta, std::uint64_t seed) {
  Philox rng(seed);
  const bool contaminated =
      experiment.noise.prep_error > 0.0 && rng.bernoulli(experiment.noise.prep_error);
  SpinPhononState state =
      SpinPhononState::basis(Spin::S, contaminated ? 1 : 0, experiment.n_max);
  apply_carrier(state, theta, 0.0);
  return measure_shelving(state, experiment.noise.spam_error, rng);
}

// Fisher-Yates over 0..n-1 driven by the block's permutation stream.
std::vector<int> shuffled_indices(int n, Philox& rng) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

BlockData simulate_block(const CampaignConfig& config, int index, double detuning) {
  BlockData block;
  block.index = index;
  const std::uint64_t master = config.master_seed;
  const std::uint64_t blk = static_cast<std::uint64_t>(index) + 1;

  RamseyExperiment experiment = experiment_from_config(config);

  CalibrationRecord cal;
  cal.block = index;
  cal.theta1_commanded = config.theta1();
  cal.theta2_commanded = config.theta2();

  Philox drift_rng(derive_seed(master, blk, seed_stage_drift));
  const double drift = 1.0 + config.intensity_drift_sigma * drift_rng.normal();
  const double theta_true[2] = {cal.theta1_commanded * drift, cal.theta2_commanded * drift};

  try {
    // (1) carrier-only excitation calibration of both preparation angles
    for (int t = 0; t < 2; ++t) {
      int shelved = 0;
      for (int j = 0; j < config.calibration_shots; ++j) {
        shelved += calibration_shot(experiment, theta_true[t],
                                    derive_seed(master, blk, seed_stage_calibration + 1 + t, j));
      }
      const double fraction = static_cast<double>(shelved) / config.calibration_shots;
      // Invert through the known readout response s + (1 - 2s) sin^2(theta/2).
      // The raw fraction drags both angles toward balanced, which shrinks the
      // conversion coefficient and biases every epsilon estimate upward.
      const double spam = experiment.noise.spam_error;
      const double corrected =
          std::clamp((fraction - spam) / (1.0 - 2.0 * spam), 0.0, 1.0);
      (t == 0 ? cal.theta1_estimate : cal.theta2_estimate) =
          2.0 * std::asin(std::sqrt(corrected));
    }

    // (2) preliminary balanced triple at xi = {0, pi/2, pi} fixes the bias
    RamseyTriple preliminary;
    preliminary.xi1 = 0.0;
    for (int j = 0; j < 3; ++j) {
      int shelved = 0;
      for (int s = 0; s < config.calibration_shots; ++s) {
        ShotSettings settings;
        settings.theta = 0.5 * pi * drift;
        settings.xi = j * 0.5 * pi;
        settings.tau = config.tau_main;
        settings.detuning = detuning;
        settings.stark_phase = config.stark_phase;
        settings.label = ThetaLabel::calibration;
        settings.xi_index = j + 1;
        shelved += run_shot(experiment, settings,
                            derive_seed(master, blk, seed_stage_preliminary + j, s))
                       .outcome;
      }
      preliminary.p[j] = static_cast<double>(shelved) / config.calibration_shots;
      preliminary.shots[j] = config.calibration_shots;
    }
    const PhaseEstimate pre = invert_three_point(preliminary);
    cal.preliminary_phi = pre.phi;
    cal.xi1 = optimal_bias(pre.phi);

    // (3) main run, randomized over the 6 (theta, xi) cells
    const auto run_cells = [&](double tau, std::uint64_t perm_stage, std::uint64_t shot_stage,
                               std::vector<ShotRecord>& out) {
      const int per_cell = config.noise.shots_per_point;
      Philox perm_rng(derive_seed(master, blk, perm_stage));
      const std::vector<int> order = shuffled_indices(6 * per_cell, perm_rng);
      out.reserve(order.size());
      for (int slot : order) {
        const int cell = slot / per_cell;
        const int replica = slot % per_cell;
        const int theta_idx = cell / 3;
        const int xi_idx = cell % 3;
        ShotSettings settings;
        settings.theta = theta_true[theta_idx];
        settings.xi = cal.xi1 + xi_idx * 0.5 * pi;
        settings.tau = tau;
        settings.detuning = detuning;
        settings.stark_phase = config.stark_phase;
        settings.label = theta_idx == 0 ? ThetaLabel::theta1 : ThetaLabel::theta2;
        settings.xi_index = xi_idx + 1;
        out.push_back(run_shot(experiment, settings,
                               derive_seed(master, blk, shot_stage + cell, replica)));
      }
    };
    run_cells(config.tau_main, seed_stage_main_perm, seed_stage_main, block.main);

    // (4) incommensurate control time, same protocol
    if (config.control_block) {
      run_cells(config.tau_control(), seed_stage_control_perm, seed_stage_control,
                block.control);
    }
  } catch (const Error&) {
    cal.aborted = true;
    block.main.clear();
    block.control.clear();
  }

  block.calibration = cal;
  return block;
}

ordered_json calibration_json(const CalibrationRecord& cal) {
  return {{"block", cal.block},
          {"theta1_commanded", cal.theta1_commanded},
          {"theta2_commanded", cal.theta2_commanded},
          {"theta1_estimate", cal.theta1_estimate},
          {"theta2_estimate", cal.theta2_estimate},
          {"xi1", cal.xi1},
          {"preliminary_phi", cal.preliminary_phi},
          {"aborted", cal.aborted}};
}

CalibrationRecord calibration_from_json(const ordered_json& j, ErrorDetails& issues) {
  CalibrationRecord cal;
  ObjectReader reader(j, "calibration", issues);
  cal.block = static_cast<int>(reader.integer("block"));
  cal.theta1_commanded = reader.number("theta1_commanded");
  cal.theta2_commanded = reader.number("theta2_commanded");
  cal.theta1_estimate = reader.number("theta1_estimate");
  cal.theta2_estimate = reader.number("theta2_estimate");
  cal.xi1 = reader.number("xi1");
  cal.preliminary_phi = reader.number("preliminary_phi");
  cal.aborted = reader.boolean_or("aborted", false);
  reader.finish();
  return cal;
}

void append_shot_line(std::string& out, int block, const char* stream,
                      const ShotRecord& record) {
  ordered_json j;
  j["kind"] = "shot";
  j["block"] = block;
  j["stream"] = stream;
  j["tau"] = record.tau;
  j["theta_label"] = to_string(record.theta_label);
  j["xi_index"] = record.xi_index;
  j["outcome"] = record.outcome;
  j["seed"] = record.seed;
  j["jump_count"] = record.jump_count;
  out += j.dump();
  out += '\n';
}

ShotRecord shot_from_json(const ordered_json& j, ErrorDetails& issues) {
  ShotRecord record;
  ObjectReader reader(j, "shot", issues);
  reader.allow("kind");
  reader.allow("block");
  reader.allow("stream");
  record.tau = reader.number("tau");
  const std::string label = reader.text_or("theta_label", "calibration");
  record.xi_index = static_cast<int>(reader.integer("xi_index"));
  record.outcome = static_cast<int>(reader.integer("outcome"));
  record.seed = reader.u64("seed");
  record.jump_count = static_cast<int>(reader.integer("jump_count"));
  reader.finish();
  if (issues.empty()) record.theta_label = theta_label_from_string(label);
  return record;
}

struct CellCounts {
  int shelved[2][3] = {};
  int total[2][3] = {};
};

CellCounts tally(const std::vector<ShotRecord>& records) {
  CellCounts counts;
  for (const ShotRecord& record : records) {
    if (record.theta_label == ThetaLabel::calibration) continue;
    const int t = record.theta_label == ThetaLabel::theta1 ? 0 : 1;
    if (record.xi_index < 1 || record.xi_index > 3) continue;
    counts.shelved[t][record.xi_index - 1] += record.outcome;
    counts.total[t][record.xi_index - 1] += 1;
  }
  return counts;
}

std::pair<PhaseEstimate, PhaseEstimate> invert_block(const CellCounts& counts, double xi1) {
  PhaseEstimate estimates[2];
  for (int t = 0; t < 2; ++t) {
    RamseyTriple triple;
    triple.xi1 = xi1;
    for (int j = 0; j < 3; ++j) {
      if (counts.total[t][j] < 1) {
        throw Error(ErrorKind::fit, "main run is missing an analysis cell",
                    {{"theta", std::to_string(t + 1)}, {"xi_index", std::to_string(j + 1)}});
      }
      triple.p[j] = static_cast<double>(counts.shelved[t][j]) / counts.total[t][j];
      triple.shots[j] = counts.total[t][j];
    }
    estimates[t] = invert_three_point(triple);
  }
  return {estimates[0], estimates[1]};
}

ordered_json phase_json(const PhaseEstimate& estimate) {
  return {{"phi", estimate.phi},
          {"contrast", estimate.contrast},
          {"offset", estimate.offset},
          {"sigma_phi", estimate.sigma_phi}};
}

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
  };
  std::vector<std::thread> pool;
  const int n = std::min(threads, count);
  pool.reserve(n);
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
}

}  // namespace

double CampaignConfig::tau_control() const { return tau_main / golden_ratio; }

double CampaignConfig::theta1() const { return 2.0 * std::asin(std::sqrt(population1)); }

double CampaignConfig::theta2() const { return 2.0 * std::asin(std::sqrt(population2)); }

void CampaignConfig::validate() const {
  ErrorDetails bad;
  const auto merge = [&bad](const char* prefix, const auto& validator) {
    try {
      validator();
    } catch (const Error& e) {
      for (const auto& [key, value] : e.details()) {
        bad.emplace_back(std::string(prefix) + "." + key, value);
      }
    }
  };
  merge("trap", [this] { trap.validate(); });
  merge("noise", [this] { noise.validate(); });

  if (!(tau_main > 0.0)) bad.emplace_back("tau_main", "must be positive");
  if (!(population1 > 0.0 && population1 < 1.0))
    bad.emplace_back("population1", "must lie in (0, 1)");
  if (!(population2 > 0.0 && population2 < 1.0))
    bad.emplace_back("population2", "must lie in (0, 1)");
  if (std::abs(population1 - population2) < 1e-6)
    bad.emplace_back("population2", "must differ from population1");
  if (blocks < 1) bad.emplace_back("blocks", "must be at least 1");
  if (!(intensity_drift_sigma >= 0.0 && intensity_drift_sigma < 0.2))
    bad.emplace_back("intensity_drift_sigma", "must lie in [0, 0.2)");
  if (!std::isfinite(detuning_offset)) bad.emplace_back("detuning_offset", "must be finite");
  if (!std::isfinite(stark_phase)) bad.emplace_back("stark_phase", "must be finite");
  if (!(dead_time >= 0.0)) bad.emplace_back("dead_time", "must be non-negative");
  if (!(correction_factor > 0.0 && correction_factor <= 1.0 + 1e-6))
    bad.emplace_back("correction_factor", "must lie in (0, 1]");
  if (calibration_shots < 10) bad.emplace_back("calibration_shots", "must be at least 10");
  if (!bad.empty()) throw Error(ErrorKind::validation, "invalid campaign configuration", bad);
}

CampaignConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::io, "cannot open config file", {{"path", path}});
  }
  return parse_config(in, path);
}

CampaignConfig parse_config(std::istream& in, const std::string& origin) {
  ordered_json root;
  try {
    root = ordered_json::parse(in);
  } catch (const ordered_json::parse_error& e) {
    throw Error(ErrorKind::io, "config is not valid JSON",
                {{"origin", origin}, {"detail", e.what()}});
  }
  return config_from_json(root);
}

void save_config(const CampaignConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorKind::io, "cannot open config file for writing", {{"path", path}});
  }
  out << config_to_json(config) << '\n';
}

std::string config_to_json(const CampaignConfig& config) {
  return config_json(config).dump(2);
}

CampaignDataset run_campaign(const CampaignConfig& config, int threads) {
  config.validate();

  CampaignDataset dataset;
  dataset.config = config;
  dataset.blocks.resize(config.blocks);

  // The detuning walk is sequential by definition; precompute it serially so
  // the parallel block map stays order-independent.
  std::vector<double> detunings(config.blocks);
  double walk = 0.0;
  for (int b = 0; b < config.blocks; ++b) {
    Philox rng(derive_seed(config.master_seed, b + 1, seed_stage_detuning));
    walk += config.noise.detuning_drift_sigma * rng.normal();
    detunings[b] = config.detuning_offset + walk;
  }

  parallel_for(config.blocks, threads,
               [&](int b) { dataset.blocks[b] = simulate_block(config, b, detunings[b]); });
  return dataset;
}

void write_dataset(const CampaignDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::io, "cannot open dataset file for writing", {{"path", path}});
  }
  out << dataset_to_ndjson(dataset);
}

std::string dataset_to_ndjson(const CampaignDataset& dataset) {
  std::string out;
  ordered_json header;
  header["kind"] = "header";
  header["format_version"] = dataset.format_version;
  header["config"] = config_json(dataset.config);
  out += header.dump();
  out += '\n';
  for (const BlockData& block : dataset.blocks) {
    ordered_json line;
    line["kind"] = "block";
    line["index"] = block.index;
    line["calibration"] = calibration_json(block.calibration);
    out += line.dump();
    out += '\n';
    for (const ShotRecord& record : block.main) {
      append_shot_line(out, block.index, "main", record);
    }
    for (const ShotRecord& record : block.control) {
      append_shot_line(out, block.index, "control", record);
    }
  }
  return out;
}

CampaignDataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::io, "cannot open dataset file", {{"path", path}});
  }
  return parse_dataset(in, path);
}

CampaignDataset parse_dataset(std::istream& in, const std::string& origin) {
  CampaignDataset dataset;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<BlockData> blocks;

  const auto fail = [&](const std::string& message, ErrorDetails details = {}) -> void {
    details.emplace_back("origin", origin);
    details.emplace_back("line", std::to_string(line_no));
    throw Error(ErrorKind::io, message, std::move(details));
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const ordered_json::parse_error& e) {
      fail("dataset line is not valid JSON", {{"detail", e.what()}});
    }
    const std::string kind = j.value("kind", "");
    if (!have_header) {
      if (kind != "header") fail("dataset must start with a header line");
      const std::string version = j.value("format_version", "");
      if (version != dataset_format_version) {
        fail("unsupported dataset format version",
             {{"found", version}, {"supported", dataset_format_version}});
      }
      if (!j.contains("config")) fail("dataset header is missing the config");
      dataset.format_version = version;
      dataset.config = config_from_json(j.at("config"));
      have_header = true;
      continue;
    }
    if (kind == "block") {
      ErrorDetails issues;
      BlockData block;
      block.index = j.value("index", -1);
      if (block.index < 0 || !j.contains("calibration")) fail("malformed block line");
      block.calibration = calibration_from_json(j.at("calibration"), issues);
      if (!issues.empty()) {
        throw Error(ErrorKind::io, "malformed calibration record", issues);
      }
      blocks.push_back(std::move(block));
    } else if (kind == "shot") {
      if (blocks.empty()) fail("shot line appears before any block line");
      const int block_index = j.value("block", -1);
      if (block_index != blocks.back().index) {
        fail("shot line references a block other than the current one",
             {{"shot_block", std::to_string(block_index)}});
      }
      ErrorDetails issues;
      const ShotRecord record = shot_from_json(j, issues);
      if (!issues.empty()) throw Error(ErrorKind::io, "malformed shot record", issues);
      const std::string stream = j.value("stream", "main");
      if (stream == "control") {
        blocks.back().control.push_back(record);
      } else if (stream == "main") {
        blocks.back().main.push_back(record);
      } else {
        fail("unknown shot stream", {{"stream", stream}});
      }
    } else {
      fail("unknown dataset line kind", {{"kind", kind}});
    }
  }
  if (!have_header) {
    throw Error(ErrorKind::io, "dataset is empty", {{"origin", origin}});
  }
  std::sort(blocks.begin(), blocks.end(),
            [](const BlockData& a, const BlockData& b) { return a.index < b.index; });
  dataset.blocks = std::move(blocks);
  return dataset;
}

std::string shots_to_csv(const CampaignDataset& dataset) {
  std::string out = "tau_s,theta_label,xi_index,outcome,seed,jump_count\n";
  const auto append = [&out](const ShotRecord& record) {
    out += format_double(record.tau);
    out += ',';
    out += to_string(record.theta_label);
    out += ',';
    out += std::to_string(record.xi_index);
    out += ',';
    out += std::to_string(record.outcome);
    out += ',';
    out += std::to_string(record.seed);
    out += ',';
    out += std::to_string(record.jump_count);
    out += '\n';
  };
  for (const BlockData& block : dataset.blocks) {
    for (const ShotRecord& record : block.main) append(record);
    for (const ShotRecord& record : block.control) append(record);
  }
  return out;
}

CampaignAnalysis analyze_dataset(const CampaignDataset& dataset) {
  if (dataset.format_version != dataset_format_version) {
    throw Error(ErrorKind::io, "unsupported dataset format version",
                {{"found", dataset.format_version}, {"supported", dataset_format_version}});
  }
  const CampaignConfig& config = dataset.config;
  config.validate();

  CampaignAnalysis analysis;
  analysis.blocks.reserve(dataset.blocks.size());

  std::vector<double> epsilons, propagated, deltas, control_deltas;
  for (const BlockData& block : dataset.blocks) {
    BlockAnalysis ba;
    ba.index = block.index;
    if (block.calibration.aborted) {
      ba.aborted = true;
      analysis.blocks.push_back(ba);
      continue;
    }
    try {
      const auto [phase1, phase2] = invert_block(tally(block.main), block.calibration.xi1);
      ba.phase1 = phase1;
      ba.phase2 = phase2;
      ba.delta = differential_phase_estimate(phase1, phase2);
      ba.epsilon = epsilon_from_delta_phase(
          ba.delta, SuperpositionSpec::from_theta(block.calibration.theta1_estimate),
          SuperpositionSpec::from_theta(block.calibration.theta2_estimate), config.tau_main,
          config.trap.x0_x(), config.correction_factor);
    } catch (const Error&) {
      ba.aborted = true;
      analysis.blocks.push_back(ba);
      continue;
    }
    if (!block.control.empty()) {
      try {
        const auto [c1, c2] = invert_block(tally(block.control), block.calibration.xi1);
        ba.control_delta = differential_phase_estimate(c1, c2);
        control_deltas.push_back(ba.control_delta->delta_phi);
      } catch (const Error&) {
        ba.control_delta.reset();  // control is advisory; main result stands
      }
    }
    epsilons.push_back(ba.epsilon.value);
    propagated.push_back(ba.epsilon.sigma);
    deltas.push_back(ba.delta.delta_phi);
    analysis.blocks.push_back(ba);
  }

  analysis.analyzed_blocks = epsilons.size();
  if (epsilons.empty()) {
    throw Error(ErrorKind::fit, "no analyzable blocks in dataset",
                {{"blocks", std::to_string(dataset.blocks.size())}});
  }

  if (epsilons.size() >= 2) {
    const Moments moments = sample_moments(epsilons);
    analysis.pooled_epsilon = moments.mean;
    analysis.epsilon_sample_std = moments.stddev;
    analysis.pooled_sigma = moments.stddev / std::sqrt(static_cast<double>(epsilons.size()));
    analysis.fit = fit_gaussian(epsilons);
  } else {
    analysis.pooled_epsilon = epsilons.front();
    analysis.fit.mean = epsilons.front();
    analysis.fit.degenerate = true;
    analysis.fit.count = 1;
  }
  analysis.mean_propagated_sigma =
      compensated_total(propagated) / static_cast<double>(propagated.size());
  analysis.predicted_to_sample_ratio =
      analysis.epsilon_sample_std > 0.0
          ? analysis.mean_propagated_sigma / analysis.epsilon_sample_std
          : 0.0;

  if (!control_deltas.empty()) {
    const Moments cm = sample_moments(control_deltas);
    analysis.control_delta_mean = cm.mean;
    analysis.control_delta_sigma =
        control_deltas.size() >= 2
            ? cm.stddev / std::sqrt(static_cast<double>(control_deltas.size()))
            : 0.0;
  }
  return analysis;
}

std::string analysis_to_json(const CampaignDataset& dataset, const CampaignAnalysis& analysis) {
  CompensatedSum delta_sum, contrast_sum, offset_sum;
  std::vector<double> deltas;
  for (const BlockAnalysis& ba : analysis.blocks) {
    if (ba.aborted) continue;
    deltas.push_back(ba.delta.delta_phi);
    delta_sum.add(ba.delta.delta_phi);
    contrast_sum.add(0.5 * (ba.phase1.contrast + ba.phase2.contrast));
    offset_sum.add(0.5 * (ba.phase1.offset + ba.phase2.offset));
  }
  const double n = static_cast<double>(analysis.analyzed_blocks);
  double delta_sigma = 0.0;
  if (deltas.size() >= 2) {
    delta_sigma = sample_moments(deltas).stddev / std::sqrt(n);
  }

  ordered_json j;
  j["label"] = dataset.config.label;
  j["format_version"] = dataset.format_version;
  j["analyzed_blocks"] = analysis.analyzed_blocks;
  j["total_blocks"] = analysis.blocks.size();
  j["delta_phi"] = delta_sum.value() / n;
  j["sigma"] = delta_sigma;
  j["epsilon"] = analysis.pooled_epsilon;
  j["sigma_epsilon"] = analysis.pooled_sigma;
  j["A"] = contrast_sum.value() / n;
  j["B"] = offset_sum.value() / n;
  j["epsilon_sample_std"] = analysis.epsilon_sample_std;
  j["mean_propagated_sigma"] = analysis.mean_propagated_sigma;
  j["predicted_to_sample_ratio"] = analysis.predicted_to_sample_ratio;
  j["tau_main"] = dataset.config.tau_main;
  j["correction_factor"] = dataset.config.correction_factor;
  j["dead_time"] = dataset.config.dead_time;
  j["fit"] = {{"mean", analysis.fit.mean},
              {"sigma", analysis.fit.sigma},
              {"degenerate", analysis.fit.degenerate},
              {"count", analysis.fit.count},
              {"hist_amplitude", analysis.fit.hist_amplitude},
              {"hist_mean", analysis.fit.hist_mean},
              {"hist_sigma", analysis.fit.hist_sigma}};
  if (analysis.control_delta_mean.has_value()) {
    j["control"] = {{"delta_phi_mean", *analysis.control_delta_mean},
                    {"sigma", analysis.control_delta_sigma.value_or(0.0)},
                    {"tau_control", dataset.config.tau_control()}};
  } else {
    j["control"] = nullptr;
  }
  ordered_json blocks = ordered_json::array();
  for (const BlockAnalysis& ba : analysis.blocks) {
    ordered_json entry;
    entry["index"] = ba.index;
    entry["aborted"] = ba.aborted;
    if (!ba.aborted) {
      entry["theta1"] = phase_json(ba.phase1);
      entry["theta2"] = phase_json(ba.phase2);
      entry["delta_phi"] = ba.delta.delta_phi;
      entry["delta_sigma"] = ba.delta.sigma;
      entry["epsilon"] = ba.epsilon.value;
      entry["epsilon_sigma"] = ba.epsilon.sigma;
      if (ba.control_delta.has_value()) {
        entry["control_delta_phi"] = ba.control_delta->delta_phi;
        entry["control_delta_sigma"] = ba.control_delta->sigma;
      }
    }
    blocks.push_back(std::move(entry));
  }
  j["blocks"] = std::move(blocks);
  return j.dump(2);
}

std::vector<TauScanCurve> run_tau_scan(const CampaignConfig& config,
                                       const TauScanRequest& request, int threads) {
  config.validate();
  ErrorDetails bad;
  if (request.taus.empty()) bad.emplace_back("taus", "must not be empty");
  for (double tau : request.taus) {
    if (!(tau > 0.0)) bad.emplace_back("taus", "every entry must be positive");
  }
  if (request.heating_rates.empty()) bad.emplace_back("heating_rates", "must not be empty");
  for (double rate : request.heating_rates) {
    if (!(rate >= 0.0)) bad.emplace_back("heating_rates", "every entry must be non-negative");
  }
  if (request.estimates_per_point < 2)
    bad.emplace_back("estimates_per_point", "must be at least 2");
  if (request.shots_per_point < 1) bad.emplace_back("shots_per_point", "must be at least 1");
  if (!(request.dead_time >= 0.0)) bad.emplace_back("dead_time", "must be non-negative");
  if (!bad.empty()) throw Error(ErrorKind::validation, "invalid tau scan request", bad);

  const int n_rates = static_cast<int>(request.heating_rates.size());
  const int n_taus = static_cast<int>(request.taus.size());
  std::vector<std::vector<TauScanPoint>> grid(n_rates,
                                              std::vector<TauScanPoint>(n_taus));
  std::vector<std::vector<bool>> valid(n_rates, std::vector<bool>(n_taus, false));

  const double theta[2] = {config.theta1(), config.theta2()};
  const double xi1 = optimal_bias(0.0);  // fixed quadrature bias

  parallel_for(n_rates * n_taus, threads, [&](int flat) {
    const int h = flat / n_taus;
    const int t = flat % n_taus;
    const double tau = request.taus[t];

    RamseyExperiment experiment = experiment_from_config(config);
    experiment.noise.heating_rate = request.heating_rates[h];
    experiment.noise.shots_per_point = request.shots_per_point;

    std::vector<double> deltas;
    deltas.reserve(request.estimates_per_point);
    for (int e = 0; e < request.estimates_per_point; ++e) {
      PhaseEstimate phases[2];
      bool usable = true;
      for (int cell = 0; cell < 6 && usable; cell += 3) {
        RamseyTriple triple;
        triple.xi1 = xi1;
        const int theta_idx = cell / 3;
        for (int j = 0; j < 3; ++j) {
          int shelved = 0;
          for (int s = 0; s < request.shots_per_point; ++s) {
            ShotSettings settings;
            settings.theta = theta[theta_idx];
            settings.xi = xi1 + j * 0.5 * pi;
            settings.tau = tau;
            settings.detuning = config.detuning_offset;
            settings.stark_phase = config.stark_phase;
            settings.label = theta_idx == 0 ? ThetaLabel::theta1 : ThetaLabel::theta2;
            settings.xi_index = j + 1;
            const std::uint64_t seed =
                derive_seed(request.seed, static_cast<std::uint64_t>(h) * 4096 + t + 1,
                            static_cast<std::uint64_t>(e) * 8 + theta_idx * 3 + j, s);
            shelved += run_shot(experiment, settings, seed).outcome;
          }
          triple.p[j] = static_cast<double>(shelved) / request.shots_per_point;
          triple.shots[j] = request.shots_per_point;
        }
        try {
          phases[theta_idx] = invert_three_point(triple);
        } catch (const Error&) {
          usable = false;  // washed-out fringe at this draw; drop the estimate
        }
      }
      if (usable) {
        deltas.push_back(differential_phase_estimate(phases[0], phases[1]).delta_phi);
      }
    }
    if (deltas.size() >= 2) {
      grid[h][t] = tau_scan_statistics(
          tau, deltas,
          wall_time_per_estimate(tau, request.shots_per_point, request.dead_time));
      valid[h][t] = true;
    }
  });

  std::vector<TauScanCurve> curves(n_rates);
  for (int h = 0; h < n_rates; ++h) {
    curves[h].heating_rate = request.heating_rates[h];
    for (int t = 0; t < n_taus; ++t) {
      if (valid[h][t]) curves[h].points.push_back(grid[h][t]);
    }
  }
  return curves;
}

std::string tau_scan_to_json(const std::vector<TauScanCurve>& curves) {
  ordered_json j;
  ordered_json list = ordered_json::array();
  for (const TauScanCurve& curve : curves) {
    ordered_json points = ordered_json::array();
    for (const TauScanPoint& p : curve.points) {
      points.push_back({{"tau", p.tau},
                        {"estimates", p.estimates},
                        {"sample_std", p.sample_std},
                        {"normalized_std", p.normalized_std},
                        {"normalized_std_rate", p.normalized_std_rate},
                        {"wall_time", p.wall_time},
                        {"std_error", p.std_error}});
    }
    list.push_back({{"heating_rate", curve.heating_rate}, {"points", std::move(points)}});
  }
  j["curves"] = std::move(list);
  return j.dump(2);
}

std::vector<TauScanCurve> tau_scan_from_json(std::istream& in) {
  ordered_json root;
  try {
    root = ordered_json::parse(in);
  } catch (const ordered_json::parse_error& e) {
    throw Error(ErrorKind::io, "scan file is not valid JSON", {{"detail", e.what()}});
  }
  if (!root.is_object() || !root.contains("curves") || !root.at("curves").is_array()) {
    throw Error(ErrorKind::io, "scan file is missing the curves array");
  }
  std::vector<TauScanCurve> curves;
  ErrorDetails issues;
  for (const auto& cj : root.at("curves")) {
    TauScanCurve curve;
    ObjectReader reader(cj, "curve", issues);
    curve.heating_rate = reader.number("heating_rate");
    reader.allow("points");
    reader.finish();
    if (!cj.contains("points") || !cj.at("points").is_array()) {
      throw Error(ErrorKind::io, "scan curve is missing its points array");
    }
    for (const auto& pj : cj.at("points")) {
      TauScanPoint point;
      ObjectReader pr(pj, "point", issues);
      point.tau = pr.number("tau");
      point.estimates = static_cast<std::size_t>(pr.integer("estimates"));
      point.sample_std = pr.number("sample_std");
      point.normalized_std = pr.number("normalized_std");
      point.normalized_std_rate = pr.number("normalized_std_rate");
      point.wall_time = pr.number("wall_time");
      point.std_error = pr.number("std_error");
      pr.finish();
      curve.points.push_back(point);
    }
    curves.push_back(std::move(curve));
  }
  if (!issues.empty()) throw Error(ErrorKind::io, "malformed scan file", issues);
  return curves;
}

const std::vector<std::string>& plot_figure_ids() {
  static const std::vector<std::string> ids = {"contrast_envelope", "tau_scan",
                                               "epsilon_histogram", "block_series"};
  return ids;
}

std::string emit_contrast_envelope_csv(const std::vector<ContrastPoint>& points) {
  std::string out = "tau_s,A_mean,A_stderr,A_predicted_zero_jump\n";
  for (const ContrastPoint& p : points) {
    out += format_double(p.tau);
    out += ',';
    out += format_double(p.contrast);
    out += ',';
    out += format_double(p.contrast_stderr);
    out += ',';
    out += format_double(p.predicted_zero_jump);
    out += '\n';
  }
  return out;
}

std::string emit_tau_scan_csv(const std::vector<TauScanCurve>& curves) {
  std::string out =
      "heating_rate,tau_s,estimates,sample_std,normalized_std,normalized_std_rate,"
      "wall_time_s,std_error\n";
  for (const TauScanCurve& curve : curves) {
    for (const TauScanPoint& p : curve.points) {
      out += format_double(curve.heating_rate);
      out += ',';
      out += format_double(p.tau);
      out += ',';
      out += std::to_string(p.estimates);
      out += ',';
      out += format_double(p.sample_std);
      out += ',';
      out += format_double(p.normalized_std);
      out += ',';
      out += format_double(p.normalized_std_rate);
      out += ',';
      out += format_double(p.wall_time);
      out += ',';
      out += format_double(p.std_error);
      out += '\n';
    }
  }
  return out;
}

std::string emit_plot_data(const std::string& figure_id, const CampaignDataset& /*dataset*/,
                           const CampaignAnalysis& analysis) {
  if (figure_id == "epsilon_histogram") {
    std::vector<double> epsilons;
    for (const BlockAnalysis& ba : analysis.blocks) {
      if (!ba.aborted) epsilons.push_back(ba.epsilon.value);
    }
    if (epsilons.size() < 2) {
      throw Error(ErrorKind::fit, "histogram needs at least two analyzed blocks",
                  {{"analyzed", std::to_string(epsilons.size())}});
    }
    // Binning mirrors the fit so the overlay aligns with the bars.
    const int nbins = std::max(8, static_cast<int>(std::lround(std::sqrt(epsilons.size()))));
    const auto [lo_it, hi_it] = std::minmax_element(epsilons.begin(), epsilons.end());
    const double lo = *lo_it;
    const double width = (*hi_it - lo) / nbins;
    std::vector<int> counts(nbins, 0);
    for (double v : epsilons) {
      const int k = static_cast<int>((v - lo) / width);
      counts[std::clamp(k, 0, nbins - 1)] += 1;
    }
    std::string out = "bin_center,count,gaussian_fit_value\n";
    for (int k = 0; k < nbins; ++k) {
      const double center = lo + (k + 0.5) * width;
      double fit_value = 0.0;
      if (analysis.fit.hist_sigma > 0.0) {
        const double z = (center - analysis.fit.hist_mean) / analysis.fit.hist_sigma;
        fit_value = analysis.fit.hist_amplitude * std::exp(-0.5 * z * z);
      }
      out += format_double(center);
      out += ',';
      out += std::to_string(counts[k]);
      out += ',';
      out += format_double(fit_value);
      out += '\n';
    }
    return out;
  }
  if (figure_id == "block_series") {
    std::string out =
        "block,aborted,delta_phi,delta_sigma,epsilon,epsilon_sigma,contrast1,offset1,"
        "contrast2,offset2,control_delta_phi,control_delta_sigma\n";
    for (const BlockAnalysis& ba : analysis.blocks) {
      out += std::to_string(ba.index);
      out += ',';
      out += ba.aborted ? "1" : "0";
      if (ba.aborted) {
        out += ",nan,nan,nan,nan,nan,nan,nan,nan,nan,nan\n";
        continue;
      }
      const double control_phi =
          ba.control_delta.has_value() ? ba.control_delta->delta_phi
                                       : std::numeric_limits<double>::quiet_NaN();
      const double control_sigma =
          ba.control_delta.has_value() ? ba.control_delta->sigma
                                       : std::numeric_limits<double>::quiet_NaN();
      for (double v : {ba.delta.delta_phi, ba.delta.sigma, ba.epsilon.value, ba.epsilon.sigma,
                       ba.phase1.contrast, ba.phase1.offset, ba.phase2.contrast,
                       ba.phase2.offset, control_phi, control_sigma}) {
        out += ',';
        out += format_double(v);
      }
      out += '\n';
    }
    return out;
  }
  if (figure_id == "contrast_envelope" || figure_id == "tau_scan") {
    throw Error(ErrorKind::usage,
                "this figure is produced from its own simulation output, not a campaign "
                "dataset",
                {{"figure_id", figure_id},
                 {"hint", figure_id == "tau_scan" ? "run the scan-tau subcommand"
                                                  : "run the simulate subcommand"}});
  }
  std::string valid;
  for (const std::string& id : plot_figure_ids()) {
    if (!valid.empty()) valid += '|';
    valid += id;
  }
  throw Error(ErrorKind::usage, "unknown figure id",
              {{"figure_id", figure_id}, {"valid", valid}});
}

}  // namespace ionramsey
