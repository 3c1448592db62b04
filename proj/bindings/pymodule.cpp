#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>

#include "ionramsey/campaign.hpp"
#include "ionramsey/constants.hpp"
#include "ionramsey/errors.hpp"
#include "ionramsey/estimator.hpp"
#include "ionramsey/nonlinear_phase.hpp"
#include "ionramsey/oscillator.hpp"
#include "ionramsey/pulse_simulator.hpp"
#include "ionramsey/rng.hpp"

namespace py = pybind11;

namespace {

std::string describe(const ionramsey::Error& e) {
  std::string text = std::string(ionramsey::to_string(e.kind())) + ": " + e.what();
  for (const auto& [field, problem] : e.details()) {
    text += "\n  " + field + ": " + problem;
  }
  return text;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  using namespace ionramsey;

  m.doc() = "Trapped-ion Ramsey simulator and non-linearity estimator (C++ core)";

  static py::exception<Error> sim_error(m, "SimulationError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(sim_error, describe(e).c_str());
    }
  });

  m.attr("hbar") = constants().hbar;
  m.attr("elementary_charge") = constants().elementary_charge;
  m.attr("coulomb_constant") = constants().coulomb;
  m.attr("atomic_mass_unit") = constants().atomic_mass_unit;
  m.attr("dataset_format_version") = std::string(dataset_format_version);

  py::enum_<RateMethod>(m, "RateMethod")
      .value("closed_form", RateMethod::closed_form)
      .value("numeric_secular", RateMethod::numeric_secular)
      .value("numeric_dynamic", RateMethod::numeric_dynamic);

  py::enum_<TransverseModel>(m, "TransverseModel")
      .value("ground", TransverseModel::ground)
      .value("thermal", TransverseModel::thermal);

  py::enum_<NoiseModel::HeatingMode>(m, "HeatingMode")
      .value("uniform_jump", NoiseModel::HeatingMode::uniform_jump)
      .value("occupation_scaled", NoiseModel::HeatingMode::occupation_scaled);

  py::enum_<ThetaLabel>(m, "ThetaLabel")
      .value("theta1", ThetaLabel::theta1)
      .value("theta2", ThetaLabel::theta2)
      .value("calibration", ThetaLabel::calibration);

  py::class_<TrapConfig>(m, "TrapConfig")
      .def(py::init<>())
      .def_readwrite("mass", &TrapConfig::mass)
      .def_readwrite("nu_x", &TrapConfig::nu_x)
      .def_readwrite("nu_y", &TrapConfig::nu_y)
      .def_readwrite("nu_z", &TrapConfig::nu_z)
      .def_readwrite("nbar_y", &TrapConfig::nbar_y)
      .def_readwrite("nbar_z", &TrapConfig::nbar_z)
      .def("x0_x", &TrapConfig::x0_x)
      .def("x0_y", &TrapConfig::x0_y)
      .def("x0_z", &TrapConfig::x0_z)
      .def("validate", &TrapConfig::validate);

  m.def("characteristic_length", &characteristic_length, py::arg("mass"), py::arg("nu"));
  m.def("thermal_gaussian_width", &thermal_gaussian_width, py::arg("x0"), py::arg("nbar"));
  m.def("fock_probability_density", &fock_probability_density, py::arg("n"), py::arg("x"),
        py::arg("x0"));

  py::class_<SuperpositionSpec>(m, "SuperpositionSpec")
      .def(py::init<>())
      .def_readwrite("alpha0", &SuperpositionSpec::alpha0)
      .def_readwrite("alpha1", &SuperpositionSpec::alpha1)
      .def_static("from_theta", &SuperpositionSpec::from_theta, py::arg("theta"))
      .def_static("from_ground_population", &SuperpositionSpec::from_ground_population,
                  py::arg("p0"))
      .def("validate", &SuperpositionSpec::validate);

  py::class_<NonlinearCoupling>(m, "NonlinearCoupling")
      .def(py::init<>())
      .def_readwrite("epsilon_gamma", &NonlinearCoupling::epsilon_gamma)
      .def("kappa", &NonlinearCoupling::kappa);

  py::class_<CoulombPairIntegrals>(m, "CoulombPairIntegrals")
      .def_readonly("j00", &CoulombPairIntegrals::j00)
      .def_readonly("j01", &CoulombPairIntegrals::j01)
      .def_readonly("j11", &CoulombPairIntegrals::j11)
      .def_readonly("kgg", &CoulombPairIntegrals::kgg);

  m.def("coulomb_pair_integrals", &coulomb_pair_integrals, py::arg("x0"), py::arg("sigma_y"),
        py::arg("sigma_z"), py::arg("rel_tol") = 1e-8);

  py::class_<PhaseRateCoefficients>(m, "PhaseRateCoefficients")
      .def(py::init<>())
      .def_readwrite("per_w0", &PhaseRateCoefficients::per_w0)
      .def_readwrite("per_w1", &PhaseRateCoefficients::per_w1)
      .def("rate", &PhaseRateCoefficients::rate, py::arg("w0"), py::arg("w1"));

  py::class_<PhaseRate>(m, "PhaseRate")
      .def_readonly("rate", &PhaseRate::rate)
      .def_readonly("method", &PhaseRate::method)
      .def_readonly("tolerance", &PhaseRate::tolerance)
      .def_readonly("cross_terms", &PhaseRate::cross_terms);

  py::class_<NumericRateOptions>(m, "NumericRateOptions")
      .def(py::init<>())
      .def_readwrite("transverse", &NumericRateOptions::transverse)
      .def_readwrite("cross_terms", &NumericRateOptions::cross_terms)
      .def_readwrite("dynamic", &NumericRateOptions::dynamic)
      .def_readwrite("quad_rel_tol", &NumericRateOptions::quad_rel_tol)
      .def_readwrite("periods", &NumericRateOptions::periods)
      .def_readwrite("steps_per_period", &NumericRateOptions::steps_per_period)
      .def_readwrite("fit_rel_tol", &NumericRateOptions::fit_rel_tol);

  m.def("phase_rate_closed_form", &phase_rate_closed_form, py::arg("spec"), py::arg("x0"),
        py::arg("coupling"));
  m.def("phase_rate_coefficients_closed_form", &phase_rate_coefficients_closed_form,
        py::arg("x0"), py::arg("coupling"));
  m.def("phase_rate_coefficients_numeric", &phase_rate_coefficients_numeric, py::arg("trap"),
        py::arg("coupling"), py::arg("transverse"), py::arg("rel_tol") = 1e-8);
  m.def("phase_rate_numeric", &phase_rate_numeric, py::arg("spec"), py::arg("trap"),
        py::arg("coupling"), py::arg("options") = NumericRateOptions{});
  m.def("differential_phase_model", &differential_phase_model, py::arg("spec1"),
        py::arg("spec2"), py::arg("tau"), py::arg("x0"), py::arg("coupling"));
  m.def("spread_correction_factor", &spread_correction_factor, py::arg("trap"),
        py::arg("transverse"), py::arg("rel_tol") = 1e-8);

  py::class_<NoiseModel>(m, "NoiseModel")
      .def(py::init<>())
      .def_readwrite("heating_rate", &NoiseModel::heating_rate)
      .def_readwrite("heating_mode", &NoiseModel::heating_mode)
      .def_readwrite("detuning_drift_sigma", &NoiseModel::detuning_drift_sigma)
      .def_readwrite("spam_error", &NoiseModel::spam_error)
      .def_readwrite("prep_error", &NoiseModel::prep_error)
      .def_readwrite("shots_per_point", &NoiseModel::shots_per_point)
      .def_static("noiseless", &NoiseModel::noiseless)
      .def("validate", &NoiseModel::validate);

  py::class_<ShotRecord>(m, "ShotRecord")
      .def_readonly("tau", &ShotRecord::tau)
      .def_readonly("theta_label", &ShotRecord::theta_label)
      .def_readonly("xi_index", &ShotRecord::xi_index)
      .def_readonly("outcome", &ShotRecord::outcome)
      .def_readonly("seed", &ShotRecord::seed)
      .def_readonly("jump_count", &ShotRecord::jump_count);

  py::class_<RamseyExperiment>(m, "RamseyExperiment")
      .def(py::init<>())
      .def_readwrite("trap", &RamseyExperiment::trap)
      .def_readwrite("coupling", &RamseyExperiment::coupling)
      .def_readwrite("noise", &RamseyExperiment::noise)
      .def_readwrite("rate_method", &RamseyExperiment::rate_method)
      .def_readwrite("transverse", &RamseyExperiment::transverse)
      .def_readwrite("rabi_reference", &RamseyExperiment::rabi_reference)
      .def_readwrite("n_max", &RamseyExperiment::n_max)
      .def("nl_coefficients", &RamseyExperiment::nl_coefficients);

  py::class_<ShotSettings>(m, "ShotSettings")
      .def(py::init<>())
      .def_readwrite("theta", &ShotSettings::theta)
      .def_readwrite("xi", &ShotSettings::xi)
      .def_readwrite("tau", &ShotSettings::tau)
      .def_readwrite("detuning", &ShotSettings::detuning)
      .def_readwrite("stark_phase", &ShotSettings::stark_phase)
      .def_readwrite("label", &ShotSettings::label)
      .def_readwrite("xi_index", &ShotSettings::xi_index);

  m.def("run_shot", &run_shot, py::arg("experiment"), py::arg("settings"), py::arg("seed"));
  m.def(
      "ramsey_probability",
      [](const RamseyExperiment& experiment, const ShotSettings& settings, std::uint64_t seed) {
        int jumps = 0;
        const double p = ramsey_probability(experiment, settings, seed, &jumps);
        return py::make_tuple(p, jumps);
      },
      py::arg("experiment"), py::arg("settings"), py::arg("seed"),
      "Returns (probability_of_D, jump_count) for the trajectory behind `seed`.");

  py::class_<ContrastPoint>(m, "ContrastPoint")
      .def_readonly("tau", &ContrastPoint::tau)
      .def_readonly("contrast", &ContrastPoint::contrast)
      .def_readonly("contrast_stderr", &ContrastPoint::contrast_stderr)
      .def_readonly("offset", &ContrastPoint::offset)
      .def_readonly("predicted_zero_jump", &ContrastPoint::predicted_zero_jump);

  m.def("contrast_envelope", &contrast_envelope, py::arg("experiment"), py::arg("taus"),
        py::arg("trajectories"), py::arg("seed"), py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());

  py::class_<RamseyTriple>(m, "RamseyTriple")
      .def(py::init<>())
      .def_readwrite("p", &RamseyTriple::p)
      .def_readwrite("xi1", &RamseyTriple::xi1)
      .def_readwrite("shots", &RamseyTriple::shots)
      .def("validate", &RamseyTriple::validate);

  py::class_<PhaseEstimate>(m, "PhaseEstimate")
      .def_readonly("phi", &PhaseEstimate::phi)
      .def_readonly("contrast", &PhaseEstimate::contrast)
      .def_readonly("offset", &PhaseEstimate::offset)
      .def_readonly("sigma_phi", &PhaseEstimate::sigma_phi)
      .def_readonly("covariance", &PhaseEstimate::covariance);

  m.def("invert_three_point", &invert_three_point, py::arg("triple"),
        py::arg("min_contrast") = 1e-3);
  m.def("propagate_phase_uncertainty", &propagate_phase_uncertainty, py::arg("triple"),
        py::arg("min_contrast") = 1e-3);
  m.def("optimal_bias", &optimal_bias, py::arg("expected_phi"));

  py::class_<DifferentialPhase>(m, "DifferentialPhase")
      .def(py::init<>())
      .def_readwrite("delta_phi", &DifferentialPhase::delta_phi)
      .def_readwrite("sigma", &DifferentialPhase::sigma);

  m.def("differential_phase_estimate", &differential_phase_estimate, py::arg("first"),
        py::arg("second"));

  py::class_<EpsilonEstimate>(m, "EpsilonEstimate")
      .def_readonly("value", &EpsilonEstimate::value)
      .def_readonly("sigma", &EpsilonEstimate::sigma)
      .def_readonly("delta_phi", &EpsilonEstimate::delta_phi)
      .def_readonly("sigma_delta_phi", &EpsilonEstimate::sigma_delta_phi)
      .def_readonly("correction_factor", &EpsilonEstimate::correction_factor)
      .def_readonly("tau", &EpsilonEstimate::tau)
      .def_readonly("x0", &EpsilonEstimate::x0);

  m.def("epsilon_from_delta_phase", &epsilon_from_delta_phase, py::arg("dphi"),
        py::arg("spec1"), py::arg("spec2"), py::arg("tau"), py::arg("x0"),
        py::arg("correction_factor") = 1.0);

  py::class_<GaussianFitResult>(m, "GaussianFitResult")
      .def_readonly("mean", &GaussianFitResult::mean)
      .def_readonly("sigma", &GaussianFitResult::sigma)
      .def_readonly("degenerate", &GaussianFitResult::degenerate)
      .def_readonly("count", &GaussianFitResult::count)
      .def_readonly("hist_amplitude", &GaussianFitResult::hist_amplitude)
      .def_readonly("hist_mean", &GaussianFitResult::hist_mean)
      .def_readonly("hist_sigma", &GaussianFitResult::hist_sigma);

  m.def("fit_gaussian", &fit_gaussian, py::arg("values"), py::arg("bins") = 0);
  m.def("wall_time_per_estimate", &wall_time_per_estimate, py::arg("tau"),
        py::arg("shots_per_point"), py::arg("dead_time") = 0.0);

  py::class_<CampaignConfig>(m, "CampaignConfig")
      .def(py::init<>())
      .def_readwrite("trap", &CampaignConfig::trap)
      .def_readwrite("coupling", &CampaignConfig::coupling)
      .def_readwrite("noise", &CampaignConfig::noise)
      .def_readwrite("truth_rate_method", &CampaignConfig::truth_rate_method)
      .def_readwrite("transverse", &CampaignConfig::transverse)
      .def_readwrite("tau_main", &CampaignConfig::tau_main)
      .def_readwrite("control_block", &CampaignConfig::control_block)
      .def_readwrite("population1", &CampaignConfig::population1)
      .def_readwrite("population2", &CampaignConfig::population2)
      .def_readwrite("blocks", &CampaignConfig::blocks)
      .def_readwrite("master_seed", &CampaignConfig::master_seed)
      .def_readwrite("intensity_drift_sigma", &CampaignConfig::intensity_drift_sigma)
      .def_readwrite("detuning_offset", &CampaignConfig::detuning_offset)
      .def_readwrite("stark_phase", &CampaignConfig::stark_phase)
      .def_readwrite("dead_time", &CampaignConfig::dead_time)
      .def_readwrite("correction_factor", &CampaignConfig::correction_factor)
      .def_readwrite("calibration_shots", &CampaignConfig::calibration_shots)
      .def_readwrite("label", &CampaignConfig::label)
      .def("tau_control", &CampaignConfig::tau_control)
      .def("theta1", &CampaignConfig::theta1)
      .def("theta2", &CampaignConfig::theta2)
      .def("validate", &CampaignConfig::validate);

  m.def("load_config", &load_config, py::arg("path"));
  m.def(
      "parse_config",
      [](const std::string& text, const std::string& origin) {
        std::istringstream in(text);
        return parse_config(in, origin);
      },
      py::arg("text"), py::arg("origin") = "<string>");
  m.def("save_config", &save_config, py::arg("config"), py::arg("path"));
  m.def("config_to_json", &config_to_json, py::arg("config"));

  py::class_<CalibrationRecord>(m, "CalibrationRecord")
      .def_readonly("block", &CalibrationRecord::block)
      .def_readonly("theta1_commanded", &CalibrationRecord::theta1_commanded)
      .def_readonly("theta2_commanded", &CalibrationRecord::theta2_commanded)
      .def_readonly("theta1_estimate", &CalibrationRecord::theta1_estimate)
      .def_readonly("theta2_estimate", &CalibrationRecord::theta2_estimate)
      .def_readonly("xi1", &CalibrationRecord::xi1)
      .def_readonly("preliminary_phi", &CalibrationRecord::preliminary_phi)
      .def_readonly("aborted", &CalibrationRecord::aborted);

  py::class_<BlockData>(m, "BlockData")
      .def_readonly("index", &BlockData::index)
      .def_readonly("calibration", &BlockData::calibration)
      .def_readonly("main", &BlockData::main)
      .def_readonly("control", &BlockData::control);

  py::class_<CampaignDataset>(m, "CampaignDataset")
      .def(py::init<>())
      .def_readonly("format_version", &CampaignDataset::format_version)
      .def_readonly("config", &CampaignDataset::config)
      .def_readonly("blocks", &CampaignDataset::blocks);

  m.def("run_campaign", &run_campaign, py::arg("config"), py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());
  m.def("write_dataset", &write_dataset, py::arg("dataset"), py::arg("path"));
  m.def("dataset_to_ndjson", &dataset_to_ndjson, py::arg("dataset"));
  m.def("read_dataset", &read_dataset, py::arg("path"));
  m.def(
      "parse_dataset",
      [](const std::string& text, const std::string& origin) {
        std::istringstream in(text);
        return parse_dataset(in, origin);
      },
      py::arg("text"), py::arg("origin") = "<string>");
  m.def("shots_to_csv", &shots_to_csv, py::arg("dataset"));

  py::class_<BlockAnalysis>(m, "BlockAnalysis")
      .def_readonly("index", &BlockAnalysis::index)
      .def_readonly("aborted", &BlockAnalysis::aborted)
      .def_readonly("phase1", &BlockAnalysis::phase1)
      .def_readonly("phase2", &BlockAnalysis::phase2)
      .def_readonly("delta", &BlockAnalysis::delta)
      .def_readonly("epsilon", &BlockAnalysis::epsilon)
      .def_readonly("control_delta", &BlockAnalysis::control_delta);

  py::class_<CampaignAnalysis>(m, "CampaignAnalysis")
      .def_readonly("blocks", &CampaignAnalysis::blocks)
      .def_readonly("analyzed_blocks", &CampaignAnalysis::analyzed_blocks)
      .def_readonly("pooled_epsilon", &CampaignAnalysis::pooled_epsilon)
      .def_readonly("pooled_sigma", &CampaignAnalysis::pooled_sigma)
      .def_readonly("epsilon_sample_std", &CampaignAnalysis::epsilon_sample_std)
      .def_readonly("mean_propagated_sigma", &CampaignAnalysis::mean_propagated_sigma)
      .def_readonly("predicted_to_sample_ratio", &CampaignAnalysis::predicted_to_sample_ratio)
      .def_readonly("fit", &CampaignAnalysis::fit)
      .def_readonly("control_delta_mean", &CampaignAnalysis::control_delta_mean)
      .def_readonly("control_delta_sigma", &CampaignAnalysis::control_delta_sigma);

  m.def("analyze_dataset", &analyze_dataset, py::arg("dataset"));
  m.def("analysis_to_json", &analysis_to_json, py::arg("dataset"), py::arg("analysis"));

  py::class_<TauScanRequest>(m, "TauScanRequest")
      .def(py::init<>())
      .def_readwrite("taus", &TauScanRequest::taus)
      .def_readwrite("heating_rates", &TauScanRequest::heating_rates)
      .def_readwrite("estimates_per_point", &TauScanRequest::estimates_per_point)
      .def_readwrite("shots_per_point", &TauScanRequest::shots_per_point)
      .def_readwrite("dead_time", &TauScanRequest::dead_time)
      .def_readwrite("seed", &TauScanRequest::seed);

  py::class_<TauScanPoint>(m, "TauScanPoint")
      .def_readonly("tau", &TauScanPoint::tau)
      .def_readonly("estimates", &TauScanPoint::estimates)
      .def_readonly("sample_std", &TauScanPoint::sample_std)
      .def_readonly("normalized_std", &TauScanPoint::normalized_std)
      .def_readonly("normalized_std_rate", &TauScanPoint::normalized_std_rate)
      .def_readonly("wall_time", &TauScanPoint::wall_time)
      .def_readonly("std_error", &TauScanPoint::std_error);

  py::class_<TauScanCurve>(m, "TauScanCurve")
      .def_readonly("heating_rate", &TauScanCurve::heating_rate)
      .def_readonly("points", &TauScanCurve::points);

  m.def("run_tau_scan", &run_tau_scan, py::arg("config"), py::arg("request"),
        py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());
  m.def("tau_scan_to_json", &tau_scan_to_json, py::arg("curves"));
  m.def("emit_plot_data", &emit_plot_data, py::arg("figure_id"), py::arg("dataset"),
        py::arg("analysis"));
  m.def("emit_contrast_envelope_csv", &emit_contrast_envelope_csv, py::arg("points"));
  m.def("emit_tau_scan_csv", &emit_tau_scan_csv, py::arg("curves"));
  m.def("plot_figure_ids", [] { return plot_figure_ids(); });

  m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("a"), py::arg("b") = 0,
        py::arg("c") = 0);

  py::class_<Philox>(m, "Philox")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("key"), py::arg("stream") = 0)
      .def("next_u64", &Philox::next_u64)
      .def("uniform", &Philox::uniform)
      .def("normal", &Philox::normal)
      .def("exponential", &Philox::exponential, py::arg("rate"))
      .def("bernoulli", &Philox::bernoulli, py::arg("p"))
      .def_static("block", &Philox::block, py::arg("counter"), py::arg("key"));
}
