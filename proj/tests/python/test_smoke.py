"""Smoke tests for the Python bindings.

The heavy validation lives in the C++ suites; these checks only guard the
binding layer: values cross the boundary unchanged, errors translate to
SimulationError, and a miniature campaign runs end to end.
"""

import math

import pytest

import ionramsey as ir


def test_constants_present():
    assert ir.hbar == pytest.approx(1.054571817e-34, rel=1e-12)
    assert ir.atomic_mass_unit == pytest.approx(1.66053906660e-27, rel=1e-12)
    assert ir.coulomb_constant == pytest.approx(2.3070775523417355e-28, rel=1e-12)
    assert ir.dataset_format_version == "1"


def test_closed_form_rate_value():
    spec = ir.SuperpositionSpec.from_ground_population(0.5)
    coupling = ir.NonlinearCoupling()
    coupling.epsilon_gamma = 1.0
    rate = ir.phase_rate_closed_form(spec, 1e-8, coupling)
    assert rate == pytest.approx(1.6000646604510078e13, rel=1e-12)


def test_three_point_inversion_worked_example():
    triple = ir.RamseyTriple()
    triple.p = [0.5, 0.9, 0.5]
    triple.xi1 = 0.0
    triple.shots = [200, 200, 200]
    estimate = ir.invert_three_point(triple)
    assert estimate.phi == pytest.approx(math.pi / 2, abs=1e-12)
    assert estimate.contrast == pytest.approx(0.8, abs=1e-12)
    assert estimate.offset == pytest.approx(0.5, abs=1e-12)
    assert estimate.sigma_phi == pytest.approx(0.0625, abs=1e-12)


def test_epsilon_round_trip():
    spec1 = ir.SuperpositionSpec.from_ground_population(0.2)
    spec2 = ir.SuperpositionSpec.from_ground_population(0.8)
    coupling = ir.NonlinearCoupling()
    coupling.epsilon_gamma = 1e-12
    tau, x0 = 15e-3, 1e-8
    dphi = ir.DifferentialPhase()
    dphi.delta_phi = ir.differential_phase_model(spec1, spec2, tau, x0, coupling)
    dphi.sigma = 0.01
    estimate = ir.epsilon_from_delta_phase(dphi, spec1, spec2, tau, x0)
    assert estimate.value == pytest.approx(1e-12, rel=1e-12)


def test_validation_errors_translate():
    with pytest.raises(ir.SimulationError):
        ir.TrapConfig().validate()
    with pytest.raises(ir.SimulationError) as excinfo:
        ir.parse_config("{}")
    assert "trap" in str(excinfo.value)


def test_philox_known_answer():
    words = ir.Philox.block([0, 0, 0, 0], [0, 0])
    assert words[0] == 0x16554D9ECA36314C


def test_tiny_campaign_round_trip():
    config = ir.CampaignConfig()
    config.trap.mass = 40.0 * ir.atomic_mass_unit
    config.trap.nu_x = config.trap.nu_y = config.trap.nu_z = 2 * math.pi * 1.01e6
    config.trap.nbar_y = config.trap.nbar_z = 3.0
    config.coupling.epsilon_gamma = 0.0
    config.noise.heating_rate = 5.0
    config.noise.shots_per_point = 12
    config.calibration_shots = 40
    config.tau_main = 15e-3
    config.blocks = 2
    config.master_seed = 424242

    dataset = ir.run_campaign(config)
    assert len(dataset.blocks) == 2

    text = ir.dataset_to_ndjson(dataset)
    reparsed = ir.parse_dataset(text)
    assert ir.dataset_to_ndjson(reparsed) == text

    config_text = ir.config_to_json(config)
    assert ir.config_to_json(ir.parse_config(config_text)) == config_text

    analysis = ir.analyze_dataset(dataset)
    assert analysis.analyzed_blocks == 2
    assert analysis.pooled_sigma > 0.0
    assert math.isfinite(analysis.pooled_epsilon)
