"""Testes de reflexão linear e não linear, número de fótons e ressonância por inclinação de fase"""

import cmath
import math

import numpy as np
import pytest

from src.core.exceptions import DegenerateSweep
from src.device.model import (
    PLANCK, BiasPoint, calibrate_coupling_scale, cavity_frequency, external_coupling, kappa_total, self_kerr,
)
from src.dynamics.integrator import DriveSegment, PulseSequence, integrate_cavity
from src.spectroscopy.reflection import (
    FrequencySweep, linear_sweep, nonlinear_sweep, photon_number, power_for_photons, reflection_linear,
    reflection_nonlinear, resonance_by_phase_slope, sweep_around_resonance,
)


class TestPhotonNumber:

    def test_reference_power(self):
        assert photon_number(8.31e-17, 3460.0, 5.772e9) == pytest.approx(1000.0, rel=0.01)

    def test_inverse(self):
        power = power_for_photons(1000.0, 3460.0, 5.772e9)
        assert photon_number(power, 3460.0, 5.772e9) == pytest.approx(1000.0, rel=1e-14)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            photon_number(-1e-18, 3460.0, 5.772e9)
        with pytest.raises(ValueError):
            power_for_photons(10.0, 0.0, 5.772e9)


class TestLinearReflection:

    def test_passivity(self, device):
        rng = np.random.default_rng(7)
        for _ in range(100):
            bias = device.reference_bias.with_gradiometric(rng.uniform(-0.15, 0.15))
            kappa = kappa_total(device, bias)
            frequency = cavity_frequency(device, bias) + rng.uniform(-5, 5) * kappa
            assert abs(reflection_linear(device, bias, frequency)) <= 1 + 1e-12
            power = rng.uniform(0.0, 1e-14)
            assert abs(reflection_nonlinear(device, bias, frequency, power)) <= 1 + 1e-12

    def test_critical_coupling_absorbs(self, device, critical_bias):
        frequency = cavity_frequency(device, critical_bias)
        assert abs(reflection_linear(device, critical_bias, frequency)) < 1e-9

    def test_balanced_bridge_reflects_everything(self, device):
        bias = device.reference_bias
        gamma = reflection_linear(device, bias, cavity_frequency(device, bias) + 123.0)
        assert gamma == pytest.approx(1.0 + 0j, abs=1e-15)


class TestNonlinearReflection:

    def test_low_power_matches_linear(self, device, run_config):
        bias = run_config.on_bias
        frequencies = sweep_around_resonance(device, bias, 10 * kappa_total(device, bias), 101)
        linear = linear_sweep(device, bias, frequencies)
        nonlinear = nonlinear_sweep(device, bias, frequencies, 1e-22)
        assert np.allclose(nonlinear.gammas, linear.gammas, atol=1e-9)
        assert not nonlinear.bistable

    def test_hysteresis_at_high_power(self, device, critical_bias):
        center = cavity_frequency(device, critical_bias)
        frequencies = np.linspace(center - 8000.0, center + 2000.0, 1001)
        up = nonlinear_sweep(device, critical_bias, frequencies, 8e-15, "up")
        down = nonlinear_sweep(device, critical_bias, frequencies, 8e-15, "down")
        assert up.bistable and down.bistable
        assert not np.allclose(up.gammas, down.gammas)

    def test_negative_power_rejected(self, device, run_config):
        with pytest.raises(ValueError):
            reflection_nonlinear(device, run_config.on_bias, 5.772e9, -1.0)

    def test_matches_time_domain_steady_state(self, device_factory):
        """Γ = 1 − sqrt(2πκ_ext)·a/α_in com a integrado até o regime estacionário"""
        bias = BiasPoint(uniform_phi0=0.25, gradiometric_phi0=0.1)
        device = calibrate_coupling_scale(device_factory(bare_loss_hz=4e5, chip_loss_hz=6e5), bias, 1e6)

        kappa = kappa_total(device, bias)
        kappa_ext = external_coupling(device, bias)
        kerr = self_kerr(device, bias)
        detuning = 0.5 * kappa
        photons = 1e7
        flux = 2 * math.pi * photons * ((detuning - kerr * photons) ** 2 + (kappa / 2) ** 2) / kappa_ext
        drive_frequency = cavity_frequency(device, bias) + detuning
        power = flux * PLANCK * drive_frequency

        sequence = PulseSequence(
            frame_frequency_hz=drive_frequency,
            segments=(DriveSegment(duration_s=1e-5, drive_amplitude=math.sqrt(flux), bias=bias),),
        )
        a = integrate_cavity(device, sequence, 1e-8).samples[-1]

        assert abs(a) ** 2 == pytest.approx(photons, rel=1e-6)
        gamma_time_domain = 1 - math.sqrt(2 * math.pi * kappa_ext) * a / math.sqrt(flux)
        gamma = reflection_nonlinear(device, bias, drive_frequency, power)
        assert abs(gamma_time_domain - gamma) < 1e-4


class TestPhaseSlopeResonance:

    def test_invariant_under_global_phase(self, quiet_device):
        rng = np.random.default_rng(7)
        for _ in range(100):
            bias = quiet_device.reference_bias.with_gradiometric(rng.uniform(0.0015, 0.1))
            kappa = kappa_total(quiet_device, bias)
            span = rng.uniform(6.0, 20.0) * kappa
            offset = rng.uniform(-0.5, 0.5) * span / 200
            frequencies = sweep_around_resonance(quiet_device, bias, span, 201) + offset
            sweep = linear_sweep(quiet_device, bias, frequencies)
            rotated = FrequencySweep(sweep.frequencies, sweep.gammas * cmath.exp(1j * rng.uniform(0, 2 * math.pi)),
                                     0.0, bias)

            resonance = resonance_by_phase_slope(sweep)
            assert resonance == pytest.approx(cavity_frequency(quiet_device, bias), abs=1e-4 * kappa)
            assert resonance_by_phase_slope(rotated) == pytest.approx(resonance, abs=1e-3)

    def test_below_grid_step_at_critical_coupling(self, device, critical_bias):
        center = cavity_frequency(device, critical_bias)
        for shift in np.arange(-2.5, 2.51, 0.5):
            frequencies = np.linspace(center - 4000, center + 4000, 1601) + shift
            sweep = linear_sweep(device, critical_bias, frequencies)
            assert resonance_by_phase_slope(sweep) == pytest.approx(center, abs=1e-3)

    def test_kerr_shift_below_grid_step(self, device, critical_bias):
        power = 1e-16
        center = cavity_frequency(device, critical_bias)
        kappa = kappa_total(device, critical_bias)
        # Em acoplamento crítico o estado estacionário tem o dobro de photon_number
        expected = 2 * self_kerr(device, critical_bias) * photon_number(power, kappa, center)

        shifts = []
        for shift in np.arange(-2.5, 2.51, 0.5):
            frequencies = np.linspace(center - 4000, center + 4000, 1601) + shift
            sweep = nonlinear_sweep(device, critical_bias, frequencies, power)
            shifts.append(resonance_by_phase_slope(sweep) - center)

        assert max(shifts) - min(shifts) < 0.05
        assert np.mean(shifts) == pytest.approx(expected, rel=1e-2)

    def test_too_few_points(self, device, run_config):
        bias = run_config.on_bias
        sweep = linear_sweep(device, bias, sweep_around_resonance(device, bias, 1e6, 4))
        with pytest.raises(DegenerateSweep):
            resonance_by_phase_slope(sweep)

    def test_resonance_outside_window(self, device, run_config):
        bias = run_config.on_bias
        kappa = kappa_total(device, bias)
        start = cavity_frequency(device, bias) + 5 * kappa
        sweep = linear_sweep(device, bias, np.linspace(start, start + 5 * kappa, 101))
        with pytest.raises(DegenerateSweep):
            resonance_by_phase_slope(sweep)


class TestFrequencySweep:

    def test_csv_is_lossless(self, device, run_config, tmp_path):
        bias = run_config.on_bias
        sweep = nonlinear_sweep(device, bias, sweep_around_resonance(device, bias, 1e7, 51), 1e-16)
        path = sweep.to_csv(tmp_path / "sweep.csv")
        loaded = FrequencySweep.from_csv(path)

        assert np.array_equal(loaded.frequencies, sweep.frequencies)
        assert np.array_equal(loaded.gammas, sweep.gammas)
        assert loaded.bias == bias
        assert loaded.input_power_w == sweep.input_power_w

    def test_frequencies_must_increase(self, device):
        with pytest.raises(ValueError):
            FrequencySweep(np.array([2.0, 1.0]), np.array([1 + 0j, 1 + 0j]), 0.0, device.reference_bias)
