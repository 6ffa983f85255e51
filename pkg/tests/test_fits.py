"""Testes de malha fechada dos ajustes de reflexão, ringdown e Kerr"""

import cmath

import numpy as np
import pytest

from src.core.exceptions import InsufficientLinearRegion
from src.device.model import BiasPoint
from src.dynamics.integrator import TimeTrace
from src.extraction.fits import KerrPoint, fit_kerr, fit_reflection, fit_ringdown, reflection_model, ringdown_model
from src.extraction.least_squares import central_difference_jacobian, forward_difference_jacobian
from src.spectroscopy.reflection import FrequencySweep

CENTER = 5.772e9
KAPPA_INT = 1730.0
PREFACTOR = 0.8 * cmath.exp(0.7j)


def _synthetic_sweep(kappa_int, kappa_ext, offset=37.0, points=201):
    kappa = kappa_int + kappa_ext
    frequencies = np.linspace(CENTER - 5 * kappa, CENTER + 5 * kappa, points)
    gammas = reflection_model(frequencies - CENTER, offset, kappa_int, kappa_ext, abs(PREFACTOR),
                              cmath.phase(PREFACTOR))
    return FrequencySweep(frequencies, gammas, 0.0, BiasPoint())


class TestReflectionFit:

    @pytest.mark.parametrize("kappa_ext", [500.0, KAPPA_INT, 6000.0])
    def test_recovers_rates(self, kappa_ext):
        fit = fit_reflection(_synthetic_sweep(KAPPA_INT, kappa_ext))
        assert fit["f0"] == pytest.approx(CENTER + 37.0, abs=1e-3)
        assert fit["kappa_int"] == pytest.approx(KAPPA_INT, rel=1e-6)
        assert fit["kappa_ext"] == pytest.approx(kappa_ext, rel=1e-6)
        assert fit["amplitude"] == pytest.approx(0.8, rel=1e-8)
        assert cmath.exp(1j * fit["phase"]) == pytest.approx(cmath.exp(0.7j), abs=1e-8)
        assert fit["kappa_total"] == pytest.approx(KAPPA_INT + kappa_ext, rel=1e-6)

    def test_critical_coupling_has_no_reflection(self):
        fit = fit_reflection(_synthetic_sweep(KAPPA_INT, KAPPA_INT))
        assert fit["min_reflection"] == pytest.approx(0.0, abs=1e-6)

    def test_nearly_uncoupled_cavity(self):
        fit = fit_reflection(_synthetic_sweep(KAPPA_INT, 1e-4 * KAPPA_INT))
        assert fit["kappa_int"] == pytest.approx(KAPPA_INT, rel=1e-5)
        assert fit["kappa_ext"] == pytest.approx(0.173, abs=0.01)
        assert fit["min_reflection"] == pytest.approx(1.0, abs=1e-3)

    def test_uncertainties_reported(self):
        sweep = _synthetic_sweep(KAPPA_INT, 3000.0)
        noise = np.random.default_rng(11).normal(0.0, 1e-3, size=(2, len(sweep)))
        noisy = FrequencySweep(sweep.frequencies, sweep.gammas + noise[0] + 1j * noise[1], 0.0, BiasPoint())
        fit = fit_reflection(noisy)
        assert 0 < fit.error("kappa_total") < 50.0
        assert abs(fit["kappa_ext"] - 3000.0) < 5 * fit.error("kappa_ext")


class TestRingdownFit:

    def test_recovers_rate_and_filter(self):
        trace = TimeTrace(0.0, 1e-9, ringdown_model(np.arange(1000) * 1e-9, 50.3e-9, 1.96e6, 48e6, 1e-6))
        fit = fit_ringdown(trace)
        assert fit["kappa"] == pytest.approx(1.96e6, rel=0.02)
        assert fit["gamma_c"] == pytest.approx(48e6, rel=0.1)
        assert fit["t0"] == pytest.approx(50.3e-9, abs=1e-9)
        assert fit["kappa"] < fit["gamma_c"]

    def test_guess_from_adc_corner(self):
        trace = TimeTrace(-5e-8, 1e-9, ringdown_model(np.arange(1000) * 1e-9 - 5e-8, 0.0, 1.5e6, 48e6, 2e-6))
        fit = fit_ringdown(trace, gamma_guess_hz=48e6)
        assert fit["kappa"] == pytest.approx(1.5e6, rel=0.02)
        assert fit["t0"] == pytest.approx(0.0, abs=1e-9)

    def test_slow_decay(self):
        times = np.arange(50000) * 1e-9
        trace = TimeTrace(0.0, 1e-9, ringdown_model(times, 20e-9, 2e4, 48e6, 1e-7))
        fit = fit_ringdown(trace, gamma_guess_hz=48e6)
        assert fit["kappa"] == pytest.approx(2e4, rel=0.02)
        assert fit["gamma_c"] == pytest.approx(48e6, rel=0.1)
        assert "gamma_c" not in fit.bounded

    def test_unfiltered_exponential_pins_filter(self):
        times = np.arange(1000) * 1e-9
        samples = np.where(times >= 50e-9, 1e-6 * np.exp(-np.pi * 1.96e6 * (times - 50e-9)), 0.0)
        fit = fit_ringdown(TimeTrace(0.0, 1e-9, samples))
        assert fit["kappa"] == pytest.approx(1.96e6, rel=0.02)
        assert fit.bounded == ("gamma_c",)
        assert fit["gamma_c"] == pytest.approx(1 / (2 * 1e-9))

    def test_noisy_trace(self):
        times = np.arange(1000) * 1e-9
        clean = ringdown_model(times, 50.3e-9, 1.96e6, 48e6, 1e-6)
        noise = np.random.default_rng(5).normal(0.0, 0.01 * clean.max(), size=clean.size)
        fit = fit_ringdown(TimeTrace(0.0, 1e-9, clean + noise), gamma_guess_hz=48e6)
        assert fit["kappa"] == pytest.approx(1.96e6, rel=0.05)
        assert fit.error("kappa") > 0


class TestKerrFit:

    PHOTONS = np.geomspace(10.0, 1e5, 9)
    KERR = -0.02
    KAPPA = 3460.0

    def _points(self):
        points = [KerrPoint(n, self.KERR * n) for n in self.PHOTONS]
        # Ponto de maior potência fora da região linear
        points[-1] = KerrPoint(self.PHOTONS[-1], 1.5 * self.KERR * self.PHOTONS[-1])
        return points

    def test_linear_region_only(self):
        fit = fit_kerr(self._points(), self.KAPPA)
        assert fit["kerr_hz_per_photon"] == pytest.approx(self.KERR, rel=1e-9)
        assert fit.metadata["points_used"] == 8

    def test_bistable_points_excluded(self):
        points = self._points()
        points[4] = KerrPoint(points[4].photons, 500.0, bistable=True)
        fit = fit_kerr(points, self.KAPPA)
        assert fit["kerr_hz_per_photon"] == pytest.approx(self.KERR, rel=1e-9)
        assert fit.metadata["points_used"] == 7

    def test_accepts_tuples_and_weights(self):
        points = [(n, self.KERR * n) for n in self.PHOTONS[:5]]
        fit = fit_kerr(points, self.KAPPA, uncertainties_hz=[0.1] * 5)
        assert fit["kerr_hz_per_photon"] == pytest.approx(self.KERR, rel=1e-9)

    def test_insufficient_points(self):
        with pytest.raises(InsufficientLinearRegion):
            fit_kerr([(10.0, -0.2), (20.0, -0.4)], self.KAPPA)
        with pytest.raises(InsufficientLinearRegion):
            fit_kerr([(n, self.KERR * n, True) for n in self.PHOTONS], self.KAPPA)


def _noisy(sweep, seed, sigma=1e-3):
    noise = np.random.default_rng(seed).normal(0.0, sigma, size=(2, len(sweep)))
    return FrequencySweep(sweep.frequencies, sweep.gammas + noise[0] + 1j * noise[1], 0.0, BiasPoint())


def _jacobians_agree(residual, x, typical):
    forward = forward_difference_jacobian(residual, np.asarray(x, dtype=float), typical=np.asarray(typical))
    central = central_difference_jacobian(residual, np.asarray(x, dtype=float), typical=np.asarray(typical))
    for j in range(central.shape[1]):
        column = np.linalg.norm(central[:, j])
        assert np.linalg.norm(forward[:, j] - central[:, j]) <= 1e-4 * column


class TestUncertaintyScatter:
    """Dispersão entre sementes de ruído contra o erro padrão reportado"""

    SEEDS = range(100, 140)

    def test_reflection(self):
        sweep = _synthetic_sweep(KAPPA_INT, 3000.0)
        fits = [fit_reflection(_noisy(sweep, seed)) for seed in self.SEEDS]
        for name in ("kappa_int", "kappa_ext", "f0"):
            scatter = np.std([fit[name] for fit in fits], ddof=1)
            reported = np.median([fit.error(name) for fit in fits])
            assert 0.5 < scatter / reported < 2.0

    def test_kerr(self):
        photons = TestKerrFit.PHOTONS[:6]
        sigma = 0.5
        fits = []
        for seed in self.SEEDS:
            noise = np.random.default_rng(seed).normal(0.0, sigma, size=photons.size)
            points = [(n, TestKerrFit.KERR * n + e) for n, e in zip(photons, noise)]
            fits.append(fit_kerr(points, TestKerrFit.KAPPA, uncertainties_hz=[sigma] * photons.size))
        scatter = np.std([fit["kerr_hz_per_photon"] for fit in fits], ddof=1)
        reported = np.median([fit.error("kerr_hz_per_photon") for fit in fits])
        assert 0.5 < scatter / reported < 2.0


class TestJacobianAtOptimum:
    """Diferenças progressivas contra centrais nos modelos ajustados"""

    def test_reflection(self):
        sweep = _noisy(_synthetic_sweep(KAPPA_INT, 3000.0), 3)
        fit = fit_reflection(sweep)
        center = 0.5 * (sweep.frequencies[0] + sweep.frequencies[-1])
        offsets = sweep.frequencies - center

        def residual(x):
            difference = reflection_model(offsets, *x) - sweep.gammas
            return np.concatenate([difference.real, difference.imag])

        x = [fit["f0"] - center, fit["kappa_int"], fit["kappa_ext"], fit["amplitude"], fit["phase"]]
        kappa = fit["kappa_total"]
        _jacobians_agree(residual, x, [kappa, kappa, kappa, 1.0, 1.0])

    def test_ringdown(self):
        times = np.arange(1000) * 1e-9
        samples = ringdown_model(times, 50.3e-9, 1.96e6, 48e6, 1e-6)
        fit = fit_ringdown(TimeTrace(0.0, 1e-9, samples), gamma_guess_hz=48e6)

        def residual(x):
            return ringdown_model(times, *x) - samples

        x = [fit["t0"], fit["kappa"], fit["gamma_c"], fit["amplitude"]]
        _jacobians_agree(residual, x, np.abs(x))

    def test_kerr(self):
        photons = TestKerrFit.PHOTONS[:6]
        shifts = TestKerrFit.KERR * photons + np.random.default_rng(4).normal(0.0, 0.5, size=photons.size)
        fit = fit_kerr(list(zip(photons, shifts)), TestKerrFit.KAPPA)

        def residual(x):
            return x[0] * photons - shifts

        _jacobians_agree(residual, [fit["kerr_hz_per_photon"]], [abs(fit["kerr_hz_per_photon"])])
