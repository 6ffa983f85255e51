"""
Modelos de ajuste
Reflexão de uma porta, ringdown filtrado pelo ADC e inclinação de Kerr na região linear
"""

import math
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from ..core.exceptions import (
    DegenerateRates, FitError, InsufficientLinearRegion, MaxIterations, SingularJacobian,
)
from ..dynamics.integrator import TimeTrace
from ..spectroscopy.reflection import FrequencySweep
from .least_squares import FitResult, least_squares, propagate

logger = logging.getLogger(__name__)

DEGENERATE_RATE_TOLERANCE = 1e-6
KERR_REGION_FRACTION = 0.25
KERR_SELECTION_PASSES = 2


# =============================================================================
# Reflexão
# =============================================================================
def reflection_model(offsets: np.ndarray, f0_offset: float, kappa_int: float, kappa_ext: float,
                     amplitude: float, phase: float) -> np.ndarray:
    """A·e^{iθ}·((κ_int − κ_ext) + 2iΔ)/((κ_int + κ_ext) + 2iΔ), Δ = offset − f0_offset"""
    detuning = offsets - f0_offset
    response = ((kappa_int - kappa_ext) + 2j * detuning) / ((kappa_int + kappa_ext) + 2j * detuning)
    return amplitude * np.exp(1j * phase) * response


def _half_depth_width(frequencies: np.ndarray, magnitude_squared: np.ndarray, baseline: float) -> float:
    level = 0.5 * (baseline + magnitude_squared.min())
    inside = np.nonzero(magnitude_squared <= level)[0]
    spacing = float(np.median(np.diff(frequencies)))
    if len(inside) < 2:
        return 2 * spacing
    return float(frequencies[inside[-1]] - frequencies[inside[0]]) + spacing


def fit_reflection(sweep: FrequencySweep) -> FitResult:
    """
    Ajustar Γ complexo ao modelo de uma porta com prefator complexo (cabo)

    Returns:
        FitResult: f0, kappa_int, kappa_ext, amplitude, phase e as derivadas
            kappa_total = κ_int + κ_ext e min_reflection = |κ_int − κ_ext|/κ
    """
    frequencies = sweep.frequencies
    gammas = sweep.gammas
    center = 0.5 * (frequencies[0] + frequencies[-1])
    offsets = frequencies - center

    edge = 0.5 * (gammas[0] + gammas[-1])
    baseline = abs(edge)
    magnitude = np.abs(gammas)
    minimum = int(np.argmin(magnitude))
    depth = magnitude[minimum] / baseline if baseline > 0 else 0.0

    kappa_guess = _half_depth_width(frequencies, magnitude ** 2, baseline ** 2)
    winding = np.ptp(np.unwrap(np.angle(gammas / edge))) if baseline > 0 else 0.0
    over_coupled = winding > math.pi
    ext_fraction = 0.5 * (1 + depth) if over_coupled else 0.5 * (1 - depth)
    ext_fraction = min(max(ext_fraction, 1e-3), 1 - 1e-3)

    x0 = [
        offsets[minimum],
        kappa_guess * (1 - ext_fraction),
        kappa_guess * ext_fraction,
        baseline,
        float(np.angle(edge)),
    ]
    names = ["f0", "kappa_int", "kappa_ext", "amplitude", "phase"]

    def residual(x: np.ndarray) -> np.ndarray:
        difference = reflection_model(offsets, *x) - gammas
        return np.concatenate([difference.real, difference.imag])

    result = least_squares(
        residual, x0, names,
        x_scale=[kappa_guess, kappa_guess, kappa_guess, 1.0, 1.0],
        units={"f0": "Hz", "kappa_int": "Hz", "kappa_ext": "Hz", "amplitude": "", "phase": "rad"},
    )

    result.parameters["f0"] += center
    kappa_int, kappa_ext = result["kappa_int"], result["kappa_ext"]
    kappa = kappa_int + kappa_ext
    contrast = kappa_int - kappa_ext
    sign = 1.0 if contrast >= 0 else -1.0

    result.parameters["kappa_total"] = kappa
    result.uncertainties["kappa_total"] = propagate(result, {"kappa_int": 1.0, "kappa_ext": 1.0})
    result.units["kappa_total"] = "Hz"

    result.parameters["min_reflection"] = abs(contrast) / kappa
    result.uncertainties["min_reflection"] = propagate(result, {
        "kappa_int": (sign * kappa - abs(contrast)) / kappa ** 2,
        "kappa_ext": (-sign * kappa - abs(contrast)) / kappa ** 2,
    })
    result.units["min_reflection"] = ""

    logger.debug(f"Reflexão ajustada: κ = {kappa:.6g} Hz, |Γ_min| = {result['min_reflection']:.4g}")
    return result


# =============================================================================
# Ringdown
# =============================================================================
def _filtered_pulse(tau: np.ndarray, k: float, gamma: float) -> np.ndarray:
    """γ·(e^{−kτ} − e^{−γτ})/(γ − k) para τ > 0, zero antes; contínuo em γ = k"""
    shape = np.zeros_like(tau)
    after = tau > 0
    t = tau[after]
    slow, fast = min(k, gamma), max(k, gamma)
    gap = fast - slow
    if gap > 0:
        shape[after] = gamma * np.exp(-slow * t) * (-np.expm1(-gap * t)) / gap
    else:
        shape[after] = gamma * t * np.exp(-slow * t)
    return shape


def ringdown_model(times: np.ndarray, t0: float, kappa_hz: float, gamma_c_hz: float,
                   amplitude: float) -> np.ndarray:
    """
    V(t) = A·γ_c·(e^{−κ_a τ} − e^{−γ_c τ})/(γ_c − κ_a), τ = t − t0, κ_a = π·κ

    A é a amplitude do pulso antes do filtro; taxas em Hz (κ/2π e γ_c/2π).
    """
    tau = np.asarray(times, dtype=float) - t0
    return amplitude * _filtered_pulse(tau, math.pi * kappa_hz, 2 * math.pi * gamma_c_hz)


def _log_slope(samples: np.ndarray, start: int) -> float:
    """Taxa de decaimento por amostra a partir do pico (regressão de log)"""
    peak = samples[start]
    tail = samples[start:]
    stop = int(np.argmax(tail < 0.05 * peak)) if np.any(tail < 0.05 * peak) else len(tail)
    window = tail[:max(stop, 3)]
    window = window[window > 0]
    if len(window) < 3:
        return 1.0 / max(len(tail), 1)
    slope = np.polyfit(np.arange(len(window)), np.log(window), 1)[0]
    return max(-float(slope), 1e-12)


def _rise_rate(k: float, rise: float) -> float:
    """γ > k com ln(γ/k)/(γ − k) = rise (tempo do pico em amostras)"""
    if rise <= 0 or rise * k >= 1:
        return math.pi

    def peak_time(gamma: float) -> float:
        return math.log(gamma / k) / (gamma - k) - rise

    upper = max(2 * k, 1.0)
    while peak_time(upper) > 0 and upper < 1e6:
        upper *= 2
    return brentq(peak_time, k * (1 + 1e-9), upper)


def _ringdown_fit(samples: np.ndarray, x0: List[float], fixed_gamma: Optional[float]) -> FitResult:
    index = np.arange(len(samples), dtype=float)

    if fixed_gamma is None:
        def residual(x):
            return x[3] * _filtered_pulse(index - x[0], x[1], x[2]) - samples
        return least_squares(residual, x0, ["t0", "k", "gamma", "amplitude"],
                             x_scale=[max(abs(x0[0]), 1.0), x0[1], x0[2], x0[3]])

    def residual_fixed(x):
        return x[2] * _filtered_pulse(index - x[0], x[1], fixed_gamma) - samples
    start = [x0[0], x0[1], x0[3]]
    fit = least_squares(residual_fixed, start, ["t0", "k", "amplitude"],
                        x_scale=[max(abs(start[0]), 1.0), start[1], start[2]])
    covariance = np.zeros((4, 4))
    order = [0, 1, 3]
    for i, a in enumerate(order):
        for j, b in enumerate(order):
            covariance[a, b] = fit.covariance[i, j]
    fit.parameters = {"t0": fit["t0"], "k": fit["k"], "gamma": fixed_gamma, "amplitude": fit["amplitude"]}
    fit.uncertainties = {"t0": fit.error("t0"), "k": fit.error("k"), "gamma": 0.0, "amplitude": fit.error("amplitude")}
    fit.covariance = covariance
    fit.bounded = ("gamma_c",)
    return fit


def fit_ringdown(trace: TimeTrace, gamma_guess_hz: Optional[float] = None) -> FitResult:
    """
    Ajustar o pulso de ringdown filtrado pelo ADC

    Args:
        trace: Tensão real com a borda de subida e ≥ 3 constantes de decaimento
        gamma_guess_hz: Chute para γ_c/2π (estimado do tempo até o pico se None)

    Returns:
        FitResult: t0 (s), kappa (Hz), gamma_c (Hz), amplitude (V); κ ≤ γ_c.
            Sem informação do filtro nos dados, γ_c fica no limite de Nyquist π/dt e
            aparece em bounded.
    """
    samples = np.asarray(trace.samples, dtype=float)
    scale = float(np.max(np.abs(samples)))
    if scale == 0:
        raise FitError("Traço de ringdown nulo")
    normalized = samples / scale
    nyquist = math.pi

    start = int(np.argmax(np.diff(normalized)))
    peak = int(np.argmax(normalized))
    k0 = _log_slope(normalized, peak)
    if gamma_guess_hz is not None:
        gamma0 = 2 * math.pi * gamma_guess_hz * trace.dt_s
    else:
        gamma0 = _rise_rate(k0, float(peak - start))
    gamma0 = min(gamma0, nyquist)
    if abs(gamma0 - k0) <= DEGENERATE_RATE_TOLERANCE * gamma0:
        gamma0 = 2 * k0
    pulse_at_peak = _filtered_pulse(np.array([float(peak - start)]), k0, gamma0)[0]
    amplitude0 = normalized[peak] / pulse_at_peak if pulse_at_peak > 0 else 1.0
    x0 = [float(start), k0, gamma0, amplitude0]

    try:
        fit = _ringdown_fit(normalized, x0, None)
        k, gamma = fit["k"], fit["gamma"]
        if gamma < k:
            k, gamma = gamma, k
        if gamma > nyquist:
            raise SingularJacobian("γ_c acima do limite de Nyquist")
    except (SingularJacobian, MaxIterations) as e:
        logger.debug(f"Filtro não identificável ({e}); γ_c fixado em π/dt")
        fit = _ringdown_fit(normalized, x0, nyquist)

    t0, k, gamma, amplitude = (fit[name] for name in ("t0", "k", "gamma", "amplitude"))
    errors = dict(fit.uncertainties)
    if k > gamma:
        amplitude *= gamma / k
        errors["amplitude"] *= gamma / k
        k, gamma = gamma, k
        errors["k"], errors["gamma"] = errors["gamma"], errors["k"]

    if abs(gamma - k) < DEGENERATE_RATE_TOLERANCE * gamma:
        raise DegenerateRates(f"γ_c ≈ κ ({gamma:.6g} vs {k:.6g} por amostra): modelo singular")

    dt = trace.dt_s
    result = FitResult(
        parameters={
            "t0": trace.t0_s + t0 * dt,
            "kappa": k / (math.pi * dt),
            "gamma_c": gamma / (2 * math.pi * dt),
            "amplitude": amplitude * scale,
        },
        uncertainties={
            "t0": errors["t0"] * dt,
            "kappa": errors["k"] / (math.pi * dt),
            "gamma_c": errors["gamma"] / (2 * math.pi * dt),
            "amplitude": errors["amplitude"] * scale,
        },
        residual_norm=fit.residual_norm * scale,
        converged=fit.converged,
        iterations=fit.iterations,
        units={"t0": "s", "kappa": "Hz", "gamma_c": "Hz", "amplitude": "V"},
        bounded=fit.bounded,
    )
    logger.debug(f"Ringdown ajustado: κ = {result['kappa']:.6g} Hz, γ_c = {result['gamma_c']:.6g} Hz")
    return result


# =============================================================================
# Kerr
# =============================================================================
@dataclass(frozen=True)
class KerrPoint:
    """Deslocamento de ressonância em função do número de fótons"""
    photons: float
    shift_hz: float
    bistable: bool = False


PointLike = Union[KerrPoint, Tuple[float, float], Tuple[float, float, bool]]


def _as_points(shifts: Iterable[PointLike]) -> List[KerrPoint]:
    points = []
    for item in shifts:
        if isinstance(item, KerrPoint):
            points.append(item)
        else:
            points.append(KerrPoint(float(item[0]), float(item[1]), bool(item[2]) if len(item) > 2 else False))
    return points


def _through_origin(points: Sequence[KerrPoint]) -> float:
    photons = np.array([p.photons for p in points])
    shifts = np.array([p.shift_hz for p in points])
    return float(photons @ shifts / (photons @ photons))


def fit_kerr(shifts: Iterable[PointLike], kappa_total: float,
             uncertainties_hz: Optional[Sequence[float]] = None) -> FitResult:
    """
    Ajuste Δ = K·n pela origem na região linear |K̂·n| < κ/4

    K̂ parte dos três menores números de fótons e é reestimado em duas passagens;
    pontos biestáveis nunca entram.

    Args:
        shifts: (n, Δ) ou (n, Δ, biestável) ou KerrPoint
        kappa_total: Largura de linha total κ/2π (Hz)
        uncertainties_hz: Erro de cada Δ (pesos); uniforme se None
    """
    points = _as_points(shifts)
    sigma = np.ones(len(points)) if uncertainties_hz is None else np.asarray(uncertainties_hz, dtype=float)
    weights = {id(p): s for p, s in zip(points, sigma)}

    usable = [p for p in points if not p.bistable and p.photons > 0]
    if len(usable) < 3:
        raise InsufficientLinearRegion(f"Apenas {len(usable)} pontos fora da biestabilidade")

    estimate = _through_origin(sorted(usable, key=lambda p: p.photons)[:3])
    limit = KERR_REGION_FRACTION * kappa_total
    result = None

    for _ in range(KERR_SELECTION_PASSES):
        region = [p for p in usable if abs(estimate * p.photons) < limit]
        if len(region) < 3:
            raise InsufficientLinearRegion(f"Apenas {len(region)} pontos com |K̂·n| < κ/4")

        photons = np.array([p.photons for p in region])
        shifts_hz = np.array([p.shift_hz for p in region])
        errors = np.array([weights[id(p)] for p in region])

        def residual(x, photons=photons, shifts_hz=shifts_hz, errors=errors):
            return (x[0] * photons - shifts_hz) / errors

        scale = abs(estimate) if estimate != 0 else limit / photons.max()
        result = least_squares(residual, [estimate], ["kerr_hz_per_photon"],
                               x_scale=[scale], units={"kerr_hz_per_photon": "Hz/photon"})
        estimate = result["kerr_hz_per_photon"]

    result.metadata["points_used"] = float(len(region))
    logger.debug(f"Kerr ajustado: {estimate:.6g} Hz/fóton com {len(region)} pontos")
    return result
