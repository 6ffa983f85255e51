"""
Calibração do acoplador
Busca do acoplamento crítico, platô de energia da varredura de ringdown e razão liga/desliga
"""

import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from ..core.exceptions import BracketError, NoPlateau
from ..device.model import BiasPoint, DeviceParams, kappa_total
from ..spectroscopy.reflection import linear_sweep, sweep_around_resonance
from .fits import fit_reflection
from .least_squares import FitResult

logger = logging.getLogger(__name__)

PlateauRow = Tuple[float, float, float]

MIN_PLATEAU_POINTS = 3


def reflection_fit_at(device: DeviceParams, bias: BiasPoint, sweep_linewidths: float = 10.0,
                      sweep_points: int = 201) -> FitResult:
    """Ajuste de uma varredura linear sintética centrada na cavidade"""
    span = sweep_linewidths * kappa_total(device, bias)
    frequencies = sweep_around_resonance(device, bias, span, sweep_points)
    return fit_reflection(linear_sweep(device, bias, frequencies))


def critical_coupling_search(device: DeviceParams, bracket: Tuple[float, float] = (0.001, 0.008), *,
                             scan_points: int = 9, xtol: float = 1e-7, sweep_linewidths: float = 10.0,
                             sweep_points: int = 201, uniform_phi0: Optional[float] = None) -> BiasPoint:
    """
    Polarização gradiométrica que minimiza |Γ_min| ajustado

    Varredura grossa para montar o trio de bracketing e seção áurea em seguida.

    Args:
        device: Dispositivo calibrado
        bracket: Intervalo de fluxo gradiométrico (Φ₀)
        uniform_phi0: Polarização uniforme (a de referência do dispositivo se None)

    Raises:
        BracketError: κ_ext − κ_int não troca de sinal no intervalo ou mínimo na borda
    """
    low, high = bracket
    if not high > low:
        raise BracketError(f"Intervalo inválido: {bracket}")
    uniform = device.reference_bias.uniform_phi0 if uniform_phi0 is None else uniform_phi0
    base = BiasPoint(uniform_phi0=uniform, gradiometric_phi0=0.0)

    def fit_at(gradiometric: float) -> FitResult:
        return reflection_fit_at(device, base.with_gradiometric(gradiometric), sweep_linewidths, sweep_points)

    grid = np.linspace(low, high, scan_points)
    fits = [fit_at(g) for g in grid]
    values = [fit["min_reflection"] for fit in fits]

    first = fits[0]["kappa_ext"] - fits[0]["kappa_int"]
    last = fits[-1]["kappa_ext"] - fits[-1]["kappa_int"]
    if first * last > 0:
        raise BracketError(f"κ_ext − κ_int não troca de sinal em [{low}, {high}] Φ₀")

    best = int(np.argmin(values))
    if best in (0, len(grid) - 1):
        raise BracketError(f"Mínimo de |Γ_min| na borda do intervalo ({grid[best]:.6g} Φ₀)")

    result = minimize_scalar(
        lambda g: fit_at(g)["min_reflection"],
        bracket=(grid[best - 1], grid[best], grid[best + 1]),
        method="golden",
        tol=xtol,
    )
    critical = base.with_gradiometric(float(result.x))
    logger.info(f"✅ Acoplamento crítico em Φ = {result.x:.8g} Φ₀ (|Γ_min| = {result.fun:.3g})")
    return critical


def on_off_ratio(kappa_max: float, kappa_int: float) -> float:
    """κ_max / κ_int"""
    if kappa_max <= 0 or kappa_int <= 0:
        raise ValueError("Taxas devem ser positivas")
    return kappa_max / kappa_int


def plateau_indices(rows: Sequence[PlateauRow], threshold: float = 0.95) -> List[int]:
    """Índices (em ordem de polarização) do trecho contíguo com energia ≥ threshold·máximo que contém o máximo"""
    order = sorted(range(len(rows)), key=lambda i: rows[i][0])
    energies = np.array([rows[i][2] for i in order], dtype=float)
    finite = np.isfinite(energies)
    if not finite.any():
        raise NoPlateau("Nenhuma energia válida na varredura")

    peak = int(np.nanargmax(np.where(finite, energies, -np.inf)))
    above = finite & (energies >= threshold * energies[peak])

    start = peak
    while start > 0 and above[start - 1]:
        start -= 1
    stop = peak
    while stop < len(energies) - 1 and above[stop + 1]:
        stop += 1
    return [order[i] for i in range(start, stop + 1)]


def plateau_kappa_max(rows: Iterable[PlateauRow], kappa_int: float, threshold: float = 0.95) -> float:
    """
    Maior κ ajustado no platô de energia menos κ_int

    Args:
        rows: (polarização, κ, energia) por ponto da varredura
        kappa_int: Perda interna (Hz)
        threshold: Fração da energia máxima que define o platô

    Raises:
        NoPlateau: Trecho contíguo com menos de 3 pontos
    """
    rows = list(rows)
    indices = plateau_indices(rows, threshold)
    if len(indices) < MIN_PLATEAU_POINTS:
        raise NoPlateau(f"Platô com {len(indices)} pontos (mínimo {MIN_PLATEAU_POINTS})")

    kappa_max = max(rows[i][1] for i in indices) - kappa_int
    logger.debug(
        f"Platô de {len(indices)} pontos entre {rows[indices[0]][0]:.4g} e {rows[indices[-1]][0]:.4g} Φ₀"
    )
    return kappa_max
