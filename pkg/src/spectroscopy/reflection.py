"""
Reflexão na porta do acoplador
Γ linear e não linear (ramos de Duffing com histerese), ressonância pela inclinação de fase e número de fótons
"""

import math
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..core.exceptions import DegenerateSweep
from ..core.storage import read_table, write_table
from ..device.model import (
    HBAR, PLANCK, BiasPoint, DeviceParams, cavity_frequency, external_coupling, internal_loss, self_kerr,
)
from .duffing import DuffingSolution, duffing_steady_states

logger = logging.getLogger(__name__)

SweepDirection = Literal["up", "down"]

PASSIVITY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class FrequencySweep:
    """Γ complexo amostrado em potência e polarização fixas"""
    frequencies: np.ndarray
    gammas: np.ndarray
    input_power_w: float
    bias: BiasPoint
    bistable: bool = False

    def __post_init__(self):
        if len(self.frequencies) != len(self.gammas):
            raise ValueError("frequencies e gammas com tamanhos diferentes")
        if len(self.frequencies) < 2:
            raise ValueError("Varredura precisa de pelo menos 2 pontos")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("Frequências devem ser estritamente crescentes")

    def __len__(self) -> int:
        return len(self.frequencies)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "freq_hz": self.frequencies,
            "re_gamma": self.gammas.real,
            "im_gamma": self.gammas.imag,
        })

    def to_csv(self, path: Union[str, Path]) -> Path:
        return write_table(path, self.to_frame(), {
            "input_power_w": float(self.input_power_w),
            "bias_uniform_phi0": float(self.bias.uniform_phi0),
            "bias_gradiometric_phi0": float(self.bias.gradiometric_phi0),
            "bistable": int(self.bistable),
        })

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "FrequencySweep":
        frame, metadata = read_table(path)
        bias = BiasPoint(
            uniform_phi0=float(metadata.get("bias_uniform_phi0", 0.0)),
            gradiometric_phi0=float(metadata.get("bias_gradiometric_phi0", 0.0)),
        )
        return cls(
            frequencies=frame["freq_hz"].to_numpy(),
            gammas=frame["re_gamma"].to_numpy() + 1j * frame["im_gamma"].to_numpy(),
            input_power_w=float(metadata.get("input_power_w", 0.0)),
            bias=bias,
            bistable=bool(int(metadata.get("bistable", 0))),
        )


# =============================================================================
# Convenções de potência e número de fótons
# =============================================================================
def photon_number(input_power: float, kappa_total: float, frequency: float) -> float:
    """n = P / (κ·ħω), κ e ω angulares"""
    if input_power < 0 or kappa_total <= 0 or frequency <= 0:
        raise ValueError("Potência não negativa; κ e frequência positivos")
    return input_power / ((2 * math.pi * kappa_total) * HBAR * (2 * math.pi * frequency))


def power_for_photons(photons: float, kappa_total: float, frequency: float) -> float:
    """Inverso de photon_number"""
    if photons < 0 or kappa_total <= 0 or frequency <= 0:
        raise ValueError("Fótons não negativos; κ e frequência positivos")
    return photons * (2 * math.pi * kappa_total) * HBAR * (2 * math.pi * frequency)


def drive_photon_flux(input_power: float, frequency: float) -> float:
    """|α_in|² = P / (h·f) em fótons por segundo"""
    return input_power / (PLANCK * frequency)


# =============================================================================
# Reflexão linear
# =============================================================================
def _one_port(detuning, kappa_int: float, kappa_ext: float):
    return ((kappa_int - kappa_ext) + 2j * detuning) / ((kappa_int + kappa_ext) + 2j * detuning)


def reflection_linear(device: DeviceParams, bias: BiasPoint, frequency: float) -> complex:
    """Γ = ((κ_int − κ_ext) + 2i(f − f₀)) / ((κ_int + κ_ext) + 2i(f − f₀))"""
    detuning = frequency - cavity_frequency(device, bias)
    return complex(_one_port(detuning, internal_loss(device, bias), external_coupling(device, bias)))


def linear_sweep(device: DeviceParams, bias: BiasPoint, frequencies: Sequence[float],
                 input_power: float = 0.0) -> FrequencySweep:
    """Varredura de reflexão no limite linear"""
    frequencies = np.asarray(frequencies, dtype=float)
    detunings = frequencies - cavity_frequency(device, bias)
    gammas = _one_port(detunings, internal_loss(device, bias), external_coupling(device, bias))
    return FrequencySweep(frequencies, np.asarray(gammas, dtype=complex), input_power, bias)


def sweep_around_resonance(device: DeviceParams, bias: BiasPoint, span: float, points: int) -> np.ndarray:
    """Grade uniforme de largura span centrada na frequência da cavidade"""
    center = cavity_frequency(device, bias)
    return np.linspace(center - span / 2, center + span / 2, points)


# =============================================================================
# Reflexão não linear
# =============================================================================
@dataclass(frozen=True)
class _Cavity:
    frequency: float
    kappa_int: float
    kappa_ext: float
    kerr: float

    @classmethod
    def at(cls, device: DeviceParams, bias: BiasPoint) -> "_Cavity":
        return cls(cavity_frequency(device, bias), internal_loss(device, bias),
                   external_coupling(device, bias), self_kerr(device, bias))


def _select_branch(solution: DuffingSolution, kerr: float, direction: SweepDirection,
                   previous: Optional[float]) -> float:
    stable = solution.stable_photon_numbers or list(solution.photon_numbers)
    if len(stable) == 1:
        return stable[0]
    if previous is not None:
        return min(stable, key=lambda n: abs(n - previous))
    # Sem histórico: o ramo alcançado vindo do lado oposto da varredura
    softening = kerr < 0
    if (direction == "up") == softening:
        return stable[0]
    return stable[-1]


def _nonlinear_point(cavity: _Cavity, frequency: float, input_power: float, direction: SweepDirection,
                     previous: Optional[float]) -> Tuple[complex, float, DuffingSolution]:
    detuning = frequency - cavity.frequency
    flux = drive_photon_flux(input_power, frequency)
    solution = duffing_steady_states(detuning, cavity.kappa_int, cavity.kappa_ext, cavity.kerr, flux)
    photons = _select_branch(solution, cavity.kerr, direction, previous)
    gamma = complex(_one_port(detuning - cavity.kerr * photons, cavity.kappa_int, cavity.kappa_ext))
    return gamma, photons, solution


def reflection_nonlinear(device: DeviceParams, bias: BiasPoint, frequency: float, input_power: float,
                         sweep_direction: SweepDirection = "up",
                         previous_photons: Optional[float] = None) -> complex:
    """
    Γ = 1 − sqrt(2πκ_ext)·a/α_in no ramo de Duffing escolhido

    Args:
        previous_photons: Fótons no ponto anterior da varredura (continuação)
    """
    if input_power < 0:
        raise ValueError(f"Potência negativa: {input_power}")
    gamma, _, _ = _nonlinear_point(_Cavity.at(device, bias), frequency, input_power,
                                   sweep_direction, previous_photons)
    return gamma


def nonlinear_sweep(device: DeviceParams, bias: BiasPoint, frequencies: Sequence[float], input_power: float,
                    direction: SweepDirection = "up") -> FrequencySweep:
    """Varredura com continuação do ramo na ordem de direction; marca biestabilidade"""
    if input_power < 0:
        raise ValueError(f"Potência negativa: {input_power}")

    frequencies = np.asarray(frequencies, dtype=float)
    cavity = _Cavity.at(device, bias)
    order = range(len(frequencies)) if direction == "up" else range(len(frequencies) - 1, -1, -1)

    gammas = np.empty(len(frequencies), dtype=complex)
    previous: Optional[float] = None
    bistable = False
    for index in order:
        gamma, previous, solution = _nonlinear_point(cavity, frequencies[index], input_power,
                                                     direction, previous)
        gammas[index] = gamma
        bistable = bistable or solution.bistable

    return FrequencySweep(frequencies, gammas, input_power, bias, bistable)


# =============================================================================
# Ressonância
# =============================================================================
# Pontos de cada lado do máximo discreto usados no ajuste local
LOCAL_FIT_HALF_WIDTH = 3


def _parabolic_peak(frequencies: np.ndarray, slope: np.ndarray, peak: int) -> float:
    left, center, right = slope[peak - 1], slope[peak], slope[peak + 1]
    curvature = left - 2 * center + right
    offset = 0.5 * (left - right) / curvature if curvature < 0 else 0.0

    if offset >= 0:
        return float(frequencies[peak] + offset * (frequencies[peak + 1] - frequencies[peak]))
    return float(frequencies[peak] + offset * (frequencies[peak] - frequencies[peak - 1]))


def _mobius_pole(frequencies: np.ndarray, gammas: np.ndarray, peak: int) -> Optional[float]:
    """
    Parte real do polo de Γ(f) ≈ (a + b·x)/(x + c) ajustado perto do máximo

    A reflexão de uma porta é bilinear em f, então o ajuste é exato no regime linear
    e acompanha o polo deslocado por Kerr. None se o polo cair fora da janela local.
    """
    low = max(peak - LOCAL_FIT_HALF_WIDTH, 0)
    high = min(peak + LOCAL_FIT_HALF_WIDTH + 1, len(frequencies))
    step = 0.5 * (frequencies[peak + 1] - frequencies[peak - 1])
    x = (frequencies[low:high] - frequencies[peak]) / step
    g = gammas[low:high]

    # a + b·x − c·Γ = Γ·x
    design = np.column_stack([np.ones_like(g), x.astype(complex), -g])
    solution, _, rank, _ = np.linalg.lstsq(design, g * x, rcond=None)
    if rank < 3:
        return None
    offset = -solution[2].real
    if not np.isfinite(offset) or abs(offset) > LOCAL_FIT_HALF_WIDTH:
        return None
    return float(frequencies[peak] + offset * step)


def resonance_by_phase_slope(sweep: FrequencySweep) -> float:
    """
    Frequência de máximo |∂∠Γ/∂f| com refinamento abaixo do passo da grade

    O máximo discreto localiza a ressonância; o polo de um ajuste bilinear local de Γ
    a refina (inclusive no salto de π em acoplamento crítico). Refinamento parabólico
    da inclinação quando o ajuste local não converge.

    Raises:
        DegenerateSweep: Menos de 5 pontos, fase constante ou máximo na borda da janela
    """
    if len(sweep) < 5:
        raise DegenerateSweep(f"Varredura com {len(sweep)} pontos (mínimo 5)")

    frequencies = sweep.frequencies
    phase = np.unwrap(np.angle(sweep.gammas))
    slope = np.abs(np.gradient(phase, frequencies))

    peak = int(np.argmax(slope))
    if slope[peak] == 0:
        raise DegenerateSweep("Fase constante na varredura")
    if peak == 0 or peak == len(slope) - 1:
        raise DegenerateSweep("Inclinação de fase máxima na borda: ressonância fora da janela")

    pole = _mobius_pole(frequencies, sweep.gammas, peak)
    if pole is not None:
        return pole
    logger.debug("Ajuste local sem polo na janela; refinamento parabólico")
    return _parabolic_peak(frequencies, slope, peak)
