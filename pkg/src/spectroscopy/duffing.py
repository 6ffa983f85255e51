"""
Estado estacionário de Duffing
Raízes da cúbica n·[(Δ − K·n)² + (κ/2)²] = κ_ext·|α_in|²/2π e estabilidade de cada ramo
"""

import math
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

logger = logging.getLogger(__name__)

DEDUPE_TOLERANCE = 1e-9
NEWTON_ITERATIONS = 8


@dataclass(frozen=True)
class DuffingSolution:
    """Números de fótons estacionários (ordem crescente) e estabilidade de cada um"""
    photon_numbers: Tuple[float, ...]
    stability_flags: Tuple[bool, ...]

    def __post_init__(self):
        if not 1 <= len(self.photon_numbers) <= 3:
            raise ValueError(f"Número de raízes inválido: {len(self.photon_numbers)}")
        if len(self.stability_flags) != len(self.photon_numbers):
            raise ValueError("stability_flags deve ter uma entrada por raiz")

    @property
    def bistable(self) -> bool:
        return sum(self.stability_flags) > 1

    @property
    def stable_photon_numbers(self) -> List[float]:
        return [n for n, stable in zip(self.photon_numbers, self.stability_flags) if stable]


def cubic_discriminant(u: float, q: float) -> float:
    """Discriminante de x³ − 2u·x² + (u² + 1)·x − q"""
    a, b, c, d = 1.0, -2.0 * u, u * u + 1.0, -q
    return 18 * a * b * c * d - 4 * b ** 3 * d + b * b * c * c - 4 * a * c ** 3 - 27 * a * a * d * d


def _polish(x: float, u: float, q: float) -> float:
    for _ in range(NEWTON_ITERATIONS):
        value = ((x - 2 * u) * x + (u * u + 1)) * x - q
        slope = (3 * x - 4 * u) * x + (u * u + 1)
        if slope == 0:
            break
        step = value / slope
        x -= step
        if abs(step) <= 1e-16 * max(abs(x), 1.0):
            break
    return x


def _dedupe(values: List[float]) -> List[float]:
    unique: List[float] = []
    for value in sorted(values):
        if unique and abs(value - unique[-1]) <= DEDUPE_TOLERANCE * max(abs(value), abs(unique[-1])):
            continue
        unique.append(value)
    return unique


def duffing_steady_states(detuning: float, kappa_int: float, kappa_ext: float, kerr: float,
                          drive_photon_flux: float) -> DuffingSolution:
    """
    Resolver o estado estacionário do oscilador de Duffing

    Forma normalizada x³ − 2u·x² + (u² + 1)·x − q = 0 com x = K·n/(κ/2),
    u = Δ/(κ/2), q = P·K/(κ/2)³ e P = κ_ext·|α_in|²/2π.

    Args:
        detuning: Δ = f_drive − f_cav (Hz)
        kappa_int: κ_int/2π (Hz)
        kappa_ext: κ_ext/2π (Hz)
        kerr: K (Hz por fóton)
        drive_photon_flux: |α_in|² (fótons/s)

    Returns:
        DuffingSolution: 1 a 3 raízes; o ramo do meio é instável
    """
    if kappa_int < 0 or kappa_ext < 0 or drive_photon_flux < 0:
        raise ValueError("Taxas e fluxo de fótons devem ser não negativos")

    drive = kappa_ext * drive_photon_flux / (2 * math.pi)
    if drive == 0:
        return DuffingSolution((0.0,), (True,))

    half = 0.5 * (kappa_int + kappa_ext)
    if kerr == 0:
        return DuffingSolution((drive / (detuning * detuning + half * half),), (True,))

    u = detuning / half
    q = drive * kerr / half ** 3
    count = 3 if cubic_discriminant(u, q) > 0 else 1

    roots = np.roots([1.0, -2.0 * u, u * u + 1.0, -q])
    roots = sorted(roots, key=lambda root: abs(root.imag))[:count]
    scaled = [_polish(float(root.real), u, q) * half / kerr for root in roots]
    photons = _dedupe([max(n, 0.0) for n in scaled])

    flags = tuple(
        3 * kerr * kerr * n * n - 4 * kerr * detuning * n + detuning * detuning + half * half > 0
        for n in photons
    )
    return DuffingSolution(tuple(photons), flags)
