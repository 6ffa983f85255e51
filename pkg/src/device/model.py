"""
Modelo do Dispositivo - cavidade 3D acoplada por ponte de indutores SQUID
Converte parâmetros físicos e polarização de fluxo nas grandezas efetivas da cavidade:
perda interna, acoplamento externo, frequência de ressonância e self-Kerr
"""

import math
import logging
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import constants

from ..core.exceptions import BalancedBiasError, ConfigurationError, FluxSingularity

logger = logging.getLogger(__name__)

FLUX_QUANTUM = constants.physical_constants["mag. flux quantum"][0]
HBAR = constants.hbar
PLANCK = constants.h

# Guarda da singularidade em meio quantum de fluxo
DEFAULT_COS_GUARD = 1e-3


class JunctionParams(BaseModel):
    """Junção Josephson equivalente de um SQUID simétrico"""
    model_config = ConfigDict(frozen=True)

    critical_current_a: float = Field(..., gt=0)


class SquidArrayArm(BaseModel):
    """Braço da ponte: série de SQUIDs idênticos"""
    model_config = ConfigDict(frozen=True)

    n_squids: int = Field(..., ge=1)
    junction: JunctionParams
    flux_sign: Literal[1, -1]


class TibBridge(BaseModel):
    """Ponte de Wheatstone de arrays de SQUID (braços opostos idênticos)"""
    model_config = ConfigDict(frozen=True)

    arm_a: SquidArrayArm
    arm_b: SquidArrayArm
    coupling_scale_hz: float = Field(..., gt=0)

    @model_validator(mode="after")
    def check_arms(self) -> "TibBridge":
        if self.arm_a.flux_sign != 1 or self.arm_b.flux_sign != -1:
            raise ValueError("arm_a deve ter flux_sign +1 e arm_b flux_sign -1")
        if self.arm_a.n_squids != self.arm_b.n_squids or self.arm_a.junction != self.arm_b.junction:
            raise ValueError("Os braços só podem diferir no sinal do fluxo gradiométrico")
        return self


class CavityParams(BaseModel):
    """Cavidade 3D (todas as taxas como frequências ordinárias, κ/2π)"""
    model_config = ConfigDict(frozen=True)

    bare_frequency_hz: float = Field(..., gt=0)
    bare_loss_hz: float = Field(0.0, ge=0)
    chip_loss_hz: float = Field(0.0, ge=0)
    inductive_participation: float = Field(0.0, ge=0, lt=1)
    mode_impedance_ohm: float = Field(50.0, gt=0)

    @property
    def internal_loss_hz(self) -> float:
        return self.bare_loss_hz + self.chip_loss_hz


class BiasPoint(BaseModel):
    """Polarização uniforme (Φ_Σ) e gradiométrica (Φ) por SQUID, em unidades de Φ₀"""
    model_config = ConfigDict(frozen=True)

    uniform_phi0: float = 0.0
    gradiometric_phi0: float = 0.0

    @field_validator("uniform_phi0", "gradiometric_phi0")
    @classmethod
    def check_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("Polarização deve ser finita")
        return value

    def with_gradiometric(self, gradiometric_phi0: float) -> "BiasPoint":
        """Mesmo ponto uniforme com outro fluxo gradiométrico"""
        return BiasPoint(uniform_phi0=self.uniform_phi0, gradiometric_phi0=gradiometric_phi0)

    @property
    def balanced(self) -> "BiasPoint":
        return self.with_gradiometric(0.0)


class DeviceParams(BaseModel):
    """Descrição física completa: cavidade, ponte e ambiente"""
    model_config = ConfigDict(frozen=True)

    cavity: CavityParams
    bridge: TibBridge
    line_impedance_ohm: float = Field(50.0, gt=0)
    parasitic_loss_slope_hz_per_phi0: float = Field(0.0, ge=0)
    parasitic_loss_threshold_phi0: Optional[float] = Field(None, ge=0)
    reference_bias: BiasPoint = BiasPoint(uniform_phi0=0.25, gradiometric_phi0=0.0)
    singularity_guard: float = Field(DEFAULT_COS_GUARD, gt=0, lt=1)

    @property
    def parasitics_enabled(self) -> bool:
        return self.parasitic_loss_slope_hz_per_phi0 > 0 and self.parasitic_loss_threshold_phi0 is not None

    def with_coupling_scale(self, coupling_scale_hz: float) -> "DeviceParams":
        bridge = self.bridge.model_copy(update={"coupling_scale_hz": coupling_scale_hz})
        return self.model_copy(update={"bridge": bridge})

    def without_parasitics(self) -> "DeviceParams":
        return self.model_copy(update={"parasitic_loss_slope_hz_per_phi0": 0.0,
                                       "parasitic_loss_threshold_phi0": None})


# =============================================================================
# Indutâncias
# =============================================================================
def squid_inductance(flux: float, junction: JunctionParams,
                     cos_guard: float = DEFAULT_COS_GUARD) -> float:
    """
    Indutância Josephson de um SQUID simétrico sem blindagem

    Args:
        flux: Fluxo no loop do SQUID em unidades de Φ₀
        junction: Junção equivalente (I_c total do SQUID)
        cos_guard: Limite inferior de |cos(πΦ)|

    Returns:
        float: Φ₀ / (2π I_c |cos πΦ|) em henries
    """
    cosine = abs(math.cos(math.pi * flux))
    if cosine <= cos_guard:
        raise FluxSingularity(f"|cos(π·{flux:.6g})| = {cosine:.3g} ≤ {cos_guard:g}: indutância diverge")
    return FLUX_QUANTUM / (2 * math.pi * junction.critical_current_a * cosine)


def josephson_energy(flux: float, junction: JunctionParams,
                     cos_guard: float = DEFAULT_COS_GUARD) -> float:
    """Energia Josephson (J) de um SQUID, E_J = (Φ₀/2π)² / L_J"""
    reduced_flux_quantum = FLUX_QUANTUM / (2 * math.pi)
    return reduced_flux_quantum ** 2 / squid_inductance(flux, junction, cos_guard)


def arm_flux(arm: SquidArrayArm, bias: BiasPoint) -> float:
    """Fluxo por SQUID em um braço"""
    return bias.uniform_phi0 + arm.flux_sign * bias.gradiometric_phi0


def arm_inductance(arm: SquidArrayArm, bias: BiasPoint,
                   cos_guard: float = DEFAULT_COS_GUARD) -> float:
    """Indutância total do array de um braço"""
    return arm.n_squids * squid_inductance(arm_flux(arm, bias), arm.junction, cos_guard)


def mean_arm_inductance(device: DeviceParams, bias: BiasPoint) -> float:
    bridge = device.bridge
    l_a = arm_inductance(bridge.arm_a, bias, device.singularity_guard)
    l_b = arm_inductance(bridge.arm_b, bias, device.singularity_guard)
    return 0.5 * (l_a + l_b)


def bridge_imbalance(bridge: TibBridge, bias: BiasPoint,
                     cos_guard: float = DEFAULT_COS_GUARD) -> float:
    """Desbalanço β = (L_a − L_b)/(L_a + L_b); zero com polarização gradiométrica nula"""
    l_a = arm_inductance(bridge.arm_a, bias, cos_guard)
    l_b = arm_inductance(bridge.arm_b, bias, cos_guard)
    return (l_a - l_b) / (l_a + l_b)


# =============================================================================
# Grandezas efetivas da cavidade
# =============================================================================
def external_coupling(device: DeviceParams, bias: BiasPoint) -> float:
    """κ_ext/2π = κ₀·β² (Hz)"""
    beta = bridge_imbalance(device.bridge, bias, device.singularity_guard)
    return device.bridge.coupling_scale_hz * beta * beta


def calibrate_coupling_scale(device: DeviceParams, on_bias: BiasPoint,
                             target_kappa_max: float) -> DeviceParams:
    """
    Fixar κ₀ para que o acoplamento no ponto "ligado" seja o valor desejado

    Args:
        device: Dispositivo de partida
        on_bias: Polarização do acoplador ligado
        target_kappa_max: κ_ext/2π desejado em on_bias (Hz)

    Returns:
        DeviceParams: Cópia com coupling_scale_hz recalibrado
    """
    if not target_kappa_max > 0:
        raise ConfigurationError(f"coupling_scale deve ser > 0 (alvo recebido: {target_kappa_max})")

    beta = bridge_imbalance(device.bridge, on_bias, device.singularity_guard)
    if beta == 0.0:
        raise BalancedBiasError(f"Ponte balanceada em {on_bias}: impossível calibrar κ₀")

    scale = target_kappa_max / (beta * beta)
    logger.debug(f"κ₀ calibrado: {scale:.6g} Hz (β = {beta:.6g})")
    return device.with_coupling_scale(scale)


def cavity_frequency(device: DeviceParams, bias: BiasPoint) -> float:
    """Frequência da cavidade puxada pela indutância média dos braços (Hz)"""
    ratio = mean_arm_inductance(device, bias) / mean_arm_inductance(device, device.reference_bias)
    participation = device.cavity.inductive_participation
    return device.cavity.bare_frequency_hz / math.sqrt(1.0 + participation * (ratio - 1.0))


def internal_loss(device: DeviceParams, bias: BiasPoint) -> float:
    """κ_int/2π: cavidade + chip + perda parasita acima do limiar (Hz)"""
    loss = device.cavity.internal_loss_hz
    if device.parasitics_enabled:
        excess = abs(bias.gradiometric_phi0) - device.parasitic_loss_threshold_phi0
        loss += max(0.0, excess) * device.parasitic_loss_slope_hz_per_phi0
    return loss


def kappa_total(device: DeviceParams, bias: BiasPoint) -> float:
    return internal_loss(device, bias) + external_coupling(device, bias)


def mode_phase_zpf(device: DeviceParams) -> float:
    """Flutuação de ponto zero da fase do modo, (2π/Φ₀)·sqrt(ħZ/2)"""
    return 2 * math.pi / FLUX_QUANTUM * math.sqrt(HBAR * device.cavity.mode_impedance_ohm / 2)


def self_kerr(device: DeviceParams, bias: BiasPoint) -> float:
    """
    Self-Kerr por teoria de perturbação de primeira ordem no termo quártico

    Cada SQUID contribui −E_J φ_j⁴ / 2 para E(2) − 2E(1) + E(0), com
    φ_j = p·φ_zpf / n_squids; a ponte tem dois braços de cada tipo.

    Returns:
        float: K em Hz por fóton (negativo)
    """
    bridge = device.bridge
    n_squids = bridge.arm_a.n_squids
    phase_per_junction = device.cavity.inductive_participation * mode_phase_zpf(device) / n_squids

    energy_a = josephson_energy(arm_flux(bridge.arm_a, bias), bridge.arm_a.junction, device.singularity_guard)
    energy_b = josephson_energy(arm_flux(bridge.arm_b, bias), bridge.arm_b.junction, device.singularity_guard)
    total_energy = 2 * n_squids * (energy_a + energy_b)

    return -total_energy * phase_per_junction ** 4 / (2 * PLANCK)
