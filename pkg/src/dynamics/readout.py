"""
Leitura - tensão de saída, filtro do ADC e protocolo de ringdown
Prepara fótons com o acoplador ligado, desliga por 1 µs e registra o pulso na polarização de leitura
"""

import math
import cmath
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import trapezoid
from scipy.signal import lfilter

from ..core.config import CalibrationConfig, ReadoutConfig
from ..core.exceptions import ConfigurationError, StepTooLarge, TimeBaseMismatch, UnreachableSteadyState
from ..device.model import (
    HBAR, BiasPoint, DeviceParams, cavity_frequency, external_coupling, kappa_total, self_kerr,
)
from .integrator import STEP_RESOLUTION, DriveSegment, PulseSequence, TimeTrace, integrate_cavity

logger = logging.getLogger(__name__)


class AdcModel(BaseModel):
    """Filtro passa-baixa de um polo do conversor analógico-digital"""
    model_config = ConfigDict(frozen=True)

    corner_frequency_hz: float = Field(..., gt=0)

    @property
    def gamma(self) -> float:
        """γ_c angular (1/s)"""
        return 2 * math.pi * self.corner_frequency_hz

    @property
    def switching_time_s(self) -> float:
        return 1.0 / self.gamma


@dataclass(frozen=True)
class RingdownRecord:
    """Registro completo do estágio de leitura"""
    field: TimeTrace
    voltage: TimeTrace
    filtered: TimeTrace
    switch_index: int
    readout_bias: BiasPoint
    stored_photons: float

    @property
    def readout_voltage(self) -> TimeTrace:
        """Tensão não filtrada a partir do instante de comutação"""
        return self.voltage.slice(self.switch_index)


def output_voltage(device: DeviceParams, trace: TimeTrace, sequence: PulseSequence,
                   detection_phase_rad: float = 0.0) -> TimeTrace:
    """
    Tensão na linha: V = Re[e^{iφ}·sqrt(2πκ_ext·ħω·Z₀)·a]

    Args:
        device: Dispositivo
        trace: a(t) produzido por integrate_cavity com a mesma sequência
        sequence: Sequência que define a polarização em cada amostra
        detection_phase_rad: Fase de detecção φ

    Returns:
        TimeTrace: Tensão real (V)
    """
    if not trace.is_complex:
        raise TimeBaseMismatch("output_voltage espera o campo complexo da cavidade")
    if sequence.sample_count(trace.dt_s) != len(trace):
        raise TimeBaseMismatch(
            f"Traço com {len(trace)} amostras, sequência pede {sequence.sample_count(trace.dt_s)}"
        )

    gains = {}
    gain = np.empty(len(trace))
    for i, bias in enumerate(sequence.sample_biases(trace.dt_s)):
        if bias not in gains:
            omega = 2 * math.pi * cavity_frequency(device, bias)
            gains[bias] = math.sqrt(2 * math.pi * external_coupling(device, bias) * HBAR * omega
                                    * device.line_impedance_ohm)
        gain[i] = gains[bias]

    voltage = np.real(np.exp(1j * detection_phase_rad) * gain * trace.samples)
    return TimeTrace(trace.t0_s, trace.dt_s, voltage)


def apply_adc_filter(trace: TimeTrace, adc: AdcModel) -> TimeTrace:
    """
    Filtro de um polo y' = γ_c(x − y), exato por passo com x constante no passo

    y[n+1] = q·y[n] + (1 − q)·x[n], q = e^{−γ_c dt}, y[0] = 0
    """
    if trace.dt_s > STEP_RESOLUTION / adc.corner_frequency_hz:
        raise StepTooLarge(
            f"dt = {trace.dt_s:.3g} s grande demais para o ADC de {adc.corner_frequency_hz:.4g} Hz"
        )
    q = math.exp(-adc.gamma * trace.dt_s)
    filtered = lfilter([0.0, 1.0 - q], [1.0, -q], trace.samples)
    return TimeTrace(trace.t0_s, trace.dt_s, filtered)


def reference_voltage(device: DeviceParams, bias: BiasPoint, stored_photons: float) -> float:
    """
    V₀ = sqrt(E_stored·2πκ_g·Z₀) com E_stored = n·ħω

    κ_g é a largura de linha total na polarização de referência; o pico sem filtro
    fica em V₀·sqrt(κ_ext/κ_g) ≤ V₀.
    """
    omega = 2 * math.pi * cavity_frequency(device, bias)
    energy = stored_photons * HBAR * omega
    return math.sqrt(energy * 2 * math.pi * kappa_total(device, bias) * device.line_impedance_ohm)


def measured_energy(trace: TimeTrace, device: DeviceParams, bias: Optional[BiasPoint] = None) -> float:
    """
    Energia do pulso em fótons: ∫V²dt / (Z₀·ħω)

    Args:
        trace: Tensão real
        device: Dispositivo (Z₀ e frequência)
        bias: Polarização de leitura para ħω (frequência nua se None)
    """
    frequency = cavity_frequency(device, bias) if bias is not None else device.cavity.bare_frequency_hz
    samples = np.asarray(trace.samples, dtype=float)
    integral = trapezoid(samples * samples, dx=trace.dt_s)
    return float(integral / (device.line_impedance_ohm * HBAR * 2 * math.pi * frequency))


def _default_on_bias(device: DeviceParams) -> BiasPoint:
    return device.reference_bias.with_gradiometric(CalibrationConfig().on_gradiometric_phi0)


def ringdown_traces(device: DeviceParams, readout_bias: BiasPoint, stored_photons: float,
                    readout: Optional[ReadoutConfig] = None,
                    on_bias: Optional[BiasPoint] = None) -> RingdownRecord:
    """
    Protocolo completo de ringdown

    1. Drive ressonante com o acoplador ligado, partindo do estado estacionário analítico
    2. Drive e acoplador desligados (ponte balanceada) por off_time_s
    3. Comutação para readout_bias; registro a partir de pretrigger_s antes da comutação

    Returns:
        RingdownRecord: Campo, tensão e tensão filtrada do estágio 3 (t = 0 na comutação)
    """
    if not stored_photons > 0:
        raise ConfigurationError(f"stored_photons deve ser positivo: {stored_photons}")

    readout = readout or ReadoutConfig()
    on_bias = on_bias or _default_on_bias(device)
    dt = readout.dt_s
    balanced = readout_bias.balanced

    off_steps = int(round(readout.off_time_s / dt))
    pre_steps = int(round(readout.pretrigger_s / dt))
    if off_steps - pre_steps < 1:
        raise ConfigurationError("pretrigger_s deve ser menor que off_time_s")

    # Estágio 1: estado estacionário com o número de fótons que sobrevive ao desligamento
    kappa_ext_on = external_coupling(device, on_bias)
    if kappa_ext_on <= 0:
        raise UnreachableSteadyState(f"Acoplamento nulo em {on_bias}: impossível carregar a cavidade")

    kappa_on = kappa_total(device, on_bias)
    kerr_on = self_kerr(device, on_bias)
    target = stored_photons * math.exp(2 * math.pi * kappa_total(device, balanced) * off_steps * dt)
    if abs(kerr_on) * target > kappa_on / math.sqrt(3):
        raise UnreachableSteadyState(
            f"{target:.4g} fótons deslocam a ressonância além do regime monoestável (K = {kerr_on:.3g} Hz)"
        )

    shift = 2 * math.pi * kerr_on * target
    drive_squared = target * (shift ** 2 + (math.pi * kappa_on) ** 2) / (2 * math.pi * kappa_ext_on)
    drive = math.sqrt(drive_squared)
    steady = math.sqrt(2 * math.pi * kappa_ext_on) * drive / complex(math.pi * kappa_on, -shift)

    frame_on = cavity_frequency(device, on_bias)
    settle = readout.settle_time_constants / (2 * math.pi * kappa_on)
    charge = PulseSequence(
        frame_frequency_hz=frame_on,
        segments=(DriveSegment(duration_s=settle, drive_amplitude=drive, bias=on_bias),),
    )
    a = integrate_cavity(device, charge, dt, steady).samples[-1]

    # Estágio 2: acoplador desligado
    hold = PulseSequence(
        frame_frequency_hz=frame_on,
        segments=(DriveSegment(duration_s=(off_steps - pre_steps) * dt, bias=balanced),),
    )
    a = integrate_cavity(device, hold, dt, a).samples[-1]

    # Estágio 3: leitura no referencial da cavidade na polarização de leitura
    kappa_read = kappa_total(device, readout_bias)
    window = readout.window_s or readout.window_time_constants / (2 * math.pi * kappa_read)
    segments = []
    if pre_steps:
        segments.append(DriveSegment(duration_s=pre_steps * dt, bias=balanced))
    segments.append(DriveSegment(duration_s=window, bias=readout_bias))
    sequence = PulseSequence(frame_frequency_hz=cavity_frequency(device, readout_bias), segments=tuple(segments))
    field = integrate_cavity(device, sequence, dt, a, t0=-pre_steps * dt)

    phase = readout.detection_phase_rad - cmath.phase(field.samples[pre_steps])
    voltage = output_voltage(device, field, sequence, phase)
    filtered = apply_adc_filter(voltage, AdcModel(corner_frequency_hz=readout.adc_corner_frequency_hz))

    logger.debug(
        f"Ringdown em Φ = {readout_bias.gradiometric_phi0:.4g}: |a|² na comutação = "
        f"{abs(field.samples[pre_steps]) ** 2:.6g}, janela {window:.3g} s"
    )
    return RingdownRecord(field, voltage, filtered, pre_steps, readout_bias, stored_photons)


def ringdown_protocol(device: DeviceParams, readout_bias: BiasPoint, stored_photons: float,
                      readout: Optional[ReadoutConfig] = None,
                      on_bias: Optional[BiasPoint] = None) -> TimeTrace:
    """Tensão filtrada do estágio de leitura"""
    return ringdown_traces(device, readout_bias, stored_photons, readout, on_bias).filtered
