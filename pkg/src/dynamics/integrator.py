"""
Integrador da Cavidade - equação de entrada e saída no referencial girante
RK4 de passo fixo para a amplitude a(t) da cavidade com Kerr, acoplamento comutado e drive
"""

import cmath
import math
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..core.exceptions import ConfigurationError, NonFiniteState, StepTooLarge
from ..core.storage import read_table, write_table
from ..device.model import (
    BiasPoint, DeviceParams, cavity_frequency, external_coupling, kappa_total, self_kerr,
)

logger = logging.getLogger(__name__)

# Fração máxima de uma taxa resolvida por passo (dt ≤ 0.1 / taxa)
STEP_RESOLUTION = 0.1


class DriveSegment(BaseModel):
    """Trecho da sequência com drive e polarização constantes"""
    model_config = ConfigDict(frozen=True)

    duration_s: float = Field(..., gt=0)
    drive_amplitude: float = Field(0.0, ge=0)  # sqrt(fótons/s)
    drive_detuning_hz: float = 0.0
    bias: BiasPoint = BiasPoint()


class PulseSequence(BaseModel):
    """Sequência de trechos no referencial girante em frame_frequency_hz"""
    model_config = ConfigDict(frozen=True)

    frame_frequency_hz: float = Field(..., gt=0)
    segments: Tuple[DriveSegment, ...] = Field(..., min_length=1)
    bias_ramp_time_s: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def check_duration(self) -> "PulseSequence":
        if not math.isfinite(self.total_duration_s):
            raise ValueError("Duração total da sequência não é finita")
        return self

    @property
    def total_duration_s(self) -> float:
        return sum(segment.duration_s for segment in self.segments)

    def segment_steps(self, dt: float) -> List[int]:
        """Passos por trecho; durações arredondadas para a grade de amostragem"""
        return [max(1, int(round(segment.duration_s / dt))) for segment in self.segments]

    def sample_count(self, dt: float) -> int:
        return 1 + sum(self.segment_steps(dt))

    def bias_at(self, index: int, offset_s: float) -> BiasPoint:
        """Polarização no trecho index, offset_s após seu início (rampa linear a partir do trecho anterior)"""
        bias = self.segments[index].bias
        if self.bias_ramp_time_s <= 0 or index == 0 or offset_s >= self.bias_ramp_time_s:
            return bias

        previous = self.segments[index - 1].bias
        if previous == bias:
            return bias
        fraction = offset_s / self.bias_ramp_time_s
        return BiasPoint(
            uniform_phi0=previous.uniform_phi0 + fraction * (bias.uniform_phi0 - previous.uniform_phi0),
            gradiometric_phi0=previous.gradiometric_phi0 + fraction * (bias.gradiometric_phi0 - previous.gradiometric_phi0),
        )

    def sample_biases(self, dt: float) -> List[BiasPoint]:
        """Polarização em cada amostra do traço (a última amostra pertence ao último trecho)"""
        biases = []
        for index, steps in enumerate(self.segment_steps(dt)):
            biases.extend(self.bias_at(index, step * dt) for step in range(steps))
        last = len(self.segments) - 1
        biases.append(self.bias_at(last, self.segment_steps(dt)[last] * dt))
        return biases

    # Serialização no mesmo formato chave=valor da configuração do dispositivo
    def to_config_lines(self) -> List[str]:
        lines = [
            f"frame_frequency_hz={self.frame_frequency_hz!r}",
            f"bias_ramp_time_s={self.bias_ramp_time_s!r}",
        ]
        for index, segment in enumerate(self.segments):
            prefix = f"segments.{index}"
            lines += [
                f"{prefix}.duration_s={segment.duration_s!r}",
                f"{prefix}.drive_amplitude={segment.drive_amplitude!r}",
                f"{prefix}.drive_detuning_hz={segment.drive_detuning_hz!r}",
                f"{prefix}.bias.uniform_phi0={segment.bias.uniform_phi0!r}",
                f"{prefix}.bias.gradiometric_phi0={segment.bias.gradiometric_phi0!r}",
            ]
        return lines

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.to_config_lines()) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PulseSequence":
        values = dotenv_values(path)
        data: Dict[str, object] = {}
        segments: Dict[int, Dict[str, object]] = {}
        for key, value in values.items():
            parts = key.split(".")
            if parts[0] != "segments":
                data[key] = value
                continue
            node = segments.setdefault(int(parts[1]), {})
            for part in parts[2:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = value
        data["segments"] = [segments[index] for index in sorted(segments)]
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigurationError(f"Sequência inválida em {path}: {e}") from e


@dataclass(frozen=True)
class TimeTrace:
    """Registro uniformemente amostrado (campo complexo ou tensão real)"""
    t0_s: float
    dt_s: float
    samples: np.ndarray

    def __post_init__(self):
        if not self.dt_s > 0:
            raise ValueError(f"dt deve ser positivo: {self.dt_s}")
        if len(self.samples) < 2:
            raise ValueError("Traço precisa de pelo menos 2 amostras")
        if not np.all(np.isfinite(self.samples)):
            raise NonFiniteState("Traço contém amostras não finitas")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0_s + self.dt_s * np.arange(len(self.samples))

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.samples)

    def slice(self, start: int, stop: Optional[int] = None) -> "TimeTrace":
        return TimeTrace(self.t0_s + start * self.dt_s, self.dt_s, self.samples[start:stop])

    def to_frame(self) -> pd.DataFrame:
        if self.is_complex:
            return pd.DataFrame({"time_s": self.times, "re": self.samples.real, "im": self.samples.imag})
        return pd.DataFrame({"time_s": self.times, "value": self.samples})

    def to_csv(self, path: Union[str, Path]) -> Path:
        return write_table(path, self.to_frame(), {"t0_s": float(self.t0_s), "dt_s": float(self.dt_s)})

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "TimeTrace":
        frame, metadata = read_table(path)
        if "re" in frame.columns:
            samples = frame["re"].to_numpy() + 1j * frame["im"].to_numpy()
        else:
            samples = frame["value"].to_numpy()
        if "t0_s" in metadata and "dt_s" in metadata:
            return cls(float(metadata["t0_s"]), float(metadata["dt_s"]), samples)
        times = frame["time_s"].to_numpy()
        return cls(float(times[0]), float(times[1] - times[0]), samples)


@dataclass(frozen=True)
class _Coefficients:
    linear: complex      # i2πδ − πκ
    kerr: complex        # i2πK
    coupling: float      # sqrt(2πκ_ext)
    kappa_hz: float
    detuning_hz: float


def _coefficients(device: DeviceParams, bias: BiasPoint, frame_frequency_hz: float) -> _Coefficients:
    detuning = cavity_frequency(device, bias) - frame_frequency_hz
    kappa = kappa_total(device, bias)
    return _Coefficients(
        linear=complex(-math.pi * kappa, 2 * math.pi * detuning),
        kerr=complex(0.0, 2 * math.pi * self_kerr(device, bias)),
        coupling=math.sqrt(2 * math.pi * external_coupling(device, bias)),
        kappa_hz=kappa,
        detuning_hz=detuning,
    )


def _check_step(dt: float, rates: List[float]) -> None:
    fastest = max(rates)
    if fastest > 0 and dt > STEP_RESOLUTION / fastest:
        raise StepTooLarge(
            f"dt = {dt:.3g} s não resolve a taxa de {fastest:.4g} Hz (máximo {STEP_RESOLUTION / fastest:.3g} s)"
        )


def _rk4_constant(a: complex, t: float, dt: float, steps: int, coeff: _Coefficients,
                  drive: complex, drive_omega: float, out: np.ndarray, start: int) -> complex:
    """Trecho com coeficientes constantes; out[start + i + 1] recebe a após cada passo"""
    linear, kerr = coeff.linear, coeff.kerr
    half = 0.5 * dt
    sixth = dt / 6.0

    if drive == 0:
        for i in range(steps):
            k1 = (linear + kerr * (a.real * a.real + a.imag * a.imag)) * a
            b = a + half * k1
            k2 = (linear + kerr * (b.real * b.real + b.imag * b.imag)) * b
            b = a + half * k2
            k3 = (linear + kerr * (b.real * b.real + b.imag * b.imag)) * b
            b = a + dt * k3
            k4 = (linear + kerr * (b.real * b.real + b.imag * b.imag)) * b
            a = a + sixth * (k1 + 2 * k2 + 2 * k3 + k4)
            if not cmath.isfinite(a):
                raise NonFiniteState(f"Estado divergiu em t = {t + (i + 1) * dt:.6g} s")
            out[start + i + 1] = a
        return a

    half_turn = cmath.exp(1j * drive_omega * half)
    for i in range(steps):
        f0 = drive * cmath.exp(1j * drive_omega * (t + i * dt))
        f_half = f0 * half_turn
        f1 = f_half * half_turn
        k1 = (linear + kerr * (a.real * a.real + a.imag * a.imag)) * a + f0
        b = a + half * k1
        k2 = (linear + kerr * (b.real * b.real + b.imag * b.imag)) * b + f_half
        b = a + half * k2
        k3 = (linear + kerr * (b.real * b.real + b.imag * b.imag)) * b + f_half
        b = a + dt * k3
        k4 = (linear + kerr * (b.real * b.real + b.imag * b.imag)) * b + f1
        a = a + sixth * (k1 + 2 * k2 + 2 * k3 + k4)
        if not cmath.isfinite(a):
            raise NonFiniteState(f"Estado divergiu em t = {t + (i + 1) * dt:.6g} s")
        out[start + i + 1] = a
    return a


def _rk4_ramped(a: complex, t: float, dt: float, steps: int, coeff_at, segment: DriveSegment,
                out: np.ndarray, start: int) -> complex:
    """Trecho em rampa: coeficientes reavaliados em cada sub-passo"""
    drive_omega = 2 * math.pi * segment.drive_detuning_hz

    def rhs(offset: float, value: complex) -> complex:
        coeff = coeff_at(offset)
        derivative = (coeff.linear + coeff.kerr * abs(value) ** 2) * value
        if segment.drive_amplitude:
            derivative += coeff.coupling * segment.drive_amplitude * cmath.exp(1j * drive_omega * (t + offset))
        return derivative

    for i in range(steps):
        offset = i * dt
        k1 = rhs(offset, a)
        k2 = rhs(offset + 0.5 * dt, a + 0.5 * dt * k1)
        k3 = rhs(offset + 0.5 * dt, a + 0.5 * dt * k2)
        k4 = rhs(offset + dt, a + dt * k3)
        a = a + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not cmath.isfinite(a):
            raise NonFiniteState(f"Estado divergiu em t = {t + offset + dt:.6g} s")
        out[start + i + 1] = a
    return a


def integrate_cavity(device: DeviceParams, sequence: PulseSequence, dt: float,
                     initial_amplitude: complex = 0j, t0: float = 0.0) -> TimeTrace:
    """
    Integrar da/dt = (i2πδ + i2πK|a|² − πκ)·a + sqrt(2πκ_ext)·α_in

    Args:
        device: Dispositivo
        sequence: Trechos com drive e polarização
        dt: Passo fixo (s); também o espaçamento das amostras
        initial_amplitude: a(0)
        t0: Tempo da primeira amostra

    Returns:
        TimeTrace: a(t) complexo, uma amostra por passo mais a inicial
    """
    if not dt > 0:
        raise StepTooLarge(f"dt deve ser positivo: {dt}")

    frame = sequence.frame_frequency_hz
    cache: Dict[BiasPoint, _Coefficients] = {}

    def coefficients(bias: BiasPoint) -> _Coefficients:
        if bias not in cache:
            cache[bias] = _coefficients(device, bias, frame)
        return cache[bias]

    rates = []
    for segment in sequence.segments:
        coeff = coefficients(segment.bias)
        rates += [coeff.kappa_hz, abs(coeff.detuning_hz), abs(segment.drive_detuning_hz)]
    _check_step(dt, rates)

    steps_per_segment = sequence.segment_steps(dt)
    samples = np.empty(1 + sum(steps_per_segment), dtype=complex)
    a = complex(initial_amplitude)
    samples[0] = a

    position = 0
    for index, (segment, steps) in enumerate(zip(sequence.segments, steps_per_segment)):
        t_start = position * dt
        ramp_steps = 0
        if sequence.bias_ramp_time_s > 0 and index > 0 and sequence.segments[index - 1].bias != segment.bias:
            ramp_steps = min(steps, int(math.ceil(sequence.bias_ramp_time_s / dt)))

        if ramp_steps:
            def coeff_at(offset: float, index=index) -> _Coefficients:
                return coefficients(sequence.bias_at(index, offset))
            a = _rk4_ramped(a, t_start, dt, ramp_steps, coeff_at, segment, samples, position)

        remaining = steps - ramp_steps
        if remaining:
            coeff = coefficients(segment.bias)
            drive = coeff.coupling * segment.drive_amplitude
            a = _rk4_constant(a, t_start + ramp_steps * dt, dt, remaining, coeff, drive,
                              2 * math.pi * segment.drive_detuning_hz, samples, position + ramp_steps)
        position += steps

    logger.debug(f"Integração concluída: {position} passos de {dt:.3g} s, |a|² final = {abs(a) ** 2:.6g}")
    return TimeTrace(t0, dt, samples)
