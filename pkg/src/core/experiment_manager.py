"""
Experiment Manager - Gerenciador central dos experimentos virtuais
Coordena as varreduras de reflexão, ringdown e Kerr e monta o resumo de desempenho
"""

import math
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import (
    CriticalSearchConfig, Fig2aConfig, Fig2bConfig, Fig3Config, ReadoutConfig, RunConfig, settings,
)
from .exceptions import FitError, SimulationError, TimeBaseMismatch
from .storage import write_table
from ..device.model import BiasPoint, DeviceParams, cavity_frequency, internal_loss, kappa_total
from ..dynamics.readout import measured_energy, reference_voltage, ringdown_traces
from ..extraction.calibration import critical_coupling_search, on_off_ratio, plateau_indices, plateau_kappa_max
from ..extraction.fits import KerrPoint, fit_kerr, fit_reflection, fit_ringdown
from ..extraction.least_squares import UNCERTAINTY_LABEL, FitResult
from ..spectroscopy.reflection import (
    linear_sweep, nonlinear_sweep, photon_number, power_for_photons, resonance_by_phase_slope,
    sweep_around_resonance,
)

logger = logging.getLogger(__name__)


class ExperimentKind(Enum):
    """Experimentos disponíveis"""
    REFLECTION_SWEEP = "reflection_sweep"
    RINGDOWN_SWEEP = "ringdown_sweep"
    KERR_SWEEP = "kerr_sweep"
    TABLE1 = "table1"


class ExperimentSpec(BaseModel):
    """Pedido de execução: tipo, arquivo do dispositivo, grade e diretório de saída"""
    model_config = ConfigDict(frozen=True)

    kind: ExperimentKind
    device_config_path: Optional[str] = None
    grid: Tuple[float, ...] = ()
    output_dir: str = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_grid(self) -> "ExperimentSpec":
        if self.kind is ExperimentKind.TABLE1:
            return self
        if not self.grid:
            raise ValueError(f"{self.kind.value}: grade vazia")
        if any(not math.isfinite(x) for x in self.grid):
            raise ValueError(f"{self.kind.value}: grade com valores não finitos")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError(f"{self.kind.value}: grade deve ser estritamente crescente")
        return self

    @classmethod
    def from_config(cls, kind: ExperimentKind, run_config: RunConfig, output_dir: str) -> "ExperimentSpec":
        """Grade padrão de cada experimento a partir da configuração carregada"""
        experiments = run_config.experiments
        grids = {
            ExperimentKind.REFLECTION_SWEEP: experiments.fig2a.bias_grid_phi0,
            ExperimentKind.RINGDOWN_SWEEP: experiments.fig2c.bias_grid_phi0,
            ExperimentKind.KERR_SWEEP: experiments.fig3.power_grid_w,
            ExperimentKind.TABLE1: (),
        }
        return cls(kind=kind, device_config_path=run_config.source, grid=grids[kind], output_dir=output_dir)


@dataclass
class SweepPoint:
    """Resultado de um ponto da varredura"""
    coordinate: float
    values: Dict[str, float]
    fit: Optional[FitResult] = None
    ok: bool = True
    error: str = ""


@dataclass
class SweepResult:
    """Pontos em ordem de grade, CSV emitido e grandezas derivadas"""
    kind: ExperimentKind
    points: List[SweepPoint]
    csv_path: Optional[Path] = None
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def ok_points(self) -> List[SweepPoint]:
        return [point for point in self.points if point.ok]

    def column(self, name: str) -> np.ndarray:
        return np.array([point.values[name] for point in self.points], dtype=float)


@dataclass(frozen=True)
class ReportEntry:
    value: float
    uncertainty: float
    unit: str


@dataclass
class Table1Report:
    """Resumo de desempenho do acoplador"""
    loss_and_residual_coupling: ReportEntry
    maximal_coupling: ReportEntry
    on_off_ratio: ReportEntry
    switching_time: ReportEntry
    self_kerr: ReportEntry

    LABELS = {
        "loss_and_residual_coupling": "perda e acoplamento residual",
        "maximal_coupling": "acoplamento máximo",
        "on_off_ratio": "razão liga/desliga",
        "switching_time": "tempo de comutação",
        "self_kerr": "self-Kerr",
    }

    def entries(self) -> Dict[str, ReportEntry]:
        return {name: getattr(self, name) for name in self.LABELS}

    def to_text(self) -> str:
        lines = [f"Resumo de desempenho ({UNCERTAINTY_LABEL})"]
        width = max(len(label) for label in self.LABELS.values())
        for name, entry in self.entries().items():
            lines.append(
                f"  {self.LABELS[name]:<{width}}  {entry.value:.6g} ± {entry.uncertainty:.2g} {entry.unit}".rstrip()
            )
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        lines = [f"# {UNCERTAINTY_LABEL}"]
        for name, entry in self.entries().items():
            lines.append(f"{name}={entry.value!r} ± {entry.uncertainty!r} {entry.unit}".rstrip())
        return "\n".join(lines) + "\n"

    def save(self, output_dir: Path) -> Tuple[Path, Path]:
        output_dir.mkdir(parents=True, exist_ok=True)
        text_path = output_dir / "table1.txt"
        kv_path = output_dir / "table1.kv"
        text_path.write_text(self.to_text(), encoding="utf-8")
        kv_path.write_text(self.to_kv(), encoding="utf-8")
        return text_path, kv_path


# =============================================================================
# Pontos individuais (funções de módulo para o ProcessPoolExecutor)
# =============================================================================
def _guarded(func: Callable[..., SweepPoint], columns: Sequence[str], args: Tuple[Any, ...],
             coordinate: float) -> SweepPoint:
    try:
        return func(coordinate, *args)
    except (SimulationError, ValueError) as e:
        logger.warning(f"⚠️ Ponto {coordinate:.6g} falhou: {type(e).__name__}: {e}")
        return SweepPoint(coordinate, {name: math.nan for name in columns}, ok=False, error=str(e))


def _reflection_point(gradiometric: float, device: DeviceParams, uniform: float,
                      cfg: Fig2aConfig) -> SweepPoint:
    bias = BiasPoint(uniform_phi0=uniform, gradiometric_phi0=gradiometric)
    kappa = kappa_total(device, bias)
    power = power_for_photons(cfg.probe_photons, kappa, cavity_frequency(device, bias))
    frequencies = sweep_around_resonance(device, bias, cfg.sweep_linewidths * kappa, cfg.sweep_points)
    fit = fit_reflection(linear_sweep(device, bias, frequencies, power))
    return SweepPoint(gradiometric, {"kappa_hz": fit["kappa_total"], "min_gamma": fit["min_reflection"]}, fit)


def _ringdown_point(gradiometric: float, device: DeviceParams, uniform: float, readout: ReadoutConfig,
                    on_bias: BiasPoint) -> SweepPoint:
    bias = BiasPoint(uniform_phi0=uniform, gradiometric_phi0=gradiometric)
    record = ringdown_traces(device, bias, readout.stored_photons, readout, on_bias)
    fit = fit_ringdown(record.filtered, gamma_guess_hz=readout.adc_corner_frequency_hz)
    energy = measured_energy(record.readout_voltage, device, bias)
    return SweepPoint(gradiometric, {"kappa_hz": fit["kappa"], "energy_photons": energy}, fit)


FIG2A_COLUMNS = ("kappa_hz", "min_gamma")
FIG2C_COLUMNS = ("kappa_hz", "energy_photons")
FIG3_COLUMNS = ("photons", "delta_hz", "bistable_flag")


class ExperimentManager:
    """Gerenciador central dos experimentos"""

    def __init__(self, run_config: RunConfig, output_dir: Optional[Path] = None,
                 max_workers: Optional[int] = None):
        self.run_config = run_config
        self.device = run_config.device
        self.experiments = run_config.experiments
        self.output_dir = Path(output_dir) if output_dir is not None else settings.output_path
        self.max_workers = max_workers or settings.MAX_WORKERS
        self._critical_bias: Optional[BiasPoint] = None

        # Estatísticas
        self.stats = {
            'experiments_run': 0,
            'points_total': 0,
            'points_failed': 0,
            'files_written': 0,
        }

        logger.info(f"🔬 Experiment Manager inicializado (saída em {self.output_dir})")

    @property
    def uniform_phi0(self) -> float:
        return self.device.reference_bias.uniform_phi0

    def run(self, spec: ExperimentSpec) -> Any:
        """Executar o experimento pedido"""
        self.output_dir = Path(spec.output_dir)
        if spec.kind is ExperimentKind.REFLECTION_SWEEP:
            return self.run_fig2a(spec.grid)
        if spec.kind is ExperimentKind.RINGDOWN_SWEEP:
            self.run_fig2b()
            return self.run_fig2c(spec.grid)
        if spec.kind is ExperimentKind.KERR_SWEEP:
            return self.run_fig3(spec.grid)
        return self.run_table1()

    # -------------------------------------------------------------------------
    # Infraestrutura
    # -------------------------------------------------------------------------
    def _map_points(self, func: Callable[[float], SweepPoint], grid: Sequence[float]) -> List[SweepPoint]:
        if self.max_workers > 1 and len(grid) > 1:
            with ProcessPoolExecutor(max_workers=self.max_workers) as executor:
                points = list(executor.map(func, grid))
        else:
            points = [func(x) for x in grid]

        self.stats['points_total'] += len(points)
        self.stats['points_failed'] += sum(not point.ok for point in points)
        return points

    def _write_sweep(self, name: str, coordinate: Optional[str], columns: Sequence[str],
                     points: Sequence[SweepPoint], metadata: Dict[str, Any]) -> Path:
        data: Dict[str, List[float]] = {}
        if coordinate:
            data[coordinate] = [point.coordinate for point in points]
        for column in columns:
            data[column] = [point.values[column] for point in points]
        data["ok"] = [int(point.ok) for point in points]
        return self._write(name, pd.DataFrame(data), metadata)

    def _write(self, name: str, frame: pd.DataFrame, metadata: Dict[str, Any]) -> Path:
        path = write_table(self.output_dir / name, frame, metadata)
        self.stats['files_written'] += 1
        return path

    @staticmethod
    def _require_points(result: SweepResult, name: str) -> None:
        if not result.ok_points:
            raise SimulationError(f"{name}: todos os {len(result.points)} pontos falharam")

    def _bias(self, gradiometric: float) -> BiasPoint:
        return BiasPoint(uniform_phi0=self.uniform_phi0, gradiometric_phi0=gradiometric)

    # -------------------------------------------------------------------------
    # Reflexão perto do acoplamento crítico
    # -------------------------------------------------------------------------
    def run_fig2a(self, bias_grid: Optional[Sequence[float]] = None) -> SweepResult:
        """
        κ e |Γ_min| ajustados em função da polarização gradiométrica

        Cada ponto é uma varredura linear no nível de probe_photons fótons.
        """
        cfg = self.experiments.fig2a
        grid = tuple(bias_grid) if bias_grid is not None else cfg.bias_grid_phi0
        try:
            logger.info(f"📡 Reflexão: {len(grid)} polarizações")
            worker = partial(_guarded, _reflection_point, FIG2A_COLUMNS, (self.device, self.uniform_phi0, cfg))
            result = SweepResult(ExperimentKind.REFLECTION_SWEEP, self._map_points(worker, grid))
            result.csv_path = self._write_sweep("fig2a.csv", "bias_phi0", FIG2A_COLUMNS, result.points, {
                "uniform_phi0": self.uniform_phi0,
                "probe_photons": cfg.probe_photons,
            })
            self._require_points(result, "fig2a")

            best = min(result.ok_points, key=lambda point: point.values["min_gamma"])
            result.summary["critical_point"] = best
            self.stats['experiments_run'] += 1
            logger.info(
                f"✅ Reflexão: |Γ_min| mínimo {best.values['min_gamma']:.3g} em {best.coordinate:.6g} Φ₀, "
                f"κ = {best.values['kappa_hz']:.6g} Hz"
            )
            return result

        except Exception as e:
            logger.error(f"❌ Erro na Reflexão: {e}")
            raise

    # -------------------------------------------------------------------------
    # Ringdown
    # -------------------------------------------------------------------------
    def run_fig2b(self, biases: Optional[Sequence[float]] = None) -> SweepResult:
        """Traços filtrados sobrepostos, normalizados por V₀ da polarização de referência"""
        cfg: Fig2bConfig = self.experiments.fig2b
        biases = tuple(biases) if biases is not None else cfg.biases_phi0
        readout = self.experiments.readout.model_copy(update={"window_s": cfg.window_s})
        try:
            logger.info(f"📡 Traços de ringdown: {len(biases)} traços")
            reference = self._bias(biases[min(cfg.reference_index, len(biases) - 1)])
            v0 = reference_voltage(self.device, reference, readout.stored_photons)

            traces = [
                ringdown_traces(self.device, self._bias(b), readout.stored_photons, readout,
                                self.run_config.on_bias).filtered
                for b in biases
            ]
            if len({len(trace) for trace in traces}) != 1:
                raise TimeBaseMismatch("Traços de ringdown com números de amostras diferentes")

            data = {"time_s": traces[0].times}
            points = []
            for k, (bias, trace) in enumerate(zip(biases, traces)):
                normalized = trace.samples / v0
                data[f"v_over_v0_{k}"] = normalized
                points.append(SweepPoint(bias, {"peak_v_over_v0": float(np.max(normalized))}))

            result = SweepResult(ExperimentKind.RINGDOWN_SWEEP, points)
            metadata = {f"bias_{k}_phi0": bias for k, bias in enumerate(biases)}
            metadata.update({"reference_bias_phi0": reference.gradiometric_phi0, "v0_v": v0})
            result.csv_path = self._write("fig2b.csv", pd.DataFrame(data), metadata)
            result.summary["v0"] = v0
            self.stats['experiments_run'] += 1
            logger.info(f"✅ Traços de ringdown: V₀ = {v0:.6g} V")
            return result

        except Exception as e:
            logger.error(f"❌ Erro na Traços de ringdown: {e}")
            raise

    def run_fig2c(self, bias_grid: Optional[Sequence[float]] = None,
                  kappa_int: Optional[float] = None) -> SweepResult:
        """
        κ total e energia medida em função da polarização; κ_max pelo platô de energia

        Args:
            bias_grid: Polarizações gradiométricas (Φ₀)
            kappa_int: Perda interna usada no platô e na razão (a do modelo se None)
        """
        cfg = self.experiments.fig2c
        readout = self.experiments.readout
        grid = tuple(bias_grid) if bias_grid is not None else cfg.bias_grid_phi0
        if kappa_int is None:
            kappa_int = internal_loss(self.device, self.device.reference_bias)
        try:
            logger.info(f"📡 Varredura de ringdown: {len(grid)} polarizações")
            worker = partial(_guarded, _ringdown_point, FIG2C_COLUMNS,
                             (self.device, self.uniform_phi0, readout, self.run_config.on_bias))
            result = SweepResult(ExperimentKind.RINGDOWN_SWEEP, self._map_points(worker, grid))
            result.csv_path = self._write_sweep("fig2c.csv", "bias_phi0", FIG2C_COLUMNS, result.points, {
                "uniform_phi0": self.uniform_phi0,
                "stored_photons": readout.stored_photons,
                "adc_corner_frequency_hz": readout.adc_corner_frequency_hz,
            })
            self._require_points(result, "fig2c")

            ok = result.ok_points
            rows = [(p.coordinate, p.values["kappa_hz"], p.values["energy_photons"]) for p in ok]
            kappa_max = plateau_kappa_max(rows, kappa_int, cfg.plateau_threshold)
            top = max(plateau_indices(rows, cfg.plateau_threshold), key=lambda i: rows[i][1])

            result.summary.update({
                "kappa_int": kappa_int,
                "kappa_max": kappa_max,
                "kappa_max_error": ok[top].fit.error("kappa"),
                "on_off_ratio": on_off_ratio(kappa_max, kappa_int),
                "step_like": [p for p in ok if self._is_step_like(p, cfg.step_like_fraction)],
            })
            self.stats['experiments_run'] += 1
            logger.info(
                f"✅ Varredura de ringdown: κ_max = {kappa_max:.6g} Hz, razão liga/desliga = {result.summary['on_off_ratio']:.5g}"
            )
            return result

        except Exception as e:
            logger.error(f"❌ Erro na Varredura de ringdown: {e}")
            raise

    @staticmethod
    def _is_step_like(point: SweepPoint, fraction: float) -> bool:
        """Decaimento de amplitude πκ até fraction·γ_c e filtro identificado"""
        fit = point.fit
        if "gamma_c" in fit.bounded:
            return False
        return math.pi * fit["kappa"] <= fraction * 2 * math.pi * fit["gamma_c"]

    # -------------------------------------------------------------------------
    # Deslocamento de Kerr
    # -------------------------------------------------------------------------
    def find_critical_bias(self) -> BiasPoint:
        """Acoplamento crítico (calculado uma vez por gerenciador)"""
        if self._critical_bias is None:
            cfg: CriticalSearchConfig = self.experiments.critical_search
            self._critical_bias = critical_coupling_search(
                self.device,
                (cfg.bracket_low_phi0, cfg.bracket_high_phi0),
                scan_points=cfg.scan_points,
                xtol=cfg.xtol,
                sweep_linewidths=cfg.sweep_linewidths,
                sweep_points=cfg.sweep_points,
                uniform_phi0=self.uniform_phi0,
            )
        return self._critical_bias

    def run_fig3(self, power_grid: Optional[Sequence[float]] = None,
                 critical_bias: Optional[BiasPoint] = None) -> SweepResult:
        """
        Deslocamento da ressonância versus número de fótons no acoplamento crítico

        As potências são percorridas em ordem crescente e cada janela de frequência
        é centrada na ressonância medida na potência anterior.
        """
        cfg: Fig3Config = self.experiments.fig3
        grid = tuple(power_grid) if power_grid is not None else cfg.power_grid_w
        try:
            critical = critical_bias or self.find_critical_bias()
            kappa = kappa_total(self.device, critical)
            frequency = cavity_frequency(self.device, critical)
            logger.info(f"📡 Kerr: {len(grid)} potências em Φ = {critical.gradiometric_phi0:.8g} Φ₀")

            center = frequency
            reference: Optional[float] = None
            points: List[SweepPoint] = []
            for power in grid:
                photons = photon_number(power, kappa, frequency)
                try:
                    frequencies = np.linspace(center - cfg.span_hz / 2, center + cfg.span_hz / 2,
                                              cfg.frequency_points)
                    sweep = nonlinear_sweep(self.device, critical, frequencies, power, cfg.sweep_direction)
                    resonance = resonance_by_phase_slope(sweep)
                except SimulationError as e:
                    logger.warning(f"⚠️ Potência {power:.4g} W falhou: {e}")
                    points.append(SweepPoint(power, {"photons": photons, "delta_hz": math.nan,
                                                     "bistable_flag": math.nan}, ok=False, error=str(e)))
                    continue

                if reference is None:
                    reference = resonance
                center = resonance
                points.append(SweepPoint(power, {
                    "photons": photons,
                    "delta_hz": resonance - reference,
                    "bistable_flag": float(sweep.bistable),
                }))

            self.stats['points_total'] += len(points)
            self.stats['points_failed'] += sum(not point.ok for point in points)

            result = SweepResult(ExperimentKind.KERR_SWEEP, points)
            result.csv_path = self._write_sweep("fig3.csv", None, FIG3_COLUMNS, points, {
                "critical_bias_phi0": critical.gradiometric_phi0,
                "kappa_total_hz": kappa,
                "cavity_frequency_hz": frequency,
            })
            self._require_points(result, "fig3")

            shifts = [KerrPoint(p.values["photons"], p.values["delta_hz"], bool(p.values["bistable_flag"]))
                      for p in result.ok_points]
            result.summary.update({
                "critical_bias": critical,
                "kerr": fit_kerr(shifts, kappa),
            })
            self.stats['experiments_run'] += 1
            logger.info(f"✅ Kerr: K = {result.summary['kerr']['kerr_hz_per_photon']:.4g} Hz/fóton")
            return result

        except Exception as e:
            logger.error(f"❌ Erro na Kerr: {e}")
            raise

    # -------------------------------------------------------------------------
    # Resumo de desempenho
    # -------------------------------------------------------------------------
    @staticmethod
    def _switching_time(points: Sequence[SweepPoint]) -> ReportEntry:
        """1/γ_c com γ_c médio (ponderado por 1/σ²) sobre os traços em degrau"""
        if not points:
            raise FitError("Nenhum traço em degrau para estimar γ_c")

        values = np.array([p.fit["gamma_c"] for p in points])
        sigmas = np.array([p.fit.error("gamma_c") for p in points])
        if np.all(np.isfinite(sigmas)) and np.all(sigmas > 0):
            weights = 1.0 / sigmas ** 2
            mean = float(np.sum(weights * values) / np.sum(weights))
            error = float(1.0 / math.sqrt(np.sum(weights)))
        else:
            mean = float(np.mean(values))
            error = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0

        switching = 1.0 / (2 * math.pi * mean)
        return ReportEntry(switching, switching * error / mean, "s")

    def run_table1(self) -> Table1Report:
        """Executar os três experimentos e montar o resumo de desempenho"""
        try:
            logger.info("🚀 Resumo de desempenho: iniciando experimentos")

            fig2a = self.run_fig2a()
            critical_fit = fig2a.summary["critical_point"].fit
            kappa_int = critical_fit["kappa_int"]
            kappa_int_error = critical_fit.error("kappa_int")

            self.run_fig2b()
            fig2c = self.run_fig2c(kappa_int=kappa_int)
            fig3 = self.run_fig3()

            kappa_max = fig2c.summary["kappa_max"]
            kappa_max_error = math.hypot(fig2c.summary["kappa_max_error"], kappa_int_error)
            ratio = fig2c.summary["on_off_ratio"]
            ratio_error = ratio * math.hypot(kappa_max_error / kappa_max, kappa_int_error / kappa_int)
            kerr = fig3.summary["kerr"]

            report = Table1Report(
                loss_and_residual_coupling=ReportEntry(
                    kappa_int - self.device.cavity.bare_loss_hz, kappa_int_error, "Hz"),
                maximal_coupling=ReportEntry(kappa_max, kappa_max_error, "Hz"),
                on_off_ratio=ReportEntry(ratio, ratio_error, ""),
                switching_time=self._switching_time(fig2c.summary["step_like"]),
                self_kerr=ReportEntry(kerr["kerr_hz_per_photon"], kerr.error("kerr_hz_per_photon"), "Hz/photon"),
            )
            report.save(self.output_dir)
            self.stats['files_written'] += 2
            logger.info(f"✅ Resumo de desempenho salvo em {self.output_dir}")
            return report

        except Exception as e:
            logger.error(f"❌ Erro no resumo de desempenho: {e}")
            raise

    def get_stats(self) -> Dict[str, Any]:
        """Estatísticas da execução"""
        return {**self.stats, 'output_dir': str(self.output_dir)}
