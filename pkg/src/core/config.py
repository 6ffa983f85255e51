"""
Configurações centralizadas do simulador
Settings do processo (ambiente/.env) e carregamento do arquivo chave=valor do dispositivo
"""

import os
import math
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Tuple

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigurationError
from ..device.model import BiasPoint, DeviceParams, calibrate_coupling_scale

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parents[2]


class Settings(BaseSettings):
    """Configurações do processo"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Arquivos
    DEVICE_CONFIG: str = Field(str(PROJECT_ROOT / "config" / "reference_device.env"))
    OUTPUT_DIR: str = Field("output")

    # Execução
    MAX_WORKERS: int = Field(1, ge=1)

    # Saídas
    CSV_FLOAT_FORMAT: str = Field("%.17g")
    PLOT_FORMAT: str = Field("svg")

    # Logging
    LOG_LEVEL: str = Field("INFO")
    LOG_FILE: str = Field("logs/tib_sim.log")

    def __init__(self, **kwargs):
        super().__init__(**kwargs)

        # Criar diretório de logs se não existir
        log_dir = os.path.dirname(self.LOG_FILE)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)

        self._validate_critical_settings()

    def _validate_critical_settings(self):
        """Validar configurações críticas"""
        errors = []

        if self.LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            errors.append(f"LOG_LEVEL inválido: {self.LOG_LEVEL}")

        if self.PLOT_FORMAT not in ("svg", "pdf"):
            errors.append(f"PLOT_FORMAT deve ser vetorial (svg ou pdf): {self.PLOT_FORMAT}")

        if errors:
            raise ConfigurationError(f"Configurações inválidas: {'; '.join(errors)}")

    @property
    def output_path(self) -> Path:
        return Path(self.OUTPUT_DIR)


# =============================================================================
# Configuração dos experimentos
# =============================================================================
def _parse_grid(value: Any) -> Tuple[float, ...]:
    if isinstance(value, str):
        value = [item for item in value.replace(";", ",").split(",") if item.strip()]
    return tuple(float(item) for item in value)


def _check_increasing(grid: Tuple[float, ...]) -> Tuple[float, ...]:
    if not grid:
        raise ValueError("Grade vazia")
    if any(not math.isfinite(x) for x in grid):
        raise ValueError("Grade com valores não finitos")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("Grade deve ser estritamente crescente")
    return grid


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class CalibrationConfig(_Section):
    """Ponto "ligado" e alvo de κ_max usados para fixar κ₀"""
    on_gradiometric_phi0: float = 0.1
    target_kappa_max_hz: float = Field(1.96e6, gt=0)


class ReadoutConfig(_Section):
    """Protocolo de ringdown e cadeia de detecção"""
    adc_corner_frequency_hz: float = Field(48e6, gt=0)
    detection_phase_rad: float = 0.0
    stored_photons: float = Field(8000.0, gt=0)
    off_time_s: float = Field(1e-6, gt=0)
    pretrigger_s: float = Field(5e-8, ge=0)
    window_time_constants: float = Field(10.0, gt=0)
    window_s: Optional[float] = Field(None, gt=0)
    settle_time_constants: float = Field(10.0, gt=0)
    dt_s: float = Field(1e-9, gt=0)


class Fig2aConfig(_Section):
    """Varredura de reflexão perto do acoplamento crítico"""
    bias_start_phi0: float = 0.0005
    bias_stop_phi0: float = 0.006
    bias_points: int = Field(551, ge=1)
    probe_photons: float = Field(1000.0, gt=0)
    sweep_linewidths: float = Field(10.0, gt=3)
    sweep_points: int = Field(201, ge=5)

    @model_validator(mode="after")
    def check_range(self) -> "Fig2aConfig":
        if self.bias_points > 1 and self.bias_stop_phi0 <= self.bias_start_phi0:
            raise ValueError("fig2a: bias_stop_phi0 deve ser maior que bias_start_phi0")
        return self

    @property
    def bias_grid_phi0(self) -> Tuple[float, ...]:
        return tuple(float(x) for x in np.linspace(self.bias_start_phi0, self.bias_stop_phi0, self.bias_points))


class Fig2bConfig(_Section):
    """Traços representativos normalizados por V₀"""
    biases_phi0: Tuple[float, ...] = (0.004, 0.02, 0.1)
    reference_index: int = Field(2, ge=0)
    window_s: float = Field(1e-6, gt=0)

    @field_validator("biases_phi0", mode="before")
    @classmethod
    def parse_biases(cls, value: Any) -> Tuple[float, ...]:
        return _parse_grid(value)

    @model_validator(mode="after")
    def check_grid(self) -> "Fig2bConfig":
        _check_increasing(self.biases_phi0)
        if self.reference_index >= len(self.biases_phi0):
            raise ValueError("fig2b: reference_index fora da lista de polarizações")
        return self


class Fig2cConfig(_Section):
    """Varredura de ringdown: taxa total e energia medida"""
    bias_grid_phi0: Tuple[float, ...] = (0.002, 0.004, 0.008, 0.015, 0.025, 0.04, 0.06, 0.08, 0.1, 0.11, 0.12)
    plateau_threshold: float = Field(0.95, gt=0, lt=1)
    step_like_fraction: float = Field(0.01, gt=0, lt=1)

    @field_validator("bias_grid_phi0", mode="before")
    @classmethod
    def parse_biases(cls, value: Any) -> Tuple[float, ...]:
        return _parse_grid(value)

    @model_validator(mode="after")
    def check_grid(self) -> "Fig2cConfig":
        _check_increasing(self.bias_grid_phi0)
        return self


class Fig3Config(_Section):
    """Deslocamento de ressonância versus potência (self-Kerr)"""
    power_start_w: float = Field(1e-18, gt=0)
    power_stop_w: float = Field(8e-15, gt=0)
    power_points: int = Field(20, ge=3)
    span_hz: float = Field(8000.0, gt=0)
    frequency_points: int = Field(1601, ge=5)
    sweep_direction: Literal["up", "down"] = "up"

    @model_validator(mode="after")
    def check_range(self) -> "Fig3Config":
        if self.power_stop_w <= self.power_start_w:
            raise ValueError("fig3: power_stop_w deve ser maior que power_start_w")
        return self

    @property
    def power_grid_w(self) -> Tuple[float, ...]:
        return tuple(float(x) for x in np.geomspace(self.power_start_w, self.power_stop_w, self.power_points))


class CriticalSearchConfig(_Section):
    """Busca do acoplamento crítico por seção áurea"""
    bracket_low_phi0: float = 0.001
    bracket_high_phi0: float = 0.008
    scan_points: int = Field(9, ge=3)
    xtol: float = Field(1e-7, gt=0)
    sweep_linewidths: float = Field(10.0, gt=3)
    sweep_points: int = Field(201, ge=5)


class ExperimentConfig(_Section):
    calibration: CalibrationConfig = CalibrationConfig()
    readout: ReadoutConfig = ReadoutConfig()
    fig2a: Fig2aConfig = Fig2aConfig()
    fig2b: Fig2bConfig = Fig2bConfig()
    fig2c: Fig2cConfig = Fig2cConfig()
    fig3: Fig3Config = Fig3Config()
    critical_search: CriticalSearchConfig = CriticalSearchConfig()


class RunConfig(BaseModel):
    """Dispositivo calibrado + configuração dos experimentos"""
    model_config = ConfigDict(frozen=True)

    device: DeviceParams
    experiments: ExperimentConfig
    source: Optional[str] = None

    @property
    def on_bias(self) -> BiasPoint:
        return self.device.reference_bias.with_gradiometric(self.experiments.calibration.on_gradiometric_phi0)


# =============================================================================
# Leitura do arquivo chave=valor
# =============================================================================
EXPERIMENT_SECTIONS = set(ExperimentConfig.model_fields)


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    """Converter ["chave=valor", ...] em dicionário"""
    overrides = {}
    for item in items:
        if "=" not in item:
            raise ConfigurationError(f"Override inválido (esperado chave=valor): {item}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _unflatten(flat: Dict[str, Optional[str]]) -> Dict[str, Any]:
    """Transformar chaves pontuadas em dicionários aninhados"""
    tree: Dict[str, Any] = {}
    for key, value in flat.items():
        if value is None or value == "":
            continue
        node = tree
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigurationError(f"Chave conflitante na configuração: {key}")
            node = child
        node[parts[-1]] = value
    return tree


def _expand_shared_arm(tree: Dict[str, Any]) -> None:
    """bridge.arm descreve os dois braços; cada um recebe seu sinal de fluxo"""
    bridge = tree.get("bridge")
    if not isinstance(bridge, dict) or "arm" not in bridge:
        return
    if "arm_a" in bridge or "arm_b" in bridge:
        raise ConfigurationError("Use bridge.arm ou bridge.arm_a/bridge.arm_b, não ambos")
    shared = bridge.pop("arm")
    bridge["arm_a"] = {**shared, "flux_sign": 1}
    bridge["arm_b"] = {**shared, "flux_sign": -1}


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, str]] = None) -> RunConfig:
    """
    Carregar e validar a configuração do dispositivo e dos experimentos

    Args:
        path: Arquivo chave=valor (usa settings.DEVICE_CONFIG se None)
        overrides: Pares chave=valor que substituem entradas do arquivo

    Returns:
        RunConfig: Dispositivo já calibrado (κ₀ fixado pelo alvo de κ_max)
    """
    path = path or settings.DEVICE_CONFIG
    if not Path(path).is_file():
        raise ConfigurationError(f"Arquivo de configuração não encontrado: {path}")

    flat = dict(dotenv_values(path))
    flat.update(overrides or {})
    tree = _unflatten(flat)
    _expand_shared_arm(tree)

    experiment_tree = {key: tree.pop(key) for key in list(tree) if key in EXPERIMENT_SECTIONS}

    try:
        device = DeviceParams.model_validate(tree)
        experiments = ExperimentConfig.model_validate(experiment_tree)
    except ValidationError as e:
        logger.error(f"❌ Configuração inválida em {path}: {e}")
        raise ConfigurationError(f"Configuração inválida em {path}: {e}") from e

    on_bias = device.reference_bias.with_gradiometric(experiments.calibration.on_gradiometric_phi0)
    device = calibrate_coupling_scale(device, on_bias, experiments.calibration.target_kappa_max_hz)

    logger.info(f"✅ Configuração carregada: {path}")
    return RunConfig(device=device, experiments=experiments, source=str(path))


# Instância global de configurações
settings = Settings()


# Função para recarregar configurações (útil para testes)
def reload_settings():
    """Recarregar configurações"""
    global settings
    settings = Settings()
    return settings
