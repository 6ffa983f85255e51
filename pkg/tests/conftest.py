"""Fixtures compartilhadas: dispositivo calibrado, acoplamento crítico e fábrica de dispositivos"""

import pytest
from scipy.optimize import brentq

from src.core.config import load_config
from src.device.model import (
    CavityParams, DeviceParams, JunctionParams, SquidArrayArm, TibBridge, external_coupling, internal_loss,
)


def build_device(bare_frequency_hz: float = 5.772e9, bare_loss_hz: float = 450.0, chip_loss_hz: float = 1280.0,
                 inductive_participation: float = 0.0125, mode_impedance_ohm: float = 50.0, n_squids: int = 10,
                 critical_current_a: float = 2e-6, coupling_scale_hz: float = 1.0e7, **kwargs) -> DeviceParams:
    junction = JunctionParams(critical_current_a=critical_current_a)
    return DeviceParams(
        cavity=CavityParams(
            bare_frequency_hz=bare_frequency_hz,
            bare_loss_hz=bare_loss_hz,
            chip_loss_hz=chip_loss_hz,
            inductive_participation=inductive_participation,
            mode_impedance_ohm=mode_impedance_ohm,
        ),
        bridge=TibBridge(
            arm_a=SquidArrayArm(n_squids=n_squids, junction=junction, flux_sign=1),
            arm_b=SquidArrayArm(n_squids=n_squids, junction=junction, flux_sign=-1),
            coupling_scale_hz=coupling_scale_hz,
        ),
        **kwargs,
    )


@pytest.fixture
def device_factory():
    return build_device


@pytest.fixture(scope="session")
def run_config():
    return load_config()


@pytest.fixture(scope="session")
def device(run_config):
    return run_config.device


@pytest.fixture(scope="session")
def quiet_device(device):
    """Dispositivo padrão sem perda parasita"""
    return device.without_parasitics()


@pytest.fixture(scope="session")
def critical_bias(device):
    """Polarização com κ_ext = κ_int exatamente (pelo modelo)"""
    base = device.reference_bias

    def contrast(gradiometric: float) -> float:
        bias = base.with_gradiometric(gradiometric)
        return external_coupling(device, bias) - internal_loss(device, bias)

    return base.with_gradiometric(brentq(contrast, 1e-3, 8e-3, xtol=1e-15))


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path))
    return tmp_path
