"""Testes do gerenciador de experimentos e do resumo de desempenho"""

import math

import pytest
from pydantic import ValidationError

from src.core.exceptions import FitError
from src.core.experiment_manager import (
    ExperimentKind, ExperimentManager, ExperimentSpec, ReportEntry, SweepPoint, Table1Report,
)
from src.core.storage import read_table
from src.device.model import self_kerr
from src.extraction.least_squares import FitResult


def _gamma_fit(gamma_c, sigma, bounded=()):
    return FitResult(parameters={"kappa": 1e4, "gamma_c": gamma_c}, uncertainties={"kappa": 1.0, "gamma_c": sigma},
                     residual_norm=0.0, converged=True, iterations=1, bounded=bounded)


@pytest.fixture
def manager(run_config, tmp_path):
    return ExperimentManager(run_config, tmp_path, max_workers=1)


class TestExperimentSpec:

    def test_grid_must_increase(self, tmp_path):
        with pytest.raises(ValidationError):
            ExperimentSpec(kind=ExperimentKind.REFLECTION_SWEEP, grid=(0.002, 0.001), output_dir=str(tmp_path))
        with pytest.raises(ValidationError):
            ExperimentSpec(kind=ExperimentKind.KERR_SWEEP, grid=(), output_dir=str(tmp_path))
        with pytest.raises(ValidationError):
            ExperimentSpec(kind=ExperimentKind.KERR_SWEEP, grid=(1e-18, math.inf), output_dir=str(tmp_path))

    def test_table1_needs_no_grid(self, tmp_path):
        spec = ExperimentSpec(kind=ExperimentKind.TABLE1, output_dir=str(tmp_path))
        assert spec.grid == ()

    def test_from_config(self, run_config, tmp_path):
        spec = ExperimentSpec.from_config(ExperimentKind.RINGDOWN_SWEEP, run_config, str(tmp_path))
        assert spec.grid == run_config.experiments.fig2c.bias_grid_phi0
        assert spec.device_config_path == run_config.source


class TestReflectionSweep:

    def test_minimum_at_critical_coupling(self, manager, critical_bias):
        grid = (0.002, critical_bias.gradiometric_phi0, 0.005)
        result = manager.run_fig2a(grid)

        frame, metadata = read_table(result.csv_path)
        assert list(frame.columns) == ["bias_phi0", "kappa_hz", "min_gamma", "ok"]
        assert frame["ok"].tolist() == [1, 1, 1]
        assert float(metadata["uniform_phi0"]) == 0.25

        best = result.summary["critical_point"]
        assert best.coordinate == critical_bias.gradiometric_phi0
        assert best.values["kappa_hz"] == pytest.approx(3460.0, rel=1e-3)
        assert best.fit["kappa_int"] == pytest.approx(1730.0, rel=1e-4)

    def test_failed_point_is_kept_in_order(self, manager):
        result = manager.run_fig2a((0.004, 0.25))
        frame, _ = read_table(result.csv_path)
        assert frame["ok"].tolist() == [1, 0]
        assert math.isnan(frame["kappa_hz"][1])
        assert not result.points[1].ok and result.points[1].error
        stats = manager.get_stats()
        assert stats["points_total"] == 2 and stats["points_failed"] == 1

    def test_parallel_matches_sequential(self, run_config, tmp_path):
        grid = (0.002, 0.003, 0.004, 0.005)
        sequential = ExperimentManager(run_config, tmp_path / "seq", 1).run_fig2a(grid)
        parallel = ExperimentManager(run_config, tmp_path / "par", 2).run_fig2a(grid)
        assert sequential.csv_path.read_bytes() == parallel.csv_path.read_bytes()

    def test_repeatable_output(self, run_config, tmp_path):
        grid = (0.002, 0.004)
        first = ExperimentManager(run_config, tmp_path / "a", 1).run_fig2a(grid)
        second = ExperimentManager(run_config, tmp_path / "b", 1).run_fig2a(grid)
        assert first.csv_path.read_bytes() == second.csv_path.read_bytes()


class TestRingdownSweep:

    def test_reference_trace_peak(self, manager):
        result = manager.run_fig2b()
        frame, metadata = read_table(result.csv_path)
        assert list(frame.columns) == ["time_s", "v_over_v0_0", "v_over_v0_1", "v_over_v0_2"]
        assert 0.8 < result.points[2].values["peak_v_over_v0"] < 1.0
        assert float(metadata["v0_v"]) == result.summary["v0"]

    def test_plateau_and_ratio(self, manager):
        result = manager.run_fig2c((0.02, 0.05, 0.1), kappa_int=1730.0)
        summary = result.summary
        assert summary["kappa_max"] == pytest.approx(1.96e6, rel=0.02)
        assert summary["on_off_ratio"] == pytest.approx(1.96e6 / 1730.0, rel=0.02)
        assert summary["kappa_max_error"] > 0

        frame, _ = read_table(result.csv_path)
        assert list(frame.columns) == ["bias_phi0", "kappa_hz", "energy_photons", "ok"]
        assert frame["energy_photons"].max() < 8000.0

    def test_step_like_selection(self):
        fast = SweepPoint(0.1, {}, _gamma_fit(48e6, 1e6))
        fast.fit.parameters["kappa"] = 2e6
        slow = SweepPoint(0.004, {}, _gamma_fit(48e6, 1e6))
        bounded = SweepPoint(0.002, {}, _gamma_fit(48e6, 0.0, bounded=("gamma_c",)))
        assert ExperimentManager._is_step_like(slow, 0.01)
        assert not ExperimentManager._is_step_like(fast, 0.01)
        assert not ExperimentManager._is_step_like(bounded, 0.01)


class TestSwitchingTime:

    def test_weighted_mean(self):
        points = [SweepPoint(0.002, {}, _gamma_fit(48e6, 1e6)), SweepPoint(0.004, {}, _gamma_fit(50e6, 2e6))]
        entry = ExperimentManager._switching_time(points)
        mean = (48e6 / 1 + 50e6 / 4) / (1 + 1 / 4)
        assert entry.value == pytest.approx(1 / (2 * math.pi * mean))
        assert entry.unit == "s"
        assert entry.uncertainty == pytest.approx(entry.value / math.sqrt(1.25e-12) / mean)

    def test_plain_mean_without_errors(self):
        points = [SweepPoint(0.002, {}, _gamma_fit(46e6, 0.0)), SweepPoint(0.004, {}, _gamma_fit(50e6, 0.0))]
        entry = ExperimentManager._switching_time(points)
        assert entry.value == pytest.approx(1 / (2 * math.pi * 48e6))

    def test_requires_points(self):
        with pytest.raises(FitError):
            ExperimentManager._switching_time([])


class TestKerrSweep:

    def test_shift_follows_kerr(self, manager, device, critical_bias):
        result = manager.run_fig3((1e-18, 1e-17, 1e-16), critical_bias=critical_bias)
        frame, metadata = read_table(result.csv_path)

        assert list(frame.columns) == ["photons", "delta_hz", "bistable_flag", "ok"]
        assert frame["delta_hz"][0] == 0.0
        assert frame["bistable_flag"].tolist() == [0, 0, 0]
        assert float(metadata["critical_bias_phi0"]) == critical_bias.gradiometric_phi0

        # n impresso é metade do número no estado estacionário em acoplamento crítico
        expected = 2 * self_kerr(device, critical_bias)
        assert result.summary["kerr"]["kerr_hz_per_photon"] == pytest.approx(expected, rel=0.05)


class TestTable1Report:

    @pytest.fixture
    def report(self):
        return Table1Report(
            loss_and_residual_coupling=ReportEntry(1280.0, 3.0, "Hz"),
            maximal_coupling=ReportEntry(1.96e6, 2e3, "Hz"),
            on_off_ratio=ReportEntry(1133.0, 4.0, ""),
            switching_time=ReportEntry(3.3e-9, 1e-11, "s"),
            self_kerr=ReportEntry(-0.0406, 1e-4, "Hz/photon"),
        )

    def test_kv_parses_back(self, report):
        parsed = FitResult.parse_kv(report.to_kv().splitlines())
        assert parsed["maximal_coupling"] == (1.96e6, 2e3, "Hz")
        assert parsed["on_off_ratio"] == (1133.0, 4.0, "")
        assert parsed["self_kerr"] == (-0.0406, 1e-4, "Hz/photon")

    def test_text_lists_every_entry(self, report):
        text = report.to_text()
        assert text.startswith("Resumo de desempenho (incerteza: covariância do ajuste)")
        for label in Table1Report.LABELS.values():
            assert label in text

    def test_save(self, report, tmp_path):
        text_path, kv_path = report.save(tmp_path / "out")
        assert text_path.read_text(encoding="utf-8") == report.to_text()
        assert kv_path.read_text(encoding="utf-8") == report.to_kv()


@pytest.mark.slow
class TestFullRun:

    def test_table1_values(self, run_config, tmp_path):
        manager = ExperimentManager(run_config, tmp_path, max_workers=1)
        report = manager.run_table1()

        assert report.loss_and_residual_coupling.value == pytest.approx(1280.0, rel=0.01)
        assert report.maximal_coupling.value == pytest.approx(1.96e6, rel=0.02)
        assert report.on_off_ratio.value == pytest.approx(1130.0, rel=0.03)
        assert report.switching_time.value == pytest.approx(3.3e-9, rel=0.1)
        assert report.self_kerr.value == pytest.approx(-0.04, rel=0.1)
        for name in ("fig2a.csv", "fig2b.csv", "fig2c.csv", "fig3.csv", "table1.txt", "table1.kv"):
            assert (tmp_path / name).is_file()

    def test_outputs_are_byte_identical(self, run_config, tmp_path):
        for name in ("a", "b"):
            ExperimentManager(run_config, tmp_path / name, max_workers=1).run_table1()
        for name in ("fig2a.csv", "fig2b.csv", "fig2c.csv", "fig3.csv", "table1.txt", "table1.kv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
