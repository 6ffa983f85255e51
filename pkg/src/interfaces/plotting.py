"""
Gráficos vetoriais
Renderiza os CSVs dos experimentos em SVG/PDF com bytes determinísticos
"""

import logging
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from pydantic import BaseModel, ConfigDict, Field, field_validator  # noqa: E402

from ..core.config import settings  # noqa: E402
from ..core.exceptions import EmptyData, MissingColumn  # noqa: E402
from ..core.storage import read_table  # noqa: E402

logger = logging.getLogger(__name__)

HASH_SALT = "tib-sim"

# Metadados que carregam data de criação
_UNDATED = {
    "svg": {"Date": None},
    "pdf": {"CreationDate": None, "ModDate": None},
}


class PlotSpec(BaseModel):
    """Colunas e escalas de um gráfico"""
    model_config = ConfigDict(frozen=True)

    x: str
    y: Tuple[str, ...] = Field(..., min_length=1)
    logx: bool = False
    logy: bool = False
    normalize: bool = False
    style: Literal["line", "points"] = "line"
    title: str = ""
    xlabel: Optional[str] = None
    ylabel: Optional[str] = None

    @field_validator("y", mode="before")
    @classmethod
    def parse_columns(cls, value: Any) -> Tuple[str, ...]:
        if isinstance(value, str):
            value = [item.strip() for item in value.split(",") if item.strip()]
        return tuple(value)


# Gráficos padrão por nome de arquivo
DEFAULT_PLOTS: Dict[str, PlotSpec] = {
    "fig2a": PlotSpec(x="bias_phi0", y=("kappa_hz",), style="points", title="κ perto do acoplamento crítico"),
    "fig2b": PlotSpec(x="time_s", y=("v_over_v0_0", "v_over_v0_1", "v_over_v0_2"), ylabel="V/V₀",
                      title="Ringdown normalizado"),
    "fig2c": PlotSpec(x="bias_phi0", y=("kappa_hz",), logy=True, style="points", title="Taxa total de decaimento"),
    "fig3": PlotSpec(x="photons", y=("delta_hz",), style="points", title="Deslocamento de Kerr"),
}


def _output_path(csv_path: Path, output_path: Optional[Union[str, Path]]) -> Path:
    if output_path is not None:
        return Path(output_path)
    return csv_path.with_suffix(f".{settings.PLOT_FORMAT}")


def emit_plot(csv_path: Union[str, Path], plot_spec: Optional[PlotSpec] = None,
              output_path: Optional[Union[str, Path]] = None) -> Path:
    """
    Renderizar um CSV em gráfico vetorial

    Args:
        csv_path: CSV emitido por um experimento
        plot_spec: Colunas e escalas (padrão pelo nome do arquivo se None)
        output_path: Arquivo de saída (mesmo nome do CSV com a extensão de PLOT_FORMAT se None)

    Raises:
        MissingColumn: Coluna pedida ausente no CSV
        EmptyData: Nenhuma linha válida
    """
    csv_path = Path(csv_path)
    if plot_spec is None:
        if csv_path.stem not in DEFAULT_PLOTS:
            raise MissingColumn(f"Sem gráfico padrão para {csv_path.name}; informe --x e --y")
        plot_spec = DEFAULT_PLOTS[csv_path.stem]

    frame, _ = read_table(csv_path)
    missing = [column for column in (plot_spec.x, *plot_spec.y) if column not in frame.columns]
    if missing:
        raise MissingColumn(f"Colunas ausentes em {csv_path.name}: {', '.join(missing)}")

    if "ok" in frame.columns:
        frame = frame[frame["ok"] == 1]
    if frame.empty:
        raise EmptyData(f"Nenhuma linha válida em {csv_path.name}")

    path = _output_path(csv_path, output_path)
    fmt = path.suffix.lstrip(".") or settings.PLOT_FORMAT
    path.parent.mkdir(parents=True, exist_ok=True)

    with matplotlib.rc_context({"svg.hashsalt": HASH_SALT, "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        try:
            x = frame[plot_spec.x].to_numpy(dtype=float)
            for column in plot_spec.y:
                y = frame[column].to_numpy(dtype=float)
                if plot_spec.normalize:
                    peak = np.nanmax(np.abs(y))
                    y = y / peak if peak > 0 else y
                if plot_spec.style == "points":
                    ax.plot(x, y, "o", markersize=3, label=column)
                else:
                    ax.plot(x, y, "-", linewidth=1.0, label=column)

            if plot_spec.logx:
                ax.set_xscale("log")
            if plot_spec.logy:
                ax.set_yscale("log")
            ax.set_xlabel(plot_spec.xlabel or plot_spec.x)
            ax.set_ylabel(plot_spec.ylabel or ", ".join(plot_spec.y))
            if plot_spec.title:
                ax.set_title(plot_spec.title)
            if len(plot_spec.y) > 1:
                ax.legend()
            fig.tight_layout()
            fig.savefig(path, format=fmt, metadata=_UNDATED.get(fmt))
        except Exception as e:
            logger.error(f"❌ Erro ao gerar gráfico de {csv_path}: {e}")
            raise
        finally:
            plt.close(fig)

    logger.info(f"✅ Gráfico salvo: {path}")
    return path
