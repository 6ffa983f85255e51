"""
Interface de linha de comando
simulate reflection|ringdown|kerr, report table1 e plot
"""

import argparse
import logging
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from ..core.config import load_config, parse_overrides, settings
from ..core.exceptions import ConfigurationError, SimulationError
from ..core.experiment_manager import ExperimentKind, ExperimentManager, ExperimentSpec
from .plotting import PlotSpec, emit_plot

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIGURATION = 1
EXIT_NUMERICAL = 2

SIMULATIONS = {
    "reflection": ExperimentKind.REFLECTION_SWEEP,
    "ringdown": ExperimentKind.RINGDOWN_SWEEP,
    "kerr": ExperimentKind.KERR_SWEEP,
}


def build_parser() -> argparse.ArgumentParser:
    """Parser com os verbos e as flags globais"""
    parser = argparse.ArgumentParser(
        prog="tib-sim",
        description="Simulador e extrator de parâmetros de cavidade com acoplador SQUID em ponte",
    )
    parser.add_argument("--config", default=None,
                        help="Arquivo chave=valor do dispositivo (padrão: DEVICE_CONFIG)")
    parser.add_argument("--output-dir", default=None,
                        help="Diretório de saída (padrão: OUTPUT_DIR)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="CHAVE=VALOR",
                        help="Substituir uma entrada da configuração (repetível)")
    parser.add_argument("--workers", type=int, default=None,
                        help="Processos para pontos de varredura (padrão: MAX_WORKERS)")

    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Executar um experimento virtual")
    simulate.add_argument("experiment", choices=sorted(SIMULATIONS))

    report = commands.add_parser("report", help="Gerar o resumo de desempenho")
    report.add_argument("report", choices=["table1"])

    plot = commands.add_parser("plot", help="Renderizar um CSV em gráfico vetorial")
    plot.add_argument("csv", help="CSV emitido por um experimento")
    plot.add_argument("--x", default=None, help="Coluna do eixo x")
    plot.add_argument("--y", default=None, help="Colunas do eixo y separadas por vírgula")
    plot.add_argument("--logx", action="store_true")
    plot.add_argument("--logy", action="store_true")
    plot.add_argument("--normalize", action="store_true", help="Dividir cada curva pelo seu máximo")
    plot.add_argument("--output", default=None, help="Arquivo de saída")

    return parser


def _plot(args: argparse.Namespace) -> int:
    if not Path(args.csv).is_file():
        raise ConfigurationError(f"CSV não encontrado: {args.csv}")
    spec = None
    if args.x or args.y:
        if not (args.x and args.y):
            raise ConfigurationError("--x e --y devem ser informados juntos")
        spec = PlotSpec(x=args.x, y=args.y, logx=args.logx, logy=args.logy, normalize=args.normalize)
    path = emit_plot(args.csv, spec, args.output)
    print(path)
    return EXIT_OK


def _run(args: argparse.Namespace) -> int:
    if args.command == "plot":
        return _plot(args)

    run_config = load_config(args.config, parse_overrides(args.overrides))
    output_dir = Path(args.output_dir) if args.output_dir else settings.output_path
    manager = ExperimentManager(run_config, output_dir, args.workers)

    if args.command == "simulate":
        spec = ExperimentSpec.from_config(SIMULATIONS[args.experiment], run_config, str(output_dir))
        result = manager.run(spec)
        print(result.csv_path)
    else:
        spec = ExperimentSpec.from_config(ExperimentKind.TABLE1, run_config, str(output_dir))
        report = manager.run(spec)
        print(report.to_text(), end="")

    stats = manager.get_stats()
    logger.info(
        f"📊 {stats['experiments_run']} experimentos, {stats['points_total']} pontos "
        f"({stats['points_failed']} com falha), {stats['files_written']} arquivos"
    )
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Ponto de entrada; retorna o código de saída"""
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigurationError, ValidationError) as e:
        logger.error(f"❌ Erro de configuração: {e}")
        return EXIT_CONFIGURATION
    except SimulationError as e:
        logger.error(f"❌ Falha numérica: {type(e).__name__}: {e}")
        return EXIT_NUMERICAL

