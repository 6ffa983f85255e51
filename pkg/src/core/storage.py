"""
Persistência dos resultados em CSV
Tabelas via pandas com metadados em linhas "# chave=valor" antes do cabeçalho
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import pandas as pd

from .config import settings

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

METADATA_PREFIX = "# "


def format_value(value: Any) -> str:
    """Formatar metadado; floats com 17 dígitos significativos"""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_table(path: PathLike, frame: pd.DataFrame, metadata: Optional[Dict[str, Any]] = None) -> Path:
    """
    Escrever tabela CSV

    Args:
        path: Arquivo de destino (diretórios criados se preciso)
        frame: Colunas já na ordem final
        metadata: Pares gravados como comentários antes do cabeçalho

    Returns:
        Path: Caminho escrito
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            for key, value in (metadata or {}).items():
                handle.write(f"{METADATA_PREFIX}{key}={format_value(value)}\n")
            frame.to_csv(handle, index=False, float_format=settings.CSV_FLOAT_FORMAT, lineterminator="\n")
    except Exception as e:
        logger.error(f"❌ Erro ao escrever {path}: {e}")
        raise

    logger.debug(f"CSV escrito: {path} ({len(frame)} linhas)")
    return path


def read_metadata(path: PathLike) -> Dict[str, str]:
    metadata = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            metadata[key.strip()] = value.strip()
    return metadata


def read_table(path: PathLike) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """Ler tabela CSV escrita por write_table (floats em round-trip exato)"""
    frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    return frame, read_metadata(path)
