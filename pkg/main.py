"""
TIB Sim - Aplicação Principal
Simulador em malha fechada e extrator de parâmetros de cavidade 3D com acoplador SQUID em ponte
"""

import sys
import logging

from src.core.config import settings
from src.interfaces.cli import main as cli_main

# Configurar logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper()),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(settings.LOG_FILE),
        logging.StreamHandler()
    ]
)

logger = logging.getLogger(__name__)


def main() -> int:
    """Executar a CLI e devolver o código de saída"""
    logger.info("🚀 Iniciando TIB Sim...")
    code = cli_main(sys.argv[1:])
    if code == 0:
        logger.info("✅ Execução concluída")
    else:
        logger.warning(f"⚠️ Execução encerrada com código {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
