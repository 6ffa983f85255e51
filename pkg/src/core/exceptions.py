"""
Exceções do simulador
Hierarquia única usada por todos os módulos e mapeada para códigos de saída na CLI
"""


class ConfigurationError(ValueError):
    """Configuração inválida ou incompleta (código de saída 1)"""


class SimulationError(RuntimeError):
    """Falha numérica durante simulação ou extração (código de saída 2)"""


# Modelo do dispositivo
class FluxSingularity(SimulationError):
    """Indutância diverge perto de meio quantum de fluxo"""


class BalancedBiasError(SimulationError):
    """Ponte balanceada: acoplamento externo nulo no ponto pedido"""


# Dinâmica
class StepTooLarge(SimulationError):
    """Passo de integração não resolve a taxa mais rápida envolvida"""


class NonFiniteState(SimulationError):
    """Estado da cavidade divergiu durante a integração"""


class TimeBaseMismatch(SimulationError):
    """Traços com bases de tempo incompatíveis"""


class UnreachableSteadyState(SimulationError):
    """Número de fótons pedido fora do regime monoestável"""


# Espectroscopia
class DegenerateSweep(SimulationError):
    """Varredura sem variação de fase utilizável"""


# Extração
class FitError(SimulationError):
    """Falha genérica de ajuste"""


class SingularJacobian(FitError):
    """Jacobiano sem posto completo"""


class MaxIterations(FitError):
    """Número máximo de iterações atingido sem convergência"""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class DegenerateRates(FitError):
    """Taxas de decaimento e do filtro coincidem (modelo singular)"""


class InsufficientLinearRegion(FitError):
    """Poucos pontos na região linear do ajuste de Kerr"""


class BracketError(FitError):
    """Intervalo de busca não contém o acoplamento crítico"""


class NoPlateau(FitError):
    """Nenhum platô de energia contíguo com pontos suficientes"""


# Gráficos
class PlotError(SimulationError):
    """Falha na geração de gráfico"""


class MissingColumn(PlotError):
    """Coluna pedida não existe no CSV"""


class EmptyData(PlotError):
    """CSV sem linhas de dados"""
