"""
Mínimos quadrados não lineares
Levenberg-Marquardt com amortecimento escalado por diag(JᵀJ), Jacobiano por diferenças finitas
e incertezas pela covariância do ajuste
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import FitError, MaxIterations, SingularJacobian

logger = logging.getLogger(__name__)

Residual = Callable[[np.ndarray], np.ndarray]

RELATIVE_STEP = 1e-6
COST_TOLERANCE = 1e-10
STEP_TOLERANCE = 1e-12
DEFAULT_MAX_ITERATIONS = 200
INITIAL_DAMPING = 1e-3
DAMPING_FACTOR = 3.0

UNCERTAINTY_LABEL = "incerteza: covariância do ajuste"


@dataclass
class FitResult:
    """Parâmetros ajustados com erro padrão, norma do resíduo e estado de convergência"""
    parameters: Dict[str, float]
    uncertainties: Dict[str, float]
    residual_norm: float
    converged: bool
    iterations: int
    units: Dict[str, str] = field(default_factory=dict)
    bounded: Tuple[str, ...] = ()
    covariance: Optional[np.ndarray] = None
    metadata: Dict[str, float] = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.parameters[name]

    def error(self, name: str) -> float:
        return self.uncertainties[name]

    def report(self, title: str = "Ajuste") -> str:
        """Bloco de texto legível"""
        lines = [f"{title} ({UNCERTAINTY_LABEL})"]
        width = max(len(name) for name in self.parameters)
        for name, value in self.parameters.items():
            unit = self.units.get(name, "")
            flag = "  [no limite]" if name in self.bounded else ""
            lines.append(f"  {name:<{width}} = {value:.10g} ± {self.uncertainties[name]:.3g} {unit}".rstrip() + flag)
        status = "convergiu" if self.converged else "NÃO convergiu"
        lines.append(f"  {status} em {self.iterations} iterações, |r| = {self.residual_norm:.6g}")
        return "\n".join(lines)

    def to_kv(self) -> List[str]:
        """Bloco chave=valor: nome=valor ± erro unidade"""
        lines = []
        for name, value in self.parameters.items():
            unit = self.units.get(name, "")
            lines.append(f"{name}={value!r} ± {self.uncertainties[name]!r} {unit}".rstrip())
        return lines

    @staticmethod
    def parse_kv(lines: Iterable[str]) -> Dict[str, Tuple[float, float, str]]:
        """Inverso de to_kv: nome -> (valor, erro, unidade)"""
        parsed = {}
        for line in lines:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            name, _, rest = line.partition("=")
            value, _, tail = rest.partition("±")
            parts = tail.split()
            parsed[name.strip()] = (float(value), float(parts[0]), " ".join(parts[1:]))
        return parsed


def _typical_scale(x: np.ndarray, x_scale: Optional[Sequence[float]]) -> np.ndarray:
    if x_scale is not None:
        scale = np.abs(np.asarray(x_scale, dtype=float))
    else:
        scale = np.abs(x)
    return np.where(scale > 0, scale, 1.0)


def forward_difference_jacobian(residual: Residual, x: np.ndarray, r0: Optional[np.ndarray] = None,
                                typical: Optional[np.ndarray] = None,
                                relative_step: float = RELATIVE_STEP) -> np.ndarray:
    """J[:, j] = (r(x + h_j e_j) − r(x)) / h_j, h_j = passo relativo · max(|x_j|, escala típica)"""
    x = np.asarray(x, dtype=float)
    r0 = np.asarray(residual(x), dtype=float) if r0 is None else r0
    typical = np.ones_like(x) if typical is None else typical
    jacobian = np.empty((len(r0), len(x)))
    for j in range(len(x)):
        shifted = x.copy()
        shifted[j] += relative_step * max(abs(x[j]), typical[j])
        step = shifted[j] - x[j]
        jacobian[:, j] = (np.asarray(residual(shifted), dtype=float) - r0) / step
    return jacobian


def central_difference_jacobian(residual: Residual, x: np.ndarray, typical: Optional[np.ndarray] = None,
                                relative_step: float = RELATIVE_STEP) -> np.ndarray:
    """J[:, j] = (r(x + h_j e_j) − r(x − h_j e_j)) / 2h_j"""
    x = np.asarray(x, dtype=float)
    typical = np.ones_like(x) if typical is None else typical
    columns = []
    for j in range(len(x)):
        step = relative_step * max(abs(x[j]), typical[j])
        forward, backward = x.copy(), x.copy()
        forward[j] += step
        backward[j] -= step
        columns.append((np.asarray(residual(forward), dtype=float)
                        - np.asarray(residual(backward), dtype=float)) / (forward[j] - backward[j]))
    return np.column_stack(columns)


def _cost(r: np.ndarray) -> float:
    return float(np.dot(r, r))


def _check_rank(jacobian: np.ndarray, typical: np.ndarray) -> None:
    if np.linalg.matrix_rank(jacobian * typical) < jacobian.shape[1]:
        raise SingularJacobian(f"Jacobiano com posto deficiente ({jacobian.shape[1]} parâmetros)")


def _covariance(jacobian: np.ndarray, cost: float, m: int, n: int) -> Tuple[np.ndarray, np.ndarray]:
    if m == n:
        covariance = np.full((n, n), np.inf)
        return covariance, np.full(n, np.inf)
    try:
        inverse = np.linalg.inv(jacobian.T @ jacobian)
    except np.linalg.LinAlgError as e:
        raise SingularJacobian(f"JᵀJ não inversível: {e}") from e
    covariance = inverse * cost / (m - n)
    return covariance, np.sqrt(np.clip(np.diag(covariance), 0.0, None))


def least_squares(residual: Residual, x0: Sequence[float], names: Optional[Sequence[str]] = None, *,
                  x_scale: Optional[Sequence[float]] = None,
                  max_iterations: int = DEFAULT_MAX_ITERATIONS,
                  units: Optional[Dict[str, str]] = None) -> FitResult:
    """
    Minimizar Σr² por Levenberg-Marquardt

    Args:
        residual: Função x -> vetor real de resíduos
        x0: Chute inicial (finito)
        names: Nomes dos parâmetros (p0, p1, ... se None)
        x_scale: Escala típica de cada parâmetro (passo de diferenças e teste de posto)
        max_iterations: Passos tentados antes de MaxIterations
        units: Unidade por nome de parâmetro

    Returns:
        FitResult: Parâmetros, erros padrão (covariância), |r| e iterações

    Raises:
        SingularJacobian: Posto deficiente
        MaxIterations: Sem convergência; o resultado parcial fica em error.result
    """
    x = np.asarray(x0, dtype=float).copy()
    n = len(x)
    names = list(names) if names is not None else [f"p{i}" for i in range(n)]
    if not np.all(np.isfinite(x)):
        raise FitError(f"Chute inicial não finito: {x}")

    r = np.asarray(residual(x), dtype=float)
    m = len(r)
    if m < n:
        raise FitError(f"{m} resíduos para {n} parâmetros")
    if not np.all(np.isfinite(r)):
        raise FitError("Resíduo não finito no chute inicial")

    typical = _typical_scale(x, x_scale)
    cost = _cost(r)
    damping = INITIAL_DAMPING
    converged = cost == 0.0
    iterations = 0
    jacobian = None

    while not converged and iterations < max_iterations:
        iterations += 1
        if jacobian is None:
            jacobian = forward_difference_jacobian(residual, x, r, typical)
            _check_rank(jacobian, typical)
            hessian = jacobian.T @ jacobian
            gradient = jacobian.T @ r

        try:
            step = np.linalg.solve(hessian + damping * np.diag(np.diag(hessian)), -gradient)
        except np.linalg.LinAlgError as e:
            raise SingularJacobian(f"Sistema amortecido singular: {e}") from e

        scaled_step = float(np.linalg.norm(step / typical))
        candidate = x + step
        r_new = np.asarray(residual(candidate), dtype=float)
        cost_new = _cost(r_new) if np.all(np.isfinite(r_new)) else math.inf

        if cost_new < cost:
            relative_change = (cost - cost_new) / cost
            x, r, cost = candidate, r_new, cost_new
            damping /= DAMPING_FACTOR
            jacobian = None
            converged = cost == 0.0 or relative_change < COST_TOLERANCE or scaled_step < STEP_TOLERANCE
        else:
            damping *= DAMPING_FACTOR
            converged = scaled_step < STEP_TOLERANCE

    final_jacobian = forward_difference_jacobian(residual, x, r, typical)
    covariance, errors = _covariance(final_jacobian, cost, m, n)
    result = FitResult(
        parameters={name: float(value) for name, value in zip(names, x)},
        uncertainties={name: float(error) for name, error in zip(names, errors)},
        residual_norm=math.sqrt(cost),
        converged=converged,
        iterations=iterations,
        units=dict(units or {}),
        covariance=covariance,
    )

    if not converged:
        raise MaxIterations(f"Sem convergência após {iterations} iterações (|r| = {result.residual_norm:.3g})", result)

    logger.debug(f"Ajuste convergiu em {iterations} iterações, |r| = {result.residual_norm:.3g}")
    return result


def propagate(result: FitResult, gradient: Dict[str, float]) -> float:
    """Erro padrão de uma grandeza derivada: sqrt(gᵀ C g)"""
    if result.covariance is None:
        return math.nan
    names = list(result.parameters)[:result.covariance.shape[0]]
    vector = np.array([gradient.get(name, 0.0) for name in names])
    variance = float(vector @ result.covariance @ vector)
    return math.sqrt(max(variance, 0.0))
