"""
ReLU suavizada g(b) = E[ReLU(z + b)], z ~ N(0, 1), sua derivada, sua inversa
e a integral κ(b) = ∫₀ᵇ g/g′ que aparece na quantidade conservada do modelo médio.
"""
import logging
import math
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import bisect

from domain.errors import InvalidConfig, NonPositiveTarget
from domain.numerics import adaptive_quadrature, std_normal_cdf, std_normal_pdf

logger = logging.getLogger(__name__)

KAPPA_TABLE_LO = -10.0
KAPPA_TABLE_STEP = 1e-3


def smoothed_relu(b: float) -> float:
    """g(b) = φ(b) + b·Φ(b); estritamente positiva e crescente."""
    return std_normal_pdf(b) + b * std_normal_cdf(b)


def smoothed_relu_deriv(b: float) -> float:
    """g′ = Φ."""
    return std_normal_cdf(b)


def smoothed_relu_inverse(v: float, xtol: float = 1e-13) -> float:
    """Único b com g(b) = v, por bisseção (g é estritamente crescente)."""
    if not v > 0:
        raise NonPositiveTarget(v)
    # g(b) > b, então a raiz fica abaixo de v; à esquerda g decai a zero
    hi = max(v, 1.0)
    lo = -1.0
    while smoothed_relu(lo) > v:
        lo *= 2.0
        if lo < -1e3:
            raise NonPositiveTarget(v)
    return bisect(lambda b: smoothed_relu(b) - v, lo, hi, xtol=xtol, maxiter=200)


def _kappa_integrand(u: float) -> float:
    return smoothed_relu(u) / std_normal_cdf(u)


def kappa(b: float, tol: float = 1e-12) -> float:
    """κ(b) = ∫₀ᵇ g(u)/Φ(u) du por quadratura adaptativa."""
    if not -10.0 <= b <= 10.0:
        raise InvalidConfig(f"κ definida aqui para b ∈ [−10, 10], recebido {b}")
    return adaptive_quadrature(_kappa_integrand, 0.0, b, tol)


class KappaTable:
    """κ memorizada numa grade densa de [−10, 0] com interpolação cúbica."""

    def __init__(self, lo: float = KAPPA_TABLE_LO, step: float = KAPPA_TABLE_STEP):
        n = int(round(-lo / step))
        nodes = np.linspace(lo, 0.0, n + 1)
        values = np.zeros(n + 1)
        # acumula de 0 para a esquerda: κ(b_k) = κ(b_{k+1}) − ∫_{b_k}^{b_{k+1}} g/g′
        for k in range(n - 1, -1, -1):
            segment = adaptive_quadrature(_kappa_integrand, nodes[k], nodes[k + 1], 1e-15)
            values[k] = values[k + 1] - segment
        self.lo = lo
        self._spline = CubicSpline(nodes, values)
        logger.info("Tabela de κ construída com %d nós em [%g, 0]", n + 1, lo)

    def __call__(self, b: float) -> float:
        if self.lo <= b <= 0.0:
            return float(self._spline(b))
        return kappa(b)


@lru_cache(maxsize=1)
def kappa_table() -> KappaTable:
    """Tabela compartilhada, construída uma vez e somente lida depois."""
    return KappaTable()


def g_at_zero() -> float:
    return 1.0 / math.sqrt(2.0 * math.pi)
