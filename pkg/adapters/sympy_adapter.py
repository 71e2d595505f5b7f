"""
Adaptador para a biblioteca SymPy.
Isola o cálculo simbólico das perdas (ℓ, ℓ′, ℓ″) do resto da aplicação.
As perdas são pares, então as expressões são escritas para s ≥ 0 e
avaliadas em |s|.
"""
import logging
from functools import lru_cache
from typing import Callable

import sympy as sp

from domain.models import LossKind, LossSpec

logger = logging.getLogger(__name__)


class SymPyAdapter:
    """Adaptador para a biblioteca SymPy."""

    s = sp.Symbol("s", positive=True)

    @staticmethod
    def loss_expression(spec: LossSpec) -> sp.Expr:
        """Expressão simbólica de ℓ(s) para s ≥ 0."""
        s = SymPyAdapter.s
        kind = spec.kind
        if kind is LossKind.RESCALED_SYM_LOGISTIC:
            return sp.Rational(1, 2) * (sp.log(1 + sp.exp(-2 * s)) + sp.log(1 + sp.exp(2 * s)))
        if kind is LossKind.SQRT:
            return sp.sqrt(1 + s**2)
        if kind is LossKind.HUBER:
            return sp.Piecewise((s**2 / 2, s <= 1), (s - sp.Rational(1, 2), True))
        if kind is LossKind.SYM_LOGISTIC:
            return sp.Rational(1, 2) * (sp.log(1 + sp.exp(-s)) + sp.log(1 + sp.exp(s)))

        beta = sp.nsimplify(spec.order)
        c = 1 / (beta + 1) * (beta / (beta + 1)) ** beta
        r = (beta + 1) / beta
        inner = s**2 / 2 - c * s ** (beta + 2) / (beta + 2)
        return sp.Piecewise((inner, s < r), (inner.subs(s, r) + s - r, True))

    @staticmethod
    def derivative_expression(spec: LossSpec, order: int = 1) -> sp.Expr:
        return sp.diff(SymPyAdapter.loss_expression(spec), SymPyAdapter.s, order)

    @staticmethod
    @lru_cache(maxsize=None)
    def second_derivative(spec: LossSpec) -> Callable[[float], float]:
        """ℓ″ como função numérica, derivada simbolicamente uma vez por perda."""
        expr = SymPyAdapter.derivative_expression(spec, 2)
        compiled = sp.lambdify(SymPyAdapter.s, expr, "math")
        logger.debug("ℓ″ simbólica para %s: %s", spec.name, expr)

        def evaluate(s: float) -> float:
            try:
                return float(compiled(abs(s)))
            except OverflowError:
                # todas as perdas da família têm ℓ″ → 0 quando |s| → ∞
                return 0.0

        return evaluate

    @staticmethod
    @lru_cache(maxsize=None)
    def loss_function(spec: LossSpec) -> Callable[[float], float]:
        compiled = sp.lambdify(SymPyAdapter.s, SymPyAdapter.loss_expression(spec), "math")
        at_zero = float(SymPyAdapter.loss_expression(spec).subs(SymPyAdapter.s, 0))
        return lambda s: at_zero if s == 0 else float(compiled(abs(s)))

    @staticmethod
    def antiderivative_expression(spec: LossSpec) -> sp.Expr:
        """∫₀ˢ ℓ′ para a perda de ordem superior, por ramo; ℓ_β(0) = 0."""
        s, u = SymPyAdapter.s, sp.Symbol("u", positive=True)
        beta = sp.nsimplify(spec.order)
        c = 1 / (beta + 1) * (beta / (beta + 1)) ** beta
        r = (beta + 1) / beta
        inner = sp.integrate(u * (1 - c * u**beta), (u, 0, s))
        return sp.Piecewise((inner, s < r), (inner.subs(s, r) + (s - r), True))

    @staticmethod
    def check_branch_continuity(spec: LossSpec) -> float:
        """|ℓ′_β(r_β⁻) − 1|: salto de ℓ′ na emenda dos dois ramos."""
        beta = sp.nsimplify(spec.order)
        c = 1 / (beta + 1) * (beta / (beta + 1)) ** beta
        r = (beta + 1) / beta
        left = r * (1 - c * r**beta)
        return abs(float(sp.N(left - 1, 30)))
