"""
Família de perdas unidimensionais ℓ: valores, derivadas, a razão
r(s) = ℓ′(s)/s e a certificação numérica das hipóteses de curvatura.
"""
import logging
import math
from typing import Callable, Iterable, Optional

from domain.errors import CertificationFailed, InvalidConfig
from domain.models import CertReport, LossKind, LossSpec

logger = logging.getLogger(__name__)

_MARGIN_TOL = 1e-12


def higher_order_constants(beta: float):
    """(c_β, r_β) com c_β = (1/(β+1))·(β/(β+1))^β e r_β = (β+1)/β."""
    c = (1.0 / (beta + 1.0)) * (beta / (beta + 1.0)) ** beta
    return c, (beta + 1.0) / beta


def make_loss(kind: LossKind, order: Optional[float] = None) -> LossSpec:
    """Constrói a perda com os metadados (β, c, C, ℓ″(0)) declarados para ela."""
    kind = LossKind(kind)
    if kind is LossKind.RESCALED_SYM_LOGISTIC:
        return LossSpec(kind, beta=2.0, c_lower=0.25, second_deriv_at_zero=1.0, c_upper=1.0 / 3.0)
    if kind is LossKind.SQRT:
        return LossSpec(kind, beta=2.0, c_lower=0.4, second_deriv_at_zero=1.0, c_upper=0.5)
    if kind is LossKind.HUBER:
        return LossSpec(kind, beta=math.inf, c_lower=1.0, second_deriv_at_zero=1.0)
    if kind is LossKind.SYM_LOGISTIC:
        return LossSpec(kind, beta=2.0, c_lower=0.25, second_deriv_at_zero=0.25)
    if order is None or not (1.0 < order < math.inf):
        raise InvalidConfig(f"higher-order exige β > 1 finito, recebido {order!r}")
    c_beta, r_beta = higher_order_constants(order)
    return LossSpec(
        kind,
        beta=float(order),
        c_lower=min(c_beta, r_beta),
        second_deriv_at_zero=1.0,
        c_upper=c_beta,
        order=float(order),
    )


def parse_loss(name: str) -> LossSpec:
    """Converte 'sqrt', 'huber', 'higher-order:<β>' etc. numa LossSpec."""
    head, _, arg = name.strip().partition(":")
    try:
        kind = LossKind(head)
    except ValueError as exc:
        raise InvalidConfig(f"Perda desconhecida: {name!r}") from exc
    if kind is LossKind.HIGHER_ORDER:
        try:
            order = float(eval_fraction(arg))
        except ValueError as exc:
            raise InvalidConfig(f"β inválido em {name!r}") from exc
        return make_loss(kind, order)
    if arg:
        raise InvalidConfig(f"A perda {head!r} não aceita parâmetro")
    return make_loss(kind)


def eval_fraction(text: str) -> float:
    """Aceita '2', '1.5' ou '4/3'."""
    num, sep, den = text.partition("/")
    return float(num) / float(den) if sep else float(num)


def _logaddexp0(z: float) -> float:
    """log(1 + e^z) sem overflow."""
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def loss_value(spec: LossSpec, s: float) -> float:
    a = abs(s)
    kind = spec.kind
    if kind is LossKind.RESCALED_SYM_LOGISTIC:
        return 0.5 * (_logaddexp0(-2.0 * s) + _logaddexp0(2.0 * s))
    if kind is LossKind.SQRT:
        return math.sqrt(1.0 + s * s)
    if kind is LossKind.HUBER:
        return 0.5 * s * s if a <= 1.0 else a - 0.5
    if kind is LossKind.SYM_LOGISTIC:
        return 0.5 * (_logaddexp0(-s) + _logaddexp0(s))
    beta = spec.order
    c, r = higher_order_constants(beta)
    if a < r:
        return 0.5 * a * a - c * a ** (beta + 2.0) / (beta + 2.0)
    at_r = 0.5 * r * r - c * r ** (beta + 2.0) / (beta + 2.0)
    return at_r + (a - r)


def derivative_fn(spec: LossSpec) -> Callable[[float], float]:
    """ℓ′ como função escalar enxuta para os laços de iteração."""
    kind = spec.kind
    if kind is LossKind.RESCALED_SYM_LOGISTIC:
        return math.tanh
    if kind is LossKind.SQRT:
        return lambda s: s / math.sqrt(1.0 + s * s)
    if kind is LossKind.HUBER:
        return lambda s: -1.0 if s <= -1.0 else (1.0 if s >= 1.0 else s)
    if kind is LossKind.SYM_LOGISTIC:
        # ½(eˢ−1)/(eˢ+1) = ½·tanh(s/2)
        return lambda s: 0.5 * math.tanh(0.5 * s)
    beta = spec.order
    c, r = higher_order_constants(beta)

    def deriv(s: float) -> float:
        a = abs(s)
        if a < r:
            return s * (1.0 - c * a**beta)
        return 1.0 if s > 0 else -1.0

    return deriv


def loss_deriv(spec: LossSpec, s: float) -> float:
    return derivative_fn(spec)(s)


def ratio_fn(spec: LossSpec) -> Callable[[float], float]:
    deriv = derivative_fn(spec)
    at_zero = spec.second_deriv_at_zero

    def ratio(s: float) -> float:
        return deriv(s) / s if s != 0.0 else at_zero

    return ratio


def ratio_r(spec: LossSpec, s: float) -> float:
    """r(s) = ℓ′(s)/s, estendida continuamente por ℓ″(0) em s = 0."""
    return ratio_fn(spec)(s)


def certify_assumptions(spec: LossSpec, grid: Iterable[float]) -> CertReport:
    """
    Verifica, ponto a ponto na grade, |ℓ′(s)| ≤ min(1, |s|),
    r(s) ≤ 1 − c·|s|^β·1{|s| ≤ c} e, se C foi declarado, r(s) ≥ 1 − C·|s|^β.
    Não é uma prova: é o substituto testável das hipóteses analíticas.
    """
    points = [float(s) for s in grid]
    if not points:
        raise InvalidConfig("Grade de certificação vazia")
    if any(not (0.0 < s <= 10.0) for s in points):
        raise InvalidConfig("Grade de certificação deve estar em (0, 10]")

    deriv = derivative_fn(spec)
    beta, c, C = spec.beta, spec.c_lower, spec.c_upper
    worst = {"lipschitz": math.inf, "upper": math.inf}
    if C is not None and math.isfinite(beta):
        worst["lower"] = math.inf

    for s in points:
        d = deriv(s)
        r = d / s
        margin = min(1.0, s) - abs(d)
        worst["lipschitz"] = min(worst["lipschitz"], margin)
        if margin < -_MARGIN_TOL:
            raise CertificationFailed(spec.name, s, "|ℓ′(s)| ≤ min(1,|s|)", margin)

        if math.isinf(beta):
            bound = 1.0
        else:
            bound = 1.0 - c * s**beta if s <= c else 1.0
        margin = bound - r
        worst["upper"] = min(worst["upper"], margin)
        if margin < -_MARGIN_TOL:
            raise CertificationFailed(spec.name, s, "r(s) ≤ 1 − c|s|^β·1{|s|≤c}", margin)

        if "lower" in worst:
            margin = r - (1.0 - C * s**beta)
            worst["lower"] = min(worst["lower"], margin)
            if margin < -_MARGIN_TOL:
                raise CertificationFailed(spec.name, s, "r(s) ≥ 1 − C|s|^β", margin)

    logger.debug("Perda %s certificada em %d pontos: %s", spec.name, len(points), worst)
    return CertReport(loss_name=spec.name, points=len(points), worst_margins=worst)
