"""
Modelos de domínio do laboratório.
Contém os valores imutáveis trocados entre serviços: perdas, estados,
trajetórias, configurações e resultados de varreduras.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from domain.errors import InvalidConfig


class LossKind(str, Enum):
    RESCALED_SYM_LOGISTIC = "rsym-logistic"
    SQRT = "sqrt"
    HUBER = "huber"
    HIGHER_ORDER = "higher-order"
    SYM_LOGISTIC = "sym-logistic"


class PhaseTag(str, Enum):
    GRADIENT_FLOW_LIKE = "gradient-flow"
    BOUNCING = "bouncing"
    CONVERGING = "converging"


class Regime(str, Enum):
    GRADIENT_FLOW = "gradient-flow"
    EDGE_OF_STABILITY = "edge-of-stability"


class StopReason(str, Enum):
    CONVERGED = "converged"
    DRIFT = "drift"
    CROSSED = "crossed"
    STALLED = "stalled"
    MAX_ITERS = "max-iters"
    HIT_AXIS = "hit-axis"


class BiasRegime(str, Enum):
    SMALL_BIAS = "small-bias"
    THRESHOLD_NEURON = "threshold-neuron"
    UNCOVERED = "uncovered"


class ExperimentKind(str, Enum):
    SINGLE_NEURON_GAP_SCALING = "single-neuron-gap-scaling"
    SINGLE_NEURON_BOUNCE_COUNT = "single-neuron-bounce-count"
    SINGLE_NEURON_SWEEP = "single-neuron-sweep"
    GRADIENT_FLOW_SHARPNESS = "gradient-flow-sharpness"
    MEAN_MODEL_PHASE = "mean-model-phase"
    RELU_PHASE = "relu-phase"
    RELU_VS_MEAN_MODEL = "relu-vs-mean-model"


@dataclass(frozen=True)
class LossSpec:
    """Perda unidimensional ℓ com os metadados declarados das hipóteses."""
    kind: LossKind
    beta: float
    c_lower: float
    second_deriv_at_zero: float
    c_upper: Optional[float] = None
    order: Optional[float] = None

    @property
    def name(self) -> str:
        if self.kind is LossKind.HIGHER_ORDER:
            return f"{self.kind.value}:{self.order:g}"
        return self.kind.value

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class CertReport:
    """Resultado da certificação pontual das hipóteses numa grade."""
    loss_name: str
    points: int
    worst_margins: Dict[str, float]
    passed: bool = True


@dataclass(frozen=True)
class State2D:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidConfig(f"Estado não finito: ({self.x}, {self.y})")


@dataclass(frozen=True)
class StepDiag:
    """Diagnósticos de um iterado: s, r, D, δ, ρ e a nitidez se convergisse ali."""
    s: float
    r: float
    D: float
    delta: float
    rho: float
    sharp_if_converged: float


@dataclass(frozen=True)
class StopRule:
    tol_x: float = 1e-12
    max_iters: int = 10**8
    record_every: int = 1
    drift_tol: Optional[float] = None
    until_crossing: bool = False
    band: Tuple[float, float] = (2.0, 3.0)
    raise_on_max_iters: bool = False
    # modelo médio: estagnação relativa de b numa janela
    stall_rel: float = 1e-15
    stall_window: int = 10_000

    def __post_init__(self):
        if self.tol_x <= 0 or self.max_iters < 1 or self.record_every < 1:
            raise InvalidConfig("StopRule exige tol_x > 0, max_iters ≥ 1 e record_every ≥ 1")
        if not self.band[0] < self.band[1]:
            raise InvalidConfig(f"Faixa inválida {self.band}")


@dataclass(frozen=True, eq=False)
class Trajectory2D:
    """Histórico (possivelmente amostrado) de GD em f(x, y) = ℓ(xy)."""
    eta: float
    loss: LossSpec
    ts: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    s: np.ndarray
    r: np.ndarray
    phase_tags: Tuple[PhaseTag, ...]
    iterations: int
    stop_reason: StopReason
    crossing_iter: Optional[int] = None
    landing_iter: Optional[int] = None
    # primeiro t com η·y_t² < m (estrito) e com η·y_t² ≤ m, por multiplicador m
    first_below: Dict[float, int] = field(default_factory=dict)
    first_at_or_below: Dict[float, int] = field(default_factory=dict)
    band: Tuple[float, float] = (2.0, 3.0)
    tol_x: float = 1e-12

    def __len__(self) -> int:
        return len(self.ts)

    @property
    def states(self) -> List[State2D]:
        return [State2D(float(x), float(y)) for x, y in zip(self.xs, self.ys)]

    @property
    def D(self) -> np.ndarray:
        return self.ys**2 - self.xs**2

    @property
    def delta(self) -> np.ndarray:
        return self.eta * self.ys**2 - 2.0

    @property
    def diags(self) -> List[StepDiag]:
        sharp = self.loss.second_deriv_at_zero * self.ys**2
        return [
            StepDiag(float(s), float(r), float(D), float(dl), float(-dl), float(h))
            for s, r, D, dl, h in zip(self.s, self.r, self.D, self.delta, sharp)
        ]

    @property
    def final_state(self) -> State2D:
        return State2D(float(self.xs[-1]), float(self.ys[-1]))

    @property
    def converged(self) -> bool:
        return self.stop_reason in (StopReason.CONVERGED, StopReason.DRIFT)

    @property
    def max_iters_exceeded(self) -> bool:
        return self.stop_reason is StopReason.MAX_ITERS


@dataclass(frozen=True)
class MeanModelState:
    A: float
    b: float


@dataclass(frozen=True)
class MeanModelConfig:
    d: int
    eta: float
    loss: LossSpec
    A0: float
    b0: float = 0.0

    def __post_init__(self):
        if self.d < 1 or self.eta <= 0:
            raise InvalidConfig(f"Modelo médio exige d ≥ 1 e η > 0 (d={self.d}, η={self.eta})")
        if self.loss.kind is not LossKind.SYM_LOGISTIC:
            raise InvalidConfig(f"Modelo médio usa a logística simetrizada, recebido {self.loss.name}")

    @property
    def threshold(self) -> float:
        """Passo crítico η* = 8π/d²."""
        return 8.0 * math.pi / self.d**2

    @property
    def eta_ratio(self) -> float:
        return self.eta / self.threshold

    @property
    def initial_state(self) -> MeanModelState:
        return MeanModelState(self.A0, self.b0)


@dataclass(frozen=True, eq=False)
class MeanModelTrajectory:
    cfg: MeanModelConfig
    ts: np.ndarray
    As: np.ndarray
    bs: np.ndarray
    sharp_proxy: np.ndarray
    iterations: int
    stop_reason: StopReason
    crossing_iter: Optional[int] = None
    conserved: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.ts)

    @property
    def b_inf(self) -> float:
        return float(self.bs[-1])

    @property
    def A_final(self) -> float:
        return float(self.As[-1])

    @property
    def converged(self) -> bool:
        return self.stop_reason in (StopReason.CONVERGED, StopReason.STALLED)

    def longest_sign_alternation(self) -> int:
        return longest_sign_alternation(self.As)


def longest_sign_alternation(values: np.ndarray) -> int:
    """Maior sequência de trocas de sinal consecutivas numa série."""
    signs = np.sign(np.asarray(values, dtype=float))
    flips = (signs[1:] * signs[:-1]) < 0
    best = run = 0
    for flip in flips:
        run = run + 1 if flip else 0
        best = max(best, run)
    return best


@dataclass(frozen=True, eq=False)
class SparseDataset:
    """Amostras x = λ·y·e_j + ξ do modelo de codificação esparsa."""
    d: int
    n: int
    lam: float
    xs: np.ndarray
    ys: np.ndarray
    js: np.ndarray
    seed: int


@dataclass(frozen=True)
class ReluParams:
    a_minus: float
    a_plus: float
    b: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a_minus, self.a_plus, self.b)):
            raise InvalidConfig(f"Parâmetros não finitos: {self}")

    def A(self, d: int) -> float:
        return d * (self.a_minus + self.a_plus)

    def as_array(self) -> np.ndarray:
        return np.array([self.a_minus, self.a_plus, self.b], dtype=float)


@dataclass(frozen=True, eq=False)
class ReluTrajectory:
    eta: float
    d: int
    ts: np.ndarray
    a_minus: np.ndarray
    a_plus: np.ndarray
    b: np.ndarray
    loss: np.ndarray
    sharpness: np.ndarray
    test_acc: np.ndarray
    iterations: int

    @property
    def A(self) -> np.ndarray:
        return self.d * (self.a_minus + self.a_plus)

    @property
    def b_final(self) -> float:
        return float(self.b[-1])

    @property
    def final_params(self) -> ReluParams:
        return ReluParams(float(self.a_minus[-1]), float(self.a_plus[-1]), float(self.b[-1]))

    def longest_sign_alternation(self) -> int:
        return longest_sign_alternation(self.A)


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    t_init: int
    max_b_deviation: float
    max_A_deviation: float
    network: ReluTrajectory
    mean_model: MeanModelTrajectory


@dataclass(frozen=True)
class GridSpec:
    """Grade de parâmetros: 'log:lo:hi:n', 'lin:lo:hi:n' ou 'list:v1,v2,...'."""
    kind: str
    values: Tuple[float, ...]

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        kind, _, rest = text.partition(":")
        try:
            if kind == "list":
                values = tuple(float(v) for v in rest.split(",") if v.strip())
            elif kind in ("log", "lin"):
                lo_s, hi_s, n_s = rest.split(":")
                lo, hi, n = float(lo_s), float(hi_s), int(n_s)
                if not lo < hi or n < 1:
                    raise InvalidConfig(f"Grade exige lo < hi e n ≥ 1: {text!r}")
                if kind == "log":
                    if lo <= 0:
                        raise InvalidConfig(f"Grade log exige lo > 0: {text!r}")
                    values = tuple(float(v) for v in np.geomspace(lo, hi, n))
                else:
                    values = tuple(float(v) for v in np.linspace(lo, hi, n))
            else:
                raise InvalidConfig(f"Tipo de grade desconhecido: {text!r}")
        except ValueError as exc:
            if isinstance(exc, InvalidConfig):
                raise
            raise InvalidConfig(f"Grade malformada: {text!r}") from exc
        if not values:
            raise InvalidConfig(f"Grade vazia: {text!r}")
        return cls(kind=kind, values=values)

    @classmethod
    def of(cls, values) -> "GridSpec":
        values = tuple(float(v) for v in values)
        if not values:
            raise InvalidConfig("Grade vazia")
        return cls(kind="list", values=values)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    predicted_slope: float
    tolerance: float
    n_points: int
    min_r_squared: float = 0.98

    @property
    def passed(self) -> bool:
        return (
            abs(self.slope - self.predicted_slope) <= self.tolerance
            and self.r_squared >= self.min_r_squared
        )


@dataclass(frozen=True)
class SweepConfig:
    experiment: ExperimentKind
    grid: GridSpec
    seed: int = 0
    out_path: str = "sweep.csv"
    parallelism: int = 1
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.parallelism < 1:
            raise InvalidConfig("parallelism deve ser ≥ 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig(f"Semente fora de u64: {self.seed}")


@dataclass
class SweepResult:
    """Linhas da varredura (em ordem de grade) mais o resumo e os ajustes."""
    experiment: ExperimentKind
    rows: List[Dict[str, Any]]
    summary: Dict[str, Any] = field(default_factory=dict)
    fits: Dict[str, ScalingFit] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(fit.passed for fit in self.fits.values()) and self.summary.get("passed", True)
