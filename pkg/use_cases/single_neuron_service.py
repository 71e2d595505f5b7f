"""
Serviço da dinâmica de GD em f(x, y) = ℓ(xy).
Implementa o passo, os diagnósticos, a segmentação em fases, o regime
(fluxo gradiente ou edge of stability), a nitidez limite e o envelope
quasi-estático da fase de quique.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import bisect

from adapters.sympy_adapter import SymPyAdapter
from domain.errors import (
    HitAxisExactly,
    InvalidConfig,
    MaxItersExceeded,
    NoRoot,
    NotConverged,
    NotDifferentiable,
    NumericOverflow,
    OnInvariantLine,
)
from domain.losses import derivative_fn, ratio_fn
from domain.models import (
    LossKind,
    LossSpec,
    PhaseTag,
    Regime,
    State2D,
    StopReason,
    StopRule,
    Trajectory2D,
)
from domain.numerics import RngStream, rk4_integrate, sym_eig_max

logger = logging.getLogger(__name__)

OVERFLOW_LIMIT = 1e300
DEFAULT_TILDE = (3.0, math.sqrt(10.0))


class _Recorder:
    """Acumula os iterados gravados (a cada record_every) de uma execução."""

    def __init__(self, loss: LossSpec):
        self.ratio = ratio_fn(loss)
        self.ts: List[int] = []
        self.xs: List[float] = []
        self.ys: List[float] = []
        self.tags: List[PhaseTag] = []

    def add(self, t: int, x: float, y: float, tag: PhaseTag):
        self.ts.append(t)
        self.xs.append(x)
        self.ys.append(y)
        self.tags.append(tag)

    def build(self, eta, loss, iterations, reason, crossing, landing, below, at_or_below, band, tol_x):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        s = xs * ys
        r = np.array([self.ratio(v) for v in s], dtype=float)
        return Trajectory2D(
            eta=eta, loss=loss, ts=np.asarray(self.ts, dtype=np.int64), xs=xs, ys=ys,
            s=s, r=r, phase_tags=tuple(self.tags), iterations=iterations,
            stop_reason=reason, crossing_iter=crossing, landing_iter=landing,
            first_below=dict(below), first_at_or_below=dict(at_or_below), band=band, tol_x=tol_x,
        )


class SingleNeuronService:
    """Serviço para a dinâmica de GD do neurônio único."""

    def __init__(self, sympy_adapter: SymPyAdapter):
        self.sympy_adapter = sympy_adapter

    @staticmethod
    def gd_step(state: State2D, loss: LossSpec, eta: float) -> State2D:
        """Atualização simultânea das duas coordenadas com os valores pré-passo."""
        if eta <= 0:
            raise InvalidConfig(f"η deve ser positivo: {eta}")
        g = derivative_fn(loss)(state.x * state.y)
        x = state.x - eta * g * state.y
        y = state.y - eta * g * state.x
        for value in (x, y):
            if not math.isfinite(value) or abs(value) > OVERFLOW_LIMIT:
                raise NumericOverflow(1, value)
        return State2D(x, y)

    def hessian(self, state: State2D, loss: LossSpec) -> np.ndarray:
        """ℓ″(xy)·[y, x]ᵀ[y, x] + ℓ′(xy)·[[0, 1], [1, 0]]."""
        s = state.x * state.y
        if loss.kind is LossKind.HUBER and abs(s) == 1.0:
            raise NotDifferentiable(s)
        h2 = self.sympy_adapter.second_derivative(loss)(s)
        h1 = derivative_fn(loss)(s)
        v = np.array([state.y, state.x])
        return h2 * np.outer(v, v) + h1 * np.array([[0.0, 1.0], [1.0, 0.0]])

    @staticmethod
    def gf_conserved(state: State2D) -> float:
        """y² − x², conservada ao longo do fluxo gradiente."""
        return state.y**2 - state.x**2

    @staticmethod
    def classify_regime(x0: float, y0: float, eta: float) -> Regime:
        """Fluxo gradiente sse y0² − x0² < 2/η; o empate conta como EoS."""
        if abs(x0) == y0:
            raise OnInvariantLine(x0, y0)
        if not y0 > abs(x0) > 0 or eta <= 0:
            raise InvalidConfig(f"Exige y0 > |x0| > 0 e η > 0: ({x0}, {y0}, {eta})")
        return Regime.GRADIENT_FLOW if y0**2 - x0**2 < 2.0 / eta else Regime.EDGE_OF_STABILITY

    @staticmethod
    def init_from_delta(
        eta: float,
        delta: float,
        regime: Regime,
        tilde: Tuple[float, float] = DEFAULT_TILDE,
    ) -> State2D:
        """(x0, y0) = √((2 ∓ δ)/η)·(x̃, ỹ) com ỹ² − x̃² = 1."""
        xt, yt = tilde
        if not yt > xt > 0 or abs(yt**2 - xt**2 - 1.0) > 1e-12:
            raise InvalidConfig(f"(x̃, ỹ) = {tilde} deve ter ỹ > x̃ > 0 e ỹ² − x̃² = 1")
        if regime is Regime.GRADIENT_FLOW:
            if not 0 < delta < 2:
                raise InvalidConfig(f"Regime de fluxo gradiente exige δ ∈ (0, 2): {delta}")
            scale = math.sqrt((2.0 - delta) / eta)
        else:
            if delta <= 0:
                raise InvalidConfig(f"Regime EoS exige δ > 0: {delta}")
            scale = math.sqrt((2.0 + delta) / eta)
        return State2D(scale * xt, scale * yt)

    @staticmethod
    def perturbed_start(x0: float, eps: float, rng: RngStream) -> Tuple[float, RngStream]:
        z, rng = rng.normals(1)
        return x0 + eps * float(z[0]), rng

    def run(
        self,
        x0: float,
        y0: float,
        loss: LossSpec,
        eta: float,
        stop: StopRule = StopRule(),
    ) -> Trajectory2D:
        """
        Itera gd_step até |x_t| < tol_x (ou outro critério da StopRule) e preenche
        diagnósticos, fases, a iteração de cruzamento de 2/η e a de pouso no eixo.

        Fases: fluxo gradiente até a primeira troca de sinal de x; quique a partir
        dela enquanto η·y² > 2; convergência assim que η·y² ≤ 2. A iteração de
        pouso é a primeira com |s_t| < c ou com troca de sinal.
        """
        if eta <= 0:
            raise InvalidConfig(f"η deve ser positivo: {eta}")
        dl = derivative_fn(loss)
        c = loss.c_lower
        tol = stop.tol_x
        every = stop.record_every
        lo_m, hi_m = stop.band
        drift_tol = stop.drift_tol
        logger.info("GD em ℓ(xy): perda=%s η=%g início=(%g, %g)", loss.name, eta, x0, y0)

        rec = _Recorder(loss)
        x, y = float(x0), float(y0)
        t = 0
        bounced = False
        left_gf = False
        crossing: Optional[int] = None
        landing: Optional[int] = None
        below: Dict[float, int] = {}
        at_or_below: Dict[float, int] = {}
        band_pending = True

        def tag_for(level: float) -> PhaseTag:
            if level <= 2.0:
                return PhaseTag.CONVERGING
            if bounced:
                return PhaseTag.BOUNCING
            return PhaseTag.GRADIENT_FLOW_LIKE

        def track_band(level: float, t: int) -> bool:
            for m in (lo_m, hi_m):
                if m not in below and level < m:
                    below[m] = t
                if m not in at_or_below and level <= m:
                    at_or_below[m] = t
            return len(below) < 2 or len(at_or_below) < 2

        def finish(reason: StopReason, last_recorded: bool) -> Trajectory2D:
            if not last_recorded:
                rec.add(t, x, y, tag_for(eta * y * y))
            return rec.build(eta, loss, t, reason, crossing, landing, below, at_or_below, (lo_m, hi_m), tol)

        level = eta * y * y
        if abs(x * y) < c:
            left_gf = True
            landing = 0
        band_pending = track_band(level, 0)
        rec.add(0, x, y, tag_for(level))
        if abs(x) < tol:
            return finish(StopReason.CONVERGED, True)

        while True:
            g = dl(x * y)
            x_new = x - eta * g * y
            y_new = y - eta * g * x
            t += 1
            if not (abs(x_new) <= OVERFLOW_LIMIT and abs(y_new) <= OVERFLOW_LIMIT):
                raise NumericOverflow(t, x_new if not abs(x_new) <= OVERFLOW_LIMIT else y_new)
            if x_new * x < 0.0:
                bounced = True
            q = abs(x_new / x)
            x, y = x_new, y_new
            prev_level, level = level, eta * y * y

            if crossing is None and prev_level >= 2.0 and level < 2.0:
                crossing = t
            if x == 0.0 and level > 2.0:
                partial = finish(StopReason.HIT_AXIS, False)
                logger.warning("x_t = 0 exatamente na iteração %d com η·y² = %g", t, level)
                raise HitAxisExactly(t, partial)
            if not left_gf and abs(x * y) < c:
                left_gf = True
            if landing is None and (left_gf or bounced):
                landing = t
            if band_pending:
                band_pending = track_band(level, t)

            recorded = t % every == 0
            if recorded:
                rec.add(t, x, y, tag_for(level))

            if abs(x) < tol:
                reason = StopReason.CONVERGED
            elif stop.until_crossing and level < lo_m:
                reason = StopReason.CROSSED
            # cauda geométrica: Σ 2η x_t² ≤ 2η x²/(1 − q²)
            elif drift_tol is not None and level < 2.0 and q < 1.0 and \
                    2.0 * eta * x * x / (1.0 - q * q) < drift_tol:
                reason = StopReason.DRIFT
            elif t >= stop.max_iters:
                reason = StopReason.MAX_ITERS
            else:
                continue

            traj = finish(reason, recorded)
            logger.info("GD parou em t=%d (%s): x=%.3e y²=%.12g", t, reason.value, x, y * y)
            if reason is StopReason.MAX_ITERS:
                logger.warning("Limite de %d iterações atingido (|x| = %.3e)", stop.max_iters, abs(x))
                if stop.raise_on_max_iters:
                    raise MaxItersExceeded(stop.max_iters, traj)
            return traj

    def limiting_sharpness(self, traj: Trajectory2D) -> float:
        """
        λ_max da Hessiana no estado final. Se a execução parou pelo critério de
        deriva, usa o ponto limite (0, y_final), cujo y já não muda mais que drift_tol.
        """
        final = traj.final_state
        if not traj.converged:
            raise NotConverged(abs(final.x))
        point = final if traj.stop_reason is StopReason.CONVERGED else State2D(0.0, final.y)
        return sym_eig_max(self.hessian(point, traj.loss))

    def quasi_static_envelope(self, loss: LossSpec, eta: float, y: float) -> float:
        """Raiz positiva x de η·ℓ′(xy)·y = 2x (quique perfeito x_{t+1} = −x_t)."""
        if eta * loss.second_deriv_at_zero * y * y <= 2.0:
            raise NoRoot(eta, y)
        dl = derivative_fn(loss)

        def residual(x: float) -> float:
            return eta * dl(x * y) * y - 2.0 * x

        return bisect(residual, 1e-300, abs(y), xtol=1e-13, maxiter=500)

    def quasi_static_trace(self, traj: Trajectory2D) -> np.ndarray:
        """Raiz do envelope em cada iterado gravado acima do limiar (NaN abaixo)."""
        out = np.full(len(traj), np.nan)
        threshold = 2.0 / (traj.eta * traj.loss.second_deriv_at_zero)
        for i, y in enumerate(traj.ys):
            if y * y > threshold:
                out[i] = self.quasi_static_envelope(traj.loss, traj.eta, float(y))
        return out

    @staticmethod
    def bouncing_iterations(traj: Trajectory2D, lo_mult: float = 2.0, hi_mult: float = 3.0) -> int:
        """Número de iterações com y_t² ∈ [lo/η, hi/η]."""
        if not lo_mult < hi_mult:
            raise InvalidConfig(f"Exige lo_mult < hi_mult: {lo_mult}, {hi_mult}")
        if len(traj) == traj.iterations + 1:
            level = traj.eta * traj.ys**2
            return int(np.count_nonzero((level >= lo_mult) & (level <= hi_mult)))
        # trajetória amostrada: y_t é não crescente, então a faixa é um intervalo de t
        if (lo_mult, hi_mult) != tuple(traj.band):
            raise InvalidConfig(f"Faixa [{lo_mult}, {hi_mult}] não foi acompanhada nesta execução")
        end = traj.first_below.get(lo_mult, traj.iterations + 1)
        start = traj.first_at_or_below.get(hi_mult, traj.iterations + 1)
        return max(0, end - start)

    @staticmethod
    def gradient_flow(x0: float, y0: float, loss: LossSpec, t_end: float, dt: float = 1e-4) -> np.ndarray:
        """Fluxo gradiente ẋ = −ℓ′(xy)y, ẏ = −ℓ′(xy)x integrado por RK4; colunas (x, y)."""
        dl = derivative_fn(loss)

        def rhs(v: np.ndarray) -> np.ndarray:
            g = dl(v[0] * v[1])
            return np.array([-g * v[1], -g * v[0]])

        return rk4_integrate(rhs, (x0, y0), t_end, dt)

    def step_size_family(
        self,
        loss: LossSpec,
        x0: float,
        y0: float,
        two_over_eta: Sequence[float] = (9.0, 7.0, 5.0, 3.0),
        stop: StopRule = StopRule(drift_tol=1e-14),
    ) -> List[dict]:
        """Nitidez final de GD a partir do mesmo início para vários passos."""
        rows = []
        for k in two_over_eta:
            eta = 2.0 / k
            traj = self.run(x0, y0, loss, eta, stop)
            rows.append({
                "two_over_eta": k,
                "eta": eta,
                "regime": self.classify_regime(x0, y0, eta).value,
                "limiting_sharpness": self.limiting_sharpness(traj),
                "iterations": traj.iterations,
            })
        return rows
