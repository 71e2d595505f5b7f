"""
Serviço do modelo médio (A, b) da rede ReLU de duas camadas.
A_t = d·(a⁻_t + a⁺_t) e b_t é o viés comum; a perda é a logística simetrizada.
"""
import functools
import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import bisect

from domain.errors import HitAxisExactly, InvalidConfig, MaxItersExceeded, NumericOverflow
from domain.losses import derivative_fn, make_loss
from domain.models import (
    BiasRegime,
    ExperimentKind,
    LossKind,
    MeanModelConfig,
    MeanModelState,
    MeanModelTrajectory,
    StopReason,
    StopRule,
    SweepResult,
)
from domain.numerics import rk4_integrate, std_normal_cdf
from domain.smoothed_relu import kappa_table, smoothed_relu, smoothed_relu_inverse
from use_cases.parallel import ordered_map

logger = logging.getLogger(__name__)

OVERFLOW_LIMIT = 1e300


def gf_mm_gamma(delta: float, A0: float) -> float:
    """γ = (1/200)·min{δ, 8 − δ, (8 − δ)/|A0|}, para η = (8 − δ)π/d²."""
    if not 0 < delta < 8 or A0 == 0:
        raise InvalidConfig(f"γ exige δ ∈ (0, 8) e A0 ≠ 0 (δ={delta}, A0={A0})")
    return min(delta, 8.0 - delta, (8.0 - delta) / abs(A0)) / 200.0


def small_bias_constant(A0: float, eta: float, d: int) -> float:
    """
    K = |A0|·η d²/γ(δ) com δ = 8 − η d²/π, de modo que K/d² é a cota |A0|·η/γ do viés
    limite no regime de viés pequeno. Fora de δ ∈ (0, 8) usa δ = 1 (η d² = 7π).
    """
    if A0 == 0:
        return 0.0
    eta_d2 = eta * d**2
    delta = 8.0 - eta_d2 / math.pi
    if not 0 < delta < 8:
        delta, eta_d2 = 1.0, 7.0 * math.pi
    return abs(A0) * eta_d2 / gf_mm_gamma(delta, A0)


def first_threshold_eta(rows: Sequence[Dict]) -> Optional[float]:
    """Primeiro η (em ordem crescente) classificado como neurônio limiar."""
    for row in sorted(rows, key=lambda r: r["eta"]):
        if row["regime"] == BiasRegime.THRESHOLD_NEURON.value:
            return row["eta"]
    return None


class MeanModelService:
    """Serviço para a dinâmica de GD do modelo médio."""

    @staticmethod
    def mm_step(state: MeanModelState, cfg: MeanModelConfig) -> MeanModelState:
        """Atualização simultânea de (A, b) com os valores pré-passo."""
        dl = derivative_fn(cfg.loss)
        g = smoothed_relu(state.b)
        lp = dl(state.A * g)
        A = state.A - 2.0 * cfg.d**2 * cfg.eta * lp * g
        b = state.b - cfg.eta * lp * state.A * std_normal_cdf(state.b)
        for value in (A, b):
            if not abs(value) <= OVERFLOW_LIMIT:
                raise NumericOverflow(1, value)
        return MeanModelState(A, b)

    @staticmethod
    def mm_conserved(state: MeanModelState, cfg: MeanModelConfig) -> float:
        """½A² − 2d²·κ(b), constante ao longo do fluxo gradiente."""
        return 0.5 * state.A**2 - 2.0 * cfg.d**2 * kappa_table()(state.b)

    @staticmethod
    def mm_minimizer_sharpness(b: float, d: int) -> float:
        """½d²g(b)²: maior autovalor da Hessiana num minimizador global com viés b."""
        return 0.5 * d**2 * smoothed_relu(b) ** 2

    def mm_run(
        self,
        cfg: MeanModelConfig,
        stop: StopRule = StopRule(),
        with_conserved: bool = False,
    ) -> MeanModelTrajectory:
        """
        Itera mm_step até |A| < tol_x, ou até b estagnar (variação relativa menor
        que stall_rel em stall_window passos), ou até max_iters.
        """
        d2, eta = cfg.d**2, cfg.eta
        dl = derivative_fn(cfg.loss)
        limit = 2.0 / eta
        tol = stop.tol_x
        every = stop.record_every

        delta = 8.0 - eta * d2 / math.pi
        if 0 < delta < 8 and cfg.A0 != 0:
            gamma = gf_mm_gamma(delta, cfg.A0)
            logger.info(
                "Modelo médio d=%d η=%g (η/η*=%.4f) A0=%g: γ=%.3e, η ≤ γ/|A0| é %s",
                cfg.d, eta, cfg.eta_ratio, cfg.A0, gamma, eta <= gamma / abs(cfg.A0),
            )
        else:
            logger.info("Modelo médio d=%d η=%g (η/η*=%.4f) A0=%g", cfg.d, eta, cfg.eta_ratio, cfg.A0)
        if cfg.b0 != 0.0:
            logger.warning("b0 = %g ≠ 0 fica fora das hipóteses dos teoremas do modelo médio", cfg.b0)

        A, b = float(cfg.A0), float(cfg.b0)
        ts: List[int] = [0]
        As: List[float] = [A]
        bs: List[float] = [b]
        t = 0
        crossing: Optional[int] = None
        g = smoothed_relu(b)
        # proxy de nitidez já abaixo de 2/η na largada
        if 0.5 * d2 * g * g < limit:
            crossing = 0
        b_ref = b  # referência da janela de estagnação

        def build(reason: StopReason, recorded: bool) -> MeanModelTrajectory:
            if not recorded:
                ts.append(t)
                As.append(A)
                bs.append(b)
            b_arr = np.asarray(bs)
            g_arr = np.array([smoothed_relu(v) for v in b_arr])
            conserved = None
            if with_conserved:
                conserved = np.array([
                    self.mm_conserved(MeanModelState(a, v), cfg) for a, v in zip(As, bs)
                ])
            return MeanModelTrajectory(
                cfg=cfg, ts=np.asarray(ts, dtype=np.int64), As=np.asarray(As), bs=b_arr,
                sharp_proxy=0.5 * d2 * g_arr**2, iterations=t, stop_reason=reason,
                crossing_iter=crossing, conserved=conserved,
            )

        if abs(A) < tol:
            return build(StopReason.CONVERGED, True)

        while True:
            lp = dl(A * g)
            A_new = A - 2.0 * d2 * eta * lp * g
            b_new = b - eta * lp * A * std_normal_cdf(b)
            t += 1
            if not (abs(A_new) <= OVERFLOW_LIMIT and abs(b_new) <= OVERFLOW_LIMIT):
                raise NumericOverflow(t, A_new if not abs(A_new) <= OVERFLOW_LIMIT else b_new)
            A, b = A_new, b_new
            g = smoothed_relu(b)
            proxy = 0.5 * d2 * g * g
            if crossing is None and proxy < limit:
                crossing = t
            # A = 0 exato com nitidez acima de 2/η: ponto fixo instável
            if A == 0.0 and proxy > limit:
                partial = build(StopReason.HIT_AXIS, False)
                raise HitAxisExactly(t, partial)

            recorded = t % every == 0
            if recorded:
                ts.append(t)
                As.append(A)
                bs.append(b)

            if abs(A) < tol:
                reason = StopReason.CONVERGED
            elif t % stop.stall_window == 0 and abs(b - b_ref) <= stop.stall_rel * abs(b_ref):
                reason = StopReason.STALLED
            elif t >= stop.max_iters:
                reason = StopReason.MAX_ITERS
            else:
                if t % stop.stall_window == 0:
                    b_ref = b
                continue

            traj = build(reason, recorded)
            logger.info("Modelo médio parou em t=%d (%s): A=%.3e b∞=%.10g", t, reason.value, A, b)
            if reason is StopReason.MAX_ITERS:
                logger.warning("Limite de %d iterações atingido (|A| = %.3e)", stop.max_iters, abs(A))
                if stop.raise_on_max_iters:
                    raise MaxItersExceeded(stop.max_iters, traj)
            return traj

    def fixed_steps(self, cfg: MeanModelConfig, steps: int) -> MeanModelTrajectory:
        """Exatamente `steps` passos, sem critério de parada (comparação com a rede)."""
        stop = StopRule(tol_x=1e-300, max_iters=steps, stall_rel=0.0, stall_window=steps + 1)
        return self.mm_run(cfg, stop)

    @staticmethod
    def mean_model_flow(A0: float, b0: float, d: int, t_end: float, dt: float = 1e-3) -> np.ndarray:
        """Fluxo gradiente Ȧ = −2d²ℓ′(Ag)g, ḃ = −ℓ′(Ag)·A·Φ(b) por RK4; colunas (A, b)."""
        d2 = float(d) ** 2
        dl = derivative_fn(make_loss(LossKind.SYM_LOGISTIC))

        def rhs(v: np.ndarray) -> np.ndarray:
            g = smoothed_relu(v[1])
            lp = dl(v[0] * g)
            return np.array([-2.0 * d2 * lp * g, -lp * v[0] * std_normal_cdf(v[1])])

        return rk4_integrate(rhs, (A0, b0), t_end, dt)

    @staticmethod
    def gf_limit_bias(A0: float, d: int) -> float:
        """b∞ do fluxo gradiente: raiz de κ(b) = −A0²/(4d²) em [−10, 0]."""
        target = -A0**2 / (4.0 * d**2)
        table = kappa_table()
        if target == 0.0:
            return 0.0
        if table(-10.0) > target:
            raise InvalidConfig(f"κ(b) = {target:g} não tem raiz em [−10, 0]")
        return bisect(lambda b: table(b) - target, -10.0, 0.0, xtol=1e-13, maxiter=200)

    @staticmethod
    def threshold_bias_bound(eta: float, d: int) -> float:
        """g⁻¹(2/√(η d²)): teto do viés limite no regime EoS."""
        return smoothed_relu_inverse(2.0 / math.sqrt(eta * d**2))

    def classify_bias(
        self, b_inf: float, eta: float, d: int, K: Optional[float] = None, A0: float = 1.0
    ) -> BiasRegime:
        """
        Neurônio limiar se η > 8π/d² e b∞ ≤ g⁻¹(2/√(η d²)); viés pequeno se |b∞| ≤ K/d².
        Sem K, usa small_bias_constant(A0, η, d).
        """
        threshold = 8.0 * math.pi / d**2
        if eta > threshold and b_inf <= self.threshold_bias_bound(eta, d) + 1e-9:
            return BiasRegime.THRESHOLD_NEURON
        if K is None:
            K = small_bias_constant(A0, eta, d)
        if abs(b_inf) <= K / d**2:
            return BiasRegime.SMALL_BIAS
        return BiasRegime.UNCOVERED

    def phase_transition_sweep(
        self,
        d: int,
        A0: float,
        eta_grid: Sequence[float],
        K: Optional[float] = None,
        stop: StopRule = StopRule(),
        parallelism: int = 1,
    ) -> SweepResult:
        """
        Roda mm_run para cada η e classifica b∞. A transição empírica é o primeiro η
        (em ordem crescente) classificado como neurônio limiar.
        """
        etas = [float(e) for e in eta_grid]
        if not etas:
            raise InvalidConfig("Grade de η vazia")
        threshold = 8.0 * math.pi / d**2
        if not (min(etas) < threshold < max(etas)):
            logger.warning("Grade de η não cobre os dois lados de 8π/d² = %.4e", threshold)

        run_point = functools.partial(_run_point, self, d, A0, stop)
        b_infs = ordered_map(run_point, etas, parallelism)

        rows: List[Dict] = []
        for eta, b_inf in zip(etas, b_infs):
            K_eta = small_bias_constant(A0, eta, d) if K is None else K
            rows.append({
                "eta": eta,
                "eta_over_threshold": eta / threshold,
                "b_inf": b_inf,
                "regime": self.classify_bias(b_inf, eta, d, K_eta).value,
                "K": K_eta,
            })

        transition = first_threshold_eta(rows)
        summary = {
            "d": d,
            "A0": A0,
            "threshold": threshold,
            "K": K,
            "transition_eta": transition,
            "transition_over_threshold": None if transition is None else transition / threshold,
        }
        logger.info("Transição empírica em η = %s (limiar %.4e)", transition, threshold)
        return SweepResult(ExperimentKind.MEAN_MODEL_PHASE, rows, summary)


def _run_point(service: MeanModelService, d: int, A0: float, stop: StopRule, eta: float) -> float:
    cfg = MeanModelConfig(d=d, eta=eta, loss=make_loss(LossKind.SYM_LOGISTIC), A0=A0)
    return service.mm_run(cfg, stop).b_inf
