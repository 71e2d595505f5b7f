"""
Serviço da rede ReLU simplificada
    f(x; a⁻, a⁺, b) = a⁻·Σᵢ ReLU(−x[i] + b) + a⁺·Σᵢ ReLU(x[i] + b)
treinada por GD em lote completo na perda logística média, sobre dados
sintéticos de codificação esparsa.
"""
import functools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from domain.errors import InvalidConfig, KinkEncountered, NumericOverflow
from domain.losses import make_loss
from domain.models import (
    ComparisonReport,
    ExperimentKind,
    LossKind,
    MeanModelConfig,
    ReluParams,
    ReluTrajectory,
    SparseDataset,
    SweepResult,
)
from domain.numerics import RngStream, sym_eig_max
from use_cases.mean_model_service import MeanModelService, first_threshold_eta
from use_cases.parallel import ordered_map

logger = logging.getLogger(__name__)

KINK_TOL = 1e-12
INIT_COUNTER = 2**63
OVERFLOW_LIMIT = 1e300


@dataclass(frozen=True)
class _Features:
    """Somas por amostra: S± = Σ ReLU(±x + b) e N± = #{i : ±x[i] + b > 0}."""
    s_minus: np.ndarray
    s_plus: np.ndarray
    n_minus: np.ndarray
    n_plus: np.ndarray
    kinks: int


def _features(xs: np.ndarray, b: float) -> _Features:
    u_minus = b - xs
    u_plus = b + xs
    kinks = int(np.count_nonzero(np.abs(u_minus) <= KINK_TOL) + np.count_nonzero(np.abs(u_plus) <= KINK_TOL))
    return _Features(
        s_minus=np.maximum(u_minus, 0.0).sum(axis=1),
        s_plus=np.maximum(u_plus, 0.0).sum(axis=1),
        n_minus=(u_minus > 0.0).sum(axis=1).astype(float),
        n_plus=(u_plus > 0.0).sum(axis=1).astype(float),
        kinks=kinks,
    )


def _output(p: ReluParams, feats: _Features) -> np.ndarray:
    return p.a_minus * feats.s_minus + p.a_plus * feats.s_plus


def _param_jacobian(p: ReluParams, feats: _Features) -> np.ndarray:
    """Linhas ∇f = (S⁻, S⁺, a⁻N⁻ + a⁺N⁺) por amostra; ReLU′(0) = 0."""
    return np.column_stack([feats.s_minus, feats.s_plus, p.a_minus * feats.n_minus + p.a_plus * feats.n_plus])


def _logistic_deriv(z: np.ndarray) -> np.ndarray:
    """ℓ′_logi(z) = −σ(−z)."""
    return -expit(-z)


def _logistic_second(z: np.ndarray) -> np.ndarray:
    """ℓ″_logi(z) = σ(z)·σ(−z)."""
    return expit(z) * expit(-z)


class ReluNetService:
    """Serviço para o treino e os diagnósticos da rede ReLU de dois grupos."""

    def __init__(self, mean_model_service: Optional[MeanModelService] = None):
        self.mean_model_service = mean_model_service or MeanModelService()

    @staticmethod
    def generate_dataset(d: int, n: int, lam: float, seed: int) -> SparseDataset:
        """
        x⁽ⁱ⁾ = λ·y⁽ⁱ⁾·e_{j(i)} + ξ⁽ⁱ⁾. Ordem de consumo do RngStream(seed):
        n uniformes para os rótulos, n para os índices e n·d normais para o ruído.
        """
        if d < 1 or n < 1:
            raise InvalidConfig(f"Exige d ≥ 1 e n ≥ 1 (d={d}, n={n})")
        if lam < 0:
            raise InvalidConfig(f"λ deve ser não negativo: {lam}")
        if lam <= 1:
            logger.warning("λ = %g ≤ 1 fica fora do modelo de codificação esparsa", lam)
        stream = RngStream(seed)
        u, stream = stream.uniforms(n)
        ys = np.where(u < 0.5, -1.0, 1.0)
        u, stream = stream.uniforms(n)
        js = np.minimum((u * d).astype(np.int64), d - 1)
        noise, _ = stream.normals(n * d)
        xs = noise.reshape(n, d)
        # sinal na coordenada j(i)
        xs[np.arange(n), js] += lam * ys
        return SparseDataset(d=d, n=n, lam=lam, xs=xs, ys=ys, js=js, seed=seed)

    @staticmethod
    def test_dataset(ds: SparseDataset) -> SparseDataset:
        """Conjunto de teste do mesmo tamanho e distribuição, com semente seed + 1."""
        return ReluNetService.generate_dataset(ds.d, ds.n, ds.lam, (ds.seed + 1) % 2**64)

    @staticmethod
    def init_params(d: int, seed: int) -> ReluParams:
        """a± ~ N(0, 1/(2d)) e b = 0; sorteios do contador 2⁶³, disjuntos do conjunto de dados."""
        z, _ = RngStream(seed, INIT_COUNTER).normals(2)
        scale = math.sqrt(1.0 / (2.0 * d))
        return ReluParams(float(scale * z[0]), float(scale * z[1]), 0.0)

    @staticmethod
    def network_output(p: ReluParams, x: np.ndarray) -> np.ndarray:
        """f(x) para um vetor (d,) ou uma matriz (n, d)."""
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        out = _output(p, _features(xs, p.b))
        return out if np.ndim(x) > 1 else float(out[0])

    @staticmethod
    def mean_logistic_loss(ds: SparseDataset, p: ReluParams) -> float:
        margins = ds.ys * _output(p, _features(ds.xs, p.b))
        return float(np.mean(np.logaddexp(0.0, -margins)))

    @staticmethod
    def gradient(ds: SparseDataset, p: ReluParams) -> np.ndarray:
        """∇ da perda média em (a⁻, a⁺, b)."""
        feats = _features(ds.xs, p.b)
        margins = ds.ys * _output(p, feats)
        weights = _logistic_deriv(margins) * ds.ys
        return _param_jacobian(p, feats).T @ weights / ds.n

    @staticmethod
    def _hessian(ds: SparseDataset, p: ReluParams, feats: _Features) -> np.ndarray:
        if feats.kinks:
            raise KinkEncountered(feats.kinks)
        margins = ds.ys * _output(p, feats)
        jac = _param_jacobian(p, feats)
        curvature = (jac * _logistic_second(margins)[:, None]).T @ jac / ds.n
        weights = _logistic_deriv(margins) * ds.ys
        cross_minus = float(weights @ feats.n_minus) / ds.n
        cross_plus = float(weights @ feats.n_plus) / ds.n
        # termo de segunda ordem de f: só os blocos (a±, b) são não nulos
        second = np.array([
            [0.0, 0.0, cross_minus],
            [0.0, 0.0, cross_plus],
            [cross_minus, cross_plus, 0.0],
        ])
        return curvature + second

    def param_hessian(self, ds: SparseDataset, p: ReluParams) -> np.ndarray:
        return self._hessian(ds, p, _features(ds.xs, p.b))

    def param_hessian_sharpness(self, ds: SparseDataset, p: ReluParams) -> float:
        """λ_max da Hessiana 3×3 da perda média em (a⁻, a⁺, b)."""
        return sym_eig_max(self.param_hessian(ds, p))

    @staticmethod
    def test_accuracy(ds: SparseDataset, p: ReluParams) -> float:
        """Fração de amostras com sign(f(x)) = y; f(x) = 0 conta como erro."""
        preds = np.sign(_output(p, _features(ds.xs, p.b)))
        return float(np.mean(preds == ds.ys))

    def train_full_batch(
        self,
        ds: SparseDataset,
        p0: ReluParams,
        eta: float,
        iters: int,
        test: Optional[SparseDataset] = None,
        record_every: int = 1,
    ) -> ReluTrajectory:
        """GD em lote completo; grava parâmetros, perda, nitidez e acurácia de teste."""
        if iters < 1 or eta <= 0 or record_every < 1:
            raise InvalidConfig(f"Exige iters ≥ 1, η > 0 e record_every ≥ 1 (iters={iters}, η={eta})")
        test = test if test is not None else self.test_dataset(ds)
        logger.info("Treino ReLU: d=%d n=%d λ=%g η=%g iterações=%d", ds.d, ds.n, ds.lam, eta, iters)

        rows: Dict[str, List[float]] = {k: [] for k in ("t", "am", "ap", "b", "loss", "sharp", "acc")}
        kinks_seen = 0  # nitidez indefinida numa quina
        a_m, a_p, b = p0.a_minus, p0.a_plus, p0.b
        for t in range(iters + 1):
            p = ReluParams(a_m, a_p, b)
            feats = _features(ds.xs, b)
            margins = ds.ys * _output(p, feats)
            weights = _logistic_deriv(margins) * ds.ys
            jac = _param_jacobian(p, feats)

            if t % record_every == 0 or t == iters:
                try:
                    sharp = sym_eig_max(self._hessian(ds, p, feats))
                except KinkEncountered:
                    kinks_seen += 1
                    sharp = math.nan
                rows["t"].append(t)
                rows["am"].append(a_m)
                rows["ap"].append(a_p)
                rows["b"].append(b)
                rows["loss"].append(float(np.mean(np.logaddexp(0.0, -margins))))
                rows["sharp"].append(sharp)
                rows["acc"].append(self.test_accuracy(test, p))
            if t == iters:
                break

            grad = jac.T @ weights / ds.n
            a_m, a_p, b = a_m - eta * grad[0], a_p - eta * grad[1], b - eta * grad[2]
            if not max(abs(a_m), abs(a_p), abs(b)) <= OVERFLOW_LIMIT:
                raise NumericOverflow(t + 1, max(abs(a_m), abs(a_p), abs(b)))

        if kinks_seen:
            logger.warning("Nitidez indefinida (quina da ReLU) em %d iterados gravados", kinks_seen)
        logger.info("Treino ReLU concluído: b=%.6g A=%.6g", b, ds.d * (a_m + a_p))
        return ReluTrajectory(
            eta=eta, d=ds.d, ts=np.asarray(rows["t"], dtype=np.int64),
            a_minus=np.asarray(rows["am"]), a_plus=np.asarray(rows["ap"]), b=np.asarray(rows["b"]),
            loss=np.asarray(rows["loss"]), sharpness=np.asarray(rows["sharp"]),
            test_acc=np.asarray(rows["acc"]), iterations=iters,
        )

    @staticmethod
    def iterations_for_budget(time_budget: float, eta: float) -> int:
        """Número de iterações para o tempo decorrido t·η = time_budget."""
        return max(1, int(round(time_budget / eta)))

    def compare_to_mean_model(
        self,
        ds: SparseDataset,
        p0: ReluParams,
        eta: float,
        iters: int,
        b_stop: float = -0.5,
    ) -> ComparisonReport:
        """
        Treina a rede e roda o modelo médio com o mesmo (d, η, A0); mede os desvios
        máximos de b_t e A_t até a rede atingir b ≤ b_stop (ou até o fim).
        """
        if p0.b != 0.0:
            raise InvalidConfig(f"Comparação exige b0 = 0, recebido {p0.b}")
        net = self.train_full_batch(ds, p0, eta, iters)
        cfg = MeanModelConfig(d=ds.d, eta=eta, loss=make_loss(LossKind.SYM_LOGISTIC), A0=p0.A(ds.d))
        mm = self.mean_model_service.fixed_steps(cfg, iters)

        reached = np.flatnonzero(net.b <= b_stop)
        t_init = int(reached[0]) if reached.size else iters
        mm_b = pad_edge(mm.bs, iters + 1)
        mm_A = pad_edge(mm.As, iters + 1)
        window = slice(0, t_init + 1)
        report = ComparisonReport(
            t_init=t_init,
            max_b_deviation=float(np.max(np.abs(net.b[window] - mm_b[window]))),
            max_A_deviation=float(np.max(np.abs(net.A[window] - mm_A[window]))),
            network=net,
            mean_model=mm,
        )
        logger.info(
            "Rede vs modelo médio até t=%d: max|Δb|=%.4g max|ΔA|=%.4g",
            t_init, report.max_b_deviation, report.max_A_deviation,
        )
        return report

    def eta_sweep(
        self,
        d: int,
        n: int,
        lam: float,
        seed: int,
        etas: Sequence[float],
        time_budget: float = 10.0,
        parallelism: int = 1,
    ) -> SweepResult:
        """
        Viés final, A final e acurácia de teste por η, a tempo decorrido fixo. Cada b_final
        é classificado como no modelo médio, com A0 = d(a⁻ + a⁺) da inicialização.
        """
        run = functools.partial(_train_point, self, d, n, lam, seed, time_budget)
        results = ordered_map(run, [float(e) for e in etas], parallelism)
        threshold = 8.0 * math.pi / d**2
        A0 = self.init_params(d, seed).A(d)
        mean_model = MeanModelService()
        rows = []
        for eta, (iters, b_final, A_final, sharp, acc) in zip(etas, results):
            rows.append({
                "eta": float(eta),
                "eta_over_threshold": float(eta) / threshold,
                "iterations": iters,
                "b_final": b_final,
                "A_final": A_final,
                "sharpness": sharp,
                "test_acc": acc,
                "regime": mean_model.classify_bias(b_final, float(eta), d, A0=A0).value,
            })
        transition = first_threshold_eta(rows)
        knee = steepest_drop_eta(rows)
        summary = {
            "d": d, "n": n, "lambda": lam, "seed": seed, "time_budget": time_budget, "threshold": threshold,
            "transition_eta": transition,
            "transition_over_threshold": None if transition is None else transition / threshold,
            "knee_eta": knee,
            "knee_over_threshold": None if knee is None else knee / threshold,
        }
        logger.info("Rede ReLU semente %d: transição em η = %s, joelho em η = %s", seed, transition, knee)
        return SweepResult(ExperimentKind.RELU_PHASE, rows, summary)


def steepest_drop_eta(rows: Sequence[Dict], key: str = "b_final") -> Optional[float]:
    """
    Joelho da curva b × log η: média geométrica do par de η vizinhos onde b cai mais
    rápido. None com menos de dois pontos ou sem queda.
    """
    ordered = sorted(rows, key=lambda r: r["eta"])
    if len(ordered) < 2:
        return None
    log_eta = np.log([r["eta"] for r in ordered])
    values = np.array([r[key] for r in ordered], dtype=float)
    slopes = np.diff(values) / np.diff(log_eta)
    i = int(np.argmin(slopes))
    if not slopes[i] < 0:
        return None
    return float(math.exp(0.5 * (log_eta[i] + log_eta[i + 1])))


def pad_edge(values: np.ndarray, length: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if len(values) >= length:
        return values[:length]
    return np.pad(values, (0, length - len(values)), mode="edge")


def _train_point(
    service: ReluNetService, d: int, n: int, lam: float, seed: int, time_budget: float, eta: float
) -> Tuple[int, float, float, float, float]:
    ds = service.generate_dataset(d, n, lam, seed)
    iters = service.iterations_for_budget(time_budget, eta)
    traj = service.train_full_batch(ds, service.init_params(d, seed), eta, iters, record_every=iters)
    return iters, traj.b_final, float(traj.A[-1]), float(traj.sharpness[-1]), float(traj.test_acc[-1])
