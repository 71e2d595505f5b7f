"""
Serviço de experimentos: executa uma varredura sobre a grade, ajusta as leis
de escala e grava o CSV, o resumo JSON e, em caso de falha, o manifesto.
"""
import functools
import hashlib
import json
import logging
import math
import traceback
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

import domain
from adapters.pandas_adapter import PandasAdapter
from adapters.sympy_adapter import SymPyAdapter
from domain.errors import DegenerateFit, EosError, InvalidConfig, SweepFailed
from domain.losses import parse_loss
from domain.models import (
    ExperimentKind,
    MeanModelConfig,
    Regime,
    ScalingFit,
    StopRule,
    SweepConfig,
    SweepResult,
)
from use_cases.mean_model_service import MeanModelService, first_threshold_eta
from use_cases.parallel import ordered_map
from use_cases.relu_net_service import ReluNetService, steepest_drop_eta
from use_cases.single_neuron_service import SingleNeuronService

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FIT_CUTOFF = math.exp(-2.0)
SLOPE_TOLERANCE = 0.15
BOUNCE_SLOPE_TOLERANCE = 0.2
LOG_RATIO_TOLERANCE = 0.2
CEILING_SLACK = 1e-9

GAP_LOSSES = ("higher-order:3/2", "higher-order:2", "higher-order:3", "higher-order:10")
BOUNCE_LOSSES = ("higher-order:4/3", "higher-order:3/2", "higher-order:2", "higher-order:4")

COLUMNS = {
    ExperimentKind.SINGLE_NEURON_GAP_SCALING: [
        "loss", "beta", "eta", "y_inf_sq", "gap", "limiting_sharpness", "iterations", "stop_reason"],
    ExperimentKind.SINGLE_NEURON_BOUNCE_COUNT: ["loss", "beta", "eta", "bounce_iters", "crossing_iter"],
    ExperimentKind.SINGLE_NEURON_SWEEP: [
        "eta", "limiting_sharpness", "gap_to_2_over_eta", "bounce_iters", "crossing_iter"],
    ExperimentKind.GRADIENT_FLOW_SHARPNESS: [
        "delta", "eta", "limiting_sharpness", "predicted", "tolerance", "within"],
    ExperimentKind.MEAN_MODEL_PHASE: ["seed", "A0", "eta", "eta_over_threshold", "b_inf", "regime"],
    ExperimentKind.RELU_PHASE: [
        "seed", "eta", "eta_over_threshold", "iterations", "b_final", "A_final", "sharpness", "test_acc",
        "regime"],
    ExperimentKind.RELU_VS_MEAN_MODEL: ["eta", "t_init", "max_b_deviation", "max_A_deviation"],
}


def fit_power_law(
    xs: Sequence[float],
    ys: Sequence[float],
    predicted_slope: float = math.nan,
    tolerance: float = SLOPE_TOLERANCE,
    x_below: Optional[float] = None,
    min_points: int = 8,
) -> ScalingFit:
    """Mínimos quadrados de log y contra log x, opcionalmente só com x < x_below."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise InvalidConfig("xs e ys devem ter o mesmo comprimento")
    if x_below is not None:
        keep = x < x_below
        x, y = x[keep], y[keep]
    if len(x) < min_points:
        raise DegenerateFit("pontos insuficientes", f"{len(x)} < {min_points}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DegenerateFit("valores não positivos no ajuste log-log")
    if np.all(x == x[0]):
        raise DegenerateFit("todos os x são iguais")
    res = linregress(np.log(x), np.log(y))
    r2 = float(res.rvalue) ** 2
    return ScalingFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r_squared=r2 if math.isfinite(r2) else 0.0,
        predicted_slope=predicted_slope,
        tolerance=tolerance,
        n_points=len(x),
    )


def default_eta_grid(beta: float, n: int = 20, max_bounce: float = 1e6, hi: float = 0.1) -> List[float]:
    """Grade log de η em [lo, hi] com lo ≥ 1e−4 e fase de quique ≲ max_bounce iterações."""
    exponent = max(beta / (beta - 1.0), 2.0)
    lo = max(1e-4, max_bounce ** (-1.0 / exponent))
    return [float(v) for v in np.geomspace(lo, hi, n)]


def config_hash(cfg: SweepConfig) -> str:
    """SHA-256 do JSON canônico da configuração efetiva (sem caminho nem paralelismo)."""
    payload = {
        "experiment": cfg.experiment.value,
        "grid": list(cfg.grid.values),
        "seed": cfg.seed,
        "params": cfg.params,
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _safe(fn: Callable, task: Tuple) -> Tuple[str, Any]:
    try:
        return "ok", fn(task)
    except EosError as e:
        return "error", {"point": list(task[1:]), "type": type(e).__name__, "message": str(e)}
    except Exception as e:
        return "error", {
            "point": list(task[1:]),
            "type": type(e).__name__,
            "message": str(e),
            "traceback": traceback.format_exc(),
        }


def _stop_rule(params: Dict[str, Any], **overrides) -> StopRule:
    base = {
        "tol_x": params.get("tol_x", 1e-12),
        "max_iters": int(params.get("max_iters", 10**8)),
        "record_every": int(params.get("record_every", 10**9)),
        "drift_tol": params.get("drift_tol", 1e-14),
    }
    base.update(overrides)
    return StopRule(**base)


def _tilde(params: Dict[str, Any]) -> Tuple[float, float]:
    return tuple(params.get("tilde", (3.0, math.sqrt(10.0))))


def _gap_point(task: Tuple) -> Dict[str, Any]:
    params, loss_name, eta = task
    service = SingleNeuronService(SymPyAdapter())
    loss = parse_loss(loss_name)
    start = service.init_from_delta(eta, params.get("delta", 1.0), Regime.EDGE_OF_STABILITY, _tilde(params))
    traj = service.run(start.x, start.y, loss, eta, _stop_rule(params))
    sharp = service.limiting_sharpness(traj)
    y_sq = traj.final_state.y ** 2
    return {
        "loss": loss.name, "beta": loss.beta, "eta": eta, "y_inf_sq": y_sq, "gap": 2.0 / eta - y_sq,
        "limiting_sharpness": sharp, "iterations": traj.iterations, "stop_reason": traj.stop_reason.value,
    }


def _bounce_point(task: Tuple) -> Dict[str, Any]:
    params, loss_name, eta = task
    service = SingleNeuronService(SymPyAdapter())
    loss = parse_loss(loss_name)
    start = service.init_from_delta(eta, params.get("delta", 1.0), Regime.EDGE_OF_STABILITY, _tilde(params))
    traj = service.run(start.x, start.y, loss, eta, _stop_rule(params, until_crossing=True, drift_tol=None))
    return {
        "loss": loss.name, "beta": loss.beta, "eta": eta,
        "bounce_iters": service.bouncing_iterations(traj), "crossing_iter": traj.crossing_iter,
    }


def _sweep_point(task: Tuple) -> Dict[str, Any]:
    params, loss_name, eta = task
    service = SingleNeuronService(SymPyAdapter())
    loss = parse_loss(loss_name)
    if "x0" in params and "y0" in params:
        x0, y0 = float(params["x0"]), float(params["y0"])
    else:
        start = service.init_from_delta(
            eta, params.get("delta", 1.0), Regime(params.get("regime", Regime.EDGE_OF_STABILITY.value)), _tilde(params))
        x0, y0 = start.x, start.y
    traj = service.run(x0, y0, loss, eta, _stop_rule(params))
    sharp = service.limiting_sharpness(traj)
    return {
        "eta": eta,
        "limiting_sharpness": sharp,
        "gap_to_2_over_eta": 2.0 / eta - sharp,
        "bounce_iters": service.bouncing_iterations(traj),
        "crossing_iter": traj.crossing_iter,
        "regime": service.classify_regime(x0, y0, eta).value,
        "y_inf_sq": traj.final_state.y ** 2,
    }


def _gf_point(task: Tuple) -> Dict[str, Any]:
    params, delta, eta = task
    service = SingleNeuronService(SymPyAdapter())
    loss = parse_loss(params.get("loss", "sqrt"))
    start = service.init_from_delta(eta, delta, Regime.GRADIENT_FLOW, _tilde(params))
    traj = service.run(start.x, start.y, loss, eta, _stop_rule(params))
    sharp = service.limiting_sharpness(traj)
    predicted = (2.0 - delta) / eta
    tolerance = max(5.0 * (2.0 - delta), 5.0 * eta / min(delta, 2.0 - delta))
    return {
        "delta": delta, "eta": eta, "limiting_sharpness": sharp, "predicted": predicted,
        "tolerance": tolerance, "within": abs(sharp - predicted) <= tolerance,
    }


def _mean_model_point(task: Tuple) -> Dict[str, Any]:
    params, seed, A0, eta = task
    service = MeanModelService()
    d = int(params.get("d", 200))
    cfg = MeanModelConfig(d=d, eta=eta, loss=parse_loss("sym-logistic"), A0=A0)
    stop = StopRule(tol_x=params.get("tol_A", 1e-12), max_iters=int(params.get("max_iters", 10**7)),
                    record_every=10**9)
    b_inf = service.mm_run(cfg, stop).b_inf
    K = params.get("K")
    return {
        "seed": seed, "A0": A0, "eta": eta, "eta_over_threshold": cfg.eta_ratio, "b_inf": b_inf,
        "regime": service.classify_bias(b_inf, eta, d, None if K is None else float(K), A0=A0).value,
    }


def _relu_point(task: Tuple) -> Dict[str, Any]:
    params, seed, eta = task
    service = ReluNetService()
    d, n = int(params.get("d", 200)), int(params.get("n", 300))
    result = service.eta_sweep(d, n, float(params.get("lambda", 3.0)), seed, [eta],
                               float(params.get("time_budget", 10.0)))
    return {"seed": seed, **result.rows[0]}


def _compare_point(task: Tuple) -> Dict[str, Any]:
    params, seed, eta = task
    service = ReluNetService()
    d, n = int(params.get("d", 200)), int(params.get("n", 300))
    ds = service.generate_dataset(d, n, float(params.get("lambda", 3.0)), seed)
    iters = service.iterations_for_budget(float(params.get("time_budget", 10.0)), eta)
    report = service.compare_to_mean_model(ds, service.init_params(d, seed), eta, iters,
                                           float(params.get("b_stop", -0.5)))
    return {
        "eta": eta, "t_init": report.t_init,
        "max_b_deviation": report.max_b_deviation, "max_A_deviation": report.max_A_deviation,
    }


class ExperimentService:
    """Serviço que orquestra os experimentos de varredura."""

    def __init__(self, pandas_adapter: Optional[PandasAdapter] = None):
        self.pandas_adapter = pandas_adapter or PandasAdapter()

    def run_experiment(self, cfg: SweepConfig, write: bool = True) -> SweepResult:
        """Executa o experimento da configuração e grava os artefatos em cfg.out_path."""
        logger.info("Experimento %s: %d pontos de grade, semente %d", cfg.experiment.value, len(cfg.grid), cfg.seed)
        fn, tasks = self._tasks(cfg)
        outcomes = ordered_map(functools.partial(_safe, fn), tasks, cfg.parallelism)

        rows = [value for status, value in outcomes if status == "ok"]
        failures = [value for status, value in outcomes if status == "error"]
        if failures:
            manifest = str(Path(cfg.out_path).with_suffix(".failure.json"))
            if write:
                self.pandas_adapter.write_rows(rows, cfg.out_path, self._columns(cfg, rows))
                self.pandas_adapter.write_json({
                    "experiment": cfg.experiment.value,
                    "config_hash": config_hash(cfg),
                    "completed_points": len(rows),
                    "failures": failures,
                }, manifest)
            for failure in failures:
                logger.error("Ponto %s falhou: %s: %s", failure["point"], failure["type"], failure["message"])
            raise SweepFailed(failures, manifest)

        result = self._summarize(cfg, rows)
        result.summary.update({
            "schema_version": SCHEMA_VERSION,
            "experiment": cfg.experiment.value,
            "version": domain.__version__,
            "seed": cfg.seed,
            "config_hash": config_hash(cfg),
            "config": {"grid": list(cfg.grid.values), "params": cfg.params},
            "n_points": len(rows),
            "fits": {name: {**asdict(fit), "passed": fit.passed} for name, fit in result.fits.items()},
        })
        result.summary["passed"] = result.passed
        if write:
            self.pandas_adapter.write_rows(rows, cfg.out_path, self._columns(cfg, rows))
            self.pandas_adapter.write_json(result.summary, str(Path(cfg.out_path).with_suffix(".json")))
        logger.info("Experimento %s concluído: %s", cfg.experiment.value, "passou" if result.passed else "falhou")
        return result

    @staticmethod
    def _columns(cfg: SweepConfig, rows: List[Dict[str, Any]]) -> List[str]:
        columns = list(COLUMNS[cfg.experiment])
        for row in rows:
            columns.extend(k for k in row if k not in columns)
        return columns

    @staticmethod
    def _seeds(cfg: SweepConfig) -> List[int]:
        n_seeds = int(cfg.params.get("n_seeds", 1))
        return [(cfg.seed + k) % 2**64 for k in range(n_seeds)]

    def _tasks(self, cfg: SweepConfig) -> Tuple[Callable, List[Tuple]]:
        params, etas, kind = cfg.params, list(cfg.grid.values), cfg.experiment
        if kind is ExperimentKind.SINGLE_NEURON_GAP_SCALING:
            losses = params.get("losses", GAP_LOSSES)
            return _gap_point, [(params, name, eta) for name in losses for eta in _etas_for(params, name, etas)]
        if kind is ExperimentKind.SINGLE_NEURON_BOUNCE_COUNT:
            losses = params.get("losses", BOUNCE_LOSSES)
            return _bounce_point, [(params, name, eta) for name in losses for eta in _etas_for(params, name, etas)]
        if kind is ExperimentKind.SINGLE_NEURON_SWEEP:
            return _sweep_point, [(params, params.get("loss", "sqrt"), eta) for eta in etas]
        if kind is ExperimentKind.GRADIENT_FLOW_SHARPNESS:
            deltas = params.get("deltas", (0.5, 1.0, 1.5))
            return _gf_point, [(params, float(delta), eta) for delta in deltas for eta in etas]
        if kind is ExperimentKind.MEAN_MODEL_PHASE:
            d = int(params.get("d", 200))
            if "A0" in params:
                starts = [(cfg.seed, float(params["A0"]))]
            else:
                starts = [(seed, ReluNetService.init_params(d, seed).A(d)) for seed in self._seeds(cfg)]
            return _mean_model_point, [(params, seed, A0, eta) for seed, A0 in starts for eta in etas]
        if kind is ExperimentKind.RELU_PHASE:
            return _relu_point, [(params, seed, eta) for seed in self._seeds(cfg) for eta in etas]
        if kind is ExperimentKind.RELU_VS_MEAN_MODEL:
            return _compare_point, [(params, seed, eta) for seed in self._seeds(cfg) for eta in etas]
        raise InvalidConfig(f"Experimento desconhecido: {kind}")

    def _summarize(self, cfg: SweepConfig, rows: List[Dict[str, Any]]) -> SweepResult:
        kind, params = cfg.experiment, cfg.params
        result = SweepResult(kind, rows)
        if kind is ExperimentKind.SINGLE_NEURON_GAP_SCALING:
            ceiling_ok = all(r["y_inf_sq"] <= 2.0 / r["eta"] + CEILING_SLACK for r in rows)
            result.summary["ceiling_ok"] = ceiling_ok
            for name, part in _group(rows, "loss").items():
                beta = part[0]["beta"]
                result.fits[name] = fit_power_law(
                    [r["eta"] for r in part], [r["gap"] for r in part],
                    predicted_slope=1.0 / (beta - 1.0),
                    tolerance=params.get("tolerance", SLOPE_TOLERANCE),
                    x_below=params.get("fit_below", FIT_CUTOFF),
                )
            result.summary["passed"] = ceiling_ok
        elif kind is ExperimentKind.SINGLE_NEURON_BOUNCE_COUNT:
            stable = True
            for name, part in _group(rows, "loss").items():
                beta = part[0]["beta"]
                etas = [r["eta"] for r in part]
                counts = [r["bounce_iters"] for r in part]
                if beta == 2.0:
                    ratios = np.array([c * e**2 / math.log(1.0 / e) for c, e in zip(counts, etas)])
                    median = float(np.median(ratios))
                    spread = float(np.max(np.abs(ratios / median - 1.0))) if median > 0 else math.inf
                    stable = spread <= params.get("ratio_tolerance", LOG_RATIO_TOLERANCE)
                    result.summary[f"{name}:log_ratio_spread"] = spread
                    continue
                result.fits[name] = fit_power_law(
                    etas, counts,
                    predicted_slope=-max(beta / (beta - 1.0), 2.0),
                    tolerance=params.get("tolerance", BOUNCE_SLOPE_TOLERANCE),
                )
            result.summary["passed"] = stable
        elif kind is ExperimentKind.SINGLE_NEURON_SWEEP:
            eos = [r for r in rows if r["regime"] == Regime.EDGE_OF_STABILITY.value]
            result.summary["ceiling_ok"] = all(r["y_inf_sq"] <= 2.0 / r["eta"] + CEILING_SLACK for r in eos)
            result.summary["passed"] = result.summary["ceiling_ok"]
        elif kind is ExperimentKind.GRADIENT_FLOW_SHARPNESS:
            result.summary["passed"] = all(r["within"] for r in rows)
        elif kind is ExperimentKind.MEAN_MODEL_PHASE:
            d = int(params.get("d", 200))
            threshold = 8.0 * math.pi / d**2
            window = params.get("transition_tolerance", 0.1)
            transitions = {str(seed): first_threshold_eta(part) for seed, part in _group(rows, "seed").items()}
            result.summary.update({"threshold": threshold, "transitions": transitions})
            result.summary["passed"] = all(
                t is not None and abs(t / threshold - 1.0) <= window for t in transitions.values())
        elif kind is ExperimentKind.RELU_PHASE:
            d = int(params.get("d", 200))
            threshold = 8.0 * math.pi / d**2
            transitions, knees = {}, {}
            for seed, part in _group(rows, "seed").items():
                transitions[str(seed)] = first_threshold_eta(part)
                knees[str(seed)] = steepest_drop_eta(part)
            above = [e for e in sorted(set(r["eta"] for r in rows)) if e > threshold]
            # a rede entra no regime de neurônio limiar já no primeiro η da grade acima de 8π/d²
            expected = above[0] if above else None
            result.summary.update({
                "threshold": threshold,
                "transitions": transitions,
                "knees": knees,
                "knee_over_threshold": {s: None if k is None else k / threshold for s, k in knees.items()},
                "first_eta_above_threshold": expected,
            })
            result.summary["passed"] = expected is not None and all(
                t == expected for t in transitions.values())
        elif kind is ExperimentKind.RELU_VS_MEAN_MODEL:
            tolerance = params.get("b_tolerance", 0.1)
            result.summary["b_tolerance"] = tolerance
            result.summary["passed"] = all(r["max_b_deviation"] <= tolerance for r in rows)
        return result


def _group(rows: List[Dict[str, Any]], key: str) -> Dict[Any, List[Dict[str, Any]]]:
    groups: Dict[Any, List[Dict[str, Any]]] = {}
    for row in rows:
        groups.setdefault(row[key], []).append(row)
    return groups


def _etas_for(params: Dict[str, Any], loss_name: str, etas: List[float]) -> List[float]:
    """Com auto_grid, cada perda usa default_eta_grid(β) com o mesmo número de pontos."""
    if not params.get("auto_grid", False):
        return etas
    beta = parse_loss(loss_name).beta
    return default_eta_grid(beta, n=len(etas), max_bounce=float(params.get("max_bounce", 1e6)))
