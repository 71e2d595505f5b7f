"""
Comandos `mean-model run` e `mean-model sweep`.
"""
import logging
from typing import Any, Dict

from adapters.pandas_adapter import PandasAdapter
from domain.losses import make_loss
from domain.models import GridSpec, LossKind, MeanModelConfig, StopRule
from presentation.components.output import maybe_emit_plot, write_summary
from use_cases.mean_model_service import MeanModelService

logger = logging.getLogger(__name__)

RUN_DEFAULTS: Dict[str, Any] = {
    "d": 200,
    "eta": 2.5e-3,
    "A0": 1.0,
    "b0": 0.0,
    "tol_A": 1e-12,
    "max_iters": 10**7,
    "record_every": 1,
    "seed": 0,
    "out": "mm.csv",
    "emit_plot_script": False,
}

SWEEP_DEFAULTS: Dict[str, Any] = {
    "d": 200,
    "A0": 1.0,
    "eta_grid": "log:1e-5:1e-2:60",
    "K": None,
    "tol_A": 1e-12,
    "max_iters": 10**7,
    "parallelism": 1,
    "seed": 0,
    "out": "phase.csv",
    "emit_plot_script": False,
}


def register(subparsers, common) -> None:
    group = subparsers.add_parser("mean-model", help="Modelo médio (A, b)")
    commands = group.add_subparsers(dest="action", required=True)

    run = commands.add_parser("run", parents=[common], help="Uma trajetória do modelo médio")
    run.add_argument("--d", type=int)
    run.add_argument("--eta", type=float)
    run.add_argument("--A0", dest="A0", type=float)
    run.add_argument("--b0", dest="b0", type=float)
    run.add_argument("--tol-A", dest="tol_A", type=float)
    run.add_argument("--max-iters", dest="max_iters", type=int)
    run.add_argument("--record-every", dest="record_every", type=int)
    run.set_defaults(handler=run_mean_model, defaults=RUN_DEFAULTS)

    sweep = commands.add_parser("sweep", parents=[common], help="Transição de fase em η")
    sweep.add_argument("--d", type=int)
    sweep.add_argument("--A0", dest="A0", type=float)
    sweep.add_argument("--eta-grid", dest="eta_grid")
    sweep.add_argument("--K", dest="K", type=float,
                       help="Constante fixa do critério |b∞| ≤ K/d² (padrão: K(η) = |A0|·η d²/γ)")
    sweep.add_argument("--tol-A", dest="tol_A", type=float)
    sweep.add_argument("--max-iters", dest="max_iters", type=int)
    sweep.add_argument("--parallelism", type=int)
    sweep.set_defaults(handler=sweep_mean_model, defaults=SWEEP_DEFAULTS)


def run_mean_model(options: Dict[str, Any]) -> int:
    service = MeanModelService()
    pandas_adapter = PandasAdapter()
    cfg = MeanModelConfig(
        d=int(options["d"]), eta=float(options["eta"]), loss=make_loss(LossKind.SYM_LOGISTIC),
        A0=float(options["A0"]), b0=float(options["b0"]),
    )
    stop = StopRule(
        tol_x=float(options["tol_A"]), max_iters=int(options["max_iters"]),
        record_every=int(options["record_every"]),
    )
    traj = service.mm_run(cfg, stop)
    df = pandas_adapter.trajectory_frame({"t": traj.ts, "A": traj.As, "b": traj.bs, "sharp_proxy": traj.sharp_proxy})
    pandas_adapter.write_csv(df, options["out"])
    write_summary(pandas_adapter, options, {
        "threshold": cfg.threshold,
        "eta_over_threshold": cfg.eta_ratio,
        "iterations": traj.iterations,
        "stop_reason": traj.stop_reason.value,
        "crossing_iter": traj.crossing_iter,
        "b_inf": traj.b_inf,
        "minimizer_sharpness": service.mm_minimizer_sharpness(traj.b_inf, cfg.d),
        "longest_sign_alternation": traj.longest_sign_alternation(),
    })
    maybe_emit_plot(options, "mean-model-run")
    return 0


def sweep_mean_model(options: Dict[str, Any]) -> int:
    service = MeanModelService()
    pandas_adapter = PandasAdapter()
    stop = StopRule(tol_x=float(options["tol_A"]), max_iters=int(options["max_iters"]), record_every=10**9)
    result = service.phase_transition_sweep(
        d=int(options["d"]),
        A0=float(options["A0"]),
        eta_grid=GridSpec.parse(options["eta_grid"]).values,
        K=options["K"],
        stop=stop,
        parallelism=int(options["parallelism"]),
    )
    pandas_adapter.write_rows(result.rows, options["out"], ["eta", "eta_over_threshold", "b_inf", "regime", "K"])
    write_summary(pandas_adapter, options, result.summary)
    maybe_emit_plot(options, "mean-model-sweep", d=int(options["d"]))
    return 0
