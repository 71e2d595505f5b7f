"""
Comandos `single-neuron run` e `single-neuron sweep`.
"""
import logging
import math
import re
from typing import Any, Dict

from adapters.pandas_adapter import PandasAdapter
from adapters.sympy_adapter import SymPyAdapter
from domain.errors import HitAxisExactly, InvalidConfig
from domain.losses import parse_loss
from domain.models import ExperimentKind, GridSpec, Regime, StopRule, SweepConfig
from domain.numerics import RngStream
from presentation.components.output import maybe_emit_plot, write_summary
from use_cases.experiment_service import ExperimentService
from use_cases.single_neuron_service import SingleNeuronService

logger = logging.getLogger(__name__)

RUN_DEFAULTS: Dict[str, Any] = {
    "loss": "sqrt",
    "eta": 0.1,
    "x0": None,
    "y0": None,
    "delta": 1.0,
    "init_mode": None,
    "regime": Regime.EDGE_OF_STABILITY.value,
    "tol_x": 1e-12,
    "max_iters": 10**8,
    "record_every": 1,
    "drift_tol": None,
    "perturb": None,
    "seed": 0,
    "out": "single_neuron.csv",
    "emit_plot_script": False,
}

SWEEP_DEFAULTS: Dict[str, Any] = {
    "loss": "sqrt",
    "eta_grid": "log:1e-4:1e-1:20",
    "x0": None,
    "y0": None,
    "delta": 1.0,
    "init_mode": None,
    "regime": Regime.EDGE_OF_STABILITY.value,
    "drift_tol": 1e-14,
    "max_iters": 10**8,
    "parallelism": 1,
    "seed": 0,
    "out": "single_neuron_sweep.csv",
    "emit_plot_script": False,
}

RUN_COLUMNS = ["t", "x", "y", "s", "r", "D", "delta", "phase"]
INIT_MODE = re.compile(r"^fixed-delta:(?P<delta>[^:]+)$")


def register(subparsers, common) -> None:
    group = subparsers.add_parser("single-neuron", help="GD em f(x, y) = ℓ(xy)")
    commands = group.add_subparsers(dest="action", required=True)

    run = commands.add_parser("run", parents=[common], help="Uma trajetória de GD")
    _add_start_flags(run)
    run.add_argument("--eta", type=float)
    run.add_argument("--tol-x", dest="tol_x", type=float)
    run.add_argument("--max-iters", dest="max_iters", type=int)
    run.add_argument("--record-every", dest="record_every", type=int)
    run.add_argument("--drift-tol", dest="drift_tol", type=float)
    run.add_argument("--perturb", type=float, help="Reinicia com x0 + ε·z se um iterado cair exatamente no eixo")
    run.set_defaults(handler=run_single_neuron, defaults=RUN_DEFAULTS)

    sweep = commands.add_parser("sweep", parents=[common], help="Nitidez limite ao longo de uma grade de η")
    _add_start_flags(sweep)
    sweep.add_argument("--eta-grid", dest="eta_grid")
    sweep.add_argument("--drift-tol", dest="drift_tol", type=float)
    sweep.add_argument("--max-iters", dest="max_iters", type=int)
    sweep.add_argument("--parallelism", type=int)
    sweep.set_defaults(handler=sweep_single_neuron, defaults=SWEEP_DEFAULTS)


def _add_start_flags(parser) -> None:
    parser.add_argument("--loss", help="rsym-logistic | sqrt | huber | higher-order:<β>")
    parser.add_argument("--x0", type=float)
    parser.add_argument("--y0", type=float)
    parser.add_argument("--delta", type=float, help="δ da inicialização √((2 ∓ δ)/η)·(3, √10)")
    parser.add_argument("--init-mode", dest="init_mode", help="fixed-delta:<δ>: o mesmo δ em todo η da grade")
    parser.add_argument("--regime", choices=[r.value for r in Regime])


def parse_init_mode(text: str) -> float:
    """'fixed-delta:<δ>' → δ > 0; o intervalo de cada regime é checado em init_from_delta."""
    match = INIT_MODE.match(text.strip())
    if match is None:
        raise InvalidConfig(f"Modo de inicialização inválido: {text!r} (esperado fixed-delta:<δ>)")
    try:
        delta = float(match.group("delta"))
    except ValueError:
        raise InvalidConfig(f"δ inválido em {text!r}")
    if not 0 < delta < math.inf:
        raise InvalidConfig(f"δ deve ser positivo e finito: {delta}")
    return delta


def start_delta(options: Dict[str, Any]) -> float:
    """δ da inicialização; --init-mode prevalece sobre --delta e não combina com --x0/--y0."""
    if options.get("init_mode") is None:
        return float(options["delta"])
    if options["x0"] is not None or options["y0"] is not None:
        raise InvalidConfig("--init-mode não combina com --x0/--y0")
    return parse_init_mode(options["init_mode"])


def run_single_neuron(options: Dict[str, Any]) -> int:
    service = SingleNeuronService(SymPyAdapter())
    pandas_adapter = PandasAdapter()
    loss = parse_loss(options["loss"])
    eta = float(options["eta"])
    delta = start_delta(options)
    if options["x0"] is not None and options["y0"] is not None:
        x0, y0 = float(options["x0"]), float(options["y0"])
    else:
        start = service.init_from_delta(eta, delta, Regime(options["regime"]))
        x0, y0 = start.x, start.y
    stop = StopRule(
        tol_x=float(options["tol_x"]),
        max_iters=int(options["max_iters"]),
        record_every=int(options["record_every"]),
        drift_tol=options["drift_tol"],
    )

    try:
        traj = service.run(x0, y0, loss, eta, stop)
    except HitAxisExactly as e:
        if not options["perturb"]:
            raise
        x0, _ = service.perturbed_start(x0, float(options["perturb"]), RngStream(options["seed"]))
        logger.warning("Iterado no eixo em t=%d; reiniciando de x0 = %.17g", e.iteration, x0)
        traj = service.run(x0, y0, loss, eta, stop)

    df = pandas_adapter.trajectory_frame({
        "t": traj.ts, "x": traj.xs, "y": traj.ys, "s": traj.s, "r": traj.r,
        "D": traj.D, "delta": traj.delta, "phase": [tag.value for tag in traj.phase_tags],
    })
    pandas_adapter.write_csv(df[RUN_COLUMNS], options["out"])

    sharpness = service.limiting_sharpness(traj) if traj.converged else math.nan
    write_summary(pandas_adapter, options, {
        "x0": x0,
        "y0": y0,
        "regime": service.classify_regime(x0, y0, eta).value if 0 < abs(x0) < y0 else None,
        "iterations": traj.iterations,
        "stop_reason": traj.stop_reason.value,
        "crossing_iter": traj.crossing_iter,
        "landing_iter": traj.landing_iter,
        "limiting_sharpness": sharpness,
        "gap_to_2_over_eta": 2.0 / eta - sharpness,
        "bounce_iters": service.bouncing_iterations(traj, *traj.band),
    })
    maybe_emit_plot(options, "single-neuron-run", eta=eta)
    return 0


def sweep_single_neuron(options: Dict[str, Any]) -> int:
    params = {
        "loss": options["loss"],
        "delta": start_delta(options),
        "regime": options["regime"],
        "drift_tol": options["drift_tol"],
        "max_iters": options["max_iters"],
    }
    if options["x0"] is not None and options["y0"] is not None:
        params.update(x0=options["x0"], y0=options["y0"])
    cfg = SweepConfig(
        experiment=ExperimentKind.SINGLE_NEURON_SWEEP,
        grid=GridSpec.parse(options["eta_grid"]),
        seed=options["seed"],
        out_path=options["out"],
        parallelism=int(options["parallelism"]),
        params=params,
    )
    result = ExperimentService().run_experiment(cfg)
    maybe_emit_plot(options, "single-neuron-sweep")
    return 0 if result.passed else 2
