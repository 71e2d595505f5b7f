"""
Comandos `relu train`, `relu sweep-eta` e `relu compare-mm`.
"""
import logging
from typing import Any, Dict

import numpy as np

from adapters.pandas_adapter import PandasAdapter
from domain.models import ExperimentKind, GridSpec, SweepConfig
from presentation.components.output import maybe_emit_plot, write_summary
from use_cases.experiment_service import ExperimentService
from use_cases.relu_net_service import ReluNetService, pad_edge

logger = logging.getLogger(__name__)

_DATA_DEFAULTS: Dict[str, Any] = {"d": 200, "n": 300, "lam": 3.0, "time_budget": 10.0, "seed": 0,
                                  "emit_plot_script": False}

TRAIN_DEFAULTS: Dict[str, Any] = {**_DATA_DEFAULTS, "eta": 2.5e-3, "iters": None, "record_every": 1,
                                  "out": "run.csv"}
SWEEP_DEFAULTS: Dict[str, Any] = {**_DATA_DEFAULTS, "eta_grid": "log:1e-5:1e-2:30", "n_seeds": 1,
                                  "parallelism": 1, "out": "fig1.csv"}
COMPARE_DEFAULTS: Dict[str, Any] = {**_DATA_DEFAULTS, "eta": 2.5e-3, "iters": None, "b_stop": -0.5,
                                    "out": "cmp.csv"}

TRAIN_COLUMNS = ["t", "a_minus", "a_plus", "A", "b", "loss", "sharpness", "test_acc"]


def register(subparsers, common) -> None:
    group = subparsers.add_parser("relu", help="Rede ReLU de dois grupos em dados esparsos")
    commands = group.add_subparsers(dest="action", required=True)

    train = commands.add_parser("train", parents=[common], help="GD em lote completo")
    _add_data_flags(train)
    train.add_argument("--eta", type=float)
    train.add_argument("--iters", type=int, help="Sobrepõe time-budget/η")
    train.add_argument("--record-every", dest="record_every", type=int)
    train.set_defaults(handler=train_relu, defaults=TRAIN_DEFAULTS)

    sweep = commands.add_parser("sweep-eta", parents=[common], help="Viés final por η a tempo fixo")
    _add_data_flags(sweep)
    sweep.add_argument("--eta-grid", dest="eta_grid")
    sweep.add_argument("--n-seeds", dest="n_seeds", type=int)
    sweep.add_argument("--parallelism", type=int)
    sweep.set_defaults(handler=sweep_relu, defaults=SWEEP_DEFAULTS)

    compare = commands.add_parser("compare-mm", parents=[common], help="Rede contra o modelo médio")
    _add_data_flags(compare)
    compare.add_argument("--eta", type=float)
    compare.add_argument("--iters", type=int)
    compare.add_argument("--b-stop", dest="b_stop", type=float)
    compare.set_defaults(handler=compare_relu, defaults=COMPARE_DEFAULTS)


def _add_data_flags(parser) -> None:
    parser.add_argument("--d", type=int)
    parser.add_argument("--n", type=int)
    parser.add_argument("--lambda", dest="lam", type=float)
    parser.add_argument("--time-budget", dest="time_budget", type=float)


def _iterations(service: ReluNetService, options: Dict[str, Any]) -> int:
    if options["iters"]:
        return int(options["iters"])
    return service.iterations_for_budget(float(options["time_budget"]), float(options["eta"]))


def train_relu(options: Dict[str, Any]) -> int:
    service = ReluNetService()
    pandas_adapter = PandasAdapter()
    d, seed = int(options["d"]), options["seed"]
    ds = service.generate_dataset(d, int(options["n"]), float(options["lam"]), seed)
    iters = _iterations(service, options)
    traj = service.train_full_batch(ds, service.init_params(d, seed), float(options["eta"]), iters,
                                    record_every=int(options["record_every"]))
    df = pandas_adapter.trajectory_frame({
        "t": traj.ts, "a_minus": traj.a_minus, "a_plus": traj.a_plus, "A": traj.A, "b": traj.b,
        "loss": traj.loss, "sharpness": traj.sharpness, "test_acc": traj.test_acc,
    })
    pandas_adapter.write_csv(df[TRAIN_COLUMNS], options["out"])
    write_summary(pandas_adapter, options, {
        "iterations": iters,
        "b_final": traj.b_final,
        "A_final": float(traj.A[-1]),
        "test_acc_final": float(traj.test_acc[-1]),
        "max_sharpness": float(np.nanmax(traj.sharpness)),
        "longest_sign_alternation": traj.longest_sign_alternation(),
    })
    maybe_emit_plot(options, "relu-train", eta=float(options["eta"]))
    return 0


def sweep_relu(options: Dict[str, Any]) -> int:
    cfg = SweepConfig(
        experiment=ExperimentKind.RELU_PHASE,
        grid=GridSpec.parse(options["eta_grid"]),
        seed=options["seed"],
        out_path=options["out"],
        parallelism=int(options["parallelism"]),
        params={
            "d": options["d"], "n": options["n"], "lambda": options["lam"],
            "time_budget": options["time_budget"], "n_seeds": options["n_seeds"],
        },
    )
    result = ExperimentService().run_experiment(cfg)
    maybe_emit_plot(options, "relu-sweep")
    return 0 if result.passed else 2


def compare_relu(options: Dict[str, Any]) -> int:
    service = ReluNetService()
    pandas_adapter = PandasAdapter()
    d, seed = int(options["d"]), options["seed"]
    ds = service.generate_dataset(d, int(options["n"]), float(options["lam"]), seed)
    report = service.compare_to_mean_model(
        ds, service.init_params(d, seed), float(options["eta"]), _iterations(service, options),
        b_stop=float(options["b_stop"]),
    )
    net, mm = report.network, report.mean_model
    length = len(net.ts)
    df = pandas_adapter.trajectory_frame({
        "t": net.ts,
        "b_network": net.b,
        "b_mean_model": pad_edge(mm.bs, length),
        "A_network": net.A,
        "A_mean_model": pad_edge(mm.As, length),
    })
    pandas_adapter.write_csv(df, options["out"])
    write_summary(pandas_adapter, options, {
        "t_init": report.t_init,
        "max_b_deviation": report.max_b_deviation,
        "max_A_deviation": report.max_A_deviation,
    })
    maybe_emit_plot(options, "relu-compare")
    return 0

