"""
Comando `experiment`: roda qualquer ExperimentKind sobre uma grade.
Parâmetros extras vêm de --param chave=valor (valor em JSON) ou da
chave "params" do arquivo --config.
"""
import json
import logging
from typing import Any, Dict, List, Optional

from domain.errors import InvalidConfig
from domain.models import ExperimentKind, GridSpec, SweepConfig
from presentation.components.output import maybe_emit_plot
from use_cases.experiment_service import ExperimentService

logger = logging.getLogger(__name__)

DEFAULTS: Dict[str, Any] = {
    "kind": None,
    "grid": None,
    "params": {},
    "param_list": None,
    "parallelism": 1,
    "seed": 0,
    "out": "experiment.csv",
    "emit_plot_script": False,
}

DEFAULT_GRIDS = {
    ExperimentKind.SINGLE_NEURON_GAP_SCALING: "log:1e-4:1e-1:20",
    ExperimentKind.SINGLE_NEURON_BOUNCE_COUNT: "log:1e-4:1e-1:20",
    ExperimentKind.SINGLE_NEURON_SWEEP: "log:1e-4:1e-1:20",
    ExperimentKind.GRADIENT_FLOW_SHARPNESS: "list:1e-3,1e-2",
    ExperimentKind.MEAN_MODEL_PHASE: "lin:5.5e-4:7.5e-4:41",
    ExperimentKind.RELU_PHASE: "log:1e-5:1e-2:30",
    ExperimentKind.RELU_VS_MEAN_MODEL: "list:2.5e-3",
}

FIGURES = {
    ExperimentKind.SINGLE_NEURON_GAP_SCALING: ("scaling", {"x": "eta", "y": "gap", "group": "loss"}),
    ExperimentKind.SINGLE_NEURON_BOUNCE_COUNT: ("scaling", {"x": "eta", "y": "bounce_iters", "group": "loss"}),
    ExperimentKind.SINGLE_NEURON_SWEEP: ("single-neuron-sweep", {}),
    ExperimentKind.MEAN_MODEL_PHASE: ("mean-model-sweep", {}),
    ExperimentKind.RELU_PHASE: ("relu-sweep", {}),
}


def register(subparsers, common) -> None:
    parser = subparsers.add_parser("experiment", parents=[common], help="Experimentos de varredura e leis de escala")
    parser.add_argument("--kind", choices=[k.value for k in ExperimentKind])
    parser.add_argument("--grid", help="log:lo:hi:n | lin:lo:hi:n | list:v1,v2,...")
    parser.add_argument("--param", dest="param_list", action="append", metavar="CHAVE=VALOR",
                        help="Parâmetro do experimento; o valor é lido como JSON quando possível")
    parser.add_argument("--parallelism", type=int)
    parser.set_defaults(handler=run_experiment, defaults=DEFAULTS)


def parse_params(items: Optional[List[str]]) -> Dict[str, Any]:
    params: Dict[str, Any] = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise InvalidConfig(f"--param espera CHAVE=VALOR, recebido {item!r}")
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    return params


def run_experiment(options: Dict[str, Any]) -> int:
    if not options["kind"]:
        raise InvalidConfig("Informe --kind ou a chave 'kind' no arquivo de configuração")
    kind = ExperimentKind(options["kind"])
    params = dict(options["params"] or {})
    params.update(parse_params(options.get("param_list")))
    cfg = SweepConfig(
        experiment=kind,
        grid=GridSpec.parse(options["grid"] or DEFAULT_GRIDS[kind]),
        seed=options["seed"],
        out_path=options["out"],
        parallelism=int(options["parallelism"]),
        params=params,
    )
    result = ExperimentService().run_experiment(cfg)
    for name, fit in result.fits.items():
        logger.info(
            "Ajuste %s: inclinação %.4f (prevista %.4f ± %.2f), r² = %.4f → %s",
            name, fit.slope, fit.predicted_slope, fit.tolerance, fit.r_squared,
            "ok" if fit.passed else "FALHOU",
        )
    if kind in FIGURES:
        figure, figure_options = FIGURES[kind]
        if kind is ExperimentKind.MEAN_MODEL_PHASE:
            figure_options = {"d": int(params.get("d", 200))}
        maybe_emit_plot(options, figure, **figure_options)
    return 0 if result.passed else 2
