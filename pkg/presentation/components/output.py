"""
Saídas comuns dos comandos: resumo JSON ao lado do CSV e script de plot opcional.
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict

import domain
from adapters.pandas_adapter import PandasAdapter
from adapters.plotly_adapter import PlotlyAdapter

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def options_hash(options: Dict[str, Any]) -> str:
    relevant = {k: v for k, v in options.items() if k not in ("out", "emit_plot_script", "parallelism")}
    canonical = json.dumps(relevant, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_summary(pandas_adapter: PandasAdapter, options: Dict[str, Any], payload: Dict[str, Any]) -> Path:
    """Grava <out>.json com versão, semente, hash da configuração e os resultados."""
    summary = {
        "schema_version": SCHEMA_VERSION,
        "version": domain.__version__,
        "seed": options.get("seed"),
        "config_hash": options_hash(options),
        "config": {k: v for k, v in options.items() if k not in ("out", "emit_plot_script")},
    }
    summary.update(payload)
    return pandas_adapter.write_json(summary, str(Path(options["out"]).with_suffix(".json")))


def maybe_emit_plot(options: Dict[str, Any], kind: str, **figure_options) -> None:
    if not options.get("emit_plot_script"):
        return
    _, error = PlotlyAdapter().emit_script(options["out"], kind, **figure_options)
    if error:
        logger.warning(error)
