"""
Linha de comando `eos`: monta a árvore de subcomandos, funde a configuração
e traduz o resultado em código de saída (0 passou, 2 ajuste de escala
falhou, 1 erro).
"""
import argparse
import logging
import sys
from typing import List, Optional

from domain import __version__
from domain.errors import EosError
from presentation.components import (
    experiment_commands,
    mean_model_commands,
    relu_commands,
    single_neuron_commands,
)
from presentation.config import configure_logging, effective_options, load_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FIT_FAILED = 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Arquivo JSON com as opções do comando")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING... (ou EOS_LOG_LEVEL)")
    common.add_argument("--seed", type=int, help="Semente u64 (EOS_SEED tem precedência)")
    common.add_argument("--out", help="Caminho do CSV de saída")
    common.add_argument("--emit-plot-script", dest="emit_plot_script", action="store_true", default=None,
                        help="Grava <out>.plot.py que desenha o CSV com plotly")

    parser = argparse.ArgumentParser(prog="eos", description="Laboratório numérico de GD na edge of stability")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    single_neuron_commands.register(subparsers, common)
    mean_model_commands.register(subparsers, common)
    relu_commands.register(subparsers, common)
    experiment_commands.register(subparsers, common)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level)
        flags = {k: v for k, v in vars(args).items() if k not in ("handler", "defaults", "config", "log_level")}
        options = effective_options(args.defaults, load_config(args.config), flags)
        logger.debug("Opções efetivas: %s", options)
        return args.handler(options)
    except EosError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_ERROR
    except OSError as e:
        logger.error("Erro de E/S: %s", e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
