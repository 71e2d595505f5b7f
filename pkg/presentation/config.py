"""
Configuração da linha de comando: registro de logs, arquivo JSON de
configuração e sobreposições por variáveis de ambiente.
Precedência: padrões do comando < arquivo --config < flags < EOS_SEED (semente).
"""
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from domain.errors import InvalidConfig

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
ENV_LOG_LEVEL = "EOS_LOG_LEVEL"
ENV_SEED = "EOS_SEED"


def configure_logging(level: Optional[str] = None) -> int:
    """Instala um único handler de stream no logger raiz e devolve o nível aplicado."""
    name = (level or os.environ.get(ENV_LOG_LEVEL) or "INFO").upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise InvalidConfig(f"Nível de log desconhecido: {name}")
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(numeric)
    return numeric


def load_config(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise InvalidConfig(f"Arquivo de configuração não encontrado: {path}") from e
    except json.JSONDecodeError as e:
        raise InvalidConfig(f"JSON inválido em {path}: {e}") from e
    if not isinstance(data, dict):
        raise InvalidConfig(f"O arquivo {path} deve conter um objeto JSON")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def resolve_seed(value: Optional[int]) -> int:
    """EOS_SEED, se definida, vence qualquer outra semente."""
    env = os.environ.get(ENV_SEED)
    if env is not None and env.strip():
        try:
            value = int(env)
        except ValueError as e:
            raise InvalidConfig(f"{ENV_SEED} deve ser inteiro, recebido {env!r}") from e
    seed = 0 if value is None else int(value)
    if not 0 <= seed < 2**64:
        raise InvalidConfig(f"Semente fora de u64: {seed}")
    return seed


def effective_options(defaults: Dict[str, Any], file_cfg: Dict[str, Any], flags: Dict[str, Any]) -> Dict[str, Any]:
    """Funde padrões, arquivo e flags explícitas (flags com valor None não sobrescrevem)."""
    merged = dict(defaults)
    merged.update({k: v for k, v in file_cfg.items() if k in defaults})
    merged.update({k: v for k, v in flags.items() if k in defaults and v is not None})
    merged["seed"] = resolve_seed(merged.get("seed"))
    return merged
