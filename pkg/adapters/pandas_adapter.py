"""
Adaptador para a biblioteca Pandas.
Isola a escrita dos artefatos (CSV e resumos JSON) do resto da aplicação.
Os arquivos são determinísticos: a mesma entrada produz os mesmos bytes.
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class PandasAdapter:
    """Adaptador para a biblioteca Pandas."""

    @staticmethod
    def frame(rows: Iterable[Dict[str, Any]], columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
        rows = [{k: _jsonable(v) for k, v in row.items()} for row in rows]
        return pd.DataFrame(rows, columns=list(columns) if columns else None)

    @staticmethod
    def write_csv(df: pd.DataFrame, path: str) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(out, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.info("CSV gravado: %s (%d linhas)", out, len(df))
        return out

    def write_rows(self, rows: List[Dict[str, Any]], path: str, columns: Optional[Sequence[str]] = None) -> Path:
        return self.write_csv(self.frame(rows, columns), path)

    @staticmethod
    def write_json(payload: Dict[str, Any], path: str) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info("JSON gravado: %s", out)
        return out

    @staticmethod
    def trajectory_frame(columns: Dict[str, Any]) -> pd.DataFrame:
        """Monta um DataFrame colunar a partir de arrays de mesmo comprimento."""
        return pd.DataFrame({k: np.asarray(v) for k, v in columns.items()})
