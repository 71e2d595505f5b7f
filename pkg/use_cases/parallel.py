"""
Execução de pontos independentes de uma varredura, em série ou num pool
de processos, sempre devolvendo os resultados na ordem da grade.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def ordered_map(fn: Callable[[T], R], items: Iterable[T], parallelism: int = 1) -> List[R]:
    """map ordenado; fn e itens precisam ser serializáveis quando parallelism > 1."""
    items = list(items)
    if parallelism <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.info("Distribuindo %d pontos em %d processos", len(items), parallelism)
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))
