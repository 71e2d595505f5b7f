"""
Hierarquia de exceções do domínio.
Cada erro carrega os valores que o provocaram, para que a camada de
apresentação possa registrar a falha sem reexecutar nada.
"""
from typing import Any, Optional


class EosError(Exception):
    """Erro base de todas as operações do laboratório."""


class InvalidConfig(EosError, ValueError):
    """Configuração ou pré-condição inválida."""


class NonConvergence(EosError):
    """A quadratura adaptativa excedeu a profundidade máxima."""

    def __init__(self, lo: float, hi: float, depth: int):
        super().__init__(f"Quadratura não convergiu em [{lo}, {hi}] (profundidade {depth})")
        self.lo = lo
        self.hi = hi
        self.depth = depth


class NotSymmetric(EosError, ValueError):
    """Matriz passada ao autovalor simétrico não é simétrica."""

    def __init__(self, asymmetry: float):
        super().__init__(f"Matriz não simétrica (assimetria máxima {asymmetry:.3e})")
        self.asymmetry = asymmetry


class CertificationFailed(EosError):
    """Uma cláusula das hipóteses sobre a perda falhou em algum ponto da grade."""

    def __init__(self, loss_name: str, s: float, clause: str, margin: float):
        super().__init__(
            f"Perda {loss_name}: cláusula '{clause}' violada em s={s!r} (margem {margin:.3e})"
        )
        self.loss_name = loss_name
        self.s = s
        self.clause = clause
        self.margin = margin


class NumericOverflow(EosError, ArithmeticError):
    """Iterado saiu da faixa numérica representável."""

    def __init__(self, iteration: int, value: float):
        super().__init__(f"Overflow numérico na iteração {iteration}: {value!r}")
        self.iteration = iteration
        self.value = value


class NotDifferentiable(EosError):
    """A Hessiana foi pedida num ponto de quina da perda."""

    def __init__(self, s: float):
        super().__init__(f"Perda não é duas vezes diferenciável em s={s!r}")
        self.s = s


class OnInvariantLine(EosError, ValueError):
    """Inicialização sobre as retas invariantes y = ±x."""

    def __init__(self, x0: float, y0: float):
        super().__init__(f"Inicialização ({x0}, {y0}) está sobre a reta invariante |x| = y")
        self.x0 = x0
        self.y0 = y0


class MaxItersExceeded(EosError):
    """O limite de iterações foi atingido antes do critério de parada."""

    def __init__(self, max_iters: int, trajectory: Any = None):
        super().__init__(f"Limite de {max_iters} iterações atingido")
        self.max_iters = max_iters
        self.trajectory = trajectory


class HitAxisExactly(EosError):
    """Um iterado atingiu exatamente o eixo acima do limiar 2/η."""

    def __init__(self, iteration: int, trajectory: Any = None):
        super().__init__(f"Iterado atingiu exatamente o eixo na iteração {iteration} acima do limiar")
        self.iteration = iteration
        self.trajectory = trajectory


class NotConverged(EosError):
    """Trajetória não convergida usada onde o limite é necessário."""

    def __init__(self, residual: float):
        super().__init__(f"Trajetória não convergiu (resíduo {residual:.3e})")
        self.residual = residual


class NoRoot(EosError):
    """O envelope quasi-estático não existe abaixo do limiar."""

    def __init__(self, eta: float, y: float):
        super().__init__(f"Sem raiz do envelope: η·y² = {eta * y * y:.6g} ≤ 2")
        self.eta = eta
        self.y = y


class NonPositiveTarget(EosError, ValueError):
    """Inversa da ReLU suavizada pedida para valor não positivo."""

    def __init__(self, value: float):
        super().__init__(f"g⁻¹ exige valor positivo, recebido {value!r}")
        self.value = value


class KinkEncountered(EosError):
    """Alguma amostra está exatamente numa quina da ReLU."""

    def __init__(self, count: int):
        super().__init__(f"{count} pré-ativação(ões) na quina da ReLU; Hessiana indefinida")
        self.count = count


class DegenerateFit(EosError, ValueError):
    """Regressão log-log sem variação em x ou com pontos insuficientes."""

    def __init__(self, reason: str, detail: Optional[str] = None):
        super().__init__(f"Ajuste degenerado: {reason}" + (f" ({detail})" if detail else ""))
        self.reason = reason


class SweepFailed(EosError):
    """Algum ponto da varredura falhou; as linhas prontas e o manifesto já foram gravados."""

    def __init__(self, failures: list, manifest_path: str):
        super().__init__(f"{len(failures)} ponto(s) da varredura falharam; manifesto em {manifest_path}")
        self.failures = failures
        self.manifest_path = manifest_path
