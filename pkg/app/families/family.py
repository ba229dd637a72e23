"""
表示的参数族
explicit：生成元矩阵元为参数的有理系数多项式（sympy）
conjugation：g(t) = I + Σ t_i E_i 共轭一个固定表示（E_i 为 sl_m 的基）
symmetric_power：对另一个族逐点取 τ_m
with_conjugation：在任意族后追加 sl_m 共轭参数
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import structlog
import sympy

from app.core.errors import ConfigError, OutOfDomain, PreconditionError
from app.core.models import FunctionalKind
from app.rep.functionals import LengthFunctional, symmetric_power
from app.rep.representation import Representation

logger = structlog.get_logger()


# ═══════════════════════════════════════════════════════════════════════════
# 多项式解析
# ═══════════════════════════════════════════════════════════════════════════


def parse_polynomial(text: str, symbols: Sequence[sympy.Symbol]) -> sympy.Expr:
    """
    有理系数多项式；小数按精确有理数解析，允许虚数单位 I

    Raises:
        ConfigError: 无法解析，或含参数以外的符号，或不是多项式
    """
    local = {s.name: s for s in symbols}
    try:
        expr = sympy.sympify(str(text), locals=local, rational=True)
    except (sympy.SympifyError, SyntaxError, TypeError) as e:
        raise ConfigError("Cannot parse polynomial entry", entry=text, reason=str(e)) from e
    unknown = expr.free_symbols - set(symbols)
    if unknown:
        raise ConfigError("Polynomial uses unknown symbols", entry=text, symbols=sorted(map(str, unknown)))
    if symbols and not expr.is_polynomial(*symbols):
        raise ConfigError("Entry is not a polynomial in the parameters", entry=text)
    return expr


def sl_basis(m: int) -> list[np.ndarray]:
    """sl_m 的基：非对角 E_ij，再是对角 E_kk − E_{k+1,k+1}，共 m² − 1 个"""
    basis = []
    for i in range(m):
        for j in range(m):
            if i != j:
                e = np.zeros((m, m))
                e[i, j] = 1.0
                basis.append(e)
    for k in range(m - 1):
        e = np.zeros((m, m))
        e[k, k], e[k + 1, k + 1] = 1.0, -1.0
        basis.append(e)
    return basis


def adjugate(g: np.ndarray) -> np.ndarray:
    """adj(g) = det(g)·g⁻¹"""
    return np.linalg.det(g) * np.linalg.inv(g)


# ═══════════════════════════════════════════════════════════════════════════
# 族
# ═══════════════════════════════════════════════════════════════════════════


@dataclass
class RepFamily(ABC):
    label: str
    parameters: list[str]
    base_point: np.ndarray
    box: list[tuple[float, float]]
    scale_expr: str = "1"
    _scale_fn: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.base_point = np.asarray(self.base_point, dtype=float)
        if len(self.base_point) != len(self.parameters) or len(self.box) != len(self.parameters):
            raise ConfigError(
                "Family base point and box must match the parameter count",
                family=self.label,
                parameters=len(self.parameters),
            )
        symbols = sympy.symbols(self.parameters) if self.parameters else []
        symbols = list(symbols) if isinstance(symbols, (list, tuple)) else [symbols]
        self._symbols = symbols
        expr = parse_polynomial(self.scale_expr, symbols)
        self._scale_fn = sympy.lambdify(symbols, expr, modules="numpy")

    @property
    def dimension(self) -> int:
        return len(self.parameters)

    @property
    @abstractmethod
    def matrix_dimension(self) -> int: ...

    @property
    def kind(self) -> str:
        return type(self).__name__

    @abstractmethod
    def _matrices(self, t: np.ndarray) -> list[np.ndarray]: ...

    def functional_scale(self, t: Sequence[float]) -> float:
        value = float(np.real(self._scale_fn(*np.asarray(t, dtype=float))))
        if value <= 0:
            raise OutOfDomain("Functional scale is not positive", family=self.label, t=list(t))
        return value

    def in_box(self, t: np.ndarray) -> bool:
        return all(lo - 1e-12 <= x <= hi + 1e-12 for x, (lo, hi) in zip(t, self.box))


def evaluate_family(fam: RepFamily, t: Sequence[float]) -> Representation:
    """
    Raises:
        OutOfDomain: t 落在盒子外
    """
    t = np.asarray(t, dtype=float)
    if t.shape != (fam.dimension,):
        raise PreconditionError("Parameter vector has the wrong dimension", family=fam.label, got=t.shape)
    if not fam.in_box(t):
        raise OutOfDomain("Parameter point outside the family box", family=fam.label, t=t.tolist(), box=fam.box)
    label = f"{fam.label}@[{', '.join(f'{x:.6g}' for x in t)}]"
    return Representation.from_matrices(label, fam._matrices(t))


def family_functional(fam: RepFamily, t: Sequence[float], kind: FunctionalKind | None = None) -> LengthFunctional:
    """t 处的周期泛函：functional_scale(t) · (log Λ 或平移长度)"""
    rep = evaluate_family(fam, t)
    if kind is None:
        kind = FunctionalKind.LOG_SPECTRAL_RADIUS
        if rep.is_complex and rep.dimension == 2:
            kind = FunctionalKind.TRANSLATION_LENGTH
    return LengthFunctional(label=rep.label, kind=kind, representation=rep, scale=fam.functional_scale(t))


@dataclass
class ExplicitFamily(RepFamily):
    generators: list[list[list[str]]] = field(default_factory=list)

    def __post_init__(self):
        super().__post_init__()
        if not self.generators:
            raise ConfigError("Explicit family needs generator expressions", family=self.label)
        self._compiled = []
        for gen in self.generators:
            exprs = sympy.Matrix([[parse_polynomial(e, self._symbols) for e in row] for row in gen])
            if exprs.shape[0] != exprs.shape[1]:
                raise ConfigError("Generator expression matrix must be square", family=self.label)
            self._compiled.append((sympy.lambdify(self._symbols, exprs, modules="numpy"), exprs.has(sympy.I)))

    @property
    def matrix_dimension(self) -> int:
        return len(self.generators[0])

    def _matrices(self, t: np.ndarray) -> list[np.ndarray]:
        out = []
        for fn, is_complex in self._compiled:
            values = np.array(fn(*t), dtype=np.complex128)
            out.append(values if is_complex else values.real.copy())
        return out


@dataclass
class ConjugationFamily(RepFamily):
    """ρ_t(x) = g(t) ρ(x) adj(g(t))，再做行列式归一化"""

    representation: Representation | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.representation is None:
            raise ConfigError("Conjugation family needs a representation", family=self.label)
        self._basis = sl_basis(self.representation.dimension)
        if self.dimension > len(self._basis):
            raise ConfigError("Too many conjugation parameters", family=self.label, limit=len(self._basis))

    @property
    def matrix_dimension(self) -> int:
        return self.representation.dimension

    def conjugator(self, t: np.ndarray) -> np.ndarray:
        g = np.eye(self.matrix_dimension)
        for x, e in zip(t, self._basis):
            g = g + x * e
        return g

    def _matrices(self, t: np.ndarray) -> list[np.ndarray]:
        g = self.conjugator(t)
        adj = adjugate(g)
        return [g @ m @ adj for m in self.representation.generators]


@dataclass
class SymmetricPowerFamily(RepFamily):
    """τ_m ∘ base(t)；参数与盒子沿用 base"""

    base: RepFamily | None = None
    power: int = 2

    @property
    def matrix_dimension(self) -> int:
        return self.power

    def __post_init__(self):
        super().__post_init__()
        if self.base is None or self.base.matrix_dimension != 2:
            raise ConfigError("Symmetric power family needs a 2-dimensional base family", family=self.label)

    def _matrices(self, t: np.ndarray) -> list[np.ndarray]:
        return [symmetric_power(g, self.power) for g in evaluate_family(self.base, t).generators]


@dataclass
class ConjugatedFamily(RepFamily):
    """base 的参数在前，sl_m 共轭参数在后"""

    base: RepFamily | None = None

    @property
    def matrix_dimension(self) -> int:
        return self.base.matrix_dimension

    def _matrices(self, t: np.ndarray) -> list[np.ndarray]:
        d = self.base.dimension
        g = np.eye(self.matrix_dimension)
        for x, e in zip(t[d:], sl_basis(self.matrix_dimension)):
            g = g + x * e
        adj = adjugate(g)
        return [g @ m @ adj for m in evaluate_family(self.base, t[:d]).generators]


def with_conjugation(fam: RepFamily, radius: float = 0.5) -> ConjugatedFamily:
    """追加 m² − 1 个共轭参数（基点 0，盒子 [−radius, radius]），functional_scale 不变"""
    m = fam.matrix_dimension
    extra = [f"g{i}" for i in range(m * m - 1)]
    clash = set(extra) & set(fam.parameters)
    if clash:
        raise ConfigError("Conjugation parameter names clash with the family", names=sorted(clash))
    return ConjugatedFamily(
        label=f"{fam.label}+conj",
        parameters=list(fam.parameters) + extra,
        base_point=np.concatenate([fam.base_point, np.zeros(len(extra))]),
        box=list(fam.box) + [(-radius, radius)] * len(extra),
        scale_expr=fam.scale_expr,
        base=fam,
    )
