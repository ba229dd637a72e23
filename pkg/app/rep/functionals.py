"""
长度泛函
log Λ（谱半径对数）、复 2×2 表示的双曲平移长度、字长；均可乘以正标量
τ_m 对称幂：SL₂ 在 m−1 次齐次多项式上的不可约作用
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from app.core.errors import NotLoxodromic, PreconditionError
from app.core.models import FunctionalKind
from app.group.classes import ConjClass
from app.rep.representation import Representation, evaluate_batch
from app.rep.spectral import SpectralBatch, spectral_batch
from config.settings import settings


# ═══════════════════════════════════════════════════════════════════════════
# 对称幂
# ═══════════════════════════════════════════════════════════════════════════


def symmetric_power(g: np.ndarray, m: int) -> np.ndarray:
    """
    g 在基 x^{m−1−i} y^i 上的矩阵

    第 j 列是 (g11 + g21·t)^{m−1−j} (g12 + g22·t)^j 的系数，t = y/x。
    """
    g = np.asarray(g)
    if g.shape != (2, 2):
        raise PreconditionError("Symmetric power needs a 2x2 matrix", shape=g.shape)
    if m < 1:
        raise PreconditionError("Symmetric power dimension must be positive", m=m)

    first = np.array([g[0, 0], g[1, 0]])
    second = np.array([g[0, 1], g[1, 1]])
    out = np.zeros((m, m), dtype=np.result_type(g.dtype, np.float64))
    for j in range(m):
        column = P.polymul(P.polypow(first, m - 1 - j), P.polypow(second, j))
        out[: len(column), j] = column[:m]
    return out


def symmetric_power_rep(rep: Representation, m: int, label: str | None = None) -> Representation:
    """τ_m ∘ ρ；仅对 2 维表示有定义"""
    if rep.dimension != 2:
        raise PreconditionError("Symmetric power needs a 2-dimensional representation", label=rep.label)
    return Representation.from_matrices(
        label or f"tau{m}({rep.label})", [symmetric_power(g, m) for g in rep.generators]
    )


# ═══════════════════════════════════════════════════════════════════════════
# 平移长度
# ═══════════════════════════════════════════════════════════════════════════


def translation_length(g: np.ndarray) -> float:
    """ℓ = 2·log|λ|，λ 为模较大的特征值（先归一化到 det = 1）"""
    g = np.asarray(g, dtype=np.complex128)
    if g.shape != (2, 2):
        raise PreconditionError("Translation length needs a 2x2 matrix", shape=g.shape)
    g = g / np.sqrt(np.linalg.det(g))
    tr = g[0, 0] + g[1, 1]
    disc = np.sqrt(tr * tr - 4)
    modulus = max(abs((tr + disc) / 2), abs((tr - disc) / 2))
    if modulus - 1.0 <= settings.proximality_tolerance:
        raise NotLoxodromic("Element is elliptic or parabolic", trace=complex(tr))
    return float(2.0 * np.log(modulus))


# ═══════════════════════════════════════════════════════════════════════════
# 泛函
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class LengthFunctional:
    """f(γ) = scale · 基础周期"""

    label: str
    kind: FunctionalKind
    representation: Representation | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise PreconditionError("Functional scale must be positive", label=self.label, scale=self.scale)
        if self.kind != FunctionalKind.WORD_LENGTH and self.representation is None:
            raise PreconditionError("Functional needs a representation", label=self.label)
        if self.kind == FunctionalKind.TRANSLATION_LENGTH and self.representation.dimension != 2:
            raise PreconditionError("Translation length needs a 2x2 representation", label=self.label)

    def scaled(self, factor: float, label: str | None = None) -> LengthFunctional:
        return LengthFunctional(
            label=label or f"{factor}*{self.label}",
            kind=self.kind,
            representation=self.representation,
            scale=self.scale * factor,
        )

    @property
    def period_factor(self) -> float:
        """周期相对 log Λ 的倍数：平移长度为 2"""
        return 2.0 * self.scale if self.kind == FunctionalKind.TRANSLATION_LENGTH else self.scale

    def spectra(self, codes: np.ndarray) -> SpectralBatch:
        matrices, log_scales = evaluate_batch(self.representation, codes)
        return spectral_batch(matrices, log_scales)

    def values_for_codes(self, codes: np.ndarray) -> np.ndarray:
        """同长度字的批量取值，codes 形状 (N, n)"""
        codes = np.asarray(codes, dtype=np.int64)
        if self.kind == FunctionalKind.WORD_LENGTH:
            return np.full(codes.shape[0], self.scale * codes.shape[1], dtype=float)
        return self.period_factor * self.spectra(codes).log_radius

    def values(self, classes: Sequence[ConjClass]) -> np.ndarray:
        """任意类序列的取值，按长度分组批量计算后还原顺序"""
        out = np.empty(len(classes))
        by_length: dict[int, list[int]] = {}
        for i, c in enumerate(classes):
            by_length.setdefault(c.length, []).append(i)
        for length, indices in sorted(by_length.items()):
            codes = np.stack([classes[i].rep.codes for i in indices])
            out[indices] = self.values_for_codes(codes)
        return out
