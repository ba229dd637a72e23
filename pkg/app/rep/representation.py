"""
表示求值
生成元 → 矩阵；字的乘积逐步按最大元素归一化，尺度取对数累加，长字不溢出
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import structlog

from app.core.errors import PreconditionError, SingularProduct
from app.group.words import Word

logger = structlog.get_logger()


@dataclass(frozen=True)
class ScaledMatrix:
    """真实矩阵 = exp(log_scale) · matrix，matrix 最大绝对元素为 1"""

    matrix: np.ndarray
    log_scale: float = 0.0

    def true_matrix(self) -> np.ndarray:
        return np.exp(self.log_scale) * self.matrix


@dataclass(frozen=True)
class Representation:
    """
    自由群表示：每个生成元一个 m×m 可逆矩阵（行列式归一化到 |det| = 1）

    generator_stack 按字母编码排列：code 2i 为 g_i，2i+1 为 g_i⁻¹。
    """

    label: str
    generators: tuple[np.ndarray, ...]
    generator_stack: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.generators[0].shape[0]

    @property
    def rank(self) -> int:
        return len(self.generators)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.generator_stack)

    @classmethod
    def from_matrices(cls, label: str, matrices: Sequence[np.ndarray]) -> Representation:
        """从浮点矩阵构造，自动做行列式归一化并预计算逆"""
        if not matrices:
            raise PreconditionError("Representation needs at least one generator", label=label)
        is_complex = any(np.iscomplexobj(g) for g in matrices)
        dtype = np.complex128 if is_complex else np.float64
        normalized = []
        for index, g in enumerate(matrices):
            g = np.asarray(g, dtype=dtype)
            if g.ndim != 2 or g.shape[0] != g.shape[1]:
                raise PreconditionError("Generator image must be square", label=label, generator=index)
            normalized.append(normalize_determinant(g))

        m = normalized[0].shape[0]
        if any(g.shape != (m, m) for g in normalized):
            raise PreconditionError("Generator images differ in dimension", label=label)

        stack = np.empty((2 * len(normalized), m, m), dtype=dtype)
        for i, g in enumerate(normalized):
            stack[2 * i] = g
            stack[2 * i + 1] = np.linalg.inv(g)
        stack.setflags(write=False)
        return cls(label=label, generators=tuple(normalized), generator_stack=stack)

    @classmethod
    def from_exact(cls, label: str, entries: Sequence[Sequence[Sequence[Fraction | complex]]]) -> Representation:
        """配置中的精确有理数（或复有理对）一次性转为浮点"""
        matrices = []
        for gen in entries:
            is_complex = any(isinstance(v, complex) for row in gen for v in row)
            dtype = np.complex128 if is_complex else np.float64
            cast = complex if is_complex else float
            matrices.append(np.array([[cast(v) for v in row] for row in gen], dtype=dtype))
        return cls.from_matrices(label, matrices)

    def image(self, w: Word) -> ScaledMatrix:
        return evaluate(self, w)


def normalize_determinant(g: np.ndarray) -> np.ndarray:
    """除以 det 的 m 次根；实矩阵保号，复矩阵取主值分支使 det = 1"""
    m = g.shape[0]
    det = np.linalg.det(g)
    if abs(det) == 0:
        raise SingularProduct("Generator image is singular")
    if np.iscomplexobj(g):
        return g / (complex(det) ** (1.0 / m))
    return g / (abs(det) ** (1.0 / m))


# ═══════════════════════════════════════════════════════════════════════════
# 单字求值
# ═══════════════════════════════════════════════════════════════════════════


def _check_letters(rep: Representation, codes: np.ndarray) -> None:
    if codes.size and int(codes.max()) >= 2 * rep.rank:
        raise PreconditionError("Word uses a generator outside the representation", label=rep.label)


def evaluate(rep: Representation, w: Word) -> ScaledMatrix:
    """按字母顺序连乘，每步按最大绝对元素重新归一化"""
    m = rep.dimension
    codes = w.codes
    _check_letters(rep, codes)

    product = np.eye(m, dtype=rep.generator_stack.dtype)
    log_scale = 0.0
    for c in codes:
        product = product @ rep.generator_stack[c]
        peak = float(np.max(np.abs(product)))
        if peak == 0.0 or not np.isfinite(peak):
            raise SingularProduct("Product collapsed during renormalization", word=str(w))
        product = product / peak
        log_scale += np.log(peak)
    return ScaledMatrix(matrix=product, log_scale=float(log_scale))


# ═══════════════════════════════════════════════════════════════════════════
# 批量求值（同长度字堆叠成 (N, m, m) 一次性相乘）
# ═══════════════════════════════════════════════════════════════════════════


def evaluate_batch(rep: Representation, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Args:
        codes: (N, n) 字母编码数组，每行一个长度为 n 的字

    Returns:
        (matrices, log_scales)：形状 (N, m, m) 与 (N,)
    """
    codes = np.asarray(codes, dtype=np.int64)
    if codes.ndim != 2:
        raise PreconditionError("Batch codes must be a 2-d array")
    _check_letters(rep, codes)
    count, length = codes.shape
    m = rep.dimension

    products = np.broadcast_to(np.eye(m, dtype=rep.generator_stack.dtype), (count, m, m)).copy()
    log_scales = np.zeros(count)
    for j in range(length):
        products = products @ rep.generator_stack[codes[:, j]]
        peaks = np.max(np.abs(products), axis=(1, 2))
        if np.any(peaks == 0.0) or not np.all(np.isfinite(peaks)):
            raise SingularProduct("Product collapsed during batch renormalization", position=j)
        products /= peaks[:, None, None]
        log_scales += np.log(peaks)
    return products, log_scales
