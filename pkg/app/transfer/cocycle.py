"""
线丛余循环采样
u(x) ≈ ξ(x)：把 ρ(x₀…x_{N−1}) 作用在固定种子向量上得到的方向
一步权重 c = scale · log(‖ρ(x₀)·u(σx)‖ / ‖u(σx)‖)，沿周期轨道伸缩求和为 log Λ
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import structlog

from app.core.errors import PreconditionError, ProximalityFailure
from app.core.models import FunctionalKind
from app.rep.functionals import LengthFunctional
from app.transfer.subshift import SubshiftSpec
from config.settings import settings

logger = structlog.get_logger()


def extend_cylinder(word: Sequence[int], length: int) -> list[int]:
    """柱集字的无限延拓取前 length 位：循环约化则周期延拓，否则重复末字母"""
    word = [int(c) for c in word]
    if not word:
        raise PreconditionError("Cannot extend an empty cylinder word")
    cyclic = len(word) < 2 or word[0] != (word[-1] ^ 1)
    out = list(word)
    while len(out) < length:
        out.append(out[len(out) - len(word)] if cyclic else word[-1])
    return out[: max(length, 0)]


@dataclass
class CocycleSampler:
    """
    泛函 f 在柱集子移位上的屋顶函数

    WORD_LENGTH 泛函的屋顶为常数 scale；其余为线丛余循环乘以 period_factor。
    """

    functional: LengthFunctional
    flag_depth: int = field(default_factory=lambda: settings.flag_depth)
    seed: int = 1
    _seed_vector: np.ndarray | None = field(default=None, init=False, repr=False)
    _edge_cache: dict[tuple[int, int], np.ndarray] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.flag_depth < 0:
            raise PreconditionError("Flag depth must be non-negative", flag_depth=self.flag_depth)
        rep = self.functional.representation
        if rep is not None:
            rng = np.random.default_rng(self.seed)
            v = rng.standard_normal(rep.dimension)
            if rep.is_complex:
                v = v + 1j * rng.standard_normal(rep.dimension)
            self._seed_vector = v / np.linalg.norm(v)

    @property
    def is_constant(self) -> bool:
        return self.functional.kind == FunctionalKind.WORD_LENGTH

    @property
    def label(self) -> str:
        return self.functional.label

    # ── 方向与一步权重 ──

    def direction(self, tail: Sequence[int]) -> np.ndarray:
        """u = ρ(tail[0]…tail[N−1])·v₀ 的单位方向，从右往左作用"""
        stack = self.functional.representation.generator_stack
        v = self._seed_vector
        for code in reversed(list(tail)[: self.flag_depth]):
            v = stack[code] @ v
            norm = np.linalg.norm(v)
            if not np.isfinite(norm) or norm == 0.0:
                raise ProximalityFailure("Flag approximation collapsed", tail=list(tail))
            v = v / norm
        return v

    def one_step_weight(self, letter: int, tail: Sequence[int]) -> float:
        """读字母 letter、后续序列为 tail 时的一步权重"""
        if self.is_constant:
            return self.functional.scale
        u = self.direction(tail)
        stack = self.functional.representation.generator_stack
        return self.functional.period_factor * float(np.log(np.linalg.norm(stack[letter] @ u)))

    def birkhoff_sum(self, codes: Sequence[int]) -> float:
        """周期字 γ^∞ 一个周期上的一步权重之和；γ 须循环约化"""
        codes = [int(c) for c in codes]
        p = len(codes)
        total = 0.0
        for i in range(p):
            tail = [codes[(i + 1 + j) % p] for j in range(self.flag_depth)]
            total += self.one_step_weight(codes[i], tail)
        return total

    # ── 子移位上的边权 ──

    def edge_weights(self, subshift: SubshiftSpec) -> np.ndarray:
        """每条转移 s → t 的权重 c = f·log‖ρ(s₀)·u(t)‖，按子移位缓存"""
        key = (subshift.rank, subshift.depth)
        if key in self._edge_cache:
            return self._edge_cache[key]

        if self.is_constant:
            weights = np.full(subshift.edge_count, float(self.functional.scale))
        else:
            if self.functional.representation.rank != subshift.rank:
                raise PreconditionError(
                    "Representation rank differs from subshift rank",
                    label=self.label,
                    rank=self.functional.representation.rank,
                )
            length = max(self.flag_depth, subshift.depth)
            directions = np.stack(
                [self.direction(extend_cylinder(row, length)) for row in subshift.states.tolist()]
            )
            stack = self.functional.representation.generator_stack
            images = np.einsum("eij,ej->ei", stack[subshift.first_letter], directions[subshift.dst])
            weights = self.functional.period_factor * np.log(np.linalg.norm(images, axis=1))

        weights.setflags(write=False)
        self._edge_cache[key] = weights
        logger.debug("Edge weights sampled", functional=self.label, depth=subshift.depth, edges=len(weights))
        return weights
