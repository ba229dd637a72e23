"""
共轭类：规范代表元、枚举、互素判定、随机字
规范形 = 循环约化字在字母全序下的最小旋转
枚举采用带相邻约束的 FKM 前项链生成，只产出规范代表元，节点数与输出同阶
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import structlog

from app.core.errors import IdentityWord, PreconditionError, ResourceLimit, UnsupportedGroup
from app.group.words import Word, code_letter, from_codes, letter_code, multiply, reduce
from config.settings import settings

logger = structlog.get_logger()


@dataclass(frozen=True, slots=True)
class ConjClass:
    """共轭类规范代表元"""

    rep: Word            # 循环约化、最小旋转
    primitive: bool
    root: Word           # rep = root^exponent
    exponent: int = 1

    @property
    def length(self) -> int:
        return len(self.rep)

    def __str__(self) -> str:
        return str(self.rep)


# ═══════════════════════════════════════════════════════════════════════════
# 单个类的规范化
# ═══════════════════════════════════════════════════════════════════════════


def cyclically_reduce(x: Word) -> Word:
    letters = x.letters
    i, j = 0, len(letters) - 1
    while i < j and letters[i] == -letters[j]:
        i += 1
        j -= 1
    return Word(letters[i : j + 1])


def _minimal_rotation(codes: tuple[int, ...]) -> tuple[int, ...]:
    n = len(codes)
    return min(codes[i:] + codes[:i] for i in range(n))


def _smallest_period(codes: tuple[int, ...]) -> int:
    n = len(codes)
    for p in range(1, n + 1):
        if n % p == 0 and codes[:p] * (n // p) == codes:
            return p
    return n


def class_representative(x: Word) -> ConjClass:
    """循环约化 → 最小旋转 → 本原根"""
    core = cyclically_reduce(x)
    if core.is_identity:
        raise IdentityWord("Conjugacy class of the identity", word=str(x))

    codes = _minimal_rotation(tuple(letter_code(v) for v in core.letters))
    period = _smallest_period(codes)
    rep = from_codes(codes)
    root = from_codes(codes[:period])
    return ConjClass(rep=rep, primitive=period == len(codes), root=root, exponent=len(codes) // period)


def check_free_group(rank: int, relators: Sequence[str] = ()) -> None:
    """只接受自由群表示；带关系子的表示（如闭曲面群）一律拒绝"""
    if relators:
        raise UnsupportedGroup("Only free groups are supported", relators=list(relators))
    if rank < 2:
        raise UnsupportedGroup("Free group rank must be at least 2", rank=rank)


# ═══════════════════════════════════════════════════════════════════════════
# 枚举
# ═══════════════════════════════════════════════════════════════════════════


def estimated_class_count(rank: int, max_len: int) -> int:
    """循环约化字数 / 长度 的累加，作为预算估计"""
    q = 2 * rank - 1
    return int(sum((q**n + rank) / n for n in range(1, max_len + 1)))


def enumerate_classes(rank: int, max_len: int) -> list[ConjClass]:
    """
    枚举所有 ℓ ≤ max_len 的共轭类，每类恰好一次

    顺序确定：先按长度，再按字母全序的字典序。
    非本原类同样输出（primitive=False）。

    Raises:
        UnsupportedGroup: rank < 2
        ResourceLimit: 估计或实际节点数超过 settings.max_enumeration_states
    """
    check_free_group(rank)
    if max_len < 1:
        raise PreconditionError("max_len must be at least 1", max_len=max_len)

    budget = settings.max_enumeration_states
    estimate = estimated_class_count(rank, max_len)
    if estimate > budget:
        raise ResourceLimit(
            "Enumeration exceeds state budget", estimate=estimate, budget=budget, max_len=max_len
        )

    alphabet = 2 * rank
    a = [0] * (max_len + 1)          # a[0] 为 FKM 哨兵
    by_length: list[list[ConjClass]] = [[] for _ in range(max_len + 1)]
    nodes = 0

    def emit(t: int, p: int) -> None:
        # a[1..t] 是项链且首尾不互逆时即为一个共轭类代表元
        if t % p != 0:
            return
        if t >= 2 and a[t] == (a[1] ^ 1):
            return
        codes = tuple(a[1 : t + 1])
        rep = Word(tuple(code_letter(c) for c in codes))
        root = rep if p == t else Word(tuple(code_letter(c) for c in codes[:p]))
        by_length[t].append(ConjClass(rep=rep, primitive=p == t, root=root, exponent=t // p))

    def gen(t: int, p: int) -> None:
        nonlocal nodes
        nodes += 1
        if nodes > budget:
            raise ResourceLimit("Enumeration exceeds state budget", nodes=nodes, budget=budget)
        emit(t, p)
        if t == max_len:
            return
        forbidden = (a[t] ^ 1) if t >= 1 else -1
        start = a[t + 1 - p]
        if start != forbidden:
            a[t + 1] = start
            gen(t + 1, p)
        for j in range(start + 1, alphabet):
            if j == forbidden:
                continue
            a[t + 1] = j
            gen(t + 1, t + 1)

    # 根节点：长度 0，p=1；a[0]=0 使首字母从 0 开始遍历
    nodes += 1
    for j in range(alphabet):
        a[1] = j
        gen(1, 1)

    classes = [c for bucket in by_length for c in bucket]
    logger.info(
        "Conjugacy classes enumerated",
        rank=rank,
        max_len=max_len,
        classes=len(classes),
        primitive=sum(1 for c in classes if c.primitive),
        nodes=nodes,
    )
    return classes


# ═══════════════════════════════════════════════════════════════════════════
# 互素与随机字
# ═══════════════════════════════════════════════════════════════════════════


def are_coprime(x: Word, y: Word) -> bool:
    """自由群中两元无公共幂 ⇔ 不交换"""
    if x.is_identity or y.is_identity:
        raise IdentityWord("Coprimality is undefined for the identity")
    return multiply(x, y) != multiply(y, x)


def random_word(seed: int, length: int, rank: int = 2) -> Word:
    """给定种子的均匀随机约化字"""
    if length < 1:
        raise PreconditionError("Random word length must be at least 1", length=length)
    rng = np.random.default_rng(seed)
    alphabet = 2 * rank
    codes = [int(rng.integers(alphabet))]
    for _ in range(length - 1):
        # 从 2k-1 个非逆字母中均匀选取
        j = int(rng.integers(alphabet - 1))
        if j >= (codes[-1] ^ 1):
            j += 1
        codes.append(j)
    return reduce(code_letter(c) for c in codes)
