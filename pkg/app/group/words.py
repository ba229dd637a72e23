"""
自由群约化字
字母为带符号的生成元编号：+i 表示 g_i，-i 表示 g_i⁻¹（i 从 1 开始）
字母全序：a < a⁻¹ < b < b⁻¹ < …，对应内部编码 code = 2(i-1) + (1 if 逆 else 0)
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from app.core.errors import PreconditionError

_LOWER = string.ascii_lowercase


def letter_code(letter: int) -> int:
    """字母 → 全序编码（逆字母 = code ^ 1）"""
    return 2 * (abs(letter) - 1) + (1 if letter < 0 else 0)


def code_letter(code: int) -> int:
    """全序编码 → 字母"""
    index = code // 2 + 1
    return -index if code % 2 else index


def _freely_reduce(letters: Iterable[int]) -> tuple[int, ...]:
    stack: list[int] = []
    for x in letters:
        if x == 0:
            raise PreconditionError("Letter 0 is not a generator index")
        if stack and stack[-1] == -x:
            stack.pop()
        else:
            stack.append(x)
    return tuple(stack)


@dataclass(frozen=True, slots=True)
class Word:
    """自由约化字；空元组表示单位元"""

    letters: tuple[int, ...] = ()

    def __post_init__(self):
        for x, y in zip(self.letters, self.letters[1:]):
            if x == -y:
                raise PreconditionError("Word is not freely reduced", word=self.letters)

    # ── 基本属性 ──

    def __len__(self) -> int:
        return len(self.letters)

    @property
    def is_identity(self) -> bool:
        return not self.letters

    @property
    def codes(self) -> np.ndarray:
        return np.fromiter((letter_code(x) for x in self.letters), dtype=np.int64, count=len(self))

    @property
    def rank_needed(self) -> int:
        return max((abs(x) for x in self.letters), default=0)

    def is_cyclically_reduced(self) -> bool:
        return len(self) < 2 or self.letters[0] != -self.letters[-1]

    # ── 群运算 ──

    def __mul__(self, other: Word) -> Word:
        return multiply(self, other)

    def __invert__(self) -> Word:
        return invert(self)

    def __pow__(self, n: int) -> Word:
        return power(self, n)

    # ── 文本表示：a,b,c… 为生成元，大写为逆 ──

    def __str__(self) -> str:
        if not self.letters:
            return "1"
        return "".join(
            _LOWER[abs(x) - 1] if x > 0 else _LOWER[abs(x) - 1].upper() for x in self.letters
        )

    @classmethod
    def parse(cls, text: str) -> Word:
        """'aB' → [a, b⁻¹]；'1' 或空串为单位元。结果自动约化"""
        text = text.strip()
        if text in ("", "1"):
            return cls()
        letters = []
        for ch in text:
            if ch.lower() not in _LOWER:
                raise PreconditionError("Invalid letter in word", word=text, letter=ch)
            index = _LOWER.index(ch.lower()) + 1
            letters.append(index if ch.islower() else -index)
        return reduce(letters)


IDENTITY = Word()


def reduce(letters: Iterable[int]) -> Word:
    """自由约化任意字母序列"""
    return Word(_freely_reduce(letters))


def multiply(x: Word, y: Word) -> Word:
    return Word(_freely_reduce(x.letters + y.letters))


def invert(x: Word) -> Word:
    return Word(tuple(-v for v in reversed(x.letters)))


def power(x: Word, n: int) -> Word:
    if n == 0:
        return IDENTITY
    if n < 0:
        return power(invert(x), -n)
    return Word(_freely_reduce(x.letters * n))


def from_codes(codes: Iterable[int]) -> Word:
    return reduce(code_letter(int(c)) for c in codes)
