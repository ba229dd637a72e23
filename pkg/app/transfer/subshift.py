"""
无回溯子移位的柱集编码
状态 = 长度 n 的约化字；s → t 当且仅当 t 是 s 左移一位后接一个非回溯字母
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as ss
import structlog

from app.core.errors import PreconditionError, ResourceLimit
from app.group.classes import check_free_group
from config.settings import settings

logger = structlog.get_logger()


@dataclass(frozen=True)
class SubshiftSpec:
    rank: int
    depth: int
    states: np.ndarray          # (S, n) 字母编码，按字典序
    src: np.ndarray             # (E,) 转移起点
    dst: np.ndarray             # (E,) 转移终点
    index: dict[tuple[int, ...], int] = field(repr=False)

    @property
    def state_count(self) -> int:
        return self.states.shape[0]

    @property
    def edge_count(self) -> int:
        return self.src.shape[0]

    @property
    def first_letter(self) -> np.ndarray:
        """每条转移读出的字母：起点状态的首字母"""
        return self.states[self.src, 0]

    def adjacency(self) -> ss.csr_matrix:
        data = np.ones(self.edge_count)
        return ss.csr_matrix((data, (self.src, self.dst)), shape=(self.state_count, self.state_count))

    def weighted(self, weights: np.ndarray) -> ss.csr_matrix:
        return ss.csr_matrix((weights, (self.src, self.dst)), shape=(self.state_count, self.state_count))


def state_count(rank: int, depth: int) -> int:
    return 2 * rank * (2 * rank - 1) ** (depth - 1)


def _reduced_words(rank: int, depth: int) -> np.ndarray:
    alphabet = 2 * rank
    words = np.arange(alphabet).reshape(-1, 1)
    for _ in range(depth - 1):
        last = words[:, -1]
        nxt = np.tile(np.arange(alphabet), len(words))
        base = np.repeat(words, alphabet, axis=0)
        keep = nxt != np.repeat(last ^ 1, alphabet)
        words = np.hstack([base[keep], nxt[keep].reshape(-1, 1)])
    return words


def build_subshift(rank: int, depth: int) -> SubshiftSpec:
    """
    Raises:
        UnsupportedGroup: rank < 2
        ResourceLimit: 状态数 (2k)(2k−1)^{n−1} 超出 settings.max_subshift_states
    """
    check_free_group(rank)
    if depth < 1:
        raise PreconditionError("Cylinder depth must be at least 1", depth=depth)
    count = state_count(rank, depth)
    if count > settings.max_subshift_states:
        raise ResourceLimit(
            "Cylinder state count exceeds budget", states=count, budget=settings.max_subshift_states, depth=depth
        )

    states = _reduced_words(rank, depth)
    index = {tuple(row): i for i, row in enumerate(states.tolist())}
    alphabet = 2 * rank
    src, dst = [], []
    for i, row in enumerate(states.tolist()):
        tail = tuple(row[1:])
        for x in range(alphabet):
            if row[-1] == (x ^ 1):
                continue
            src.append(i)
            dst.append(index[tail + (x,)])

    spec = SubshiftSpec(
        rank=rank,
        depth=depth,
        states=states,
        src=np.asarray(src, dtype=np.int64),
        dst=np.asarray(dst, dtype=np.int64),
        index=index,
    )
    logger.debug("Subshift built", rank=rank, depth=depth, states=count, edges=spec.edge_count)
    return spec
