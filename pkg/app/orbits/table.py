"""
轨道值表
每个共轭类在每个泛函下的周期 f(γ)，以及保证 R_T 完整的上界 complete_to
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import structlog
from tqdm import tqdm

from app.core.errors import PositivityViolation, PreconditionError
from app.group.classes import ConjClass
from app.rep.functionals import LengthFunctional
from config.settings import settings

logger = structlog.get_logger()

_POSITIVITY_FLOOR = 1e-6


@dataclass(frozen=True)
class LowerLine:
    """f ≥ slope·ℓ − offset，对每层最小值成立"""

    slope: float
    offset: float


@dataclass
class OrbitTable:
    classes: list[ConjClass]
    max_len: int
    lengths: np.ndarray
    primitive: np.ndarray
    values: dict[str, np.ndarray] = field(default_factory=dict)
    complete_to: dict[str, float] = field(default_factory=dict)
    lower_lines: dict[str, LowerLine] = field(default_factory=dict)

    def __post_init__(self):
        self._sorted: dict[tuple[str, bool], np.ndarray] = {}

    @property
    def labels(self) -> list[str]:
        return list(self.values)

    def require(self, label: str) -> np.ndarray:
        if label not in self.values:
            raise PreconditionError("Functional not in orbit table", functional=label, known=self.labels)
        return self.values[label]

    def sorted_values(self, label: str, primitive_only: bool = True) -> np.ndarray:
        key = (label, primitive_only)
        if key not in self._sorted:
            values = self.require(label)
            if primitive_only:
                values = values[self.primitive]
            self._sorted[key] = np.sort(values, kind="stable")
        return self._sorted[key]

    def count(self, label: str, threshold: float, primitive_only: bool = True) -> int:
        """#R_T，比较带相对容差使缩放后的阈值计数一致"""
        values = self.sorted_values(label, primitive_only)
        limit = threshold * (1.0 + settings.count_relative_tolerance)
        return int(np.searchsorted(values, limit, side="right"))

    def mask_below(self, label: str, threshold: float, primitive_only: bool = True) -> np.ndarray:
        limit = threshold * (1.0 + settings.count_relative_tolerance)
        mask = self.require(label) <= limit
        if primitive_only:
            mask &= self.primitive
        return mask


# ═══════════════════════════════════════════════════════════════════════════
# 构建
# ═══════════════════════════════════════════════════════════════════════════


def fit_lower_line(lengths: np.ndarray, values: np.ndarray) -> LowerLine:
    """对每层最小值做最小二乘，再把截距下移到所有最小值之下"""
    levels = np.unique(lengths)
    minima = np.array([values[lengths == n].min() for n in levels])
    if len(levels) >= 2:
        slope = float(np.polyfit(levels, minima, 1)[0])
    else:
        slope = float(minima[0] / levels[0])
    offset = float(np.max(slope * levels - minima))
    return LowerLine(slope=slope, offset=offset)


def _complete_to(line: LowerLine, lengths: np.ndarray, values: np.ndarray, max_len: int) -> float:
    top_min = float(values[lengths == max_len].min())
    bound = line.slope * (max_len + 1) - line.offset
    return max(min(bound, top_min), 0.0)


def _evaluate_length(functional: LengthFunctional, classes: Sequence[ConjClass], indices: list[int]) -> np.ndarray:
    codes = np.stack([classes[i].rep.codes for i in indices])
    return functional.values_for_codes(codes)


def _evaluate(
    functional: LengthFunctional, classes: list[ConjClass], ordered: list[tuple[int, list[int]]], workers: int
) -> np.ndarray:
    values = np.empty(len(classes))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [(idx, pool.submit(_evaluate_length, functional, classes, idx)) for _, idx in ordered]
        for idx, future in tqdm(futures, desc=functional.label, disable=not settings.show_progress):
            values[idx] = future.result()
    return values


def build_orbit_table(
    classes: Sequence[ConjClass],
    functionals: Sequence[LengthFunctional],
    threads: int | None = None,
    precomputed: dict[str, np.ndarray] | None = None,
) -> OrbitTable:
    """
    Args:
        classes: enumerate_classes 的输出（完整到长度 L）
        functionals: 各长度泛函
        threads: 按长度并行的线程数；结果按下标写回，与线程数无关
        precomputed: 已有的列（如来自类缓存），按 label 直接采用

    Raises:
        PositivityViolation: 某个类的取值 ≤ 0
    """
    if not classes:
        raise PreconditionError("Orbit table needs at least one class")
    classes = list(classes)
    lengths = np.array([c.length for c in classes])
    primitive = np.array([c.primitive for c in classes])
    max_len = int(lengths.max())
    table = OrbitTable(classes=classes, max_len=max_len, lengths=lengths, primitive=primitive)

    groups: dict[int, list[int]] = {}
    for i, c in enumerate(classes):
        groups.setdefault(c.length, []).append(i)
    ordered = sorted(groups.items())
    workers = max(1, threads or settings.worker_threads)

    for functional in functionals:
        if precomputed and functional.label in precomputed:
            values = np.asarray(precomputed[functional.label], dtype=float)
        else:
            values = _evaluate(functional, classes, ordered, workers)

        bad = np.flatnonzero(~(values > _POSITIVITY_FLOOR))
        if bad.size:
            raise PositivityViolation(
                "Functional is not positive on every class",
                functional=functional.label,
                first_class=str(classes[bad[0]]),
                value=float(values[bad[0]]),
                count=int(bad.size),
            )

        line = fit_lower_line(lengths, values)
        table.values[functional.label] = values
        table.lower_lines[functional.label] = line
        table.complete_to[functional.label] = _complete_to(line, lengths, values, max_len)
        logger.info(
            "Orbit table column built",
            functional=functional.label,
            classes=len(classes),
            complete_to=round(table.complete_to[functional.label], 6),
            lower_slope=round(line.slope, 6),
        )
    return table
