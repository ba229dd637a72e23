"""
轨道统计
计数熵、交 I 与重整化交 J、壳层平衡权重、方差
所有求和用 math.fsum，结果与类的顺序和线程数无关
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import structlog
from scipy.special import logsumexp
from scipy.stats import linregress

from app.core.errors import InsufficientData, PreconditionError
from app.core.models import CountSample, EntropyEstimate, IntersectionEstimate, WeightedOrbitMeasure
from app.orbits.table import OrbitTable
from config.settings import settings

logger = structlog.get_logger()

Potential = Sequence[tuple[float, str]]    # Φ = Σ coef · functional


# ═══════════════════════════════════════════════════════════════════════════
# 阈值
# ═══════════════════════════════════════════════════════════════════════════


def sample_thresholds(table: OrbitTable, label: str, primitive_only: bool = True) -> np.ndarray:
    """
    在 [complete_to/2, complete_to] 内取阈值，并吸附到实际出现的取值上

    吸附保证 f 与 c·f 得到逐点成比例的阈值。

    Raises:
        InsufficientData: 不同阈值少于 entropy_min_thresholds，或窗口内类数不足
    """
    hi = table.complete_to[label]
    lo = hi / 2.0
    values = table.sorted_values(label, primitive_only)
    tol = settings.count_relative_tolerance
    window = values[(values >= lo * (1 - tol)) & (values <= hi * (1 + tol))]
    if window.size < settings.entropy_min_window_classes:
        raise InsufficientData(
            "Too few classes in the entropy window; increase max_len",
            functional=label,
            classes=int(window.size),
            required=settings.entropy_min_window_classes,
            window=(lo, hi),
        )

    observed = np.unique(window)
    targets = np.linspace(lo, hi, settings.entropy_max_thresholds)
    positions = np.searchsorted(observed, targets * (1 + tol), side="right") - 1
    thresholds = np.unique(observed[positions[positions >= 0]])
    if thresholds.size < settings.entropy_min_thresholds:
        raise InsufficientData(
            "Too few distinct thresholds in the entropy window; increase max_len",
            functional=label,
            thresholds=int(thresholds.size),
            required=settings.entropy_min_thresholds,
        )
    return thresholds


# ═══════════════════════════════════════════════════════════════════════════
# 熵
# ═══════════════════════════════════════════════════════════════════════════


def _slope_fit(
    table: OrbitTable, label: str, primitive_only: bool
) -> tuple[float, float, float, np.ndarray, list[int]]:
    thresholds = sample_thresholds(table, label, primitive_only)
    counts = [table.count(label, t, primitive_only) for t in thresholds]
    log_counts = np.log(np.asarray(counts, dtype=float))
    # 素轨道定理：#R_T ~ e^{hT}/(hT)
    corrected = linregress(thresholds, log_counts + np.log(thresholds))
    raw = linregress(thresholds, log_counts)
    return float(corrected.slope), float(corrected.stderr), float(raw.slope), thresholds, counts


def entropy_count(table: OrbitTable, label: str) -> EntropyEstimate:
    """
    计数熵：log(#R_T · T) 对 T 的最小二乘斜率（默认只计本原类）

    同时给出未修正斜率与全部类的估计。
    """
    h, stderr, h_raw, thresholds, counts = _slope_fit(table, label, primitive_only=True)
    try:
        h_all = _slope_fit(table, label, primitive_only=False)[0]
    except InsufficientData:
        h_all = None

    estimate = EntropyEstimate(
        functional=label,
        h=h,
        stderr=stderr,
        window=(float(thresholds[0]), float(thresholds[-1])),
        counts=[
            CountSample(threshold=float(t), count=n, log_count=float(np.log(n)))
            for t, n in zip(thresholds, counts)
        ],
        h_uncorrected=h_raw,
        h_all_classes=h_all,
    )
    logger.info("Counting entropy estimated", functional=label, h=round(h, 6), stderr=round(stderr, 6))
    return estimate


# ═══════════════════════════════════════════════════════════════════════════
# 交
# ═══════════════════════════════════════════════════════════════════════════


def _mean_ratio(table: OrbitTable, f: str, g: str, threshold: float, primitive_only: bool) -> float:
    mask = table.mask_below(f, threshold, primitive_only)
    ratios = table.values[g][mask] / table.values[f][mask]
    if ratios.size == 0:
        raise InsufficientData("Empty R_T", functional=f, threshold=threshold)
    return math.fsum(np.sort(ratios)) / ratios.size


def intersection(table: OrbitTable, f: str, g: str) -> IntersectionEstimate:
    """
    I_T = R_T(f) 上 g/f 的均值；报告最大完整阈值处的值与 1/T 线性趋势

    J = (h_g / h_f) · I，两个熵都由 entropy_count 给出。
    """
    table.require(f)
    table.require(g)
    thresholds = sample_thresholds(table, f)
    partial = [(float(t), _mean_ratio(table, f, g, t, True)) for t in thresholds]
    values = np.array([v for _, v in partial])
    fit = linregress(1.0 / thresholds, values)

    h_f = entropy_count(table, f).h
    h_g = h_f if g == f else entropy_count(table, g).h
    extrapolated = partial[-1][1]
    estimate = IntersectionEstimate(
        f=f,
        g=g,
        partial=partial,
        extrapolated=extrapolated,
        trend=float(fit.slope),
        limit_fit=float(fit.intercept),
        h_f=h_f,
        h_g=h_g,
        J=(h_g / h_f) * extrapolated,
        extrapolated_all_classes=_mean_ratio(table, f, g, float(thresholds[-1]), False),
    )
    logger.info("Intersection estimated", f=f, g=g, I=round(extrapolated, 8), J=round(estimate.J, 8))
    return estimate


# ═══════════════════════════════════════════════════════════════════════════
# 壳层平衡权重与方差
# ═══════════════════════════════════════════════════════════════════════════


def potential_values(table: OrbitTable, potential: Potential) -> np.ndarray:
    out = np.zeros(len(table.classes))
    for coef, label in potential:
        out = out + coef * table.require(label)
    return out


def equilibrium_weights(
    table: OrbitTable,
    potential: Potential,
    base: str,
    threshold: float | None = None,
    width: float | None = None,
) -> WeightedOrbitMeasure:
    """
    壳层 [T − ΔT, T]（按 base 泛函）内的本原类，权重 ∝ e^{Φ(a)}，log-sum-exp 归一化

    Args:
        potential: Φ = Σ coef · functional；空序列表示 Φ = 0
        threshold: 默认取 base 的 complete_to
        width: 默认 settings.shell_width
    """
    T = table.complete_to[base] if threshold is None else threshold
    dT = settings.shell_width if width is None else width
    if T > table.complete_to[base] * (1 + settings.count_relative_tolerance):
        raise InsufficientData("Shell exceeds the complete range", base=base, threshold=T)

    values = table.require(base)
    tol = settings.count_relative_tolerance
    mask = table.primitive & (values <= T * (1 + tol)) & (values >= (T - dT) * (1 - tol))
    indices = np.flatnonzero(mask)
    if indices.size == 0:
        raise InsufficientData("Empty shell", base=base, threshold=T, width=dT)

    phi = potential_values(table, potential)[indices]
    weights = np.exp(phi - logsumexp(phi))
    weights /= math.fsum(weights)
    return WeightedOrbitMeasure(
        base=base,
        potential=[(float(c), s) for c, s in potential],
        threshold=float(T),
        width=float(dT),
        indices=indices.tolist(),
        weights=weights.tolist(),
    )


def weighted_ratio(table: OrbitTable, measure: WeightedOrbitMeasure, g: str, f: str) -> float:
    """Σ w·g / Σ w·f，即 ∫g dm / ∫f dm 的轨道近似"""
    w = np.asarray(measure.weights)
    idx = np.asarray(measure.indices)
    return math.fsum(w * table.require(g)[idx]) / math.fsum(w * table.require(f)[idx])


def variance_estimate(
    table: OrbitTable,
    measure: WeightedOrbitMeasure,
    g: np.ndarray | str,
    threshold: float | None = None,
) -> float:
    """
    (1/T) Σ w·(g_a − f_a·ḡ)²，ḡ 为加权平均速率 Σw g / Σw f

    Args:
        g: 泛函标签，或与 table.classes 对齐的周期数组
    """
    idx = np.asarray(measure.indices)
    if idx.size < 2:
        raise InsufficientData("Variance needs at least two classes in the shell", classes=int(idx.size))
    w = np.asarray(measure.weights)
    g_values = table.require(g)[idx] if isinstance(g, str) else np.asarray(g)[idx]
    f_values = table.require(measure.base)[idx]
    T = measure.threshold if threshold is None else threshold
    if T <= 0:
        raise PreconditionError("Variance threshold must be positive", threshold=T)

    rate = math.fsum(w * g_values) / math.fsum(w * f_values)
    return math.fsum(w * (g_values - f_values * rate) ** 2) / T
