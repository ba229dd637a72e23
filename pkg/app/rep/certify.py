"""
Anosov 启发式认证
对枚举出的类检查近端性，拟合 gap 指数衰减与位移夹逼常数，抽样横截性
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import structlog

from app.core.errors import NumericError
from app.core.models import CertificationReport
from app.group.classes import ConjClass, are_coprime
from app.rep.representation import Representation, evaluate, evaluate_batch
from app.rep.spectral import dominant_eigendata, spectral_batch
from config.settings import settings

logger = structlog.get_logger()

_PAIR_SAMPLES = 200
_PAIR_POOL_LEN = 4


def _group_by_length(classes: Sequence[ConjClass]) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for i, c in enumerate(classes):
        groups.setdefault(c.length, []).append(i)
    return groups


def _fit_sandwich(lengths: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """
    拟合 ℓ/K − C ≤ v ≤ Kℓ + C

    K 取每层最大值斜率与每层最小值斜率倒数中的较大者，C 取使全部点满足的最小非负值。
    """
    levels = np.unique(lengths)
    upper = np.array([values[lengths == n].max() for n in levels])
    lower = np.array([values[lengths == n].min() for n in levels])
    if len(levels) >= 2:
        slope_up = np.polyfit(levels, upper, 1)[0]
        slope_lo = np.polyfit(levels, lower, 1)[0]
    else:
        slope_up = slope_lo = float(upper[0] / levels[0])
    k = max(slope_up, 1.0 / slope_lo if slope_lo > 0 else np.inf, 1.0)
    c = max(float(np.max(values - k * lengths)), float(np.max(lengths / k - values)), 0.0)
    return float(k), c


def _sandwich_violation(lengths: np.ndarray, values: np.ndarray, k: float, c: float) -> np.ndarray:
    return np.maximum(values - (k * lengths + c), (lengths / k - c) - values)


def _transversality_margin(rep: Representation, classes: Sequence[ConjClass], seed: int) -> tuple[float | None, int]:
    pool = [c for c in classes if c.primitive and c.length <= _PAIR_POOL_LEN]
    if len(pool) < 2:
        return None, 0

    flags = {}
    for c in pool:
        try:
            flags[c.rep] = dominant_eigendata(evaluate(rep, c.rep))
        except NumericError:
            continue
    words = sorted(flags, key=lambda w: (len(w), w.codes.tolist()))
    if len(words) < 2:
        return None, 0

    rng = np.random.default_rng(seed)
    margin = np.inf
    sampled = 0
    for _ in range(_PAIR_SAMPLES):
        i, j = rng.choice(len(words), size=2, replace=False)
        alpha, beta = words[i], words[j]
        if not are_coprime(alpha, beta):
            continue
        pairing = abs(flags[beta].repelling_covector @ flags[alpha].attracting)
        margin = min(margin, float(pairing))
        sampled += 1
    return (None if sampled == 0 else margin), sampled


def certify_anosov(rep: Representation, classes: Sequence[ConjClass], seed: int = 0) -> CertificationReport:
    """
    认证报告：非近端类比例、gap ≤ δ^ℓ e^c、夹逼常数 (K, C)、横截性裕度

    认证失败作为字段返回，不抛异常。
    """
    count = len(classes)
    max_len = max((c.length for c in classes), default=0)
    lengths = np.empty(count)
    log_radius = np.empty(count)
    log_gap = np.empty(count)
    proximal = np.empty(count, dtype=bool)

    for length, indices in sorted(_group_by_length(classes).items()):
        codes = np.stack([classes[i].rep.codes for i in indices])
        batch = spectral_batch(*evaluate_batch(rep, codes))
        lengths[indices] = length
        log_radius[indices] = batch.log_radius
        with np.errstate(divide="ignore"):
            log_gap[indices] = np.log(batch.gap)
        proximal[indices] = batch.proximal

    failures = [str(classes[i]) for i in np.flatnonzero(~proximal)]
    report = CertificationReport(
        label=rep.label,
        class_count=count,
        max_len=max_len,
        failures=failures,
        failure_fraction=len(failures) / count if count else 0.0,
    )
    ok = proximal & np.isfinite(log_gap)
    if ok.sum() < 2:
        logger.warning("Too few proximal classes to certify", label=rep.label, proximal=int(ok.sum()))
        return report

    # gap 衰减：log gap ≈ ℓ·log δ + c，c 上移到包络
    slope, _ = np.polyfit(lengths[ok], log_gap[ok], 1)
    report.delta = float(np.exp(slope))
    report.gap_offset = float(np.max(log_gap[ok] - slope * lengths[ok]))

    # 位移夹逼
    k, c = _fit_sandwich(lengths[ok], log_radius[ok])
    report.sandwich_k, report.sandwich_c = k, c
    train = ok & (lengths < max_len)
    top = ok & (lengths == max_len)
    if train.sum() >= 2 and top.any():
        k_h, c_h = _fit_sandwich(lengths[train], log_radius[train])
        violation = _sandwich_violation(lengths[top], log_radius[top], k_h, c_h)
        report.max_violation = float(np.max(violation))
        report.holdout_violations = int(np.sum(violation > 1e-12))

    margin, sampled = _transversality_margin(rep, classes, seed)
    report.transversality_margin = margin
    report.pairs_sampled = sampled
    report.certified = (
        not failures
        and report.delta < 1.0
        and margin is not None
        and margin > settings.degenerate_pairing_tolerance
        and bool(np.all(log_radius[ok] > 0))
    )
    logger.info(
        "Anosov certification finished",
        label=rep.label,
        classes=count,
        failures=len(failures),
        delta=round(report.delta, 6),
        sandwich_k=round(k, 6),
        margin=margin,
        certified=report.certified,
    )
    return report
