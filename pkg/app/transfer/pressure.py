"""
转移矩阵压力
P(s) = log ρ(M_s)，M_s[e] = exp(−s·c_e)；熵根 P(h) = 0
另含轨道和交叉验证、平衡边测度上的交与方差、深度收敛表与压力网格
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import structlog
from scipy.optimize import brentq
from scipy.special import logsumexp

from app.core.errors import BracketFailure, InsufficientData, NonConvergence, PreconditionError
from app.core.models import DepthRow, PressureGrid, TransferIntersection
from app.orbits.statistics import Potential, potential_values
from app.orbits.table import OrbitTable
from app.transfer.cocycle import CocycleSampler
from app.transfer.subshift import SubshiftSpec, build_subshift
from config.settings import settings

logger = structlog.get_logger()


@dataclass(frozen=True)
class PerronData:
    log_root: float            # log λ（已加回平移量）
    right: np.ndarray
    left: np.ndarray
    root: float                # 平移后矩阵的 λ


# ═══════════════════════════════════════════════════════════════════════════
# Perron 根：Collatz–Wielandt 夹逼的幂迭代
# ═══════════════════════════════════════════════════════════════════════════


def _perron_vector(matrix, tol: float, max_steps: int) -> tuple[float, np.ndarray]:
    x = np.ones(matrix.shape[0])
    for _ in range(max_steps):
        y = matrix @ x
        ratios = y / x
        lo, hi = float(ratios.min()), float(ratios.max())
        if lo <= 0.0:
            raise NonConvergence("Transfer matrix is not primitive on the iterate", lower=lo)
        x = y / np.linalg.norm(y)
        if hi - lo <= tol * lo:
            return 0.5 * (lo + hi), x
    raise NonConvergence("Perron iteration did not converge", steps=max_steps, spread=hi - lo)


def perron_data(subshift: SubshiftSpec, potential: np.ndarray, with_left: bool = True) -> PerronData:
    """
    非负不可约矩阵 exp(potential) 的 Perron 数据

    边势先平移使最大值为 0，避免下溢；log 根再加回平移量。
    """
    shift = float(np.max(potential))
    # 无回溯子移位含自环 aa…a，矩阵本原，幂迭代直接收敛
    matrix = subshift.weighted(np.exp(potential - shift))
    root, right = _perron_vector(matrix, settings.pressure_tolerance, settings.pressure_max_steps)
    left = np.zeros(0)
    if with_left:
        _, left = _perron_vector(matrix.T.tocsr(), settings.pressure_tolerance, settings.pressure_max_steps)
    return PerronData(log_root=float(np.log(root) + shift), right=right, left=left, root=root)


# ═══════════════════════════════════════════════════════════════════════════
# 压力与熵根
# ═══════════════════════════════════════════════════════════════════════════


def potential_pressure(subshift: SubshiftSpec, potential: np.ndarray) -> float:
    """任意边势 Φ 的压力 log ρ(exp Φ)"""
    return perron_data(subshift, potential, with_left=False).log_root


def pressure(subshift: SubshiftSpec, sampler: CocycleSampler, s: float) -> float:
    """P(s) = log ρ(M_s)，s ≥ 0"""
    if s < 0:
        raise PreconditionError("Pressure parameter must be non-negative", s=s)
    return potential_pressure(subshift, -s * sampler.edge_weights(subshift))


def entropy_root(subshift: SubshiftSpec, sampler: CocycleSampler) -> float:
    """
    P(h) = 0 的根：先倍增找括号，再 brentq

    Raises:
        BracketFailure: P(0) ≤ 0，或 s 超过 root_bracket_max 仍未变号
    """
    p0 = pressure(subshift, sampler, 0.0)
    if p0 <= 0:
        raise BracketFailure("Pressure at zero is not positive", pressure=p0)

    hi = 1.0
    while pressure(subshift, sampler, hi) >= 0:
        hi *= 2.0
        if hi > settings.root_bracket_max:
            raise BracketFailure("No sign change of the pressure", bracket_max=settings.root_bracket_max)
    lo = hi / 2.0 if hi > 1.0 else 0.0

    h = brentq(lambda s: pressure(subshift, sampler, s), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    residual = pressure(subshift, sampler, h)
    if abs(residual) > settings.root_tolerance:
        raise NonConvergence("Entropy root residual too large", residual=residual, h=h)
    logger.debug("Entropy root found", functional=sampler.label, depth=subshift.depth, h=h)
    return float(h)


def pressure_grid(subshift: SubshiftSpec, sampler: CocycleSampler, s_values: Sequence[float]) -> PressureGrid:
    """(s, P(s)) 表及等距网格上的二阶差分凸性"""
    s_values = sorted(float(s) for s in s_values)
    points = [(s, pressure(subshift, sampler, s)) for s in s_values]
    second = None
    if len(points) >= 3:
        ps = np.array([p for _, p in points])
        ss_ = np.array(s_values)
        h_left, h_right = np.diff(ss_)[:-1], np.diff(ss_)[1:]
        d2 = 2 * (h_left * ps[2:] - (h_left + h_right) * ps[1:-1] + h_right * ps[:-2]) / (
            h_left * h_right * (h_left + h_right)
        )
        second = float(d2.min())
    return PressureGrid(points=points, min_second_difference=second, convex=second is None or second >= -1e-9)


def depth_convergence(sampler: CocycleSampler, rank: int, depths: Sequence[int]) -> list[DepthRow]:
    """不同柱集深度下的熵根 h_n"""
    rows = []
    for n in depths:
        subshift = build_subshift(rank, n)
        rows.append(DepthRow(depth=n, states=subshift.state_count, h=entropy_root(subshift, sampler)))
    logger.info("Depth convergence tabulated", functional=sampler.label, rows=[(r.depth, r.h) for r in rows])
    return rows


# ═══════════════════════════════════════════════════════════════════════════
# 平衡边测度、交、方差
# ═══════════════════════════════════════════════════════════════════════════


def equilibrium_edge_measure(subshift: SubshiftSpec, potential: np.ndarray) -> np.ndarray:
    """μ(s→t) = ℓ_s · e^{Φ(s→t)} · r_t / (λ · ℓᵀr)，边上的平衡（Parry 型）测度"""
    data = perron_data(subshift, potential)
    shift = float(np.max(potential))
    entries = np.exp(potential - shift)
    mass = data.left[subshift.src] * entries * data.right[subshift.dst]
    return mass / math.fsum(mass)


def _measure_integral(measure: np.ndarray, values: np.ndarray) -> float:
    return math.fsum(measure * values)


def intersection_transfer(
    subshift: SubshiftSpec, sampler_f: CocycleSampler, sampler_g: CocycleSampler
) -> TransferIntersection:
    """I(f, g) = ∫g dm / ∫f dm，m 为 −h_f·f 的平衡测度；J = (h_g/h_f)·I"""
    c_f = sampler_f.edge_weights(subshift)
    c_g = sampler_g.edge_weights(subshift)
    h_f = entropy_root(subshift, sampler_f)
    h_g = h_f if sampler_g is sampler_f else entropy_root(subshift, sampler_g)
    mu = equilibrium_edge_measure(subshift, -h_f * c_f)
    ratio = _measure_integral(mu, c_g) / _measure_integral(mu, c_f)
    return TransferIntersection(
        h_f=h_f,
        h_g=h_g,
        I=ratio,
        J=(h_g / h_f) * ratio,
        depth=subshift.depth,
        flag_depth=sampler_f.flag_depth,
    )


def variance_transfer(subshift: SubshiftSpec, potential: np.ndarray, g: np.ndarray, step: float = 1e-3) -> float:
    """Var(g, m_Φ) = ∂²/∂t² P(Φ + t·g) |₀，中心二阶差分；对 g 加常数不变"""
    g = np.asarray(g, dtype=float)
    centred = g - _measure_integral(equilibrium_edge_measure(subshift, potential), g)
    plus = potential_pressure(subshift, potential + step * centred)
    minus = potential_pressure(subshift, potential - step * centred)
    zero = potential_pressure(subshift, potential)
    return max((plus - 2.0 * zero + minus) / step**2, 0.0)


def pressure_norm_transfer(subshift: SubshiftSpec, potential: np.ndarray, g: np.ndarray, step: float = 1e-3) -> float:
    """‖g‖²_P = −Var(g, m_Φ) / ∫Φ dm_Φ"""
    mu = equilibrium_edge_measure(subshift, potential)
    mean_phi = _measure_integral(mu, potential)
    if mean_phi >= 0:
        raise PreconditionError("Pressure norm needs a potential with negative mean", mean=mean_phi)
    return -variance_transfer(subshift, potential, g, step) / mean_phi


# ═══════════════════════════════════════════════════════════════════════════
# 轨道和交叉验证
# ═══════════════════════════════════════════════════════════════════════════


def pressure_orbit_sum(table: OrbitTable, potential: Potential, base: str, threshold: float) -> float:
    """
    (1/T) log Σ_{a: base(a) ≤ T} e^{Φ(a)}，只计本原类

    Raises:
        InsufficientData: T 超出 complete_to 或 R_T 为空
    """
    if threshold > table.complete_to[base] * (1 + settings.count_relative_tolerance):
        raise InsufficientData("Threshold beyond the complete range", base=base, threshold=threshold)
    mask = table.mask_below(base, threshold)
    if not mask.any():
        raise InsufficientData("Empty R_T", base=base, threshold=threshold)
    values = potential_values(table, potential)[mask] if potential else np.zeros(int(mask.sum()))
    return float(logsumexp(values) / threshold)
