"""
pressure-lab - 数据模型
Pydantic 模型定义：各项估计结果、认证报告、交比表、压力形式、CLI 报告外壳
（携带 numpy 数组的中间量如 SpectralData 放在各自模块里，用 dataclass）
"""

from __future__ import annotations

from enum import Enum
from typing import Any

from pydantic import BaseModel, Field


# ═══════════════════════════════════════════════════════════════════════════
# 枚举
# ═══════════════════════════════════════════════════════════════════════════

class FunctionalKind(str, Enum):
    LOG_SPECTRAL_RADIUS = "log_spectral_radius"
    TRANSLATION_LENGTH = "translation_length"
    WORD_LENGTH = "word_length"


class Route(str, Enum):
    """熵 / J 的计算路线"""
    ORBIT = "orbit"          # 轨道计数
    TRANSFER = "transfer"    # 柱集转移矩阵


# ═══════════════════════════════════════════════════════════════════════════
# 认证
# ═══════════════════════════════════════════════════════════════════════════

class CertificationReport(BaseModel):
    """Anosov 启发式认证；失败是报告字段，不是异常"""
    label: str
    class_count: int
    max_len: int
    failures: list[str] = Field(default_factory=list)   # 非近端类
    failure_fraction: float = 0.0
    # gap ≤ δ^ℓ · e^c
    delta: float | None = None
    gap_offset: float | None = None
    # ℓ/K − C ≤ log Λ ≤ K ℓ + C
    sandwich_k: float | None = None
    sandwich_c: float | None = None
    max_violation: float | None = None      # 最长一层在较短长度拟合下的最大违例
    holdout_violations: int = 0       # 仅用较短长度拟合时，最长一层的违例数
    transversality_margin: float | None = None
    pairs_sampled: int = 0
    certified: bool = False


# ═══════════════════════════════════════════════════════════════════════════
# 轨道统计
# ═══════════════════════════════════════════════════════════════════════════

class CountSample(BaseModel):
    threshold: float
    count: int
    log_count: float


class EntropyEstimate(BaseModel):
    """计数熵：log(#R_T · T) 对 T 的最小二乘斜率"""
    functional: str
    h: float
    stderr: float
    window: tuple[float, float]
    counts: list[CountSample] = Field(default_factory=list)
    h_uncorrected: float              # 直接 log #R_T 对 T 的斜率
    h_all_classes: float | None = None
    primitive_only: bool = True


class IntersectionEstimate(BaseModel):
    """I_T = R_T(f) 上 g/f 的平均；J = (h_g/h_f)·I"""
    f: str
    g: str
    partial: list[tuple[float, float]] = Field(default_factory=list)
    extrapolated: float
    trend: float = 0.0                # I_T 对 1/T 的线性系数
    limit_fit: float | None = None    # 1/T → 0 的截距
    h_f: float
    h_g: float
    J: float
    extrapolated_all_classes: float | None = None


class WeightedOrbitMeasure(BaseModel):
    """壳层 [T−ΔT, T] 上的加权轨道测度"""
    base: str
    potential: list[tuple[float, str]]    # Φ = Σ coef · functional
    threshold: float
    width: float
    indices: list[int]
    weights: list[float]


# ═══════════════════════════════════════════════════════════════════════════
# 转移算子
# ═══════════════════════════════════════════════════════════════════════════

class TransferIntersection(BaseModel):
    h_f: float
    h_g: float
    I: float
    J: float
    depth: int
    flag_depth: int


class PressureGrid(BaseModel):
    points: list[tuple[float, float]]
    min_second_difference: float | None = None
    convex: bool = True


class DepthRow(BaseModel):
    depth: int
    states: int
    h: float


# ═══════════════════════════════════════════════════════════════════════════
# 交比
# ═══════════════════════════════════════════════════════════════════════════

class CrossRatioResult(BaseModel):
    alpha: str
    beta: str
    value: float
    trace_value: float
    discrepancy: float


class CrLimitRow(BaseModel):
    n: int
    value: float
    error: float


class CrLimitTable(BaseModel):
    alpha: str
    beta: str
    variant: str
    target: float
    rows: list[CrLimitRow]
    error_ratios: list[float] = Field(default_factory=list)
    geometric_decay: bool = False


class RankScan(BaseModel):
    label: str
    chi: list[tuple[int, float]]      # (p, 归一化 |χᵖ|)
    detected_dimension: int | None = None


# ═══════════════════════════════════════════════════════════════════════════
# 参数族
# ═══════════════════════════════════════════════════════════════════════════

class JProfileRow(BaseModel):
    eps: float
    J: float


class PressureForm(BaseModel):
    """压力形式：d×d 对称矩阵 + 诊断"""
    family: str
    base_point: list[float]
    basis: list[list[float]]
    step: float
    route: Route
    matrix: list[list[float]]
    eigenvalues: list[float]
    first_derivatives: list[float] = Field(default_factory=list)
    symmetry_defect: float = 0.0
    quadratic_residuals: list[float] = Field(default_factory=list)
    psd: bool = True
    gauge_null_count: int = 0
    expected_gauge_dimension: int | None = None


class EntropyDerivative(BaseModel):
    h: float
    dh_dt: float
    K: float
    stderr: float


class LogTypeResiduals(BaseModel):
    K: float
    residuals: list[tuple[str, float]]
    max_residual: float
    mean_residual: float


class EntropyCurve(BaseModel):
    points: list[tuple[float, float]]
    second_differences: list[float]
    halved_second_differences: list[float] = Field(default_factory=list)
    halving_ratio: float | None = None


class VarianceCrossCheck(BaseModel):
    direction: list[float]
    hessian: float
    transfer_variance_norm: float
    orbit_variance_norm: float | None = None
    relative_gap: float


# ═══════════════════════════════════════════════════════════════════════════
# CLI 报告外壳
# ═══════════════════════════════════════════════════════════════════════════

class Report(BaseModel):
    command: str
    version: str
    config_hash: str
    payload: dict[str, Any] = Field(default_factory=dict)
