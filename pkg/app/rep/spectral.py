"""
谱数据
主特征值的模与符号、吸引线、排斥超平面（左特征向量）、投影分解 ρ(γ) = L·p + r
特征值模长取 LAPACK，特征向量用幂迭代（gap 过大时退回零空间）
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import structlog
from scipy.linalg import null_space
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from app.core.errors import DegeneratePairing, NonConvergence, ProximalityFailure, SingularProduct
from app.rep.representation import ScaledMatrix
from config.settings import settings

logger = structlog.get_logger()


@dataclass(frozen=True)
class SpectralData:
    log_radius: float              # log Λ（含 log_scale）
    signed_top: int                # L 的符号；复表示恒为 +1
    attracting: np.ndarray         # 单位右特征向量
    repelling_covector: np.ndarray  # 单位左特征向量，其核为排斥超平面
    gap: float                     # |λ₂| / |λ₁|
    top: complex                   # 缩放矩阵的主特征值


@dataclass(frozen=True)
class ProjectorDecomposition:
    p: np.ndarray
    r: np.ndarray
    top: complex                   # 缩放单位下的 L
    log_scale: float
    residual_log_radius: float


# ═══════════════════════════════════════════════════════════════════════════
# 特征值
# ═══════════════════════════════════════════════════════════════════════════


def _sorted_moduli(values: np.ndarray) -> np.ndarray:
    return np.sort(np.abs(values), axis=-1)[..., ::-1]


def _check_proximal(top: complex, gap: float, is_complex: bool) -> None:
    if not is_complex and abs(top.imag) > settings.imag_tolerance * abs(top):
        raise ProximalityFailure("Dominant eigenvalue is not real", top=top)
    if 1.0 - gap < settings.proximality_tolerance:
        raise ProximalityFailure("Spectral gap below tolerance", gap=gap)


# ═══════════════════════════════════════════════════════════════════════════
# 特征向量：幂迭代（tenacity 换种子重试）或零空间
# ═══════════════════════════════════════════════════════════════════════════


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    """单位化并令最大分量为正实数，使结果确定"""
    v = v / np.linalg.norm(v)
    pivot = v[np.argmax(np.abs(v))]
    return v * (abs(pivot) / pivot)


def _power_iterate(matrix: np.ndarray, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(matrix.shape[0]).astype(matrix.dtype)
    x /= np.linalg.norm(x)
    scale = max(float(np.linalg.norm(matrix)), 1e-300)
    for _ in range(settings.power_iteration_max_steps):
        y = matrix @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            raise SingularProduct("Power iteration hit the kernel")
        x = y / norm
        q = np.vdot(x, matrix @ x)
        if np.linalg.norm(matrix @ x - q * x) <= settings.eigen_residual_tolerance * scale:
            return x
    raise NonConvergence("Power iteration did not converge", seed=seed)


def _dominant_vector(matrix: np.ndarray, top: complex, gap: float) -> np.ndarray:
    if gap > settings.gap_fallback_threshold:
        kernel = null_space(matrix - top * np.eye(matrix.shape[0]), rcond=1e-10)
        if kernel.shape[1] >= 1:
            return kernel[:, 0]
        # 零空间阈值太严时取最小奇异向量
        _, _, vh = np.linalg.svd(matrix - top * np.eye(matrix.shape[0]))
        return vh[-1].conj()

    for attempt in Retrying(
        stop=stop_after_attempt(settings.power_iteration_attempts),
        retry=retry_if_exception_type(NonConvergence),
        reraise=True,
    ):
        with attempt:
            return _power_iterate(matrix, seed=attempt.retry_state.attempt_number)
    raise NonConvergence("Power iteration retries exhausted")


def dominant_eigendata(sm: ScaledMatrix) -> SpectralData:
    """
    近端矩阵的主特征数据

    Raises:
        ProximalityFailure: 主特征值为复数，或 1 − gap 低于 proximality_tolerance
        SingularProduct: 矩阵为零
    """
    matrix = sm.matrix
    is_complex = np.iscomplexobj(matrix)
    values = np.linalg.eigvals(matrix)
    order = np.argsort(-np.abs(values), kind="stable")
    top = complex(values[order[0]])
    if abs(top) == 0.0:
        raise SingularProduct("Zero spectral radius")
    second = abs(values[order[1]]) if len(values) > 1 else 0.0
    gap = float(second / abs(top))
    _check_proximal(top, gap, is_complex)
    if not is_complex:
        top = complex(top.real, 0.0)

    shift = top if is_complex else top.real
    line = _canonical_sign(_dominant_vector(matrix, shift, gap))
    covector = _canonical_sign(_dominant_vector(matrix.T, shift, gap))
    if not is_complex:
        line, covector = line.real, covector.real

    pairing = covector @ line
    signed_top = 1
    if not is_complex and abs(pairing) > 0.0:
        rayleigh = (covector @ matrix @ line) / pairing
        signed_top = 1 if rayleigh > 0 else -1

    return SpectralData(
        log_radius=float(np.log(abs(top)) + sm.log_scale),
        signed_top=signed_top,
        attracting=line,
        repelling_covector=covector,
        gap=gap,
        top=top,
    )


def projector_decomposition(sm: ScaledMatrix, sd: SpectralData) -> ProjectorDecomposition:
    """
    p = v ⊗ φ / ⟨φ|v⟩，r = matrix − L·p（缩放单位）

    Raises:
        DegeneratePairing: ⟨φ|v⟩ 接近 0（横截性失效）
    """
    v, phi = sd.attracting, sd.repelling_covector
    pairing = phi @ v
    if abs(pairing) < settings.degenerate_pairing_tolerance:
        raise DegeneratePairing("Attracting line lies in repelling hyperplane", pairing=float(abs(pairing)))

    p = np.outer(v, phi) / pairing
    top = sd.top.real if not np.iscomplexobj(sm.matrix) else sd.top
    r = sm.matrix - top * p
    residual_values = np.abs(np.linalg.eigvals(r))
    peak = float(residual_values.max())
    residual_log_radius = float(np.log(peak) + sm.log_scale) if peak > 0.0 else float("-inf")
    return ProjectorDecomposition(
        p=p, r=r, top=top, log_scale=sm.log_scale, residual_log_radius=residual_log_radius
    )


# ═══════════════════════════════════════════════════════════════════════════
# 批量谱（OrbitTable 构建用）
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class SpectralBatch:
    log_radius: np.ndarray
    signed_top: np.ndarray
    gap: np.ndarray
    proximal: np.ndarray


def spectral_batch(matrices: np.ndarray, log_scales: np.ndarray) -> SpectralBatch:
    """
    Args:
        matrices: (N, m, m) 缩放矩阵堆叠（evaluate_batch 的输出）
        log_scales: (N,)

    Returns:
        每个矩阵的 log Λ、符号、gap 与近端标记；非近端项的 log Λ 仍是谱半径的对数
    """
    is_complex = np.iscomplexobj(matrices)
    values = np.linalg.eigvals(matrices)
    order = np.argsort(-np.abs(values), axis=-1, kind="stable")
    ordered = np.take_along_axis(values, order, axis=-1)
    top = ordered[:, 0]
    moduli = np.abs(top)
    if np.any(moduli == 0.0):
        raise SingularProduct("Zero spectral radius in batch")

    second = np.abs(ordered[:, 1]) if ordered.shape[1] > 1 else np.zeros_like(moduli)
    gap = second / moduli
    proximal = (1.0 - gap) >= settings.proximality_tolerance
    if not is_complex:
        proximal &= np.abs(top.imag) <= settings.imag_tolerance * moduli
        signed = np.where(top.real >= 0, 1, -1)
    else:
        signed = np.ones(len(top), dtype=int)

    return SpectralBatch(
        log_radius=np.log(moduli) + log_scales,
        signed_top=signed.astype(int),
        gap=gap,
        proximal=proximal,
    )
