"""
交比
b(φ, ψ, u, v) = ⟨φ|u⟩⟨ψ|v⟩ / (⟨φ|v⟩⟨ψ|u⟩)
不动点交比 = Tr(p_α p_β) = lim L(αⁿβⁿ)/(L(α)ⁿL(β)ⁿ)；χᵖ 行列式检测极限集张成的维数
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
import structlog

from app.core.errors import DegeneratePairing, DegenerateQuad, InsufficientData, PreconditionError
from app.core.models import CrLimitRow, CrLimitTable, CrossRatioResult, RankScan
from app.group.classes import ConjClass, are_coprime
from app.group.words import Word
from app.rep.representation import Representation, evaluate
from app.rep.spectral import SpectralData, dominant_eigendata
from config.settings import settings

logger = structlog.get_logger()

_NOISE_FLOOR = 1e-13


@dataclass(frozen=True)
class FlagPair:
    """γ 的旗：line = 吸引特征向量，covector = 主左特征向量（其核为 θ(γ⁻)）"""

    line: np.ndarray
    covector: np.ndarray


def _as_word(x: Word | ConjClass) -> Word:
    return x.rep if isinstance(x, ConjClass) else x


def spectral_of(rep: Representation, x: Word | ConjClass) -> SpectralData:
    return dominant_eigendata(evaluate(rep, _as_word(x)))


def flag_pair(rep: Representation, x: Word | ConjClass) -> FlagPair:
    sd = spectral_of(rep, x)
    return FlagPair(line=sd.attracting, covector=sd.repelling_covector)


# ═══════════════════════════════════════════════════════════════════════════
# 交比
# ═══════════════════════════════════════════════════════════════════════════


def bb(phi: np.ndarray, psi: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """
    两个超平面（余向量）与两条直线（向量）的交比，对每个输入的缩放不变

    Raises:
        DegenerateQuad: ⟨φ|v⟩ 或 ⟨ψ|u⟩ 相对为零
    """
    phi_v = phi @ v
    psi_u = psi @ u
    tol = settings.quad_tolerance
    if abs(phi_v) <= tol * np.linalg.norm(phi) * np.linalg.norm(v):
        raise DegenerateQuad("Covector phi annihilates v")
    if abs(psi_u) <= tol * np.linalg.norm(psi) * np.linalg.norm(u):
        raise DegenerateQuad("Covector psi annihilates u")
    value = (phi @ u) * (psi @ v) / (phi_v * psi_u)
    return float(np.real(value))


def _require_coprime(alpha: Word, beta: Word) -> None:
    if not are_coprime(alpha, beta):
        raise PreconditionError("Classes are not coprime", alpha=str(alpha), beta=str(beta))


def _projector(sd: SpectralData) -> np.ndarray:
    pairing = sd.repelling_covector @ sd.attracting
    if abs(pairing) < settings.degenerate_pairing_tolerance:
        raise DegeneratePairing("Attracting line lies in repelling hyperplane", pairing=float(abs(pairing)))
    return np.outer(sd.attracting, sd.repelling_covector) / pairing


def fixed_point_cross_ratio(rep: Representation, alpha: Word | ConjClass, beta: Word | ConjClass) -> CrossRatioResult:
    """b_ρ(α⁻, β⁻, β⁺, α⁺) = bb(φ_α, φ_β, v_β, v_α)，并与 Tr(p_α p_β) 对照"""
    a, b = _as_word(alpha), _as_word(beta)
    _require_coprime(a, b)
    sa, sb = spectral_of(rep, a), spectral_of(rep, b)
    value = bb(sa.repelling_covector, sb.repelling_covector, sb.attracting, sa.attracting)
    trace_value = float(np.real(np.trace(_projector(sa) @ _projector(sb))))
    return CrossRatioResult(
        alpha=str(a), beta=str(b), value=value, trace_value=trace_value, discrepancy=abs(value - trace_value)
    )


def cr_limit(
    rep: Representation,
    alpha: Word | ConjClass,
    beta: Word | ConjClass,
    n_max: int,
    variant: str = "standard",
) -> CrLimitTable:
    """
    standard:       L(αⁿβ) / L(α)ⁿ          → Tr(p_α ρ(β))
    power_product:  L(αⁿβⁿ) / (L(α)ⁿ L(β)ⁿ) → Tr(p_α p_β) = b_ρ(α⁻, β⁻, β⁺, α⁺)

    带符号，在对数域计算。error_ratios 只统计误差高于舍入底噪的相邻项。
    """
    a, b = _as_word(alpha), _as_word(beta)
    _require_coprime(a, b)
    if variant not in ("standard", "power_product"):
        raise PreconditionError("Unknown cross-ratio limit variant", variant=variant)
    sa, sb = spectral_of(rep, a), spectral_of(rep, b)
    if variant == "power_product":
        target = fixed_point_cross_ratio(rep, a, b).trace_value
    else:
        image = evaluate(rep, b).true_matrix()
        target = float(np.real(np.trace(_projector(sa) @ image)))

    rows = []
    for n in range(1, n_max + 1):
        if variant == "standard":
            word = (a**n) * b
            log_denominator = n * sa.log_radius
            sign_denominator = sa.signed_top**n
        else:
            word = (a**n) * (b**n)
            log_denominator = n * (sa.log_radius + sb.log_radius)
            sign_denominator = (sa.signed_top * sb.signed_top) ** n
        sd = spectral_of(rep, word)
        value = sd.signed_top * sign_denominator * float(np.exp(sd.log_radius - log_denominator))
        rows.append(CrLimitRow(n=n, value=value, error=abs(value - target)))

    errors = np.array([r.error for r in rows])
    floor = _NOISE_FLOOR * max(abs(target), 1.0)
    ratios = [
        float(errors[i + 1] / errors[i])
        for i in range(len(errors) - 1)
        if errors[i + 1] > floor and errors[i] > 0
    ]
    tail = ratios[3:] if len(ratios) > 3 else ratios
    table = CrLimitTable(
        alpha=str(a),
        beta=str(b),
        variant=variant,
        target=target,
        rows=rows,
        error_ratios=ratios,
        geometric_decay=bool(tail) and max(tail) <= 0.9,
    )
    logger.info(
        "Cross-ratio limit tabulated",
        alpha=str(a),
        beta=str(b),
        variant=variant,
        final_error=rows[-1].error if rows else None,
        geometric_decay=table.geometric_decay,
    )
    return table


# ═══════════════════════════════════════════════════════════════════════════
# χᵖ 与维数检测
# ═══════════════════════════════════════════════════════════════════════════


def _check_pairwise_coprime(words: Sequence[Word]) -> None:
    for x, y in combinations(words, 2):
        _require_coprime(x, y)


def chi_matrix(rep: Representation, e: Sequence[Word | ConjClass], u: Sequence[Word | ConjClass], p: int) -> np.ndarray:
    """B_ij = b(θ(e_i), θ(e_0), ξ(u_j), ξ(u_0))，i, j = 1..p"""
    e_words = [_as_word(x) for x in e]
    u_words = [_as_word(x) for x in u]
    if len(e_words) != p + 1 or len(u_words) != p + 1:
        raise PreconditionError("chi test needs p+1 points on each side", p=p, e=len(e_words), u=len(u_words))
    _check_pairwise_coprime(e_words + u_words)

    covectors = [spectral_of(rep, w).repelling_covector for w in e_words]
    lines = [spectral_of(rep, w).attracting for w in u_words]
    out = np.empty((p, p))
    for i in range(1, p + 1):
        for j in range(1, p + 1):
            out[i - 1, j - 1] = bb(covectors[i], covectors[0], lines[j], lines[0])
    return out


def chi_test(rep: Representation, e: Sequence[Word | ConjClass], u: Sequence[Word | ConjClass], p: int) -> float:
    """|det B| / Π‖row_i‖：按行范数归一化的 χᵖ"""
    matrix = chi_matrix(rep, e, u, p)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0):
        return 0.0
    return float(abs(np.linalg.det(matrix / norms[:, None])))


def coprime_pool(classes: Sequence[ConjClass], size: int, min_len: int = 1) -> list[Word]:
    """从枚举结果里贪心挑出两两互素的本原类代表"""
    pool: list[Word] = []
    for c in classes:
        if not c.primitive or c.length < min_len:
            continue
        if all(are_coprime(c.rep, w) for w in pool):
            pool.append(c.rep)
        if len(pool) == size:
            return pool
    raise InsufficientData("Not enough pairwise coprime classes", required=size, found=len(pool))


def rank_scan(rep: Representation, pool: Sequence[Word | ConjClass], p_max: int) -> RankScan:
    """
    p = 1..p_max 的归一化 |χᵖ|；检测维数 = 首个低于 chi_relative_tolerance 的 p 减一

    pool 至少需要 2(p_max + 1) 个两两互素的类；e 取前半，u 取后半。
    """
    words = [_as_word(x) for x in pool]
    if len(words) < 2 * (p_max + 1):
        raise InsufficientData("Rank scan pool too small", required=2 * (p_max + 1), found=len(words))
    half = p_max + 1
    e_all, u_all = words[:half], words[half : 2 * half]

    chi = []
    detected = None
    for p in range(1, p_max + 1):
        value = chi_test(rep, e_all[: p + 1], u_all[: p + 1], p)
        chi.append((p, value))
        if detected is None and value < settings.chi_relative_tolerance:
            detected = p - 1
    logger.info("Rank scan finished", label=rep.label, chi=chi, detected_dimension=detected)
    return RankScan(label=rep.label, chi=chi, detected_dimension=detected)
