"""
压力度量
沿族做有限差分：J 剖面、一阶导数检查、压力形式（二阶差分 + 极化）、熵导数与 log-type 残差、
熵曲线、压力范数的方差交叉验证
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import structlog
from tqdm import tqdm

from app.core.errors import CertificationFailure, StepTooLarge
from app.core.models import (
    EntropyCurve,
    EntropyDerivative,
    JProfileRow,
    LogTypeResiduals,
    PressureForm,
    Route,
    VarianceCrossCheck,
)
from app.families.family import (
    ConjugatedFamily,
    ConjugationFamily,
    RepFamily,
    evaluate_family,
    family_functional,
)
from app.group.classes import ConjClass, enumerate_classes
from app.orbits.statistics import entropy_count, equilibrium_weights, intersection, variance_estimate
from app.orbits.table import build_orbit_table
from app.rep.certify import certify_anosov
from app.rep.functionals import LengthFunctional
from app.transfer.cocycle import CocycleSampler
from app.transfer.pressure import entropy_root, intersection_transfer, pressure_norm_transfer
from app.transfer.subshift import SubshiftSpec, build_subshift
from config.settings import settings

logger = structlog.get_logger()


def _key(t: np.ndarray) -> tuple[float, ...]:
    return tuple(float(x) for x in np.round(t, 14))


@dataclass
class FamilyProbe:
    """
    一个族上所有模板点共享的计算上下文

    共享同一份类枚举与同一个柱集子移位；各点的泛函、采样器、熵与认证结果按参数缓存。
    """

    family: RepFamily
    route: Route = Route.TRANSFER
    max_len: int = 10
    depth: int = field(default_factory=lambda: settings.cylinder_depth)
    flag_depth: int = field(default_factory=lambda: settings.flag_depth)
    certify_len: int = field(default_factory=lambda: settings.family_certify_len)
    certify: bool = True
    seed: int = 1

    def __post_init__(self):
        self._classes: list[ConjClass] | None = None
        self._short: list[ConjClass] | None = None
        self._subshift: SubshiftSpec | None = None
        self._functionals: dict[tuple, LengthFunctional] = {}
        self._samplers: dict[tuple, CocycleSampler] = {}
        self._entropy: dict[tuple, float] = {}
        self._certified: set[tuple] = set()

    @property
    def rank(self) -> int:
        return evaluate_family(self.family, self.family.base_point).rank

    @property
    def classes(self) -> list[ConjClass]:
        if self._classes is None:
            self._classes = enumerate_classes(self.rank, self.max_len)
        return self._classes

    @property
    def subshift(self) -> SubshiftSpec:
        if self._subshift is None:
            self._subshift = build_subshift(self.rank, self.depth)
        return self._subshift

    # ── 单点量 ──

    def functional(self, t: Sequence[float]) -> LengthFunctional:
        t = np.asarray(t, dtype=float)
        key = _key(t)
        if key not in self._functionals:
            self._functionals[key] = family_functional(self.family, t)
        return self._functionals[key]

    def sampler(self, t: Sequence[float]) -> CocycleSampler:
        key = _key(np.asarray(t, dtype=float))
        if key not in self._samplers:
            self._samplers[key] = CocycleSampler(self.functional(t), flag_depth=self.flag_depth, seed=self.seed)
        return self._samplers[key]

    def check(self, t: Sequence[float]) -> None:
        """模板点认证；失败抛 CertificationFailure"""
        if not self.certify:
            return
        key = _key(np.asarray(t, dtype=float))
        if key in self._certified:
            return
        if self._short is None:
            self._short = enumerate_classes(self.rank, self.certify_len)
        functional = self.functional(t)
        report = certify_anosov(functional.representation, self._short, seed=self.seed)
        if not report.certified:
            raise CertificationFailure(
                "Sample point does not certify as Anosov",
                family=self.family.label,
                t=list(key),
                failures=report.failures[:5],
                delta=report.delta,
            )
        self._certified.add(key)

    def entropy(self, t: Sequence[float]) -> float:
        key = _key(np.asarray(t, dtype=float))
        if key not in self._entropy:
            self.check(t)
            if self.route == Route.TRANSFER:
                self._entropy[key] = entropy_root(self.subshift, self.sampler(t))
            else:
                f = self.functional(t)
                table = build_orbit_table(self.classes, [f])
                self._entropy[key] = entropy_count(table, f.label).h
        return self._entropy[key]

    def j_value(self, t0: Sequence[float], t: Sequence[float]) -> float:
        """J(ρ_{t0}, ρ_t)"""
        self.check(t0)
        self.check(t)
        if self.route == Route.TRANSFER:
            return intersection_transfer(self.subshift, self.sampler(t0), self.sampler(t)).J
        f0 = self.functional(t0).scaled(1.0, label="f0")
        f1 = self.functional(t).scaled(1.0, label="f1")
        table = build_orbit_table(self.classes, [f0, f1])
        return intersection(table, "f0", "f1").J


def _probe(fam: RepFamily, probe: FamilyProbe | None) -> FamilyProbe:
    return probe if probe is not None else FamilyProbe(fam)


def _richardson(derivative: Callable[[float], float], step: float, enabled: bool) -> tuple[float, float]:
    """返回 (导数估计, 误差估计)；开启时做一次 Richardson 外推"""
    coarse = derivative(step)
    if not enabled:
        return coarse, abs(coarse - derivative(step / 2))
    fine = derivative(step / 2)
    return (4.0 * fine - coarse) / 3.0, abs(fine - coarse) / 3.0


# ═══════════════════════════════════════════════════════════════════════════
# J 剖面与一阶导数
# ═══════════════════════════════════════════════════════════════════════════


def j_profile(
    fam: RepFamily,
    t0: Sequence[float],
    v: Sequence[float],
    steps: Sequence[float],
    probe: FamilyProbe | None = None,
) -> list[JProfileRow]:
    """(ε, J(ρ_{t0}, ρ_{t0+εv}))；每个模板点先认证"""
    probe = _probe(fam, probe)
    t0, v = np.asarray(t0, dtype=float), np.asarray(v, dtype=float)
    rows = [JProfileRow(eps=float(eps), J=probe.j_value(t0, t0 + eps * v)) for eps in steps]
    logger.info("J profile computed", family=fam.label, points=len(rows), route=probe.route.value)
    return rows


def first_derivative_check(
    fam: RepFamily,
    t0: Sequence[float],
    v: Sequence[float],
    step: float | None = None,
    probe: FamilyProbe | None = None,
) -> float:
    """(J(ε) − J(−ε)) / 2ε，J 在 t0 处取极小故应接近 0"""
    probe = _probe(fam, probe)
    t0, v = np.asarray(t0, dtype=float), np.asarray(v, dtype=float)
    step = step or settings.fd_step

    def central(eps: float) -> float:
        return (probe.j_value(t0, t0 + eps * v) - probe.j_value(t0, t0 - eps * v)) / (2 * eps)

    value, _ = _richardson(central, step, settings.richardson)
    return value


# ═══════════════════════════════════════════════════════════════════════════
# 压力形式
# ═══════════════════════════════════════════════════════════════════════════


def _second_difference(probe: FamilyProbe, t0: np.ndarray, w: np.ndarray, eps: float) -> float:
    plus = probe.j_value(t0, t0 + eps * w)
    minus = probe.j_value(t0, t0 - eps * w)
    return (plus + minus - 2.0) / eps**2


def _checked_second_difference(probe: FamilyProbe, t0: np.ndarray, w: np.ndarray, eps: float) -> tuple[float, float]:
    """
    ε 与 ε/2 两个步长的二阶差分；差异超过二次模型允许范围时抛 StepTooLarge

    Returns:
        (ε 步长的值, 二次模型残差)
    """
    coarse = _second_difference(probe, t0, w, eps)
    fine = _second_difference(probe, t0, w, eps / 2)
    residual = abs(coarse - fine)
    allowed = settings.quadratic_residual_ratio * abs(fine) + settings.quadratic_residual_floor
    if residual > allowed:
        raise StepTooLarge(
            "Second difference is not quadratic at this step", direction=w.tolist(), step=eps, residual=residual
        )
    return coarse, residual


def _expected_gauge(fam: RepFamily) -> int | None:
    if isinstance(fam, ConjugatedFamily):
        m = fam.matrix_dimension
        return m * m - 1
    if isinstance(fam, ConjugationFamily):
        return fam.dimension
    return None


def pressure_form(
    fam: RepFamily,
    t0: Sequence[float] | None = None,
    basis: Sequence[Sequence[float]] | None = None,
    step: float | None = None,
    probe: FamilyProbe | None = None,
) -> PressureForm:
    """
    p(v, v) = ∂²J/∂ε²；p(v, w) = (p(v+w, v+w) − p(v−w, v−w)) / 4，矩阵结构上对称

    Raises:
        CertificationFailure: 任一模板点认证失败
        StepTooLarge: 步长减半后二阶差分不满足二次模型
    """
    probe = _probe(fam, probe)
    t0 = fam.base_point if t0 is None else np.asarray(t0, dtype=float)
    d = fam.dimension
    basis_arr = np.eye(d) if basis is None else np.asarray(basis, dtype=float)
    step = step or settings.fd_step
    k = basis_arr.shape[0]

    matrix = np.zeros((k, k))
    residuals = []
    diagonal_jobs = [(i, i, basis_arr[i]) for i in range(k)]
    for i, _, w in tqdm(diagonal_jobs, desc="diagonal", disable=not settings.show_progress):
        matrix[i, i], res = _checked_second_difference(probe, t0, w, step)
        residuals.append(res)

    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    for i, j in tqdm(pairs, desc="polarization", disable=not settings.show_progress):
        plus, res_p = _checked_second_difference(probe, t0, basis_arr[i] + basis_arr[j], step)
        minus, res_m = _checked_second_difference(probe, t0, basis_arr[i] - basis_arr[j], step)
        matrix[i, j] = matrix[j, i] = (plus - minus) / 4.0
        residuals.extend([res_p, res_m])

    eigenvalues = np.linalg.eigvalsh(matrix)
    top = max(float(np.max(np.abs(eigenvalues))), 1e-300)
    first = [first_derivative_check(fam, t0, basis_arr[i], step, probe) for i in range(k)]
    form = PressureForm(
        family=fam.label,
        base_point=t0.tolist(),
        basis=basis_arr.tolist(),
        step=step,
        route=probe.route,
        matrix=matrix.tolist(),
        eigenvalues=eigenvalues.tolist(),
        first_derivatives=first,
        symmetry_defect=float(np.max(np.abs(matrix - matrix.T))),
        quadratic_residuals=residuals,
        psd=bool(eigenvalues.min() >= -settings.psd_tolerance * max(1.0, top)),
        gauge_null_count=int(np.sum(np.abs(eigenvalues) <= 1e-6 * top)),
        expected_gauge_dimension=_expected_gauge(fam),
    )
    logger.info(
        "Pressure form computed",
        family=fam.label,
        eigenvalues=[round(x, 10) for x in form.eigenvalues],
        psd=form.psd,
        gauge_null_count=form.gauge_null_count,
    )
    return form


# ═══════════════════════════════════════════════════════════════════════════
# 熵导数、log-type、熵曲线
# ═══════════════════════════════════════════════════════════════════════════


def entropy_derivative(
    fam: RepFamily,
    t0: Sequence[float],
    v: Sequence[float],
    step: float | None = None,
    probe: FamilyProbe | None = None,
) -> EntropyDerivative:
    """dh/dt 的中心差分（可 Richardson 外推），K = −(1/h)·dh/dt"""
    probe = _probe(fam, probe)
    t0, v = np.asarray(t0, dtype=float), np.asarray(v, dtype=float)
    step = step or settings.fd_step
    h0 = probe.entropy(t0)

    def central(eps: float) -> float:
        return (probe.entropy(t0 + eps * v) - probe.entropy(t0 - eps * v)) / (2 * eps)

    dh, err = _richardson(central, step, settings.richardson)
    return EntropyDerivative(h=h0, dh_dt=dh, K=-dh / h0, stderr=err)


def log_type_residuals(
    fam: RepFamily,
    t0: Sequence[float],
    v: Sequence[float],
    classes: Sequence[ConjClass],
    step: float | None = None,
    probe: FamilyProbe | None = None,
) -> LogTypeResiduals:
    """每个类的 D f(α)(v) − K·f(α)，f 为带 functional_scale 的周期"""
    probe = _probe(fam, probe)
    t0, v = np.asarray(t0, dtype=float), np.asarray(v, dtype=float)
    step = step or settings.fd_step
    K = entropy_derivative(fam, t0, v, step, probe).K
    base = probe.functional(t0).values(classes)

    def central(eps: float) -> np.ndarray:
        plus = probe.functional(t0 + eps * v).values(classes)
        minus = probe.functional(t0 - eps * v).values(classes)
        return (plus - minus) / (2 * eps)

    coarse = central(step)
    derivative = (4.0 * central(step / 2) - coarse) / 3.0 if settings.richardson else coarse
    residuals = derivative - K * base
    magnitude = np.abs(residuals)
    return LogTypeResiduals(
        K=K,
        residuals=[(str(c), float(r)) for c, r in zip(classes, residuals)],
        max_residual=float(magnitude.max()) if magnitude.size else 0.0,
        mean_residual=float(magnitude.mean()) if magnitude.size else 0.0,
    )


def _normalized_second_differences(values: np.ndarray, spacing: float) -> np.ndarray:
    return (values[2:] - 2.0 * values[1:-1] + values[:-2]) / spacing**2


def entropy_curve(
    fam: RepFamily,
    t0: Sequence[float],
    v: Sequence[float],
    spacing: float,
    half_points: int = 2,
    probe: FamilyProbe | None = None,
) -> EntropyCurve:
    """
    t0 + k·spacing·v（k = −n..n）处的熵，二阶差分 / spacing²，以及步长减半后同一区间上的结果

    halving_ratio = 减半网格与原网格二阶差分最大模之比，光滑时接近 1。
    """
    probe = _probe(fam, probe)
    t0, v = np.asarray(t0, dtype=float), np.asarray(v, dtype=float)
    ks = np.arange(-half_points, half_points + 1)
    hs = np.array([probe.entropy(t0 + k * spacing * v) for k in ks])
    fine_ks = np.arange(-2 * half_points, 2 * half_points + 1)
    fine_hs = np.array([probe.entropy(t0 + k * (spacing / 2) * v) for k in fine_ks])

    coarse = _normalized_second_differences(hs, spacing)
    fine = _normalized_second_differences(fine_hs, spacing / 2)
    denom = float(np.max(np.abs(coarse))) if coarse.size else 0.0
    ratio = float(np.max(np.abs(fine))) / denom if denom > 0 else None
    return EntropyCurve(
        points=[(float(k * spacing), float(h)) for k, h in zip(ks, hs)],
        second_differences=coarse.tolist(),
        halved_second_differences=fine.tolist(),
        halving_ratio=ratio,
    )


# ═══════════════════════════════════════════════════════════════════════════
# 方差交叉验证
# ═══════════════════════════════════════════════════════════════════════════


def variance_cross_check(
    fam: RepFamily,
    t0: Sequence[float],
    v: Sequence[float],
    step: float | None = None,
    probe: FamilyProbe | None = None,
    with_orbits: bool = False,
) -> VarianceCrossCheck:
    """
    ‖Φ̇‖²_P 的三种估计：J 的二阶差分、转移矩阵方差、（可选）轨道壳层方差

    Φ_t = −h_t·f_t；Φ̇ = −ḣ·f − h·ḟ，ḟ 按边（或按类）中心差分。
    """
    probe = _probe(fam, probe)
    t0, v = np.asarray(t0, dtype=float), np.asarray(v, dtype=float)
    step = step or settings.fd_step
    subshift = probe.subshift

    hessian = _second_difference(probe, t0, v, step)
    h0 = probe.entropy(t0)
    h_dot = (probe.entropy(t0 + step * v) - probe.entropy(t0 - step * v)) / (2 * step)
    c0 = probe.sampler(t0).edge_weights(subshift)
    c_dot = (
        probe.sampler(t0 + step * v).edge_weights(subshift) - probe.sampler(t0 - step * v).edge_weights(subshift)
    ) / (2 * step)
    phi0 = -h0 * c0
    phi_dot = -h_dot * c0 - h0 * c_dot
    transfer_norm = pressure_norm_transfer(subshift, phi0, phi_dot)

    orbit_norm = None
    if with_orbits:
        f0 = probe.functional(t0).scaled(1.0, label="f0")
        fp = probe.functional(t0 + step * v).scaled(1.0, label="fp")
        fm = probe.functional(t0 - step * v).scaled(1.0, label="fm")
        table = build_orbit_table(probe.classes, [f0, fp, fm])
        h_orbit = entropy_count(table, "f0").h
        f_dot = (table.values["fp"] - table.values["fm"]) / (2 * step)
        measure = equilibrium_weights(table, [(-h_orbit, "f0")], base="f0")
        orbit_norm = variance_estimate(table, measure, -h_orbit * f_dot) / h_orbit

    gap = abs(transfer_norm - hessian) / max(abs(hessian), 1e-300)
    logger.info(
        "Variance cross-check",
        family=fam.label,
        hessian=hessian,
        transfer=transfer_norm,
        orbit=orbit_norm,
        relative_gap=round(gap, 6),
    )
    return VarianceCrossCheck(
        direction=v.tolist(),
        hessian=hessian,
        transfer_variance_norm=transfer_norm,
        orbit_variance_norm=orbit_norm,
        relative_gap=gap,
    )
