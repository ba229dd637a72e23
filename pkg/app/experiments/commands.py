"""
pressure-lab - 实验命令
enumerate / spectrum / entropy / intersection / jmetric / crossratio / certify / report
表格写 CSV，结构化结果写 JSON（键排序、内嵌配置哈希与版本），同一配置与种子输出逐字节一致
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import structlog

from app.core.errors import ConfigError, PressureLabError
from app.core.models import FunctionalKind, Report
from app.crossratio.flags import coprime_pool, cr_limit, fixed_point_cross_ratio, rank_scan
from app.experiments.cache import ClassCache, compute_spectra
from app.experiments.config import (
    ExperimentConfig,
    RunConfig,
    build_family,
    build_functionals,
    build_representation,
    config_hash,
    parse_word_pair,
    representation_hash,
)
from app.families.metric import (
    FamilyProbe,
    entropy_derivative,
    first_derivative_check,
    j_profile,
    pressure_form,
    variance_cross_check,
)
from app.group.classes import ConjClass, enumerate_classes
from app.orbits.statistics import entropy_count, intersection
from app.orbits.table import OrbitTable, build_orbit_table
from app.rep.certify import certify_anosov
from app.rep.functionals import LengthFunctional
from app.transfer.cocycle import CocycleSampler
from app.transfer.pressure import depth_convergence, entropy_root, intersection_transfer, pressure_grid
from app.transfer.subshift import build_subshift
from config.settings import settings

logger = structlog.get_logger()


# ═══════════════════════════════════════════════════════════════════════════
# 输出
# ═══════════════════════════════════════════════════════════════════════════


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.info("CSV written", path=str(path), rows=len(rows))
    return path


def write_report(path: Path, report: Report) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(report.model_dump(mode="json"), sort_keys=True, indent=2, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info("Report written", path=str(path), command=report.command)
    return path


# ═══════════════════════════════════════════════════════════════════════════
# 实验上下文
# ═══════════════════════════════════════════════════════════════════════════


@dataclass
class Experiment:
    """校验后的配置 + 命令行覆盖；类枚举与谱缓存在一次运行内共享"""

    config: ExperimentConfig
    out_dir: Path
    cache: ClassCache | None = None
    _classes: dict[int, list[ConjClass]] = field(default_factory=dict, init=False, repr=False)

    @classmethod
    def from_config(cls, config: ExperimentConfig, **overrides: Any) -> Experiment:
        """overrides 对应 --max-len / --depth / --flag-depth / --threads / --seed / --cache / --out"""
        run_update = {k: v for k, v in overrides.items() if k in RunConfig.model_fields and v is not None}
        output_update = {}
        if overrides.get("out") is not None:
            output_update["dir"] = str(overrides["out"])
        if overrides.get("cache") is not None:
            output_update["cache"] = str(overrides["cache"])
        config = config.model_copy(
            update={
                "run": config.run.model_copy(update=run_update),
                "outputs": config.outputs.model_copy(update=output_update),
            }
        )
        cache = ClassCache(config.outputs.cache) if config.outputs.cache else None
        return cls(config=config, out_dir=Path(config.outputs.dir), cache=cache)

    # ── 运行参数 ──

    @property
    def rank(self) -> int:
        return self.config.group.rank

    @property
    def max_len(self) -> int:
        return self.config.run.max_len

    @property
    def depth(self) -> int:
        return self.config.run.depth or settings.cylinder_depth

    @property
    def flag_depth(self) -> int:
        return self.config.run.flag_depth or settings.flag_depth

    @property
    def threads(self) -> int:
        return self.config.run.threads or settings.worker_threads

    @property
    def seed(self) -> int:
        return self.config.run.seed

    @property
    def hash(self) -> str:
        return config_hash(self.config)

    def report(self, command: str, payload: dict[str, Any]) -> Report:
        return Report(command=command, version=settings.app_version, config_hash=self.hash, payload=payload)

    # ── 共享计算 ──

    def classes(self, max_len: int | None = None) -> list[ConjClass]:
        n = max_len or self.max_len
        if n not in self._classes:
            self._classes[n] = enumerate_classes(self.rank, n)
        return self._classes[n]

    def functionals(self) -> list[LengthFunctional]:
        functionals = build_functionals(self.config)
        if not functionals:
            raise ConfigError("Config defines no functionals or representations")
        return functionals

    def functional(self, label: str) -> LengthFunctional:
        for f in build_functionals(self.config, selected_only=False):
            if f.label == label:
                return f
        raise ConfigError("Unknown functional", label=label)

    def orbit_table(self, functionals: Sequence[LengthFunctional], max_len: int | None = None) -> OrbitTable:
        n = max_len or self.max_len
        classes = self.classes(n)
        precomputed = {}
        if self.cache is not None:
            for f in functionals:
                if f.kind == FunctionalKind.WORD_LENGTH:
                    continue
                key = representation_hash(self.config, f.representation.label)
                spectra = self.cache.spectra(f.representation, key, n, classes)
                precomputed[f.label] = f.period_factor * spectra.log_radius
        return build_orbit_table(classes, functionals, threads=self.threads, precomputed=precomputed)

    def sampler(self, functional: LengthFunctional) -> CocycleSampler:
        return CocycleSampler(functional, flag_depth=self.flag_depth, seed=self.seed + 1)


# ═══════════════════════════════════════════════════════════════════════════
# 命令
# ═══════════════════════════════════════════════════════════════════════════


def cmd_enumerate(exp: Experiment) -> Report:
    """类表 CSV：class, length, primitive, 各泛函取值"""
    functionals = exp.functionals()
    table = exp.orbit_table(functionals)
    labels = [f.label for f in functionals]
    rows = [
        [str(c), c.length, c.primitive, *(table.values[label][i] for label in labels)]
        for i, c in enumerate(table.classes)
    ]
    path = write_csv(exp.out_dir / "classes.csv", ["class", "length", "primitive", *labels], rows)
    per_length = {str(n): int(np.sum(table.lengths == n)) for n in range(1, table.max_len + 1)}
    report = exp.report(
        "enumerate",
        {
            "file": path.name,
            "max_len": table.max_len,
            "classes": len(table.classes),
            "primitive": int(table.primitive.sum()),
            "per_length": per_length,
            "complete_to": table.complete_to,
        },
    )
    write_report(exp.out_dir / "enumerate.json", report)
    return report


def cmd_spectrum(exp: Experiment) -> Report:
    """每个表示：逐类 log Λ、带符号主特征值的符号、gap、是否近端"""
    classes = exp.classes()
    summary = {}
    for rc in exp.config.representations:
        rep = build_representation(exp.config, rc.label)
        if exp.cache is not None:
            spectra = exp.cache.spectra(rep, representation_hash(exp.config, rc.label), exp.max_len, classes)
        else:
            spectra = compute_spectra(rep, classes)
        proximal = spectra.gap < 1.0 - settings.proximality_tolerance
        rows = [
            [str(c), c.length, lr, int(s), g, bool(p)]
            for c, lr, s, g, p in zip(classes, spectra.log_radius, spectra.signed_top, spectra.gap, proximal)
        ]
        write_csv(
            exp.out_dir / f"spectrum_{rc.label}.csv",
            ["class", "length", "log_radius", "sign", "gap", "proximal"],
            rows,
        )
        summary[rc.label] = {
            "dimension": rep.dimension,
            "classes": len(classes),
            "non_proximal": int((~proximal).sum()),
            "max_gap": float(np.max(spectra.gap)) if len(classes) else None,
        }
    report = exp.report("spectrum", {"max_len": exp.max_len, "representations": summary})
    write_report(exp.out_dir / "spectrum.json", report)
    return report


def cmd_entropy(exp: Experiment) -> Report:
    """计数熵与熵根两条路线，附深度收敛表与压力网格"""
    functionals = exp.functionals()
    table = exp.orbit_table(functionals)
    subshift = build_subshift(exp.rank, exp.depth)
    results = {}
    for f in functionals:
        estimate = entropy_count(table, f.label)
        sampler = exp.sampler(f)
        h_root = entropy_root(subshift, sampler)
        depths = depth_convergence(sampler, exp.rank, exp.config.run.depths)
        grid = pressure_grid(subshift, sampler, np.linspace(0.0, 2.0 * h_root, 9))
        write_csv(
            exp.out_dir / f"entropy_counts_{f.label}.csv",
            ["threshold", "count", "log_count"],
            [[s.threshold, s.count, s.log_count] for s in estimate.counts],
        )
        write_csv(exp.out_dir / f"pressure_{f.label}.csv", ["s", "P"], grid.points)
        results[f.label] = {
            "h_count": estimate.h,
            "h_root": h_root,
            "stderr": estimate.stderr,
            "window": list(estimate.window),
            "h_uncorrected": estimate.h_uncorrected,
            "h_all_classes": estimate.h_all_classes,
            "depth_convergence": [r.model_dump() for r in depths],
            "pressure_convex": grid.convex,
            "gap": abs(estimate.h - h_root),
        }
        logger.info("Entropy routes compared", functional=f.label, h_count=estimate.h, h_root=h_root)
    report = exp.report("entropy", {"max_len": exp.max_len, "depth": exp.depth, "functionals": results})
    write_report(exp.out_dir / "entropy.json", report)
    return report


def _pairs(exp: Experiment) -> list[tuple[str, str]]:
    pairs = list(exp.config.run.intersections)
    if not pairs:
        labels = [f.label for f in exp.functionals()]
        pairs = [(labels[i], labels[i + 1]) for i in range(len(labels) - 1)]
    if not pairs:
        raise ConfigError("Intersection needs at least two functionals or explicit pairs")
    return pairs


def _intersection_block(exp: Experiment, f_label: str, g_label: str) -> dict[str, Any]:
    f, g = exp.functional(f_label), exp.functional(g_label)
    table = exp.orbit_table([f, g])
    orbit = intersection(table, f.label, g.label)
    subshift = build_subshift(exp.rank, exp.depth)
    transfer = intersection_transfer(subshift, exp.sampler(f), exp.sampler(g))

    # 最高三层枚举深度上的 J 亏量
    trend = []
    for n in range(max(exp.max_len - 2, 1), exp.max_len + 1):
        try:
            sub = exp.orbit_table([f, g], max_len=n)
            trend.append((n, intersection(sub, f.label, g.label).J))
        except PressureLabError as e:
            logger.warning("Depth trend point skipped", max_len=n, error=str(e))
    deficits = [max(1.0 - j, 0.0) for _, j in trend]
    write_csv(exp.out_dir / f"intersection_{f.label}_{g.label}.csv", ["T", "I_T"], orbit.partial)
    return {
        "orbit": orbit.model_dump(mode="json"),
        "transfer": transfer.model_dump(mode="json"),
        "depth_trend": trend,
        "deficit_non_increasing": all(b <= a + 1e-12 for a, b in zip(deficits, deficits[1:])),
        "J_at_least_one": orbit.J >= 1.0 - 5e-2,
    }


def cmd_intersection(exp: Experiment) -> Report:
    payload = {f"{f}|{g}": _intersection_block(exp, f, g) for f, g in _pairs(exp)}
    report = exp.report("intersection", {"max_len": exp.max_len, "pairs": payload})
    write_report(exp.out_dir / "intersection.json", report)
    return report


def _family_block(exp: Experiment) -> dict[str, Any]:
    run = exp.config.run
    family = build_family(exp.config, run.family)
    probe = FamilyProbe(
        family,
        route=run.route,
        max_len=exp.max_len,
        depth=exp.depth,
        flag_depth=exp.flag_depth,
        certify_len=run.certify_len or settings.family_certify_len,
        seed=exp.seed + 1,
    )
    t0 = family.base_point
    v = np.asarray(run.direction, dtype=float) if run.direction else np.eye(family.dimension)[0]
    step = run.fd_step or settings.fd_step
    steps = sorted({0.0, *run.steps, *(-s for s in run.steps)})

    profile = j_profile(family, t0, v, steps, probe)
    write_csv(exp.out_dir / f"jprofile_{family.label}.csv", ["eps", "J"], [[r.eps, r.J] for r in profile])
    derivative = first_derivative_check(family, t0, v, step, probe)
    form = pressure_form(family, t0, step=step, probe=probe)
    entropy = entropy_derivative(family, t0, v, step, probe)
    block = {
        "family": family.label,
        "route": probe.route.value,
        "direction": v.tolist(),
        "profile": [r.model_dump() for r in profile],
        "first_derivative": derivative,
        "pressure_form": form.model_dump(mode="json"),
        "entropy_derivative": entropy.model_dump(),
    }
    if run.variance_check:
        checks = [
            variance_cross_check(family, t0, e, step, probe, with_orbits=True).model_dump()
            for e in np.eye(family.dimension)
        ]
        block["variance_cross_check"] = checks
    return block


def cmd_jmetric(exp: Experiment) -> Report:
    """表示对的 J，以及（配置了族时）J 剖面、一阶导数、压力形式"""
    payload: dict[str, Any] = {}
    if exp.config.run.intersections:
        payload["pairs"] = {}
        subshift = build_subshift(exp.rank, exp.depth)
        for f_label, g_label in exp.config.run.intersections:
            f, g = exp.functional(f_label), exp.functional(g_label)
            orbit = intersection(exp.orbit_table([f, g]), f.label, g.label)
            transfer = intersection_transfer(subshift, exp.sampler(f), exp.sampler(g))
            payload["pairs"][f"{f_label}|{g_label}"] = {
                "J_orbit": orbit.J,
                "I_orbit": orbit.extrapolated,
                "trend": orbit.trend,
                "J_transfer": transfer.J,
                "I_transfer": transfer.I,
            }
    if exp.config.run.family:
        payload["family"] = _family_block(exp)
    if not payload:
        raise ConfigError("jmetric needs run.intersections or run.family")
    report = exp.report("jmetric", payload)
    write_report(exp.out_dir / "jmetric.json", report)
    return report


def cmd_crossratio(exp: Experiment) -> Report:
    """交比极限表（两种变体）与 χᵖ 维数扫描"""
    run = exp.config.run
    label = run.crossratio_representation
    if label is None and exp.config.representations:
        label = exp.config.representations[0].label
    if label is None:
        raise ConfigError("crossratio needs a representation")
    rep = build_representation(exp.config, label)

    limits = []
    for pair in run.crossratio_pairs:
        alpha, beta = parse_word_pair(pair)
        fixed = fixed_point_cross_ratio(rep, alpha, beta)
        for variant in ("standard", "power_product"):
            table = cr_limit(rep, alpha, beta, run.n_max, variant)
            write_csv(
                exp.out_dir / f"crlimit_{label}_{alpha}_{beta}_{variant}.csv",
                ["n", "value", "error"],
                [[r.n, r.value, r.error] for r in table.rows],
            )
            limits.append({"fixed_point": fixed.model_dump(), "table": table.model_dump()})

    pool = coprime_pool(exp.classes(), 2 * (run.p_max + 1), run.pool_min_len)
    scan = rank_scan(rep, pool, run.p_max)
    write_csv(exp.out_dir / f"rank_scan_{label}.csv", ["p", "chi"], scan.chi)
    report = exp.report("crossratio", {"representation": label, "limits": limits, "rank_scan": scan.model_dump()})
    write_report(exp.out_dir / "crossratio.json", report)
    return report


def cmd_certify(exp: Experiment) -> Report:
    """认证失败是报告字段；命令本身成功返回"""
    classes = exp.classes()
    reports = {}
    for rc in exp.config.representations:
        rep = build_representation(exp.config, rc.label)
        reports[rc.label] = certify_anosov(rep, classes, seed=exp.seed).model_dump(mode="json")
    report = exp.report("certify", {"max_len": exp.max_len, "representations": reports})
    write_report(exp.out_dir / "certify.json", report)
    return report


def cmd_report(exp: Experiment) -> Report:
    """按配置内容依次运行适用的命令，汇总为一个报告"""
    steps: list[tuple[str, Callable[[Experiment], Report]]] = [("certify", cmd_certify), ("entropy", cmd_entropy)]
    if exp.config.run.intersections or len(exp.functionals()) >= 2:
        steps.append(("intersection", cmd_intersection))
    if exp.config.run.crossratio_pairs:
        steps.append(("crossratio", cmd_crossratio))
    if exp.config.run.family:
        steps.append(("jmetric", cmd_jmetric))
    sections = {name: fn(exp).payload for name, fn in steps}
    report = exp.report("report", sections)
    write_report(exp.out_dir / "report.json", report)
    return report


COMMANDS: dict[str, Callable[[Experiment], Report]] = {
    "enumerate": cmd_enumerate,
    "spectrum": cmd_spectrum,
    "entropy": cmd_entropy,
    "intersection": cmd_intersection,
    "jmetric": cmd_jmetric,
    "crossratio": cmd_crossratio,
    "certify": cmd_certify,
    "report": cmd_report,
}