"""
pressure-lab - 实验配置
YAML 文件 → pydantic 模型（未知键一律拒绝）→ 表示 / 泛函 / 族

矩阵元是字符串，按精确有理数解析（"3"、"-5/4"、"0.75"）；复数元写成 [re, im]。
校验失败时通过 yaml.compose 的节点标记定位到行列。
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import numpy as np
import structlog
import yaml
from pydantic import AfterValidator, BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from app.core.errors import ConfigError, PreconditionError
from app.core.models import FunctionalKind, Route
from app.families.family import (
    ConjugationFamily,
    ExplicitFamily,
    RepFamily,
    SymmetricPowerFamily,
    with_conjugation,
)
from app.group.classes import check_free_group
from app.group.words import Word
from app.rep.functionals import LengthFunctional, symmetric_power_rep
from app.rep.representation import Representation

logger = structlog.get_logger()


def parse_exact(value: Any) -> Fraction | complex:
    """单个矩阵元：有理数字符串或 [re, im] 复有理对"""
    if isinstance(value, list):
        if len(value) != 2:
            raise ValueError(f"complex entry must be [re, im], got {value!r}")
        re, im = (parse_exact(v) for v in value)
        if isinstance(re, complex) or isinstance(im, complex):
            raise ValueError("nested complex entry")
        return complex(float(re), float(im))
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ValueError(f"not an exact rational: {value!r}") from e


def _check_exact(value: Any) -> Any:
    parse_exact(value)
    return value


Scalar = Union[str, int, float]
ExactEntry = Annotated[Union[Scalar, list[Scalar]], AfterValidator(_check_exact)]
ExactScalar = Annotated[Scalar, AfterValidator(_check_exact)]
PolyEntry = Union[str, int]


# ═══════════════════════════════════════════════════════════════════════════
# Schema
# ═══════════════════════════════════════════════════════════════════════════


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GroupConfig(_Strict):
    rank: int = 2
    relators: list[str] = []


class SymmetricPowerRef(_Strict):
    of: str
    m: int


class RepresentationConfig(_Strict):
    label: str
    generators: list[list[list[ExactEntry]]] | None = None
    symmetric_power: SymmetricPowerRef | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.generators is None) == (self.symmetric_power is None):
            raise ValueError("give exactly one of 'generators' or 'symmetric_power'")
        return self


class FunctionalConfig(_Strict):
    label: str
    kind: FunctionalKind = FunctionalKind.LOG_SPECTRAL_RADIUS
    representation: str | None = None
    scale: ExactScalar = "1"

    @field_validator("scale")
    @classmethod
    def _scale_positive(cls, v):
        if parse_exact(v) <= 0:
            raise ValueError("scale must be positive")
        return v


class FamilyConfig(_Strict):
    label: str
    kind: Literal["explicit", "conjugation", "symmetric_power"] = "explicit"
    parameters: list[str] = []
    base_point: list[ExactScalar] | None = None
    box: list[tuple[ExactScalar, ExactScalar]] | None = None
    generators: list[list[list[PolyEntry]]] | None = None
    representation: str | None = None
    of: str | None = None
    m: int | None = None
    functional_scale: PolyEntry = "1"
    with_conjugation: bool = False
    conjugation_radius: float = 0.5


class RunConfig(_Strict):
    max_len: int = 10
    depth: int | None = None
    flag_depth: int | None = None
    threads: int | None = None
    seed: int = 0
    route: Route = Route.TRANSFER
    depths: list[int] = [2, 3, 4, 5]
    functionals: list[str] = []           # 留空则用全部
    intersections: list[tuple[str, str]] = []
    crossratio_representation: str | None = None
    crossratio_pairs: list[tuple[str, str]] = []
    n_max: int = 12
    p_max: int = 4
    pool_min_len: int = 1
    family: str | None = None
    direction: list[float] | None = None
    steps: list[float] = [0.05, 0.1]
    fd_step: float | None = None
    certify_len: int | None = None
    variance_check: bool = False


class OutputConfig(_Strict):
    dir: str = "out"
    cache: str | None = None


class ExperimentConfig(_Strict):
    group: GroupConfig = GroupConfig()
    representations: list[RepresentationConfig] = []
    functionals: list[FunctionalConfig] = []
    families: list[FamilyConfig] = []
    run: RunConfig = RunConfig()
    outputs: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _unique_labels(self):
        for name, items in (
            ("representation", self.representations),
            ("functional", self.functionals),
            ("family", self.families),
        ):
            labels = [x.label for x in items]
            dup = sorted({x for x in labels if labels.count(x) > 1})
            if dup:
                raise ValueError(f"duplicate {name} labels: {dup}")
        return self


# ═══════════════════════════════════════════════════════════════════════════
# 加载与定位
# ═══════════════════════════════════════════════════════════════════════════


def _locate(root: yaml.Node | None, loc: tuple) -> tuple[int, int] | None:
    """沿 pydantic 错误路径走 YAML 节点树，返回 (行, 列)，1 起"""
    node = root
    best = None
    for key in loc:
        if node is None:
            break
        best = (node.start_mark.line + 1, node.start_mark.column + 1)
        if isinstance(node, yaml.MappingNode):
            node = next((v for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            node = None
    if node is not None:
        best = (node.start_mark.line + 1, node.start_mark.column + 1)
    return best


def load_config(path: str | Path) -> ExperimentConfig:
    """
    Raises:
        ConfigError: 文件不可读、YAML 语法错误、schema 校验失败（消息带行列）
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("Cannot read config", path=str(path), reason=str(e)) from e
    return parse_config(text, source=str(path))


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        data = yaml.safe_load(text) or {}
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line, column = (mark.line + 1, mark.column + 1) if mark else (None, None)
        raise ConfigError("YAML syntax error", source=source, line=line, column=column) from e
    if not isinstance(data, dict):
        raise ConfigError("Config root must be a mapping", source=source)

    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = _locate(root, tuple(first["loc"]))
        line, column = where if where else (None, None)
        raise ConfigError(
            f"Invalid config at line {line}, column {column}: {first['msg']}",
            source=source,
            field=".".join(str(x) for x in first["loc"]),
        ) from e
    check_free_group(config.group.rank, config.group.relators)
    return config


def config_hash(config: ExperimentConfig) -> str:
    """校验后配置的规范 JSON 的 sha256；输出路径与线程数不影响结果，不计入"""
    data = config.model_dump(mode="json", exclude={"outputs": True, "run": {"threads"}})
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def representation_hash(config: ExperimentConfig, label: str) -> str:
    """单个表示（含其依赖的 base）的 sha256，用作类缓存键"""
    chain = []
    current = _rep_config(config, label)
    while True:
        chain.append(current.model_dump(mode="json"))
        if current.symmetric_power is None:
            break
        current = _rep_config(config, current.symmetric_power.of)
    canonical = json.dumps(chain, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ═══════════════════════════════════════════════════════════════════════════
# 构建
# ═══════════════════════════════════════════════════════════════════════════


def _rep_config(config: ExperimentConfig, label: str) -> RepresentationConfig:
    for r in config.representations:
        if r.label == label:
            return r
    raise ConfigError("Unknown representation", label=label)


def build_representation(config: ExperimentConfig, label: str, _seen: frozenset[str] = frozenset()) -> Representation:
    if label in _seen:
        raise ConfigError("Cyclic symmetric_power reference", label=label)
    rc = _rep_config(config, label)
    if rc.symmetric_power is not None:
        base = build_representation(config, rc.symmetric_power.of, _seen | {label})
        return symmetric_power_rep(base, rc.symmetric_power.m, label=label)
    entries = [[[parse_exact(v) for v in row] for row in gen] for gen in rc.generators]
    if len(entries) != config.group.rank:
        raise ConfigError(
            "Generator count differs from group rank", label=label, generators=len(entries), rank=config.group.rank
        )
    return Representation.from_exact(label, entries)


def build_functionals(config: ExperimentConfig, selected_only: bool = True) -> list[LengthFunctional]:
    """配置里的泛函；没有配置时每个表示给一个 log Λ 泛函。selected_only 时按 run.functionals 过滤"""
    specs = config.functionals or [
        FunctionalConfig(label=r.label, representation=r.label) for r in config.representations
    ]
    wanted = set(config.run.functionals) if selected_only else set()
    out = []
    cache: dict[str, Representation] = {}
    for fc in specs:
        if wanted and fc.label not in wanted:
            continue
        rep = None
        if fc.kind != FunctionalKind.WORD_LENGTH:
            if fc.representation is None:
                raise ConfigError("Functional needs a representation", functional=fc.label)
            if fc.representation not in cache:
                cache[fc.representation] = build_representation(config, fc.representation)
            rep = cache[fc.representation]
        scale = float(parse_exact(fc.scale))
        out.append(LengthFunctional(label=fc.label, kind=fc.kind, representation=rep, scale=scale))
    return out


def build_family(config: ExperimentConfig, label: str, _seen: frozenset[str] = frozenset()) -> RepFamily:
    if label in _seen:
        raise ConfigError("Cyclic family reference", label=label)
    fc = next((f for f in config.families if f.label == label), None)
    if fc is None:
        raise ConfigError("Unknown family", label=label)

    if fc.kind == "symmetric_power":
        if fc.of is None or fc.m is None:
            raise ConfigError("symmetric_power family needs 'of' and 'm'", family=label)
        base = build_family(config, fc.of, _seen | {label})
        family: RepFamily = SymmetricPowerFamily(
            label=label,
            parameters=list(base.parameters),
            base_point=base.base_point,
            box=list(base.box),
            scale_expr=str(fc.functional_scale) if str(fc.functional_scale) != "1" else base.scale_expr,
            base=base,
            power=fc.m,
        )
    else:
        d = len(fc.parameters)
        base_point = np.array([float(parse_exact(x)) for x in fc.base_point]) if fc.base_point else np.zeros(d)
        box = [(float(parse_exact(lo)), float(parse_exact(hi))) for lo, hi in fc.box] if fc.box else [(-0.5, 0.5)] * d
        if fc.kind == "explicit":
            if not fc.generators:
                raise ConfigError("explicit family needs generator expressions", family=label)
            family = ExplicitFamily(
                label=label,
                parameters=list(fc.parameters),
                base_point=base_point,
                box=box,
                scale_expr=str(fc.functional_scale),
                generators=fc.generators,
            )
        else:
            if fc.representation is None:
                raise ConfigError("conjugation family needs a representation", family=label)
            family = ConjugationFamily(
                label=label,
                parameters=list(fc.parameters),
                base_point=base_point,
                box=box,
                scale_expr=str(fc.functional_scale),
                representation=build_representation(config, fc.representation),
            )

    if fc.with_conjugation:
        family = with_conjugation(family, fc.conjugation_radius)
    logger.debug("Family built", family=family.label, kind=family.kind, dimension=family.dimension)
    return family


def parse_word_pair(pair: tuple[str, str]) -> tuple[Word, Word]:
    try:
        return Word.parse(pair[0]), Word.parse(pair[1])
    except PreconditionError as e:
        raise ConfigError("Cannot parse word pair", pair=list(pair), reason=str(e)) from e
