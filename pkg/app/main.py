"""
pressure-lab - 命令行入口
用法:
    pressure-lab entropy --config configs/schottky.yaml --max-len 12
    python -m app.main certify --config configs/punctured_torus.yaml --out out/torus

退出码: 0 成功（含否定的科学结论）, 1 配置/前置条件, 2 资源/数据不足, 3 数值失败
"""

from __future__ import annotations

import argparse
import logging
import sys

import structlog

from app.core.errors import InsufficientData, PressureLabError
from app.experiments.commands import COMMANDS, Experiment
from app.experiments.config import load_config
from config.settings import settings

logger = structlog.get_logger()


def configure_logging(level: str | None = None) -> None:
    """日志统一写 stderr，stdout 与输出文件保持干净"""
    numeric = logging.getLevelName((level or settings.log_level).upper())
    if not isinstance(numeric, int):
        numeric = logging.INFO
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(numeric),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.app_name, description="Thermodynamic invariants of free-group representations"
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="要运行的实验")
    parser.add_argument("--config", required=True, help="YAML 实验配置")
    parser.add_argument("--max-len", type=int, help="枚举的最大类长度 L")
    parser.add_argument("--depth", type=int, help="柱集深度 n")
    parser.add_argument("--flag-depth", type=int, help="旗逼近深度 N")
    parser.add_argument("--threads", type=int, help="工作线程数")
    parser.add_argument("--cache", help="类缓存目录")
    parser.add_argument("--out", help="输出目录")
    parser.add_argument("--seed", type=int, help="随机种子（u64）")
    parser.add_argument("--log-level", help="覆盖 PRESSURE_LAB_LOG_LEVEL")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_config(args.config)
        exp = Experiment.from_config(
            config,
            max_len=args.max_len,
            depth=args.depth,
            flag_depth=args.flag_depth,
            threads=args.threads,
            seed=args.seed,
            cache=args.cache,
            out=args.out,
        )
        logger.info("Running command", command=args.command, config=args.config, config_hash=exp.hash[:12])
        report = COMMANDS[args.command](exp)
    except InsufficientData as e:
        logger.error("Insufficient data", error=str(e), hint="increase --max-len or lower the threshold window")
        print(f"error: {e}. Try a larger --max-len.", file=sys.stderr)
        return e.exit_code
    except PressureLabError as e:
        logger.error("Command failed", command=args.command, error=str(e), error_type=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    print(f"{report.command}: ok ({exp.out_dir})")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
