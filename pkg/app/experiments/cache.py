"""
类缓存
带版本的 JSON-lines 文件：首行魔数头（版本、表示哈希、max_len），其后每行一个类的 log Λ、符号、gap
键必须完全一致才命中；损坏或版本不符的文件只记警告，绝不采信
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import structlog

from app.group.classes import ConjClass
from app.rep.representation import Representation, evaluate_batch
from app.rep.spectral import spectral_batch
from config.settings import settings

logger = structlog.get_logger()

MAGIC = "pressure-lab/class-cache"


@dataclass
class CachedSpectra:
    log_radius: np.ndarray
    signed_top: np.ndarray
    gap: np.ndarray


def compute_spectra(rep: Representation, classes: Sequence[ConjClass]) -> CachedSpectra:
    """按长度分组批量求谱，顺序与 classes 一致"""
    n = len(classes)
    out = CachedSpectra(log_radius=np.empty(n), signed_top=np.empty(n), gap=np.empty(n))
    groups: dict[int, list[int]] = {}
    for i, c in enumerate(classes):
        groups.setdefault(c.length, []).append(i)
    for _, indices in sorted(groups.items()):
        codes = np.stack([classes[i].rep.codes for i in indices])
        batch = spectral_batch(*evaluate_batch(rep, codes))
        out.log_radius[indices] = batch.log_radius
        out.signed_top[indices] = batch.signed_top
        out.gap[indices] = batch.gap
    return out


class ClassCache:
    """一个目录下按 (表示哈希, max_len) 存放的缓存文件"""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def path_for(self, rep_hash: str, max_len: int) -> Path:
        return self.directory / f"{rep_hash[:16]}-L{max_len}.jsonl"

    def _header(self, rep_hash: str, max_len: int, count: int) -> dict:
        return {"magic": MAGIC, "version": settings.cache_version, "key": rep_hash, "max_len": max_len, "count": count}

    def load(self, rep_hash: str, max_len: int, classes: Sequence[ConjClass]) -> CachedSpectra | None:
        path = self.path_for(rep_hash, max_len)
        if not path.exists():
            return None
        expected = self._header(rep_hash, max_len, len(classes))
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
            header = json.loads(lines[0]) if lines else None
            rows = [json.loads(line) for line in lines[1:]]
        except (OSError, ValueError) as e:
            # UnicodeDecodeError 与 JSONDecodeError 都是 ValueError
            logger.warning("Corrupt class cache, ignoring", path=str(path), error=str(e))
            return None

        if header != expected:
            found = header.get("version") if isinstance(header, dict) else None
            logger.warning("Class cache key mismatch, ignoring", path=str(path), found=found)
            return None
        if not all(isinstance(r, dict) for r in rows):
            logger.warning("Corrupt class cache, ignoring", path=str(path), error="row is not an object")
            return None
        if len(rows) != len(classes) or any(r.get("class") != str(c) for r, c in zip(rows, classes)):
            logger.warning("Class cache does not match the enumeration, ignoring", path=str(path))
            return None
        try:
            spectra = CachedSpectra(
                log_radius=np.array([float(r["log_radius"]) for r in rows]),
                signed_top=np.array([float(r["sign"]) for r in rows]),
                gap=np.array([float(r["gap"]) for r in rows]),
            )
        except (KeyError, TypeError, ValueError) as e:
            logger.warning("Corrupt class cache, ignoring", path=str(path), error=str(e))
            return None
        logger.info("Class cache hit", path=str(path), classes=len(rows))
        return spectra

    def store(self, rep_hash: str, max_len: int, classes: Sequence[ConjClass], spectra: CachedSpectra) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path_for(rep_hash, max_len)
        tmp = path.with_suffix(".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps(self._header(rep_hash, max_len, len(classes)), sort_keys=True) + "\n")
            for c, lr, s, g in zip(classes, spectra.log_radius, spectra.signed_top, spectra.gap):
                row = {"class": str(c), "log_radius": repr(float(lr)), "sign": int(s), "gap": repr(float(g))}
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        tmp.replace(path)
        logger.info("Class cache written", path=str(path), classes=len(classes))
        return path

    def spectra(
        self, rep: Representation, rep_hash: str, max_len: int, classes: Sequence[ConjClass]
    ) -> CachedSpectra:
        """命中则读缓存，否则计算并写入"""
        cached = self.load(rep_hash, max_len, classes)
        if cached is not None:
            return cached
        spectra = compute_spectra(rep, classes)
        self.store(rep_hash, max_len, classes, spectra)
        return spectra
