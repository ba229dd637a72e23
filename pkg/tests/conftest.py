"""
pressure-lab - 测试共享 fixtures
"""

from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from app.core.models import FunctionalKind
from app.group.classes import enumerate_classes
from app.rep.functionals import LengthFunctional, symmetric_power_rep
from app.rep.representation import Representation
from app.transfer.subshift import build_subshift

CONFIG_DIR = Path(__file__).parent.parent / "configs"

# a = diag(3, 1/3)
A_DIAG = [[Fraction(3), Fraction(0)], [Fraction(0), Fraction(1, 3)]]
# tr[a,b] = -862/81
B_SCHOTTKY = [[Fraction(5, 3), Fraction(4, 3)], [Fraction(4, 3), Fraction(5, 3)]]
# tr[a,b] = -2（抛物交换子）
B_TORUS = [[Fraction(5, 4), Fraction(3, 4)], [Fraction(3, 4), Fraction(5, 4)]]


@pytest.fixture(scope="session")
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture(scope="session")
def schottky() -> Representation:
    """Fuchsian Schottky 例子"""
    return Representation.from_exact("schottky", [A_DIAG, B_SCHOTTKY])


@pytest.fixture(scope="session")
def torus() -> Representation:
    """一次穿孔环面群：交换子抛物"""
    return Representation.from_exact("punctured_torus", [A_DIAG, B_TORUS])


@pytest.fixture(scope="session")
def tau3(schottky) -> Representation:
    return symmetric_power_rep(schottky, 3, label="tau3")


@pytest.fixture(scope="session")
def sl3_perturbed(tau3) -> Representation:
    """τ_3 的生成元 b 做一个小的非共轭扰动，落在 Hitchin 分支里"""
    bump = np.eye(3)
    bump[0, 2] = 0.08
    bump[2, 0] = -0.05
    return Representation.from_matrices("tau3_bumped", [tau3.generators[0], tau3.generators[1] @ bump])


@pytest.fixture(scope="session")
def classes8():
    return enumerate_classes(2, 8)


@pytest.fixture(scope="session")
def classes10():
    return enumerate_classes(2, 10)


@pytest.fixture(scope="session")
def classes12():
    return enumerate_classes(2, 12)


@pytest.fixture(scope="session")
def word_length() -> LengthFunctional:
    return LengthFunctional(label="word", kind=FunctionalKind.WORD_LENGTH)


@pytest.fixture(scope="session")
def schottky_length(schottky) -> LengthFunctional:
    return LengthFunctional(label="schottky", kind=FunctionalKind.LOG_SPECTRAL_RADIUS, representation=schottky)


@pytest.fixture(scope="session")
def subshift4():
    return build_subshift(2, 4)
