"""
异常体系
每个异常携带 CLI 退出码：1 配置/前置条件，2 资源/数据不足，3 数值失败
"""

from __future__ import annotations


class PressureLabError(Exception):
    """所有业务异常的基类"""

    exit_code: int = 3

    def __init__(self, message: str = "", **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.message} ({details})"


# ── 退出码 1：配置与前置条件 ──

class ConfigError(PressureLabError):
    exit_code = 1


class PreconditionError(PressureLabError):
    exit_code = 1


class IdentityWord(PreconditionError):
    """输入在自由约化后为单位元"""


class UnsupportedGroup(PreconditionError):
    """只支持自由群"""


class OutOfDomain(PreconditionError):
    """参数点落在配置的盒子之外"""


# ── 退出码 2：资源与数据 ──

class ResourceLimit(PressureLabError):
    exit_code = 2


class InsufficientData(PressureLabError):
    exit_code = 2


# ── 退出码 3：数值失败 ──

class NumericError(PressureLabError):
    exit_code = 3


class SingularProduct(NumericError):
    pass


class ProximalityFailure(NumericError):
    pass


class DegeneratePairing(NumericError):
    pass


class DegenerateQuad(NumericError):
    pass


class NotLoxodromic(NumericError):
    pass


class PositivityViolation(NumericError):
    pass


class NonConvergence(NumericError):
    pass


class BracketFailure(NumericError):
    pass


class CertificationFailure(NumericError):
    pass


class StepTooLarge(NumericError):
    pass
