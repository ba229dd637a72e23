"""
pressure-lab - 测试用的极限集维数参照值

直接在 RP¹ 上对约化字的导数求和：Σ_{|w|=n} |g_w'(x_w)|^s，x_w 取末字母的吸引不动点，
按相邻长度之比求压力零点。与转移矩阵的柱集离散化互相独立。
"""

import numpy as np
from scipy.optimize import brentq


def _attracting(g: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eig(g)
    v = np.real(vectors[:, np.argmax(np.abs(values))])
    return v / np.linalg.norm(v)


def _log_derivative_sums(generators: list[np.ndarray], n: int) -> list[np.ndarray]:
    """各长度 1..n 的 log|g_w'(x_w)| = −2 log‖g_w v‖（单位 v，角度度量）"""
    stack = []
    for g in generators:
        stack.extend([g, np.linalg.inv(g)])
    fixed = [_attracting(g) for g in stack]

    # (乘积, 末字母)
    layer = [(stack[c], c) for c in range(len(stack))]
    out = []
    for length in range(1, n + 1):
        if length > 1:
            layer = [(m @ stack[c], c) for m, last in layer for c in range(len(stack)) if c != last ^ 1]
        out.append(np.array([-2.0 * np.log(np.linalg.norm(m @ fixed[last])) for m, last in layer]))
    return out


def limit_set_dimension(generators: list[np.ndarray], n: int = 7) -> float:
    """SL(2,R) Schottky 群极限集的 Hausdorff 维数（= 平移长度的临界指数）"""
    logs = _log_derivative_sums([np.asarray(g, dtype=float) for g in generators], n)

    def pressure(s: float) -> float:
        top = np.logaddexp.reduce(s * logs[-1])
        below = np.logaddexp.reduce(s * logs[-2])
        return float(top - below)

    return float(brentq(pressure, 1e-3, 2.0, xtol=1e-12))
