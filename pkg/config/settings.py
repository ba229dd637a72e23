"""
pressure-lab - 配置管理
运行参数（容差、预算、默认深度）通过环境变量或 .env 文件注入
实验本身的输入（表示、族、输出路径）走 YAML 实验配置，见 app/experiments/config.py
"""

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """全局运行配置，支持 .env 文件和 PRESSURE_LAB_* 环境变量覆盖"""

    # ── 应用 ──
    app_name: str = "pressure-lab"
    app_version: str = "0.1.0"
    log_level: str = Field(default="INFO", description="DEBUG / INFO / WARNING / ERROR")
    show_progress: bool = False             # 长时间枚举是否显示 tqdm 进度条

    # ── 资源预算 ──
    max_enumeration_states: int = 5_000_000  # 枚举节点上限，超出抛 ResourceLimit
    max_subshift_states: int = 50_000        # 柱集状态数上限
    worker_threads: int = 1                  # 按长度分批求值的线程数

    # ── 谱计算 ──
    proximality_tolerance: float = 1e-6      # 1 - gap 低于此值视为非近端
    eigen_residual_tolerance: float = 1e-12  # 幂迭代 Rayleigh 残差阈值
    power_iteration_max_steps: int = 2000
    power_iteration_attempts: int = 3        # 非收敛时换随机起点重试次数
    gap_fallback_threshold: float = 0.95     # gap 超过此值时改用零空间求特征向量
    degenerate_pairing_tolerance: float = 1e-12
    imag_tolerance: float = 1e-9             # 主特征值虚部相对容差

    # ── 轨道统计 ──
    entropy_min_thresholds: int = 8
    entropy_max_thresholds: int = 32
    entropy_min_window_classes: int = 100
    count_relative_tolerance: float = 1e-9   # 阈值比较的相对容差（保证缩放协变）
    shell_width: float = 1.0                 # 平衡权重的壳层宽度 ΔT

    # ── 转移算子 ──
    cylinder_depth: int = 4                  # 柱集深度 n
    flag_depth: int = 12                     # 旗逼近深度 N
    pressure_tolerance: float = 1e-12        # Perron 根相对容差
    pressure_max_steps: int = 20_000
    root_tolerance: float = 1e-10            # |P(h)| 目标
    root_bracket_max: float = 1e3

    # ── 交比 ──
    quad_tolerance: float = 1e-12
    chi_relative_tolerance: float = 1e-8

    # ── 参数族 ──
    fd_step: float = 1e-2                    # 有限差分默认步长
    richardson: bool = True                  # 一阶导数是否做 Richardson 外推
    family_certify_len: int = 4              # 模板点认证所用的类长度
    psd_tolerance: float = 1e-6             # 相对 max(1, 最大特征值)，吸收差分噪声
    quadratic_residual_ratio: float = 1.0    # 二阶差分步长减半后的容许相对残差
    quadratic_residual_floor: float = 1e-6

    # ── 缓存 ──
    cache_version: int = 1

    model_config = {
        "env_prefix": "PRESSURE_LAB_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "case_sensitive": False,
    }


# 全局单例
settings = Settings()
