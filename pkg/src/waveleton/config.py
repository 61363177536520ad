"""
配置管理模块
集中管理所有配置项，支持 YAML/JSON 文件加载和环境变量覆盖
"""
import os
import logging
from pathlib import Path
from dataclasses import dataclass, field, fields, asdict
from typing import List, Optional, Dict, Any

import yaml
from dotenv import load_dotenv

from .errors import ConfigError

# 配置文件默认路径
DEFAULT_CONFIG_PATH = Path(__file__).parent.parent.parent / "configs" / "waveleton.yaml"
DEFAULT_ENV_PATH = Path(__file__).parent.parent.parent / "configs" / ".env"


@dataclass
class WaveletConfig:
    """小波滤波器配置"""
    family: str = "symmlet"
    order: int = 8
    levels: int = 4


@dataclass
class MraConfig:
    """多分辨率演示信号配置"""
    kick_width: float = 4.0          # 单位: 网格格点
    rw_a: float = 0.5
    rw_b: int = 3
    rw_terms: int = 20
    cutoff_eps: float = 1e-6


@dataclass
class OperatorConfig:
    """非标准形式与导数配置"""
    derivative_filter: str = "daubechies6"
    threshold: float = 1e-8
    null_space_rtol: float = 1e-9


@dataclass
class DynamicsConfig:
    """相空间动力学配置"""
    hbar: float = 1.0
    mass: float = 1.0
    omega: float = 1.0
    q_extent: List[float] = field(default_factory=lambda: [-8.0, 8.0])
    # 缺省 (None) 取与 q 网格共轭的动量盒
    p_extent: Optional[List[float]] = None
    nq: int = 256
    np: int = 256
    method: str = "rk4"
    cfl_safety: float = 0.4
    output_every: int = 100
    boundary_band: int = 4
    boundary_tolerance: float = 1e-10
    progress: bool = False


@dataclass
class PatternConfig:
    """图样分类阈值 (标定参数)"""
    c_lo: float = 0.05
    e_lo: float = 0.5
    e_hi: float = 0.9


@dataclass
class ToleranceConfig:
    """数值容差"""
    orthonormality: float = 1e-12
    moments: float = 1e-10
    solver_residual: float = 1e-10
    normalization: float = 1e-8
    gmres_maxiter: int = 200


@dataclass
class ConcurrencyConfig:
    """并发配置 (默认关闭，保证逐位可复现)"""
    parallel: bool = False
    max_workers: int = 4

    def __post_init__(self):
        # 环境变量优先
        env_threads = os.environ.get("WAVELETON_THREADS")
        if env_threads and env_threads.isdigit():
            self.max_workers = min(self.max_workers, max(1, int(env_threads)))


@dataclass
class LoggingConfig:
    """日志配置"""
    level: str = "INFO"
    format: str = "%(asctime)s %(message)s"
    date_format: str = "%H:%M:%S"

    def __post_init__(self):
        self.level = os.environ.get("WAVELETON_LOG_LEVEL", self.level).upper()


@dataclass
class WaveletonConfig:
    """工具包总配置"""
    wavelet: WaveletConfig = field(default_factory=WaveletConfig)
    mra: MraConfig = field(default_factory=MraConfig)
    operator: OperatorConfig = field(default_factory=OperatorConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    patterns: PatternConfig = field(default_factory=PatternConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    concurrency: ConcurrencyConfig = field(default_factory=ConcurrencyConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    seed: int = 0

    @classmethod
    def load(cls, config_path: str = None) -> "WaveletonConfig":
        """从 YAML/JSON 文件加载配置 (JSON 是 YAML 的子集)"""
        path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH

        if path.exists():
            with open(path, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f) or {}
            if not isinstance(data, dict):
                raise ConfigError(f"配置文件顶层必须是映射: {path}")
            return cls._from_dict(data)
        if config_path:
            raise ConfigError(f"配置文件不存在: {path}")
        return cls()

    @classmethod
    def _from_dict(cls, data: Dict[str, Any]) -> "WaveletonConfig":
        """从字典创建配置，拒绝未知键"""
        sections = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(sections)
        if unknown:
            raise ConfigError(f"未知配置段: {sorted(unknown)}")

        kwargs = {}
        for name, value in data.items():
            if name == "seed":
                kwargs[name] = int(value)
                continue
            section_cls = sections[name].default_factory
            kwargs[name] = _build_section(section_cls, name, value or {})
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def apply_logging(self):
        """按 logging 段配置根日志"""
        logging.basicConfig(
            level=getattr(logging, self.logging.level, logging.INFO),
            format=self.logging.format,
            datefmt=self.logging.date_format,
        )


def _build_section(section_cls, name: str, values: Dict[str, Any]):
    if not isinstance(values, dict):
        raise ConfigError(f"配置段 {name} 必须是映射")
    allowed = {f.name for f in fields(section_cls)}
    unknown = set(values) - allowed
    if unknown:
        raise ConfigError(f"配置段 {name} 含未知键: {sorted(unknown)}")
    try:
        return section_cls(**values)
    except TypeError as e:
        raise ConfigError(f"配置段 {name} 非法: {e}") from e


# 全局配置实例
_config: Optional[WaveletonConfig] = None


def get_config() -> WaveletonConfig:
    """获取全局配置"""
    global _config
    if _config is None:
        _config = WaveletonConfig.load()
    return _config


def set_config(config: WaveletonConfig):
    """设置全局配置"""
    global _config
    _config = config


def load_env_file(env_path: str = None) -> bool:
    """加载 .env 文件到环境变量 (不覆盖已有变量)"""
    path = Path(env_path) if env_path else DEFAULT_ENV_PATH
    if not path.exists():
        return False
    return load_dotenv(path, override=False)
