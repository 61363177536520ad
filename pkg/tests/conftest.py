"""
测试公共配置
把 src/ 加入导入路径，并提供谐振子基准的会话级夹具
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# 添加项目路径
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from waveleton.config import WaveletonConfig, set_config  # noqa: E402
from waveleton.wigner_dyn import (  # noqa: E402
    PolynomialPotential, WignerState, coherent_wigner, evolve, phase_grid,
)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 大网格长时间推进，可用 -m \"not slow\" 跳过")


@pytest.fixture(autouse=True)
def default_config():
    """每个测试使用内置默认配置，不读取仓库里的 YAML"""
    set_config(WaveletonConfig())
    yield
    set_config(WaveletonConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def harmonic_benchmark():
    """
    谐振子网格推进基准: ±6 盒、128² 网格、相干态 (1.5, 0)，推进半个周期

    返回初态、终态与推进参数，供 Galerkin 交叉校验复用
    """
    set_config(WaveletonConfig())
    grid = phase_grid((-6.0, 6.0), (-6.0, 6.0), 128, 128)
    potential = PolynomialPotential.harmonic()
    start = WignerState(grid.with_values(coherent_wigner(grid, 1.5, 0.0)))
    horizon = math.pi
    steps = 520
    trajectory = evolve(start, potential, None, horizon / steps, steps)
    return {
        "grid": grid,
        "potential": potential,
        "initial": start,
        "final": trajectory.final,
        "horizon": horizon,
        "steps": steps,
    }


@pytest.fixture(scope="session")
def full_period_benchmark():
    """
    完整周期基准: ±8 盒、256² 网格、相干态 (2, 0)，rk4 推进 2π

    2011 步使 dt 恰在 CFL 上限之内
    """
    set_config(WaveletonConfig())
    grid = phase_grid((-8.0, 8.0), (-8.0, 8.0), 256, 256)
    potential = PolynomialPotential.harmonic()
    start = WignerState(grid.with_values(coherent_wigner(grid, 2.0, 0.0)))
    horizon = 2 * math.pi
    steps = 2011
    trajectory = evolve(start, potential, None, horizon / steps, steps)
    return {
        "grid": grid,
        "potential": potential,
        "initial": start,
        "trajectory": trajectory,
        "horizon": horizon,
        "steps": steps,
    }
