"""
多分辨分析测试
逐尺度重构、多层范数、截断层与演示信号
"""
import numpy as np
import pytest

from waveleton.errors import BadLength, BadParams, LevelOutOfRange
from waveleton.mra import (
    COARSE, cutoff_level, demo_signal, level_energy_slope, level_reconstructions,
    multi_norm, reconstruct_level,
)
from waveleton.wavelet_core import MraDecomposition, dwt_periodic, make_filter


@pytest.fixture
def kick_decomposition():
    signal = demo_signal("kick", {"center": 0.3, "width": 6.0}, 1024)
    return signal, dwt_periodic(signal, make_filter("symmlet", 8), 6)


def test_levels_sum_to_signal(kick_decomposition):
    """P_c f + Σ_j Q_j f = f"""
    signal, decomp = kick_decomposition
    parts = level_reconstructions(decomp)
    assert [name for name, _ in parts] == [COARSE] + [f"D{j}" for j in range(4, 10)]
    total = sum(values for _, values in parts)
    assert np.max(np.abs(total - signal)) < 1e-12


def test_level_projections_are_orthogonal(kick_decomposition):
    _, decomp = kick_decomposition
    coarse = reconstruct_level(decomp, COARSE)
    fine = reconstruct_level(decomp, 7)
    assert abs(coarse @ fine) < 1e-10
    assert fine @ fine == pytest.approx(decomp.detail(7) @ decomp.detail(7), rel=1e-12)


def test_reconstruct_level_out_of_range(kick_decomposition):
    _, decomp = kick_decomposition
    with pytest.raises(LevelOutOfRange):
        reconstruct_level(decomp, 3)
    with pytest.raises(LevelOutOfRange):
        reconstruct_level(decomp, 10)
    with pytest.raises(LevelOutOfRange):
        reconstruct_level(decomp, "D4")


def test_multi_norm_matches_signal_energy(kick_decomposition):
    signal, decomp = kick_decomposition
    norm = multi_norm(decomp)
    assert len(norm.per_level_energy) == 7
    assert norm.total == pytest.approx(signal @ signal, rel=1e-12)


def test_cutoff_on_known_norms():
    """最小的 N 使所有更细层都不超过 ε"""
    decomp = MraDecomposition(
        coarse_level=2,
        coarse=np.zeros(4),
        details=[np.ones(4), np.full(8, 1e-3), np.full(16, 1e-9)],
        original_length=32,
    )
    assert cutoff_level(decomp, 1e-6).level == 3
    assert cutoff_level(decomp, 1e-6).converged
    assert cutoff_level(decomp, 10.0).level == 2
    tight = cutoff_level(decomp, 1e-12)
    assert tight.level == 4
    assert not tight.converged
    with pytest.raises(BadParams):
        cutoff_level(decomp, 0.0)


@pytest.mark.parametrize("kind", ["kick", "multikick", "rw_fractal"])
def test_cutoff_level_monotone_in_eps(kind):
    """ε 越大，截断层不升高"""
    decomp = dwt_periodic(demo_signal(kind, None, 1024), make_filter("symmlet", 8), 8)
    levels = [cutoff_level(decomp, eps).level for eps in np.logspace(-12, 2, 30)]
    assert all(a >= b for a, b in zip(levels, levels[1:]))
    assert levels[0] > levels[-1]


def test_smooth_kick_energy_decays(kick_decomposition):
    """光滑脉冲的细节能量随层号快速衰减"""
    _, decomp = kick_decomposition
    slope, r2 = level_energy_slope(decomp)
    assert slope < -2.0
    energies = multi_norm(decomp).per_level_energy[1:]
    assert energies[-1] < 1e-8 * energies.max()


def test_rw_fractal_keeps_fine_scale_energy():
    """分形信号的细节能量按幂律缓慢衰减，远慢于光滑脉冲"""
    filt = make_filter("symmlet", 8)
    fractal = dwt_periodic(demo_signal("rw_fractal", {"a": 0.5, "b": 3, "terms": 12}, 2048), filt, 6)
    smooth = dwt_periodic(demo_signal("kick", {"width": 8.0}, 2048), filt, 6)
    assert level_energy_slope(fractal)[0] > level_energy_slope(smooth)[0]
    assert fractal.details[-1] @ fractal.details[-1] > 1e-8


def test_multikick_is_sum_of_kicks():
    width = 5.0
    combined = demo_signal("multikick", {"kicks": [(0.2, 1.0), (0.7, -2.0)], "width": width}, 256)
    first = demo_signal("kick", {"center": 0.2, "width": width}, 256)
    second = demo_signal("kick", {"center": 0.7, "width": width, "amplitude": -2.0}, 256)
    np.testing.assert_allclose(combined, first + second, atol=1e-15)


def test_kick_is_periodic():
    """中心靠近右端时脉冲绕回左端"""
    signal = demo_signal("kick", {"center": 0.99, "width": 4.0}, 512)
    assert signal[0] > 0.4
    assert signal[256] < 1e-12


@pytest.mark.parametrize("params", [
    {"a": 1.2, "b": 3},
    {"a": 0.2, "b": 3},
    {"a": 0.5, "b": 2.5},
    {"a": 0.5, "b": 3, "terms": 0},
])
def test_rw_fractal_rejects_bad_params(params):
    with pytest.raises(BadParams):
        demo_signal("rw_fractal", params, 256)


def test_demo_signal_errors():
    with pytest.raises(BadParams):
        demo_signal("chirp", None, 256)
    with pytest.raises(BadLength):
        demo_signal("kick", None, 300)
    with pytest.raises(BadParams):
        demo_signal("kick", {"center": 1.5}, 256)
