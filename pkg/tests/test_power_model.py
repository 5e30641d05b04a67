import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modarray.channel import ChannelMatrix, compact_svd
from modarray.distortion import DistortionParams
from modarray.power_model import (
    HardwareParams,
    ee_power_sweep,
    energy_efficiency,
    total_power,
    water_filling,
)

HW = HardwareParams()


def test_total_power_hand_value():
    # 0.1/0.4 + 0.1 + (0.02 + 1e-10*1e8)*8 + 1e-11*1e8*10 = 0.60
    assert total_power(0.1, 8, 10.0, HW) == pytest.approx(0.60)


def test_total_power_idle_floor():
    assert total_power(0.0, 0, 0.0, HW) == pytest.approx(HW.mu_w)


def test_total_power_linear_in_k():
    base = total_power(0.05, 4, 3.0, HW)
    doubled = total_power(0.05, 8, 3.0, HW)
    assert doubled - base == pytest.approx((HW.d0_w + HW.upsilon_j_per_sample * HW.bandwidth_hz) * 4)


def test_total_power_affine_components():
    # affine in tr(Q), K, SE separately
    f = lambda tq, k, se: total_power(tq, k, se, HW)
    assert f(0.2, 4, 2.0) - f(0.1, 4, 2.0) == pytest.approx(0.1 / HW.kappa)
    assert f(0.1, 4, 4.0) - f(0.1, 4, 2.0) == pytest.approx(HW.eta_j_per_bit * HW.bandwidth_hz * 2)


def test_energy_efficiency_values():
    assert energy_efficiency(10.0, 0.6, 1e8) == pytest.approx(1.667e9, rel=1e-3)
    assert energy_efficiency(0.0, 0.5, 1e8) == 0.0
    assert energy_efficiency(5.0, 0.5, 2e8) == pytest.approx(2 * energy_efficiency(5.0, 0.5, 1e8))
    with pytest.raises(ValueError):
        energy_efficiency(1.0, 0.0, 1e8)


def test_water_filling_two_stream_closed_form():
    # s^2/sigma^2 = (4, 1), P = 1 -> nu = 1.125, p = (0.875, 0.125)
    sigma2 = 1.0
    s = np.array([2.0, 1.0])
    p = water_filling(s, sigma2, 1.0)
    assert np.allclose(p, [0.875, 0.125], atol=1e-12)


def test_water_filling_equal_gains_split_evenly():
    p = water_filling(np.full(4, 1.3), 1e-3, 0.8)
    assert np.allclose(p, 0.2)


def test_water_filling_small_power_single_stream():
    s = np.array([3.0, 1.0, 0.5])
    p = water_filling(s, 1.0, 1e-4)
    assert p[0] == pytest.approx(1e-4)
    assert np.all(p[1:] == 0)


def test_water_filling_zero_singular_values_rejected():
    with pytest.raises(ValueError):
        water_filling(np.zeros(3), 1.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(
    gains=st.lists(st.floats(0.1, 100.0), min_size=1, max_size=6),
    total=st.floats(1e-3, 10.0),
)
def test_water_filling_kkt(gains, total):
    sigma2 = 1.0
    s = np.sqrt(np.array(gains))
    p = water_filling(s, sigma2, total)
    assert p.sum() == pytest.approx(total, rel=1e-10)
    assert np.all(p >= 0)
    thresholds = sigma2 / s**2
    active = p > 0
    nu = (p + thresholds)[active][0]
    assert np.allclose((p + thresholds)[active], nu, rtol=1e-10, atol=1e-10 * nu)
    # inactive streams would need a water level above their threshold
    assert np.all(thresholds[~active] >= nu - 1e-10 * nu)


def test_water_filling_matches_two_stream_grid_search():
    rng = np.random.default_rng(0)
    sigma2 = 1.0
    for _ in range(50):
        s = rng.uniform(0.2, 5.0, size=2)
        total = rng.uniform(0.05, 5.0)
        p = water_filling(s, sigma2, total)
        step = total / 200
        grid = np.arange(0, total + step / 2, step)
        obj = np.log2(1 + np.outer(grid, [s[0] ** 2]))[:, 0] + np.log2(
            1 + (total - grid) * s[1] ** 2
        )
        best = grid[np.argmax(obj)]
        assert abs(p[0] - best) <= step + 1e-12


def _random_channel(rng, m=4, k=8, scale=1e-4):
    h = scale * (rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k)))
    return ChannelMatrix(h)


def test_sweep_single_point_matches_direct_wf():
    rng = np.random.default_rng(1)
    h = _random_channel(rng)
    svd = compact_svd(h)
    sigma2 = 1e-9
    d = DistortionParams(rho=0.0, noise_power_w=sigma2)
    grid = np.array([-20.0])
    rec = ee_power_sweep(h, None, HW, d, grid)
    p_in = 10 ** (-20 / 10)
    p = water_filling(svd.singular_values, sigma2, p_in)
    se = np.sum(np.log2(1 + p * svd.singular_values**2 / sigma2))
    assert rec.se_bps_hz == pytest.approx(se, rel=1e-9)
    assert rec.total_input_power_w == pytest.approx(p_in)
    assert rec.ee_bits_per_joule == pytest.approx(
        energy_efficiency(se, total_power(p_in, 8, se, HW), HW.bandwidth_hz), rel=1e-12
    )


def test_sweep_best_ee_dominates_grid():
    rng = np.random.default_rng(2)
    for _ in range(5):
        h = _random_channel(rng)
        d = DistortionParams(rho=-0.1, noise_power_w=1e-9)
        grid = np.arange(-30, -9, 2.0)
        best = ee_power_sweep(h, None, HW, d, grid)
        for p_dbw in grid:
            single = ee_power_sweep(h, None, HW, d, np.array([p_dbw]))
            assert best.ee_bits_per_joule >= single.ee_bits_per_joule - 1e-9


def test_sweep_tie_breaks_to_lower_power():
    # A vanishingly weak channel yields SE = 0 and EE = 0 at every power:
    # all points tie, the lowest power must win.
    h = ChannelMatrix(1e-150 * np.ones((1, 2), dtype=complex))
    d = DistortionParams(rho=0.0, noise_power_w=1e-3)
    rec = ee_power_sweep(h, None, HW, d, np.array([-10.0, -20.0, -30.0]))
    assert rec.total_input_power_w == pytest.approx(1e-3)


def test_sweep_empty_grid_rejected():
    h = ChannelMatrix(np.ones((1, 2), dtype=complex))
    d = DistortionParams(rho=0.0, noise_power_w=1e-3)
    with pytest.raises(ValueError):
        ee_power_sweep(h, None, HW, d, np.array([]))


def test_hardware_params_validation():
    with pytest.raises(ValueError):
        HardwareParams(kappa=0.0)
    with pytest.raises(ValueError):
        HardwareParams(kappa=1.5)
    with pytest.raises(ValueError):
        HardwareParams(mu_w=-1.0)
