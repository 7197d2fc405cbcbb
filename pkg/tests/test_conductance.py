import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecramsim.conductance import (
    ConductanceModel,
    ReadConfig,
    activation_for_ratio,
    conductance,
    emulate_read,
    read_samples,
)
from ecramsim.constants import K_B_EV
from ecramsim.errors import DomainError

EA = activation_for_ratio(0.1, 313.15, 473.15)
MODEL = ConductanceModel.calibrated(100e-6, 0.5, 473.15, ea_el=EA, c0=0.2, c1=1.0, aspect=16.0)


def test_zero_composition_without_offset():
    m = ConductanceModel(1e-5, 300.0, 0.1, c0=0.0)
    assert conductance(0.0, 300.0, m) == 0.0


def test_calibration_anchor():
    assert conductance(0.5, 473.15, MODEL) == pytest.approx(100e-6, rel=1e-14)


def test_activation_for_decade_drop():
    # exp(-(Ea/k)(1/313.15 - 1/473.15)) = 0.1
    assert EA == pytest.approx(math.log(10) * K_B_EV / (1 / 313.15 - 1 / 473.15), rel=1e-14)
    assert EA == pytest.approx(0.184, abs=1e-3)
    ratio = conductance(0.4, 313.15, MODEL) / conductance(0.4, 473.15, MODEL)
    assert ratio == pytest.approx(0.1, rel=1e-12)


@pytest.mark.parametrize("kw", [dict(g_ref=0.0), dict(c1=0.0), dict(aspect=-1.0)])
def test_model_validation(kw):
    base = dict(g_ref=1e-5, t_ref_el=300.0, ea_el=0.1)
    base.update(kw)
    with pytest.raises(DomainError):
        ConductanceModel(**base)


def test_domain_errors():
    with pytest.raises(DomainError):
        conductance(1.0, 300.0, MODEL)
    with pytest.raises(DomainError):
        conductance(0.5, 0.0, MODEL)
    with pytest.raises(DomainError):
        conductance(np.array([0.2, -0.1]), 300.0, MODEL)


@given(a=st.floats(0.0, 0.99), b=st.floats(0.0, 0.99), t=st.floats(250.0, 700.0))
def test_strictly_increasing(a, b, t):
    lo, hi = sorted((a, b))
    if hi - lo < 1e-12:
        return
    assert conductance(lo, t, MODEL) < conductance(hi, t, MODEL)


@settings(max_examples=30)
@given(
    xs=st.lists(st.floats(0.01, 0.99), min_size=3, max_size=20, unique=True),
    ta=st.floats(280.0, 700.0),
    tb=st.floats(280.0, 700.0),
)
def test_cross_temperature_affinity(xs, ta, tb):
    x = np.array(xs)
    ga = conductance(x, ta, MODEL)
    gb = conductance(x, tb, MODEL)
    r = np.corrcoef(ga, gb)[0, 1]
    assert r**2 >= 0.999
    # proportional: zero intercept once the offset is folded in
    assert np.allclose(gb / ga, (gb / ga)[0], rtol=1e-12)


def test_array_matches_scalar():
    x = np.linspace(0.0, 0.9, 7)
    arr = conductance(x, 400.0, MODEL)
    assert np.allclose(arr, [conductance(float(v), 400.0, MODEL) for v in x], rtol=1e-15)


# -- reads ----------------------------------------------------------------------

def test_noiseless_read_is_identity():
    assert emulate_read(100e-6, ReadConfig(amplitude=0.01)) == 100e-6


def test_read_window():
    cfg = ReadConfig(amplitude=0.01, half_period=30.0, n_cycles=2)
    assert cfg.window == 120.0
    assert ReadConfig(half_period=15.0, n_cycles=2).window == 60.0


def test_read_alternates_polarity():
    cfg = ReadConfig(half_period=2.0, n_cycles=2, sample_rate=1.0)
    s = read_samples(1e-4, cfg)
    assert len(s) == 8
    assert np.allclose(s, 1e-4, rtol=1e-15)


def test_noisy_read_statistics():
    cfg = ReadConfig(amplitude=0.01, half_period=30.0, n_cycles=2, noise_sigma=0.01, seed=7)
    g = emulate_read(100e-6, cfg)
    assert abs(g - 100e-6) <= 3 * cfg.sigma_of_mean(100e-6)
    assert cfg.sigma_of_mean(100e-6) == pytest.approx(0.01 * 100e-6 / math.sqrt(120), rel=1e-12)


def test_noisy_read_unbiased_over_many_reads():
    cfg = ReadConfig(noise_sigma=0.01, seed=3)
    reads = np.array([emulate_read(1.0, cfg, i) for i in range(400)])
    assert abs(reads.mean() - 1.0) <= 4 * cfg.sigma_of_mean(1.0) / math.sqrt(400)
    assert reads.std(ddof=1) == pytest.approx(cfg.sigma_of_mean(1.0), rel=0.15)


def test_read_determinism():
    cfg = ReadConfig(noise_sigma=0.02, seed=11)
    assert emulate_read(5e-5, cfg, 4) == emulate_read(5e-5, cfg, 4)
    assert emulate_read(5e-5, cfg, 4) != emulate_read(5e-5, cfg, 5)


@pytest.mark.parametrize("kw", [dict(amplitude=0.0), dict(amplitude=-0.01), dict(n_cycles=0), dict(noise_sigma=-1)])
def test_read_validation(kw):
    with pytest.raises(DomainError):
        ReadConfig(**kw)
