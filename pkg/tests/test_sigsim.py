import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sscsr import sigsim
from sscsr.errors import ConfigError, DegenerateInputError
from sscsr.sigsim import DeviceProfile, SimConfig

LINEAR = DeviceProfile(0, 1.0, 0.0, 0.0, 0.0)
QPSK_POINTS = {complex(a, b) / math.sqrt(2) for a in (-1, 1) for b in (-1, 1)}


def _rrc_oracle(beta, span, sps):
    """Textbook RRC evaluated pointwise with a tiny offset at the singularities."""
    out = []
    for n in range(-span * sps // 2, span * sps // 2 + 1):
        t = n / sps
        if abs(abs(t) - 1 / (4 * beta)) < 1e-12:
            t += 1e-7
        if t == 0:
            v = 1 - beta + 4 * beta / math.pi
        else:
            v = (math.sin(math.pi * t * (1 - beta)) + 4 * beta * t * math.cos(math.pi * t * (1 + beta))) / (
                math.pi * t * (1 - (4 * beta * t) ** 2)
            )
        out.append(v / math.sqrt(sps))
    return np.array(out)


def test_symbols_on_constellation():
    s = sigsim.generate_symbols("QPSK", 4, np.random.default_rng(0))
    assert len(s) == 4
    for x in s:
        assert min(abs(x - p) for p in QPSK_POINTS) < 1e-12


def test_symbol_energy_and_determinism():
    s = sigsim.generate_symbols("QPSK", 10**5, np.random.default_rng(4))
    assert np.mean(np.abs(s) ** 2) == pytest.approx(1.0, abs=0.01)
    again = sigsim.generate_symbols("QPSK", 10**5, np.random.default_rng(4))
    assert np.array_equal(s, again)
    with pytest.raises(ConfigError):
        sigsim.generate_symbols("QAM64", 4, np.random.default_rng(0))


def test_rrc_center_tap():
    h = sigsim.rrc_taps(0.35, 8, 8, normalize=False)
    assert len(h) == 65
    assert h[32] == pytest.approx((1 - 0.35 + 4 * 0.35 / math.pi) / math.sqrt(8), abs=1e-12)


@pytest.mark.parametrize("beta", [0.25, 0.35, 0.5, 1.0])
def test_rrc_matches_textbook_oracle(beta):
    # beta = 0.25 and 0.5 put taps exactly on the singular points
    h = sigsim.rrc_taps(beta, 8, 8, normalize=False)
    np.testing.assert_allclose(h, _rrc_oracle(beta, 8, 8), atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 1.0), st.integers(2, 8).map(lambda k: 2 * k), st.integers(2, 16))
def test_rrc_unit_energy_and_symmetric(beta, span, sps):
    h = sigsim.rrc_taps(beta, span, sps)
    assert np.sum(h * h) == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_array_equal(h, h[::-1])
    assert len(h) % 2 == 1


def test_rrc_rejects_bad_rolloff():
    for beta in (0.0, -0.1, 1.5):
        with pytest.raises(ConfigError):
            sigsim.rrc_taps(beta)


def test_pulse_shape_length_and_impulse():
    taps = sigsim.rrc_taps(0.35, 8, 8)
    assert sigsim.pulse_shape(np.ones(128), taps, 8).shape == (1024,)
    imp = np.zeros(16, dtype=complex)
    imp[8] = 1
    out = sigsim.pulse_shape(imp, taps, 8)
    np.testing.assert_allclose(out[64 - 32:64 + 33].real, taps, atol=1e-15)


def test_loopback_is_error_free():
    rng = np.random.default_rng(1)
    taps = sigsim.rrc_taps(0.35, 8, 8)
    sym = sigsim.generate_symbols("QPSK", 10**4, rng)
    rx = sigsim.matched_filter(sigsim.pulse_shape(sym, taps, 8), taps)[::8]
    assert np.array_equal(sigsim.qpsk_decide(rx), sym)


def test_pa_fixed_points():
    x = np.random.default_rng(2).standard_normal(100) + 1j
    assert not sigsim.apply_pa(np.zeros(8, complex), DeviceProfile(0, 1.0, 0.05, 0.2, 1.0)).any()
    np.testing.assert_allclose(sigsim.apply_pa(x, LINEAR), x, atol=1e-12)


def test_pa_matches_saleh_formula():
    p = DeviceProfile(0, 1.02, 0.07, 0.12, 0.9)
    x = np.array([0.3 + 0.4j, -1.1 + 0.2j])
    r = np.abs(x)
    expected = p.alpha_a * r / (1 + p.beta_a * r**2) * np.exp(1j * (np.angle(x) + p.alpha_p * r**2 / (1 + p.beta_p * r**2)))
    np.testing.assert_allclose(sigsim.apply_pa(x, p), expected, atol=1e-12)


def test_pa_distinguishes_devices():
    x = sigsim.pulse_shape(sigsim.generate_symbols("QPSK", 64, np.random.default_rng(3)), sigsim.rrc_taps(0.35), 8)
    a = sigsim.apply_pa(x, DeviceProfile(0, 1.0, 0.02, 0.1, 1.0))
    b = sigsim.apply_pa(x, DeviceProfile(1, 1.0, 0.08, 0.1, 1.0))
    assert np.max(np.abs(a - b)) > 1e-6


def test_awgn_sentinel_and_determinism():
    x = np.exp(1j * np.arange(64))
    np.testing.assert_array_equal(sigsim.add_awgn(x, sigsim.NO_NOISE, None), x)
    a = sigsim.add_awgn(x, 10, np.random.default_rng(7))
    b = sigsim.add_awgn(x, 10, np.random.default_rng(7))
    assert np.array_equal(a, b)
    with pytest.raises(DegenerateInputError):
        sigsim.add_awgn(np.zeros(4, complex), 10, np.random.default_rng(0))


def test_awgn_per_component_variance():
    x = np.ones(10**5, dtype=complex)
    n = sigsim.add_awgn(x, 10, np.random.default_rng(8)) - x
    assert np.var(n.real) == pytest.approx(0.05, rel=0.02)
    assert np.var(n.imag) == pytest.approx(0.05, rel=0.02)


def test_draw_profiles_ranges_and_determinism():
    ps = sigsim.draw_profiles(10, 5)
    assert ps == sigsim.draw_profiles(10, 5)
    assert len({(p.alpha_a, p.beta_a, p.alpha_p, p.beta_p) for p in ps}) == 10
    for p in ps:
        for k, (lo, hi) in sigsim.PA_RANGES.items():
            assert lo <= getattr(p, k) <= hi


def test_split_sizes():
    assert sigsim.split_sizes(10000) == (6000, 2000, 2000)
    assert sigsim.split_sizes(5) == (3, 1, 1)
    assert sigsim.split_sizes(2000) == (1200, 400, 400)


def test_simulate_dataset_shapes_and_determinism():
    cfg = SimConfig(num_devices=2, samples_per_class=5, sample_len=64, seed=3)
    ds = sigsim.simulate_dataset(cfg)
    assert ds.class_counts("labeled").tolist() == [3, 3]
    assert ds.class_counts("val").tolist() == [1, 1]
    assert ds.class_counts("test").tolist() == [1, 1]
    assert ds.labeled_x.shape == (6, 64)
    assert np.all(np.isfinite(ds.labeled_x))
    assert ds.equals(sigsim.simulate_dataset(cfg))


def test_sample_generation_is_order_independent():
    cfg = SimConfig(num_devices=2, samples_per_class=4, sample_len=64, seed=9)
    prof = sigsim.draw_profiles(2, 9)[1]
    a = sigsim.simulate_sample(cfg, prof, 3)
    _ = sigsim.simulate_sample(cfg, prof, 0)
    assert np.array_equal(a, sigsim.simulate_sample(cfg, prof, 3))


def test_simconfig_validation():
    with pytest.raises(ConfigError):
        SimConfig(sample_len=1020, oversample=8)
    with pytest.raises(ConfigError):
        SimConfig(num_devices=1)
    with pytest.raises(ConfigError):
        SimConfig(rolloff=0)
    assert math.isinf(SimConfig(snr_db=None).snr_db)
    assert SimConfig(snr_db=None).to_dict()["snr_db"] is None


def test_profiles_must_match_devices():
    cfg = SimConfig(num_devices=3, samples_per_class=5, sample_len=64)
    with pytest.raises(ConfigError):
        sigsim.simulate_dataset(cfg, sigsim.draw_profiles(2, 0))
