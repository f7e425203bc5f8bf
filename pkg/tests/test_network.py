import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncsynth.network import NetworkConfig, delay_envelope, n_bounds, sample_iteration, send_delay


def reference_config(**kw):
    base = dict(tau=0.2, b_max=1000.0, d_req_max=0.05, d_delay_min=0.02, d_delay_max=0.1,
                d_ctrl_min=0.001, d_ctrl_max=0.01, mu_x=0.02, mu_u=0.25)
    base.update(kw)
    return NetworkConfig(**base)


def test_send_delay():
    assert send_delay(22, 1000) == pytest.approx(0.022)
    assert send_delay(6, 1000) == pytest.approx(0.006)
    with pytest.raises(ValueError):
        send_delay(-1, 1000)


def test_config_validation():
    with pytest.raises(ValueError):
        reference_config(tau=0.0)
    with pytest.raises(ValueError):
        reference_config(d_delay_min=0.2)
    with pytest.raises(ValueError):
        reference_config(d_req_max=-0.01)


def test_reference_envelope_and_hold_counts():
    cfg = reference_config()
    d_min, d_max = delay_envelope(cfg, 22, 6)
    # 0.022 + 0.006 + 0.001 + 0.04 and 0.022 + 0.006 + 0.01 + 0.1 + 0.2
    assert d_min == pytest.approx(0.069)
    assert d_max == pytest.approx(0.338)
    assert n_bounds(cfg, 22, 6) == (1, 2)


def test_zero_delays_collapse_envelope():
    cfg = reference_config(d_req_max=0, d_delay_min=0, d_delay_max=0, d_ctrl_min=0,
                           d_ctrl_max=0, b_max=100.0)
    # 28 bits at 100 bps = 0.28 s, ceil(0.28 / 0.2) = 2
    assert n_bounds(cfg, 22, 6) == (2, 2)


def test_longer_network_delay_adds_one_interval():
    base = reference_config()
    longer = reference_config(d_delay_max=0.2)
    assert n_bounds(longer, 22, 6)[1] == n_bounds(base, 22, 6)[1] + 1


@pytest.mark.parametrize("extreme, index", [("min", 0), ("max", 1)])
def test_extreme_draws_hit_envelope_edges(extreme, index):
    cfg = reference_config()
    _, n = sample_iteration(cfg, np.random.default_rng(0), 22, 6, extreme=extreme)
    assert n == n_bounds(cfg, 22, 6)[index]


def test_random_draws_stay_in_bounds():
    cfg = reference_config()
    rng = np.random.default_rng(0)
    seen = set()
    for k in range(10_000):
        rec, n = sample_iteration(cfg, rng, 22, 6, a_k=k)
        seen.add(n)
        assert 0 <= rec.d_req_sc <= cfg.d_req_max and 0 <= rec.d_req_ca <= cfg.d_req_max
        assert cfg.d_delay_min <= rec.d_delay_sc <= cfg.d_delay_max
        assert cfg.d_ctrl_min <= rec.d_ctrl <= cfg.d_ctrl_max
        assert rec.a_next == k + n
        assert k * cfg.tau <= rec.t_send_sc <= rec.t_send_ca
    assert seen == {1, 2}


def test_sampling_is_seeded():
    cfg = reference_config()
    a = [sample_iteration(cfg, np.random.default_rng(7), 22, 6)[0] for _ in range(2)]
    assert a[0] == a[1]


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 0.3), st.floats(0, 0.3))
def test_hold_bounds_monotone_in_delay(extra_lo, extra_hi):
    cfg = reference_config()
    slower = reference_config(d_delay_min=cfg.d_delay_min + extra_lo,
                              d_delay_max=cfg.d_delay_max + extra_lo + extra_hi)
    a, b = n_bounds(cfg, 22, 6), n_bounds(slower, 22, 6)
    assert b[0] >= a[0] and b[1] >= a[1] and 1 <= b[0] <= b[1]
