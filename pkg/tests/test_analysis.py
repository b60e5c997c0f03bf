import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from gswitch import analysis as A
from gswitch.engine import SimConfig, SweepRow, simulate
from gswitch.geometry import DirectionError, build_geometry
from gswitch.model import ChannelState, SwitchSpec
from gswitch.presets import get_preset

from oracles import random_psd


def preset_geometry(name):
    p = get_preset(name)
    return p, build_geometry(p.spec, p.nu, p.facets)


@pytest.fixture(scope="module")
def switch2():
    return preset_geometry("switch2x2")


@pytest.fixture(scope="module")
def single():
    spec = SwitchSpec(1, (ChannelState("m0", 1.0, [(1,), (0,)]),), name="single")
    return spec, build_geometry(spec, [1.0], [((1.0,), 1.0)])


# -- heavy-traffic limits --------------------------------------------------

def test_switch_limit_at_uniform_direction(switch2):
    p, geo = switch2
    rep = A.ht_limit(geo, p.family.sigma_a_limit, np.full(4, 0.5))
    assert rep.limit_value == pytest.approx(0.375, abs=1e-12)
    assert rep.service_term == pytest.approx(0.0, abs=1e-12)
    assert rep.trace_value == pytest.approx(rep.limit_value, abs=1e-12)


@pytest.mark.parametrize(
    "name, expected",
    [("switch2x2", 0.75), ("switch3x3", 5.0 / 3.0), ("n_system", 1.0), ("ad_hoc", 1.0 / 3.0), ("dedicated", 2.0 / 3.0)],
)
def test_total_queue_limits(name, expected):
    p, geo = preset_geometry(name)
    assert A.scaled_limit(geo, p.family.sigma_a_limit, np.ones(p.spec.n)) == pytest.approx(expected, abs=1e-12)


def test_ad_hoc_three_quarters_rule():
    p, geo = preset_geometry("ad_hoc")
    for var in ([0.1, 0.3], [0.5, 0.5], [0.0, 0.2]):
        sigma = np.diag(var)
        assert A.scaled_limit(geo, sigma, [1, 1]) == pytest.approx(0.75 * sum(var), abs=1e-12)
        assert A.cor_calculators("ad_hoc", variances=var) == pytest.approx(0.75 * sum(var), abs=1e-15)


def test_off_face_direction_rejected(switch2):
    p, geo = switch2
    with pytest.raises(DirectionError):
        A.ht_limit(geo, p.family.sigma_a_limit, [1.0, 0.0, 0.0, 0.0])
    with pytest.raises(DirectionError):
        A.face_scale(geo, [1.0, 0.0, 0.0, 0.0])


# -- closed forms for the example systems --------------------------------

def test_closed_form_examples():
    assert A.cor_calculators("independent_switch", N=2, variances=[0.25] * 4) == pytest.approx(0.75)
    assert A.cor_calculators("dedicated", variances=[0.0, 0.0], service_variances=[0.25, 0.25]) == pytest.approx(0.25)
    assert A.cor_calculators("n_system", variances=[0.25, 0.5]) == pytest.approx(0.375)
    with pytest.raises(ValueError):
        A.cor_calculators("nonsense")


def test_correlated_row_pair_adds_one_eighth():
    base = np.eye(4) * 0.25
    corr = base.copy()
    corr[0, 1] = corr[1, 0] = 0.25   # queues (0,0) and (0,1) share an input port
    assert A.cor_switch_correlated(2, base) == pytest.approx(0.75)
    assert A.cor_switch_correlated(2, corr) - A.cor_switch_correlated(2, base) == pytest.approx(0.125)


def test_switch_index_sets():
    row, col, other = A.switch_index_sets(3, 4)
    assert (row, col, other) == ([3, 5], [1, 7], [0, 2, 6, 8])


@settings(max_examples=40, deadline=None)
@given(N=st.sampled_from([2, 3]), seed=st.integers(0, 2**32 - 1))
def test_correlated_switch_matches_general_limit(N, seed):
    p, geo = preset_geometry(f"switch{N}x{N}")
    S = random_psd(np.random.default_rng(seed), N * N)
    general = A.ht_limit(geo, S, np.full(N * N, 1.0 / N)).limit_value
    assert A.cor_switch_correlated(N, S) == pytest.approx(N * general, rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(N=st.sampled_from([2, 3]), var=st.lists(st.floats(0.0, 1.0), min_size=9, max_size=9))
def test_diagonal_covariance_reduces_to_independent(N, var):
    v = np.array(var[: N * N])
    assert A.cor_switch_correlated(N, np.diag(v)) == pytest.approx(
        A.cor_calculators("independent_switch", N=N, variances=v), rel=1e-12, abs=1e-14
    )


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_full_dimensional_identity_normals(n, seed):
    # Dedicated servers: facets e_i, so C = I and H = I.
    rng = np.random.default_rng(seed)
    states = []
    levels = [(0, 1, 2)] * n
    combos = list(itertools.product(*levels))
    for k, s in enumerate(combos):
        states.append(ChannelState(f"s{k}", 1.0 / len(combos), [s, tuple(0 for _ in s)]))
    spec = SwitchSpec(n, tuple(states), name="ded")
    geo = build_geometry(spec, np.ones(n), [(tuple(np.eye(n)[i]), 1.0) for i in range(n)])
    S = random_psd(rng, n)
    got = A.scaled_limit(geo, S, np.ones(n))
    want = A.cor_calculators("full_dim", variances=np.diag(S), C=np.eye(n), sigma_B=geo.sigma_B)
    assert got == pytest.approx(want, rel=1e-10)
    assert want == pytest.approx(0.5 * (np.trace(S) + n * 2.0 / 3.0), rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(N=st.sampled_from([2, 3]), seed=st.integers(0, 2**32 - 1))
def test_hadamard_form_matches_numpy_trace_form(N, seed):
    p, geo = preset_geometry(f"switch{N}x{N}")
    S = random_psd(np.random.default_rng(seed), N * N)
    C = geo.C
    H = C @ np.linalg.inv(C.T @ C) @ C.T
    oracle = 0.5 * (np.trace(H @ S) + np.trace(np.linalg.inv(C.T @ C) @ geo.sigma_B))
    assert A.ht_limit(geo, S, np.full(N * N, 1.0 / N)).limit_value == pytest.approx(oracle, rel=1e-10, abs=1e-12)


# -- universal lower bound -------------------------------------------------

def test_ulb_single_queue_closed_form(single):
    spec, geo = single
    # σ² = 0.09 at ε = 0.1: 0.09 / 0.2 − (½ − 0.05) = 0.45 − 0.45 = 0.0; σ² = 0.25 gives 0.8.
    assert A.ulb(geo, np.array([[0.25]]), [1.0], 0.1).bound == pytest.approx(0.8, abs=1e-12)
    assert A.ulb(geo, np.array([[0.09]]), [1.0], 0.1).bound == pytest.approx(0.0, abs=1e-12)


def test_ulb_zero_variance_is_minus_f(switch2):
    p, geo = switch2
    rep = A.ulb(geo, np.zeros((4, 4)), np.full(4, 0.25), 0.05)
    assert rep.bound == pytest.approx(-rep.f_eps, abs=1e-15)
    assert rep.f_eps == pytest.approx(1.0 * 0.5 / 2 - 0.05 * 0.5 / 2, abs=1e-12)


def test_ulb_switch_value(switch2):
    p, geo = switch2
    sigma = p.family.at(0.05).sigma_a
    rep = A.ulb(geo, sigma, np.full(4, 0.25), 0.05)
    lam = 0.475
    assert rep.bound == pytest.approx(4 * lam * (1 - lam) / 16 / 0.05 - 0.2375, abs=1e-12)


def test_ulb_rejects_bad_inputs(switch2):
    p, geo = switch2
    with pytest.raises(DirectionError):
        A.ulb(geo, np.eye(4), [1.0, -1.0, 0.0, 0.0], 0.1)
    with pytest.raises(ValueError):
        A.ulb(geo, np.eye(4), np.zeros(4), 0.1)
    with pytest.raises(ValueError):
        A.ulb(geo, np.eye(4), np.ones(4), 1.5)
    with pytest.raises(DirectionError):
        A.ulb(geo, np.eye(4), np.ones(4), 0.1, r=[-1.0, 1.0, 1.0, 1.0])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eps=st.floats(0.01, 0.9))
def test_ulb_monotone_in_arrival_variance(seed, eps):
    p, geo = preset_geometry("switch2x2")
    S = random_psd(np.random.default_rng(seed), 4)
    z = np.ones(4)
    lo = A.ulb(geo, S, z, eps).bound
    hi = A.ulb(geo, 2 * S, z, eps).bound
    assert hi >= lo - 1e-12


# -- diagnostics -----------------------------------------------------------

def test_compare():
    assert A.compare(1.0, 1.05, 0.0, 0.1).passed
    assert not A.compare(1.0, 1.2, 0.01, 0.1).passed
    assert A.compare(1.0, 1.2, 0.1, 0.01, label="wide").passed


def test_ssc_report_single_row(switch2):
    p, geo = switch2
    est = simulate(p.spec, p.family, geo, SimConfig(0.2, horizon=50_000, seed=3))
    rep = A.ssc_report([SweepRow(0.2, 3, est, None)])
    assert len(rep.rows) == 1
    assert rep.ratio_decreasing is None
    assert rep.perp_second_moment_spread == pytest.approx(1.0)
    row = rep.rows[0]
    assert math.isfinite(row.ratio_perp_to_parallel) and row.ratio_perp_to_parallel >= 0
    assert not row.violation


def test_ssc_report_skips_failed_rows():
    rep = A.ssc_report([SweepRow(0.2, 1, None, "boom")])
    assert rep.rows == []
