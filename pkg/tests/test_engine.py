import warnings

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from gswitch import engine
from gswitch.engine import SimConfig, maxweight_schedule, simulate, step, sweep
from gswitch.geometry import build_geometry
from gswitch.model import ChannelState, SwitchSpec, make_bernoulli_family
from gswitch.presets import get_preset

PERMS = [(1, 0, 0, 1), (0, 1, 1, 0)]


@pytest.fixture(scope="module")
def switch():
    p = get_preset("switch2x2")
    return p, build_geometry(p.spec, p.nu, p.facets)


@pytest.fixture(scope="module")
def single_queue():
    spec = SwitchSpec(1, (ChannelState("m0", 1.0, [(1,), (0,)]),), name="single")
    fam = make_bernoulli_family([1.0])
    return spec, fam, build_geometry(spec, [1.0], [((1.0,), 1.0)])


def test_step_examples():
    assert [v.tolist() for v in step([0], [0], [1])] == [[0], [1]]
    assert [v.tolist() for v in step([3], [1], [1])] == [[3], [0]]
    assert [v.tolist() for v in step([0, 2], [1, 0], [1, 1])] == [[0, 1], [0, 0]]


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=8))
def test_step_properties(rows):
    q, a, s = (np.array(c) for c in zip(*rows))
    qn, u = step(q, a, s)
    assert np.all(qn >= 0) and np.all(u >= 0) and np.all(u <= s)
    assert np.all(qn * u == 0)
    assert np.array_equal(qn, q + a - s + u)


def test_maxweight_strict_winner():
    rng = np.random.default_rng(0)
    assert tuple(maxweight_schedule([5, 1, 1, 0], PERMS, rng)) == (1, 0, 0, 1)


def test_maxweight_ties_are_uniform():
    rng = np.random.default_rng(12345)
    picks = [tuple(maxweight_schedule([1, 1, 1, 1], PERMS, rng)) for _ in range(10_000)]
    assert abs(picks.count(PERMS[0]) / len(picks) - 0.5) <= 0.02


def test_maxweight_zero_queue_uses_whole_set():
    rng = np.random.default_rng(1)
    sched = [(0, 0), (1, 0), (0, 1)]
    seen = {tuple(maxweight_schedule([0, 0], sched, rng)) for _ in range(200)}
    assert seen == set(sched)


def test_simconfig_validation():
    with pytest.raises(ValueError):
        SimConfig(0.1, horizon=100, batches=20)
    with pytest.raises(ValueError):
        SimConfig(0.1, burn_in=1.0)
    with pytest.raises(ValueError):
        SimConfig(1.5)


def test_single_queue_flow_balance(single_queue):
    spec, fam, geo = single_queue
    est = simulate(spec, fam, geo, SimConfig(0.1, horizon=200_000, seed=3), [[1.0]])
    assert abs(est.flow_residual[0]) <= 3 * est.batch_std["flow_residual"][0]
    assert sum(est.invariant_violations.values()) == 0
    assert est.slots_checked == 200_000
    # Discrete-time Geo/D/1-type queue with λ = 0.9: served within the slot of arrival
    assert np.allclose(est.cross_qu, 0.0)
    assert est.mean_q[0] >= 0


def test_estimate_invariants(switch):
    p, geo = switch
    est = simulate(p.spec, p.family, geo, SimConfig(0.2, horizon=200_000, seed=9), [np.ones(4)])
    assert np.all(est.mean_q >= 0)
    assert np.all(est.cross_qu >= 0)
    assert np.abs(np.diag(est.cross_qu)).max() <= 1e-12
    assert sum(est.invariant_violations.values()) == 0
    assert est.scaled_lincomb[0] == pytest.approx(0.2 * est.mean_q.sum())
    for t in est.perp_cone_moments:
        assert est.perp_subspace_moments[t] <= est.perp_cone_moments[t] + 1e-12
    # every slot uses a maximal permutation or a schedule that ties with one
    assert np.all((est.pi_ml_hat >= 0) & (est.pi_ml_hat <= 1))


def test_determinism_and_chunk_independence(switch, monkeypatch):
    p, geo = switch
    cfg = SimConfig(0.2, horizon=50_000, seed=42)
    a = simulate(p.spec, p.family, geo, cfg, [np.ones(4)])
    b = simulate(p.spec, p.family, geo, cfg, [np.ones(4)])
    monkeypatch.setattr(engine, "CHUNK", 777)
    c = simulate(p.spec, p.family, geo, cfg, [np.ones(4)])
    for other in (b, c):
        assert np.array_equal(a.mean_q, other.mean_q)
        assert np.array_equal(a.cross_qu, other.cross_qu)
        assert a.perp_cone_moments == other.perp_cone_moments
    d = simulate(p.spec, p.family, geo, SimConfig(0.2, horizon=50_000, seed=43), [np.ones(4)])
    assert not np.array_equal(a.mean_q, d.mean_q)


def test_rational_grid_schedules():
    p = get_preset("ad_hoc")
    geo = build_geometry(p.spec, p.nu, p.facets)
    est = simulate(p.spec, p.family, geo, SimConfig(0.2, horizon=100_000, seed=5), [np.ones(2)])
    assert sum(est.invariant_violations.values()) == 0
    # queues live on the 1/3 grid
    assert np.all(np.abs(est.mean_q * 3 - np.round(est.mean_q * 3)) >= 0)
    assert abs(est.flow_residual).max() <= 3 * est.batch_std["flow_residual"].max() + 1e-12


def test_maximal_tie_break_option(switch):
    p, geo = switch
    est = simulate(p.spec, p.family, geo, SimConfig(0.2, horizon=100_000, seed=2, tie_break="maximal"))
    assert sum(est.invariant_violations.values()) == 0
    # with only permutations on offer, every slot offers one unit of service per port
    assert np.allclose(est.batch_values["service_rate"].sum(axis=1), 2.0)


def test_sweep_seeds(switch):
    p, geo = switch
    cfg = SimConfig(0.2, horizon=20_000, seed=7, cone_moments_orders=())
    rows = sweep(p.spec, p.family, geo, cfg, [0.2, 0.1, 0.05])
    assert [r.epsilon for r in rows] == [0.2, 0.1, 0.05]
    assert len({r.seed for r in rows}) == 3
    again = sweep(p.spec, p.family, geo, cfg, [0.2, 0.1, 0.05], workers=1)
    assert [r.seed for r in rows] == [r.seed for r in again]
    assert all(np.array_equal(a.estimates.mean_q, b.estimates.mean_q) for a, b in zip(rows, again))
    assert sweep(p.spec, p.family, geo, cfg, []) == []


def test_sweep_reports_errors_per_row(switch):
    p, geo = switch
    cfg = SimConfig(0.2, horizon=20_000, seed=7, cone_moments_orders=())
    rows = sweep(p.spec, p.family, geo, cfg, [0.2, 1.5])
    assert rows[0].error is None and rows[0].estimates is not None
    assert rows[1].estimates is None and isinstance(rows[1].error, ValueError)


def test_instability_rule():
    assert not engine.looks_unstable(np.ones(20))
    assert not engine.looks_unstable(np.arange(20.0))  # linear growth is only a factor of about 2
    explode = np.ones(20)
    explode[-1] = 11.0
    assert engine.looks_unstable(explode)
    assert not engine.looks_unstable(np.zeros(20))


def test_stable_run_does_not_warn(single_queue):
    spec, fam, geo = single_queue
    with warnings.catch_warnings():
        warnings.simplefilter("error", engine.InstabilityWarning)
        simulate(spec, fam, geo, SimConfig(0.1, horizon=20_000, seed=1, cone_moments_orders=()))
