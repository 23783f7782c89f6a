import json
import os
import subprocess
import sys

import numpy as np
import pytest

from rrlevy import simulator as sim
from rrlevy.errors import ConfigError, DomainError
from rrlevy.simulator import EULER, EXACT_BV, SimConfig, run_ensemble, simulate_paths, trace_paths

from conftest import DRIFT_ONLY, M1, M1_DIFFUSIVE

EVENTS = {name: i for i, name in enumerate(sim.EVENT_NAMES)}


def test_drift_only_travel_time():
    cfg = SimConfig(x0=0.0, a=2.0, q=0.5, n_paths=4)
    f = sim.simulate_path_exact_bv(DRIFT_ONLY, cfg)
    assert f.t_up == pytest.approx(1 / 1.5 + 1 / 1.25, rel=1e-15)
    assert f.occ_below == pytest.approx(1 / 1.5) and f.occ_above == pytest.approx(0.8)
    assert f.L == pytest.approx(0.25 * 0.8)
    est = run_ensemble(DRIFT_ONLY, cfg)
    assert est["t_up"]["stderr"] == 0.0
    assert est["t_up"]["mean"] == pytest.approx(1.4666666666666668, rel=1e-15)


def test_start_at_or_above_target():
    for x0 in (2.0, 2.5):
        f = sim.simulate_path_exact_bv(M1, SimConfig(x0=x0, a=2.0, q=0.5))
        assert f.t_up == 0.0 and f.disc_L == 0.0 and f.disc_R == 0.0 and f.occ_below == 0.0
        g = sim.simulate_path_euler(M1_DIFFUSIVE, SimConfig(x0=x0, a=2.0, q=0.5, scheme=EULER))
        assert g.t_up == 0.0


def test_start_at_b_enters_refracted_phase():
    f = sim.simulate_path_exact_bv(DRIFT_ONLY, SimConfig(x0=1.0, a=2.0))
    assert f.t_up == pytest.approx(0.8) and f.occ_below == 0.0


def test_no_discount_weight_is_one():
    est = run_ensemble(M1, SimConfig(x0=0.5, a=2.0, q=0.0, p=0.0, n_paths=500, seed=1))
    for name in ("one_sided_exit", "occupation_below_lt", "occupation_above_lt"):
        assert est[name]["mean"] == 1.0 and est[name]["stderr"] == 0.0


def test_negative_start_is_pushed_to_zero():
    f = sim.simulate_path_exact_bv(DRIFT_ONLY, SimConfig(x0=-0.3, a=2.0, q=0.5))
    assert f.R == pytest.approx(0.3) and f.disc_R == pytest.approx(0.3)
    assert f.t_up == pytest.approx(1 / 1.5 + 1 / 1.25)


@pytest.mark.parametrize("x0", [-0.2, 0.0, 0.4, 1.0, 1.7])
def test_exact_trace_invariants(x0):
    cfg = SimConfig(x0=x0, a=2.0, q=0.5, n_paths=40, seed=11)
    rows = simulate_paths(M1, cfg)
    for tr, row in zip(trace_paths(M1, cfg, 40), rows):
        t, V, L, R, ev, X = tr.T
        assert np.all(V >= -1e-15)
        assert np.all(np.diff(t) >= 0) and np.all(np.diff(R) >= 0) and np.all(np.diff(L) >= 0)
        np.testing.assert_allclose(V, x0 + X - L + R, atol=1e-12)
        # R only moves at reflections (and at a negative start)
        moves = np.flatnonzero(np.diff(R) > 0) + 1
        assert np.all(ev[moves] == EVENTS["reflect"])
        assert ev[-1] == EVENTS["exit"] and V[-1] == pytest.approx(2.0)
        assert row[sim.F_T] == t[-1]
        assert row[sim.F_L] == pytest.approx(M1.delta * row[sim.F_OA], rel=1e-12)
        assert row[sim.F_OB] + row[sim.F_OA] <= row[sim.F_T] * (1 + 1e-12)


def test_euler_trace_invariants():
    cfg = SimConfig(x0=0.3, a=2.0, q=0.5, n_paths=5, seed=2, scheme=EULER, h=1e-3)
    for tr in trace_paths(M1_DIFFUSIVE, cfg, 5, every=10):
        t, V, L, R, ev, X = tr.T
        assert np.all(V >= 0)
        np.testing.assert_allclose(V, 0.3 + X - L + R, atol=1e-9)
        assert np.all(np.diff(R) >= 0)


def test_horizon_censoring():
    cfg = SimConfig(x0=0.0, a=50.0, q=0.1, n_paths=20, seed=3, horizon_cap=5.0)
    est = run_ensemble(M1, cfg)
    assert est.censored > 0 and est.to_dict()["estimates"]["t_up"]["censored"] == est.censored
    tr = trace_paths(M1, cfg, 1)[0]
    assert tr[-1, 4] == EVENTS["censor"] and tr[-1, 0] == pytest.approx(5.0)


def test_bitwise_reproducible_and_chunk_independent():
    cfg = SimConfig(x0=1.0, a=2.0, q=0.5, p=0.3, n_paths=3000, seed=42, band=(1.2, 1.8))
    a = simulate_paths(M1, cfg)
    b = simulate_paths(M1, cfg)
    chunks = np.vstack([simulate_paths(M1, cfg, s, 1000) for s in (0, 1000, 2000)])
    assert a.tobytes() == b.tobytes() == chunks.tobytes()
    assert run_ensemble(M1, cfg).to_json() == run_ensemble(M1, cfg, threads=1).to_json()
    other = simulate_paths(M1, cfg.with_(seed=43))
    assert other.tobytes() != a.tobytes()


def test_euler_reproducible_and_coupled():
    base = SimConfig(x0=1.0, a=2.0, q=0.5, n_paths=200, seed=9, scheme=EULER, h=1e-3)
    a = simulate_paths(M1_DIFFUSIVE, base)
    assert a.tobytes() == simulate_paths(M1_DIFFUSIVE, base).tobytes()
    # the coarse level sums the fine normals, so both see the same Brownian path
    coarse = simulate_paths(M1_DIFFUSIVE, base.with_(h=1e-2, gaussian_substep=10, bridge=False))
    fine = simulate_paths(M1_DIFFUSIVE, base.with_(h=1e-3, bridge=False))
    corr = np.corrcoef(coarse[:, sim.F_T], fine[:, sim.F_T])[0, 1]
    assert corr > 0.9


def test_thread_count_does_not_change_results(tmp_path):
    code = (
        "import sys, numba; sys.path.insert(0, {tests!r});"
        "from conftest import M1; from rrlevy.simulator import SimConfig, run_ensemble;"
        "cfg = SimConfig(x0=1.0, a=2.0, q=0.5, p=0.3, n_paths=20000, seed=5, band=(1.2, 1.8));"
        "print(run_ensemble(M1, cfg, threads=int(sys.argv[1])).to_json())"
    ).format(tests=os.path.dirname(__file__))
    outs = []
    for threads in (1, 4):
        env = dict(os.environ, NUMBA_NUM_THREADS="4")
        res = subprocess.run([sys.executable, "-c", code, str(threads)], capture_output=True, text=True, env=env, check=True)
        outs.append(res.stdout)
    assert outs[0] == outs[1]
    assert json.loads(outs[0])["estimates"]["one_sided_exit"]["n"] == 20000


def test_config_validation():
    with pytest.raises(DomainError):
        SimConfig(x0=0.0, a=1.0, scheme=EULER, h=0.0)
    with pytest.raises(ConfigError):
        SimConfig(x0=0.0, a=1.0, scheme="Milstein")
    with pytest.raises(ConfigError):
        SimConfig(x0=0.0, a=-1.0)
    with pytest.raises(ConfigError):
        SimConfig(x0=0.0, a=1.0, band=(1.0, 0.5))
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"x0": 0.0, "a": 1.0, "paths": 3})
    with pytest.raises(ConfigError, match="ExactBV"):
        run_ensemble(M1_DIFFUSIVE, SimConfig(x0=0.0, a=1.0, n_paths=10))
    with pytest.raises(ConfigError):
        run_ensemble(M1, SimConfig(x0=0.0, a=1.0, n_paths=1))
    with pytest.raises(DomainError):
        sim.simulate_path_exact_bv(M1_DIFFUSIVE, SimConfig(x0=0.0, a=1.0))


def test_infinite_target_runs_to_horizon():
    cfg = SimConfig.from_dict({"x0": 0.5, "a": "inf", "q": 0.5, "n_paths": 10, "horizon_cap": 30.0})
    est = run_ensemble(M1, cfg)
    assert est.censored == 10
    assert est.metadata["config"]["a"] == "inf"


def test_trace_csv(tmp_path):
    cfg = SimConfig(x0=0.0, a=2.0, n_paths=2)
    path = tmp_path / "t.csv"
    sim.write_trace_csv(path, trace_paths(DRIFT_ONLY, cfg, 2), header="# test\n")
    lines = path.read_text().splitlines()
    assert lines[1] == "path,t,V,L,R,event,X"
    assert lines[-1].split(",")[5] == "exit"


def test_small_ensemble_matches_formula(ctx_m1):
    from rrlevy import identities as idn

    est = run_ensemble(M1, SimConfig(x0=1.0, a=2.0, q=0.5, n_paths=50000, seed=8))
    ref = idn.one_sided_exit(ctx_m1, 0.5, 1.0, 2.0)
    e = est["one_sided_exit"]
    assert abs(e["mean"] - ref) < 4 * e["stderr"]
