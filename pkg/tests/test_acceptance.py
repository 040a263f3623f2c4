"""Acceptance gate. Each test reports one PASS/FAIL line in the terminal summary."""

import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from msbound import cli
from msbound.model import OrthBlock, SystemModel
from msbound.noise import (
    BurstBernoulli,
    IsotropicUniform,
    PerComponentIID,
    PointMass,
    ZeroNoise,
    analytic_bounds,
    channel_stats,
)
from msbound.policy import check_burst
from msbound.reachability import build, pinv_full_row_rank, spectral_norm
from msbound.scenario import bundled, parse
from msbound.sim import (
    SimScenario,
    boundedness_verdict,
    drift_check,
    fourth_moment_check,
    monte_carlo_moments,
    probes_at_radii,
    run_trajectory,
    synthesize_scenario,
)

from conftest import random_plant, record_criterion

# largest ||u_t|| / Umax seen by any acceptance scenario, keyed by scenario
CONTROL_RATIOS = {}


def _note_controls(key, max_norm, Umax):
    CONTROL_RATIOS[key] = max(CONTROL_RATIOS.get(key, 0.0), float(max_norm) / Umax)


@pytest.fixture(scope="module")
def example1_run(tmp_path_factory):
    sc = parse(bundled("example1"))
    out = tmp_path_factory.mktemp("example1")
    start = time.perf_counter()
    code, doc = cli.simulate(sc, out, workers=1)
    return sc, code, doc, time.perf_counter() - start, out


def _general_deadbeat_case(rng):
    model = random_plant(rng)
    reach = build(model)
    # every mean at least ||R^+||, the smallest exactly ||R^+||
    scale = np.concatenate([[1.0], rng.uniform(1.0, 3.0, model.m - 1)])
    rng.shuffle(scale)
    channel = PerComponentIID(tuple(PointMass(reach.norm_R_pinv * s) for s in scale))
    return model, channel, "General"


def _burst_deadbeat_case(rng):
    return random_plant(rng), None, "Burst"


def test_criterion_01_deadbeat_equivalence():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst, plants = 0.0, 0
    for i in range(100):
        model, channel, kind = (_general_deadbeat_case if i % 2 else _burst_deadbeat_case)(rng)
        if channel is None:
            channel = BurstBernoulli(1.0, model.m)
        Umax = float(rng.uniform(0.5, 5.0))
        probe = SimScenario(model, channel, ZeroNoise(model.d), kind, Umax,
                            np.zeros(model.d), 1, 1, i)
        syn = synthesize_scenario(probe)
        assert syn.params.feasible
        kappa = syn.kappa
        x0 = rng.standard_normal(model.d)
        x2 = x0[model.d1:]
        x0[model.d1:] *= rng.uniform(0.0, 1.0) * syn.params.r / np.linalg.norm(x2)
        sc = SimScenario(model, channel, ZeroNoise(model.d), kind, Umax, x0, kappa, 1, i, "full")
        tr = run_trajectory(sc, 0, syn)
        _note_controls("deadbeat", np.linalg.norm(tr.controls, axis=1).max(), Umax)
        err = np.linalg.norm(tr.states[kappa, model.d1:]) / (1 + np.linalg.norm(x0[model.d1:]))
        worst = max(worst, err)
        plants += 1
    elapsed = time.perf_counter() - start
    passed = worst <= 1e-9 and elapsed < 5.0
    record_criterion(1, "deadbeat equivalence", passed,
                     f"{plants} plants, max ||x2_kappa||/(1+||x2_0||) = {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-9
    assert elapsed < 5.0


def test_criterion_03_example1_arithmetic(scalar_plant):
    C1, C4 = analytic_bounds(IsotropicUniform((1.0,)))
    reach = build(scalar_plant)
    ok = check_burst(reach, 0.5, C1, 2.0)
    low = check_burst(reach, 0.5, C1, 1.0)
    passed = (abs(C1 - 0.5) <= 1e-12 and abs(C4 - 0.2) <= 1e-12 and abs(ok.a - 1.0) <= 1e-12
              and abs(ok.r - 2.0) <= 1e-12 and ok.feasible and not low.feasible)
    record_criterion(3, "example-1 feasibility arithmetic", passed,
                     f"C1={C1!r} C4={C4!r} a={ok.a!r} r={ok.r!r}; Umax=1 feasible={low.feasible}")
    assert passed


def test_criterion_04_drift_example1():
    sim = parse(bundled("example1")).to_sim()
    start = time.perf_counter()
    rep = drift_check(sim, [[10.0], [50.0], [500.0]], samples=10_000)
    elapsed = time.perf_counter() - start
    near_minus_one = all(abs(r.estimate + 1.0) <= 3 * r.se for r in rep.rows)
    passed = rep.passed and elapsed < 10.0
    detail = ", ".join(f"{r.probe_radius:g}: {r.estimate:.4f}±{r.se:.4f}" for r in rep.rows)
    record_criterion(4, "drift at probes 10, 50, 500", passed,
                     f"{detail} (threshold -0.5, within 3 SE of -1: {near_minus_one}), "
                     f"{elapsed:.2f} s")
    assert rep.passed and near_minus_one
    assert elapsed < 10.0


def test_criterion_05_boundedness_example1(example1_run):
    sc, code, doc, elapsed, _ = example1_run
    v = doc["_verdict"]
    ms = doc["_moments"]
    _note_controls("example1", ms.max_control_norm, sc.Umax)
    passed = v.passed and code == 0 and elapsed < 60.0
    record_criterion(5, "mean-square boundedness, example 1", passed,
                     f"tail/ref = {v.ratio:.4f} (<= 1.10), zeta_hat = {v.zeta_hat:.4g}, "
                     f"M = {ms.trajectories}, {elapsed:.2f} s single worker")
    assert v.passed and code == 0
    assert elapsed < 60.0


def test_criterion_06_zero_control_growth():
    sim = parse(bundled("rotation_zero_control")).to_sim()
    assert (sim.horizon, sim.trajectories) == (2000, 2000)
    ms = monte_carlo_moments(sim)
    slope, intercept = np.polyfit(ms.times, ms.mean_x_sq, 1)
    rel = abs(slope - 2 / 3) / (2 / 3)
    v = boundedness_verdict(ms)
    passed = rel < 0.05 and not v.passed
    record_criterion(6, "zero-control growth detected", passed,
                     f"slope {slope:.4f} vs 2/3 (error {rel:.2%}), intercept {intercept:.3f}, "
                     f"verdict {'PASS' if v.passed else 'FAIL'} (ratio {v.ratio:.3f})")
    assert rel < 0.05
    assert not v.passed


def _direction_search_norm(M, rng, directions=10_000, restarts=30):
    """Largest gain over random unit directions, refined by restarted simplex searches."""
    X = rng.standard_normal((directions, M.shape[1]))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    gains = np.linalg.norm(X @ M.T, axis=1)
    best, value = X[np.argmax(gains)], gains.max()

    def neg_gain(v):
        return -np.linalg.norm(M @ v) / np.linalg.norm(v)

    # a fresh simplex around the incumbent escapes the stalls of a single run
    for _ in range(restarts):
        res = minimize(neg_gain, best, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 3000, "adaptive": True})
        if -res.fun <= value * (1 + 1e-12):
            break
        best, value = res.x / np.linalg.norm(res.x), -res.fun
    return value


def test_criterion_07_pinv_and_norm_kernels():
    rng = np.random.default_rng(7)
    worst_inv = 0.0
    for _ in range(1000):
        cols = int(rng.integers(1, 9))
        rows = int(rng.integers(1, cols + 1))
        R = rng.standard_normal((rows, cols))
        worst_inv = max(worst_inv, np.abs(R @ pinv_full_row_rank(R) - np.eye(rows)).max())
    worst_norm, worst_svd = 0.0, 0.0
    for _ in range(100):
        M = rng.standard_normal((int(rng.integers(1, 9)), int(rng.integers(1, 9))))
        norm = spectral_norm(M)
        brute = _direction_search_norm(M, rng)
        assert brute <= norm * (1 + 1e-9)
        worst_norm = max(worst_norm, abs(norm - brute) / norm)
        worst_svd = max(worst_svd, abs(norm - np.linalg.svd(M, compute_uv=False)[0]) / norm)
    passed = worst_inv <= 1e-9 and worst_norm <= 1e-6
    record_criterion(7, "pseudoinverse and norm kernels", passed,
                     f"max |R R+ - I| = {worst_inv:.1e}; norm vs direction search {worst_norm:.1e}, "
                     f"vs SVD {worst_svd:.1e}")
    assert worst_inv <= 1e-9
    assert worst_norm <= 1e-6


def test_criterion_08_fourth_moment():
    details, passed = [], True
    for name in ("example1", "rotation_general"):
        sim = parse(bundled(name)).to_sim()
        syn = synthesize_scenario(sim)
        J = syn.params.J
        probes = probes_at_radii(sim.master_seed, [0.0, 2 * J, 10 * J, 100 * J], sim.model.d2)
        rep = fourth_moment_check(sim, probes, samples=10_000, synthesis=syn)
        passed &= rep.passed
        details.append(f"{name}: max {rep.empirical_max:.3f} <= {rep.bound:.3f}")
    record_criterion(8, "fourth-moment bound", passed, "; ".join(details))
    assert passed


def _criterion9_document():
    doc = bundled("rotation_general")
    sc = parse(doc)
    syn = synthesize_scenario(sc.to_sim(horizon=1, trajectories=1))
    threshold = syn.params.diagnostics["authority"].rhs
    doc["policy"]["Umax"] = 2 * threshold
    return doc, syn, threshold


def test_criterion_09_general_channel(tmp_path):
    doc, syn0, threshold = _criterion9_document()
    sc = parse(doc)
    cs = channel_stats(sc.channel)
    ratio = syn0.params.diagnostics["noise_ratio"].lhs
    assert cs.psi == pytest.approx(0.2 / math.sqrt(12), rel=1e-12)
    assert ratio == pytest.approx(2 * cs.psi, rel=1e-9)

    code, out = cli.simulate(sc, tmp_path)
    v, ms = out["_verdict"], out["_moments"]
    _note_controls("rotation_general", ms.max_control_norm, sc.Umax)
    sim = sc.to_sim()
    syn = synthesize_scenario(sim)
    J = syn.params.J
    drift = drift_check(sim, probes_at_radii(sim.master_seed, [2 * J, 10 * J, 100 * J], 2),
                        synthesis=syn)
    passed = (syn.params.feasible and ratio < 1 and code == 0 and v.passed and drift.passed
              and drift.rows[0].threshold == -syn.params.a)
    worst = max(r.estimate + 3 * r.se - r.threshold for r in drift.rows)
    record_criterion(9, "general channel end to end", passed,
                     f"kappa*psi*|R+||R| = {ratio:.4f}, Umax = 2 x {threshold:.6f}, "
                     f"tail/ref = {v.ratio:.4f}, drift margin (est+3SE-thr) max {worst:.3f}")
    assert passed


def test_criterion_10_reproducible_moments(example1_run, tmp_path):
    sc, _, _, _, first = example1_run
    cli.simulate(sc, tmp_path, workers=2)
    same = (first / "moments.csv").read_bytes() == (tmp_path / "moments.csv").read_bytes()
    record_criterion(10, "reproducible moments.csv", same,
                     "byte-identical across runs (1 vs 2 worker threads)")
    assert same


def test_criterion_02_admissibility():
    # the engine raises AdmissibilityViolation on any step above Umax (1 + 1e-12);
    # here we also confirm that every acceptance scenario contributed and none came close
    expected = {"deadbeat", "example1", "rotation_general"}
    missing = expected - set(CONTROL_RATIOS)
    if missing:
        pytest.skip(f"run the whole acceptance module; missing {sorted(missing)}")
    worst = max(CONTROL_RATIOS.values())
    passed = worst <= 1 + 1e-12
    record_criterion(2, "admissibility on every simulated step", passed,
                     ", ".join(f"{k}: max ||u||/Umax = {v:.12f}" for k, v in sorted(CONTROL_RATIOS.items())))
    assert passed
