"""Closed-loop simulation and Monte Carlo verification.

Two paths compute the same closed loop:

* :func:`run_trajectory` steps one trajectory with :func:`step` and a
  :class:`~msbound.policy.ControllerState`; it is the readable reference.
* :func:`monte_carlo_moments` advances a chunk of trajectories in lockstep
  with array operations. Each trajectory still draws its noise from its own
  stream, so trajectory ``j`` sees the same noise on both paths.

Moment aggregation folds chunk sums in trajectory order, so results do not
depend on the number of worker threads.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import defaults
from .exceptions import AdmissibilityViolation, ProbeInsideLevelSet, ScenarioError
from .model import SystemModel, compose
from .noise import (
    BurstBernoulli,
    ChannelModel,
    ProcessNoiseModel,
    channel_stats,
    channel_vectors,
    process_bounds,
    sample_channel,
    sample_process,
)
from .policy import (
    ADMISSIBILITY_RTOL,
    BURST,
    POLICY_KINDS,
    ZERO,
    ControllerState,
    controller_step,
    plan_batch,
    synthesize,
)
from .reachability import ReachabilityData
from .rng import Purpose, stream


@dataclass(frozen=True, eq=False)
class SimScenario:
    model: SystemModel
    channel: ChannelModel
    process: ProcessNoiseModel
    policy_kind: str
    Umax: float
    x0: np.ndarray
    horizon: int
    trajectories: int
    master_seed: int
    record: str = "thinned"
    channel_overrides: dict | None = None

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.model.d,):
            raise ScenarioError(f"x0 has shape {x0.shape}, expected ({self.model.d},)")
        object.__setattr__(self, "x0", x0)
        if self.policy_kind not in POLICY_KINDS:
            raise ScenarioError(f"unknown policy kind {self.policy_kind!r}")
        if self.process.d != self.model.d:
            raise ScenarioError(f"process noise has dimension {self.process.d}, plant has {self.model.d}")
        m_ch = self.channel.m
        if m_ch != self.model.m:
            raise ScenarioError(f"channel has {m_ch} components, plant has {self.model.m} inputs")
        if self.trajectories < 1:
            raise ScenarioError("need at least one trajectory")
        if self.record not in ("full", "thinned"):
            raise ScenarioError("record must be 'full' or 'thinned'")


@dataclass(frozen=True, eq=False)
class Synthesis:
    reach: ReachabilityData
    params: object
    C1: float
    C4: float

    @property
    def kappa(self) -> int:
        return self.reach.kappa


def synthesize_scenario(scenario: SimScenario) -> Synthesis:
    C1, C4 = process_bounds(scenario.process)
    reach, params = synthesize(
        scenario.policy_kind, scenario.model, scenario.channel, C1, scenario.Umax,
        channel_overrides=scenario.channel_overrides,
    )
    return Synthesis(reach, params, C1, C4)


def step(model: SystemModel, x, u, nu, w) -> np.ndarray:
    """One closed-loop update ``A x + B (nu * u) + w``."""
    A, B = compose(model)
    return A @ np.asarray(x, float) + B @ (np.asarray(nu, float) * np.asarray(u, float)) \
        + np.asarray(w, float)


def draw_noise(scenario: SimScenario, kappa: int, index: int,
               steps: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Process noise ``(steps, d)`` and channel multipliers ``(steps, m)``.

    Under the burst policy one erasure draw covers each kappa-step window.
    """
    H = scenario.horizon if steps is None else steps
    seed = scenario.master_seed
    W = sample_process(scenario.process, stream(seed, index, Purpose.PROCESS), H)
    ch_rng = stream(seed, index, Purpose.CHANNEL)
    m = scenario.model.m
    if scenario.policy_kind == ZERO:
        NU = np.ones((H, m))
    elif scenario.policy_kind == BURST:
        windows = -(-H // kappa)
        b = sample_channel(scenario.channel, ch_rng, windows)
        NU = np.repeat(np.repeat(b, kappa)[:H, None], m, axis=1)
    else:
        NU = channel_vectors(scenario.channel, ch_rng, H)
    return W, NU


def record_times(horizon: int, kappa: int, record: str) -> np.ndarray:
    stride = 1 if record == "full" else kappa
    return np.arange(0, horizon + 1, stride)


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    realized: np.ndarray
    channel: np.ndarray
    stream_id: tuple[int, int]


def _check_admissible(u_norms: np.ndarray, Umax: float) -> None:
    if np.any(u_norms > Umax * (1 + ADMISSIBILITY_RTOL)):
        raise AdmissibilityViolation(f"control norm {u_norms.max():.17g} exceeds Umax={Umax}")


def run_trajectory(scenario: SimScenario, traj_index: int,
                   synthesis: Synthesis | None = None) -> Trajectory:
    """Simulate trajectory ``traj_index`` step by step.

    Deterministic in ``(master_seed, traj_index)``. Starts at phase 0.
    """
    syn = synthesis or synthesize_scenario(scenario)
    model, kappa = scenario.model, syn.kappa
    if scenario.horizon < kappa:
        raise ScenarioError(f"horizon {scenario.horizon} shorter than kappa={kappa}")
    W, NU = draw_noise(scenario, kappa, traj_index)
    ctrl = ControllerState(kappa, model.m)
    times = record_times(scenario.horizon, kappa, scenario.record)
    keep = np.zeros(scenario.horizon + 1, bool)
    keep[times] = True
    states = []
    controls = np.zeros((scenario.horizon, model.m))
    x = scenario.x0.copy()
    for t in range(scenario.horizon):
        if keep[t]:
            states.append(x)
        u = controller_step(ctrl, syn.params, syn.reach, t, x[model.d1:])
        _check_admissible(np.linalg.norm(u)[None], syn.params.Umax)
        controls[t] = u
        x = step(model, x, u, NU[t], W[t])
    if keep[scenario.horizon]:
        states.append(x)
    return Trajectory(times, np.array(states), controls, NU * controls, NU,
                      (scenario.master_seed, traj_index))


class _BatchLoop:
    """Lockstep closed loop for a batch of states sharing one plant."""

    def __init__(self, scenario: SimScenario, syn: Synthesis):
        self.model = scenario.model
        self.syn = syn
        A, B = compose(self.model)
        self.AT, self.BT = A.T, B.T
        self.d1 = self.model.d1
        self.plan = None

    def advance(self, X: np.ndarray, t: int, nu: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        syn, kappa, m = self.syn, self.syn.kappa, self.model.m
        if t % kappa == 0:
            self.plan = plan_batch(syn.params, syn.reach, X[:, self.d1:]).reshape(len(X), kappa, m)
        u = self.plan[:, t % kappa]
        u_norm = np.linalg.norm(u, axis=1)
        _check_admissible(u_norm, syn.params.Umax)
        return X @ self.AT + (nu * u) @ self.BT + w, u_norm


def simulate_batch(scenario: SimScenario, indices, synthesis: Synthesis | None = None,
                   times: np.ndarray | None = None):
    """Vectorized simulation of the given trajectory indices.

    Returns ``(times, states, max_u)`` with ``states`` of shape
    ``(len(indices), len(times), d)`` and ``max_u[t]`` the largest control
    norm applied at step ``t`` across the batch.
    """
    syn = synthesis or synthesize_scenario(scenario)
    H, kappa = scenario.horizon, syn.kappa
    if H < kappa:
        raise ScenarioError(f"horizon {H} shorter than kappa={kappa}")
    if times is None:
        times = record_times(H, kappa, scenario.record)
    noise = [draw_noise(scenario, kappa, j) for j in indices]
    W = np.stack([n[0] for n in noise])
    NU = np.stack([n[1] for n in noise])
    loop = _BatchLoop(scenario, syn)
    X = np.tile(scenario.x0, (len(indices), 1))
    slot = np.full(H + 1, -1)
    slot[times] = np.arange(len(times))
    out = np.empty((len(indices), len(times), scenario.model.d))
    max_u = np.zeros(H)
    for t in range(H):
        if slot[t] >= 0:
            out[:, slot[t]] = X
        X, u_norm = loop.advance(X, t, NU[:, t], W[:, t])
        max_u[t] = u_norm.max()
    if slot[H] >= 0:
        out[:, slot[H]] = X
    return times, out, max_u


@dataclass(eq=False)
class MomentSeries:
    """Per-time sample means of squared norms with standard errors.

    ``max_u_norm[k]`` is the running maximum of ``||u_s||`` over all
    trajectories and all steps ``s < times[k]``.
    """

    times: np.ndarray
    mean_x_sq: np.ndarray
    se_x: np.ndarray
    mean_x2_sq: np.ndarray
    se_x2: np.ndarray
    mean_x1_sq: np.ndarray
    se_x1: np.ndarray
    max_u_norm: np.ndarray
    trajectories: int

    @property
    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(self.mean_x_sq)

    @property
    def max_control_norm(self) -> float:
        return float(self.max_u_norm[-1]) if len(self.max_u_norm) else 0.0


def _chunk_sums(scenario, syn, indices, times):
    _, states, max_u = simulate_batch(scenario, indices, syn, times)
    d1 = scenario.model.d1
    sq1 = np.sum(states[..., :d1] ** 2, axis=-1)
    sq2 = np.sum(states[..., d1:] ** 2, axis=-1)
    sq = sq1 + sq2
    sums = np.stack([q.sum(axis=0) for q in (sq, sq2, sq1)])
    sumsq = np.stack([(q * q).sum(axis=0) for q in (sq, sq2, sq1)])
    return sums, sumsq, max_u


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get(defaults.THREADS_ENV)
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def monte_carlo_moments(scenario: SimScenario, synthesis: Synthesis | None = None,
                        workers: int | None = None,
                        chunk_size: int = defaults.CHUNK_SIZE) -> MomentSeries:
    """Average squared state norms over ``scenario.trajectories`` runs."""
    M = scenario.trajectories
    if M < 2:
        raise ScenarioError("Monte Carlo moments need at least two trajectories")
    syn = synthesis or synthesize_scenario(scenario)
    times = record_times(scenario.horizon, syn.kappa, scenario.record)
    chunks = [range(s, min(s + chunk_size, M)) for s in range(0, M, chunk_size)]
    n_workers = min(worker_count(workers), len(chunks))
    if n_workers == 1:
        results = [_chunk_sums(scenario, syn, c, times) for c in chunks]
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            results = list(pool.map(lambda c: _chunk_sums(scenario, syn, c, times), chunks))

    sums = np.zeros((3, len(times)))
    sumsq = np.zeros((3, len(times)))
    max_u = np.zeros(scenario.horizon)
    for s, q, mu in results:
        sums += s
        sumsq += q
        max_u = np.maximum(max_u, mu)
    mean = sums / M
    var = np.maximum(sumsq - M * mean**2, 0.0) / (M - 1)
    se = np.sqrt(var / M)
    running = np.concatenate([[0.0], np.maximum.accumulate(max_u)])
    return MomentSeries(
        times=times,
        mean_x_sq=mean[0], se_x=se[0],
        mean_x2_sq=mean[1], se_x2=se[1],
        mean_x1_sq=mean[2], se_x1=se[2],
        max_u_norm=running[times],
        trajectories=M,
    )


# -- verdicts ---------------------------------------------------------------

@dataclass(frozen=True)
class BoundednessVerdict:
    passed: bool
    zeta_hat: float
    reference_max: float
    tail_max: float

    @property
    def ratio(self) -> float:
        if self.reference_max == 0:
            return 1.0 if self.tail_max == 0 else math.inf
        return self.tail_max / self.reference_max


def boundedness_verdict(ms: MomentSeries, burn_in: float = defaults.BURN_IN,
                        headroom: float = defaults.PLATEAU_HEADROOM) -> BoundednessVerdict:
    """Plateau test on ``E||x_t||^2``.

    With horizon ``H`` and burn-in fraction ``b`` the reference window is
    ``[b/2 H, b H)`` and the tail window ``[(1 - b/2) H, H]``; the default
    ``b = 0.5`` compares the last quarter with the second quarter. PASS iff
    the tail max is within ``headroom`` times the reference max and the
    series is finite.
    """
    if not 0 < burn_in <= 1:
        raise ValueError("burn_in must lie in (0, 1]")
    t, y = ms.times, ms.mean_x_sq
    H = t[-1]
    ref = y[(t >= burn_in / 2 * H) & (t < burn_in * H)]
    tail = y[t >= (1 - burn_in / 2) * H]
    if len(ref) == 0 or len(tail) == 0:
        raise ValueError("horizon too short for the plateau windows")
    finite = bool(np.all(np.isfinite(y)))
    zeta = float(np.max(y)) if finite else math.inf
    ref_max, tail_max = float(ref.max()), float(tail.max())
    passed = finite and tail_max <= headroom * ref_max
    return BoundednessVerdict(passed, zeta, ref_max, tail_max)


# -- drift and fourth-moment probes ------------------------------------------

class SmallSampleWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DriftRow:
    probe_radius: float
    estimate: float
    se: float
    threshold: float
    passed: bool


@dataclass(eq=False)
class DriftReport:
    rows: list[DriftRow]
    J: float
    samples: int
    se_warning: bool = False

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def default_probes(scenario: SimScenario, J: float, d2: int,
                   multiples=defaults.PROBE_MULTIPLES) -> list[np.ndarray]:
    """Random unit directions scaled to ``k * J`` for ``k`` in ``multiples``."""
    return probes_at_radii(scenario.master_seed, [k * J for k in multiples], d2)


def probes_at_radii(seed: int, radii, d2: int) -> list[np.ndarray]:
    rng = stream(seed, 0, Purpose.PROBE_DIRECTIONS)
    out = []
    for rad in radii:
        v = rng.standard_normal(d2) if d2 > 1 else np.ones(d2)
        out.append(float(rad) * v / np.linalg.norm(v))
    return out


def _kappa_step_changes(scenario: SimScenario, syn: Synthesis, x2, samples: int,
                        index: int, purpose: Purpose) -> np.ndarray:
    """Samples of ``||x2 after kappa steps|| - ||x2||`` from a fixed start."""
    model, kappa = scenario.model, syn.kappa
    x2 = np.asarray(x2, dtype=float)
    if x2.shape != (model.d2,):
        raise ValueError(f"probe has shape {x2.shape}, expected ({model.d2},)")
    rng = stream(scenario.master_seed, index, purpose)
    W = sample_process(scenario.process, rng, samples * kappa).reshape(samples, kappa, model.d)
    m = model.m
    if scenario.policy_kind == BURST:
        b = sample_channel(scenario.channel, rng, samples)
        NU = np.broadcast_to(b[:, None, None], (samples, kappa, m))
    elif scenario.policy_kind == ZERO:
        NU = np.ones((samples, kappa, m))
    else:
        NU = channel_vectors(scenario.channel, rng, samples * kappa).reshape(samples, kappa, m)
    X = np.zeros((samples, model.d))
    X[:, model.d1:] = x2
    loop = _BatchLoop(scenario, syn)
    for t in range(kappa):
        X, _ = loop.advance(X, t, NU[:, t], W[:, t])
    return np.linalg.norm(X[:, model.d1:], axis=1) - np.linalg.norm(x2)


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.inf


def drift_check(scenario: SimScenario, probe_states, samples: int = defaults.DRIFT_SAMPLES,
                synthesis: Synthesis | None = None) -> DriftReport:
    """Empirical kappa-step drift of ``||x2||`` at each probe.

    The threshold is ``-a`` for the per-component policy and ``-p a`` for
    the burst policy; a probe passes when its estimate is at most the
    threshold plus ``SE_BAND`` standard errors.

    Raises
    ------
    ProbeInsideLevelSet
        If some probe has ``||x2|| <= J``.
    """
    syn = synthesis or synthesize_scenario(scenario)
    params = syn.params
    if params.kind == ZERO:
        raise ScenarioError("drift check needs a synthesized policy, not ZeroControl")
    J = params.J
    probes = [np.asarray(p, dtype=float) for p in probe_states]
    for p in probes:
        if np.linalg.norm(p) <= J:
            raise ProbeInsideLevelSet(f"probe radius {np.linalg.norm(p):g} <= J = {J:g}")
    warn = samples < defaults.MIN_DRIFT_SAMPLES
    if warn:
        warnings.warn(f"{samples} samples per probe; standard errors will be large",
                      SmallSampleWarning, stacklevel=2)
    rows = []
    for i, p in enumerate(probes):
        delta = _kappa_step_changes(scenario, syn, p, samples, i, Purpose.DRIFT)
        est, se = _mean_se(delta)
        thr = params.drift_threshold
        rows.append(DriftRow(float(np.linalg.norm(p)), est, se, thr,
                             est <= thr + defaults.SE_BAND * se))
    return DriftReport(rows, J, samples, warn)


def fourth_moment_bound(scenario: SimScenario, syn: Synthesis, use_c4: bool = False) -> float:
    """``kappa^4 (sqrt(m) Umax diam ||R|| + ||R_I|| C)^4``.

    ``diam`` is the diameter of the channel support together with the
    origin, which dominates ``max_i |nu_i|``. ``C`` is ``C1``, or
    ``C4 ** 0.25`` when ``use_c4`` is set.
    """
    reach, params = syn.reach, syn.params
    cs = channel_stats(scenario.channel, overrides=scenario.channel_overrides)
    umax = 0.0 if params.kind == ZERO else params.Umax
    C = syn.C4 ** 0.25 if use_c4 else syn.C1
    k = syn.kappa
    inner = math.sqrt(scenario.model.m) * umax * cs.diamT0 * reach.norm_R + reach.norm_R_I * C
    return k**4 * inner**4


@dataclass(eq=False)
class FourthMomentReport:
    radii: list[float]
    estimates: list[float]
    se: list[float]
    bound: float
    bound_c4: float
    samples: int

    @property
    def empirical_max(self) -> float:
        return max(self.estimates) if self.estimates else 0.0

    @property
    def passed(self) -> bool:
        return self.empirical_max <= self.bound


def fourth_moment_check(scenario: SimScenario, probe_states,
                        samples: int = defaults.DRIFT_SAMPLES,
                        synthesis: Synthesis | None = None) -> FourthMomentReport:
    """Empirical ``E|Delta ||x2|| |^4`` at kappa spacing versus the analytic bound."""
    syn = synthesis or synthesize_scenario(scenario)
    radii, est, ses = [], [], []
    for i, p in enumerate(probe_states):
        delta = _kappa_step_changes(scenario, syn, p, samples, i, Purpose.FOURTH_MOMENT)
        mean, se = _mean_se(delta**4)
        radii.append(float(np.linalg.norm(p)))
        est.append(mean)
        ses.append(se)
    return FourthMomentReport(radii, est, ses, fourth_moment_bound(scenario, syn),
                              fourth_moment_bound(scenario, syn, use_c4=True), samples)
