"""Feasibility checks and saturated deadbeat policies.

Both policies replan every ``kappa`` steps from the orthogonal state ``x2``:

    U = -R^+ sat_r(A2^kappa x2)            (burst channel)
    U = -R^+ sat_r(A2^kappa x2) / mu_bar   (per-component channel, elementwise)

where ``R = R_kappa(A2, B2)`` and ``U`` stacks the next ``kappa`` inputs in
time order. The actuator replays the stacked inputs from a buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    AdmissibilityViolation,
    InfeasiblePolicy,
    PhaseDesync,
    ScenarioError,
    ZeroMeanComponent,
)
from .model import SystemModel, validate
from .noise import BurstBernoulli, ChannelModel, ChannelStats, channel_stats
from .reachability import ReachabilityData, build

# relative slack on inequalities that hold with equality in exact arithmetic
ADMISSIBILITY_RTOL = 1e-12

GENERAL = "General"
BURST = "Burst"
ZERO = "ZeroControl"
POLICY_KINDS = (GENERAL, BURST, ZERO)


def sat(r: float, z) -> np.ndarray:
    """Radial projection of ``z`` onto the closed ball of radius ``r``.

    >>> sat(2.0, [3.0, 4.0])
    array([1.2, 1.6])
    """
    if r <= 0:
        raise ValueError("saturation radius must be positive")
    z = np.asarray(z, dtype=float)
    nz = np.linalg.norm(z)
    if nz <= r:
        return z.copy()
    return z * (r / nz)


def sat_rows(r: float, Z: np.ndarray) -> np.ndarray:
    """:func:`sat` applied to every row of ``Z``."""
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    scale = np.where(norms <= r, 1.0, r / np.where(norms == 0, 1.0, norms))
    return Z * scale


@dataclass(frozen=True)
class Check:
    lhs: float
    rhs: float
    holds: bool
    relation: str

    def as_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "relation": self.relation, "holds": self.holds}


@dataclass(frozen=True, eq=False)
class GeneralPolicyParams:
    kappa: int
    Umax: float
    a: float
    r: float
    mu_inv_stacked: np.ndarray
    psi: float
    maxinv: float
    C1: float
    feasible: bool
    diagnostics: dict[str, Check] = field(default_factory=dict)
    kind: str = GENERAL

    @property
    def J(self) -> float:
        return self.r

    @property
    def drift_threshold(self) -> float:
        return -self.a


@dataclass(frozen=True, eq=False)
class BurstPolicyParams:
    kappa: int
    Umax: float
    p: float
    a: float
    r: float
    C1: float
    feasible: bool
    diagnostics: dict[str, Check] = field(default_factory=dict)
    kind: str = BURST

    @property
    def J(self) -> float:
        return self.r

    @property
    def drift_threshold(self) -> float:
        return -self.p * self.a


@dataclass(frozen=True)
class ZeroControlParams:
    kappa: int
    Umax: float = math.inf
    feasible: bool = True
    kind: str = ZERO


def _le(lhs: float, rhs: float) -> Check:
    return Check(lhs, rhs, lhs <= rhs * (1 + ADMISSIBILITY_RTOL), "<=")


def check_general(reach: ReachabilityData, cs: ChannelStats, C1: float,
                  Umax: float) -> GeneralPolicyParams:
    """Evaluate feasibility of the per-component policy and its constants.

    Four checks, all recorded in ``diagnostics``:

    ``noise_ratio``
        ``kappa * psi * ||R^+|| ||R|| < 1``.
    ``authority``
        ``Umax`` strictly above
        ``sqrt(kappa) C1 maxinv ||R^+|| ||R_I|| / (1 - noise_ratio)``.
    ``radius_within_authority``
        ``r <= Umax``.
    ``admissible``
        ``maxinv ||R^+|| r <= Umax``, which bounds every planned input.

    The two last checks are compared with a relative slack of
    ``ADMISSIBILITY_RTOL`` because they can hold with equality.
    Infeasibility is reported, never raised.
    """
    if Umax <= 0:
        raise ValueError("Umax must be positive")
    if not math.isfinite(cs.maxinv):
        raise ZeroMeanComponent("general policy needs a channel mean with nonzero entries")
    k = reach.kappa
    sk = math.sqrt(k)
    ratio = k * cs.psi * reach.norm_R_pinv * reach.norm_R
    offset = sk * C1 * cs.maxinv * reach.norm_R_pinv * reach.norm_R_I
    threshold = offset / (1.0 - ratio) if ratio < 1 else math.inf
    a = Umax * (1.0 - ratio) - offset
    r = a + k * (reach.norm_R * Umax * math.sqrt(cs.sigma) + reach.norm_R_I * C1 / sk)
    diagnostics = {
        "noise_ratio": Check(ratio, 1.0, ratio < 1.0, "<"),
        "authority": Check(Umax, threshold, Umax > threshold, ">"),
        "radius_within_authority": _le(r, Umax),
        "admissible": _le(cs.maxinv * reach.norm_R_pinv * r, Umax),
    }
    feasible = all(c.holds for c in diagnostics.values()) and r > 0
    mu_inv = np.tile(1.0 / cs.mu, k)
    mu_inv.setflags(write=False)
    return GeneralPolicyParams(
        kappa=k, Umax=float(Umax), a=a, r=r, mu_inv_stacked=mu_inv, psi=cs.psi,
        maxinv=cs.maxinv, C1=float(C1), feasible=bool(feasible), diagnostics=diagnostics,
    )


def check_burst(reach: ReachabilityData, p: float, C1: float, Umax: float) -> BurstPolicyParams:
    """Feasibility and constants of the burst policy.

    ``r = Umax / ||R^+||`` is the largest radius keeping every burst inside
    the control ball, and ``a = r - sqrt(kappa) C1 ||R_I|| / p`` the
    matching drift margin; feasible iff ``a > 0``.
    """
    if Umax <= 0:
        raise ValueError("Umax must be positive")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    k = reach.kappa
    if reach.d2 == 0:
        return BurstPolicyParams(k, float(Umax), float(p), float(Umax), float(Umax), float(C1),
                                 True, {})
    noise_push = math.sqrt(k) * C1 * reach.norm_R_I / p
    threshold = noise_push * reach.norm_R_pinv
    r = Umax / reach.norm_R_pinv
    a = r - noise_push
    diagnostics = {
        "authority": Check(Umax, threshold, Umax > threshold, ">"),
        "drift_margin_positive": Check(a, 0.0, a > 0, ">"),
        "admissible": _le(reach.norm_R_pinv * r, Umax),
    }
    feasible = all(c.holds for c in diagnostics.values())
    return BurstPolicyParams(k, float(Umax), float(p), a, r, float(C1), bool(feasible), diagnostics)


def plan_batch(params, reach: ReachabilityData, X2: np.ndarray) -> np.ndarray:
    """Stacked plans for a batch of orthogonal states.

    Parameters
    ----------
    X2 : (n, d2) ndarray

    Returns
    -------
    (n, kappa * m) ndarray
    """
    n = X2.shape[0]
    km = reach.R_pinv.shape[0]
    if params.kind == ZERO or reach.d2 == 0:
        return np.zeros((n, km))
    if not params.feasible:
        raise InfeasiblePolicy(f"{params.kind} policy parameters are infeasible")
    target = sat_rows(params.r, X2 @ reach.A2_kappa.T)
    U = -target @ reach.R_pinv.T
    if params.kind == GENERAL:
        U = U * params.mu_inv_stacked
    limit = params.Umax * (1 + ADMISSIBILITY_RTOL)
    if np.any(np.linalg.norm(U, axis=1) > limit):
        raise AdmissibilityViolation(
            f"planned control norm {np.linalg.norm(U, axis=1).max():.17g} exceeds Umax={params.Umax}"
        )
    return U


def plan_general(params: GeneralPolicyParams, reach: ReachabilityData, x2) -> np.ndarray:
    """Stacked ``kappa * m`` plan of the per-component policy from ``x2``."""
    return plan_batch(params, reach, np.atleast_2d(np.asarray(x2, dtype=float)))[0]


def plan_burst(params: BurstPolicyParams, reach: ReachabilityData, x2) -> np.ndarray:
    """Stacked ``kappa * m`` plan of the burst policy from ``x2``."""
    return plan_batch(params, reach, np.atleast_2d(np.asarray(x2, dtype=float)))[0]


@dataclass
class ControllerState:
    """Actuator buffer. Refilled from ``x2`` whenever the phase wraps to 0."""

    kappa: int
    m: int
    buffer: np.ndarray = None
    phase: int = 0
    last_replan_state: np.ndarray | None = None

    def __post_init__(self):
        if self.buffer is None:
            self.buffer = np.zeros((self.kappa, self.m))


def controller_step(ctrl: ControllerState, params, reach: ReachabilityData, t: int,
                    x2) -> np.ndarray:
    """Emit ``u_t``, replanning first when ``t`` is a multiple of kappa."""
    if t % ctrl.kappa != ctrl.phase:
        raise PhaseDesync(f"t={t} gives phase {t % ctrl.kappa}, controller is at {ctrl.phase}")
    if ctrl.phase == 0:
        x2 = np.asarray(x2, dtype=float)
        ctrl.buffer = plan_batch(params, reach, x2[None, :])[0].reshape(ctrl.kappa, ctrl.m)
        ctrl.last_replan_state = x2.copy()
    u = ctrl.buffer[ctrl.phase].copy()
    ctrl.phase = (ctrl.phase + 1) % ctrl.kappa
    return u


def synthesize(kind: str, model: SystemModel, channel: ChannelModel | None, C1: float,
               Umax: float, *, reach: ReachabilityData | None = None,
               channel_overrides: dict | None = None):
    """Build ``(reach, params)`` for one of ``POLICY_KINDS``."""
    if kind not in POLICY_KINDS:
        raise ScenarioError(f"unknown policy kind {kind!r}")
    if reach is None:
        reach = build(model)
    if kind == ZERO:
        return reach, ZeroControlParams(reach.kappa, float(Umax) if Umax else math.inf)
    if kind == BURST:
        if not isinstance(channel, BurstBernoulli):
            raise ScenarioError("the burst policy needs a BurstBernoulli channel")
        return reach, check_burst(reach, channel.p, C1, Umax)
    if model.d2 == 0:
        cs = channel_stats(channel, overrides=channel_overrides)
    else:
        cs = channel_stats(channel, require_nonzero_mean=True, overrides=channel_overrides)
    return reach, check_general(reach, cs, C1, Umax)


class SaturatedDeadbeatPolicy(BaseEstimator):
    """Estimator-style wrapper around synthesis and planning.

    ``fit`` validates the plant and computes the policy constants;
    ``predict`` maps a batch of orthogonal states to stacked plans.

    Parameters
    ----------
    kind : {"General", "Burst", "ZeroControl"}
    Umax : float
        Control authority.
    C1 : float
        Bound on ``E||w||``.

    Examples
    --------
    >>> from msbound.model import SystemModel, OrthBlock
    >>> from msbound.noise import BurstBernoulli
    >>> plant = SystemModel(A1=[], blocks=[OrthBlock("PlusOne")], B1=[], B2=[[1.0]])
    >>> pol = SaturatedDeadbeatPolicy("Burst", Umax=2.0, C1=0.5).fit(plant, BurstBernoulli(0.5))
    >>> pol.params_.a, pol.params_.r
    (1.0, 2.0)
    >>> pol.predict([[10.0]])
    array([[-2.]])
    """

    def __init__(self, kind: str = BURST, Umax: float = 1.0, C1: float = 0.0):
        self.kind = kind
        self.Umax = Umax
        self.C1 = C1

    def fit(self, model: SystemModel, channel: ChannelModel | None = None,
            channel_overrides: dict | None = None):
        report = validate(model)
        if not report.ok:
            raise ScenarioError("; ".join(report.messages))
        self.model_ = model
        self.reach_, self.params_ = synthesize(
            self.kind, model, channel, self.C1, self.Umax, channel_overrides=channel_overrides
        )
        self.feasible_ = self.params_.feasible
        self.kappa_ = self.reach_.kappa
        return self

    def predict(self, X2) -> np.ndarray:
        check_is_fitted(self, "params_")
        d2 = self.model_.d2
        X2 = check_array(X2, ensure_min_features=0 if d2 == 0 else 1)
        if X2.shape[1] != d2:
            raise ValueError(f"expected {d2} features, got {X2.shape[1]}")
        return plan_batch(self.params_, self.reach_, X2)

    def controller(self) -> ControllerState:
        check_is_fitted(self, "params_")
        return ControllerState(self.kappa_, self.model_.m)
