"""Reachability matrices, controllability index, pseudoinverse and norms."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import qr, solve_triangular

from .exceptions import NonConvergenceWarning, NotReachable, RankDeficient

if TYPE_CHECKING:
    from .model import SystemModel

RANK_RTOL = 1e-9
POWER_RTOL = 1e-10
POWER_MAX_ITER = 10_000
POWER_SEED = 0x5EED


def reachability_matrix(A2, M, k: int) -> np.ndarray:
    """``[A2^(k-1) M | ... | A2 M | M]``.

    >>> reachability_matrix([[0, -1], [1, 0]], [[1], [0]], 2)
    array([[0., 1.],
           [1., 0.]])
    """
    A2 = np.asarray(A2, dtype=float)
    M = np.asarray(M, dtype=float)
    if k < 1:
        raise ValueError("k must be a positive integer")
    if A2.shape[0] != A2.shape[1] or M.shape[0] != A2.shape[0]:
        raise ValueError(f"inconsistent shapes {A2.shape} and {M.shape}")
    cols = [M]
    for _ in range(k - 1):
        cols.append(A2 @ cols[-1])
    return np.hstack(cols[::-1])


def matrix_rank(M, rtol: float = RANK_RTOL) -> int:
    """Numerical rank: singular values above ``rtol * sigma_max``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def controllability_index(A2, B2, rank_tol: float = RANK_RTOL) -> int:
    """Smallest ``k <= d2`` with ``rank R_k(A2, B2) = d2``.

    Raises
    ------
    NotReachable
        If no such ``k`` exists.
    """
    A2 = np.asarray(A2, dtype=float)
    d2 = A2.shape[0]
    if d2 == 0:
        raise ValueError("controllability index undefined for d2 = 0")
    for k in range(1, d2 + 1):
        if matrix_rank(reachability_matrix(A2, B2, k), rank_tol) == d2:
            return k
    raise NotReachable(f"rank of R_{d2}(A2, B2) is below d2 = {d2}")


def pinv_full_row_rank(R, rank_tol: float = RANK_RTOL) -> np.ndarray:
    """Right inverse ``R^T (R R^T)^{-1}`` of a full-row-rank matrix.

    Computed from the thin QR factorization ``R^T = Q T`` as ``Q T^{-T}``.
    This is the same matrix, but forming ``R R^T`` would square the
    condition number and lose about half the digits on poorly
    conditioned reachability matrices.
    """
    R = np.asarray(R, dtype=float)
    rows, cols = R.shape
    if rows > cols or matrix_rank(R, rank_tol) < rows:
        raise RankDeficient(f"{R.shape} matrix does not have full row rank")
    Q, T = qr(R.T, mode="economic")
    return solve_triangular(T, Q.T).T


def power_norm(M, rtol: float = POWER_RTOL, max_iter: int = POWER_MAX_ITER,
               seed: int = POWER_SEED) -> tuple[float, bool, int]:
    """Largest singular value by power iteration on ``M^T M``.

    Stops when the eigen-residual ``||G v - lam v||`` falls below
    ``rtol * lam``. A test on the change between iterates would stop too
    early when the two leading singular values are close.

    Returns ``(estimate, converged, iterations)``.
    """
    M = np.asarray(M, dtype=float)
    if M.size == 0 or not np.any(M):
        return 0.0, True, 0
    G = M.T @ M
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = G @ v
        ny = np.linalg.norm(y)
        if ny == 0.0:
            # started in the null space
            v = rng.standard_normal(G.shape[0])
            v /= np.linalg.norm(v)
            continue
        v = y / ny
        Gv = G @ v
        lam = float(v @ Gv)
        if np.linalg.norm(Gv - lam * v) <= rtol * lam:
            return float(np.sqrt(lam)), True, it
    return float(np.sqrt(max(lam, 0.0))), False, max_iter


def spectral_norm(M, rtol: float = POWER_RTOL, max_iter: int = POWER_MAX_ITER) -> float:
    """Induced Euclidean norm of ``M``.

    Emits :class:`NonConvergenceWarning` (and returns the best estimate) if
    the iteration cap is reached.
    """
    value, converged, _ = power_norm(M, rtol, max_iter)
    if not converged:
        warnings.warn(
            f"power iteration did not reach rtol={rtol:g} in {max_iter} iterations",
            NonConvergenceWarning,
            stacklevel=2,
        )
    return value


@dataclass(frozen=True, eq=False)
class ReachabilityData:
    kappa: int
    R: np.ndarray
    R_pinv: np.ndarray
    R_I: np.ndarray
    norm_R: float
    norm_R_pinv: float
    norm_R_I: float
    A2_kappa: np.ndarray

    @property
    def d2(self) -> int:
        return self.R.shape[0]


def build(model: "SystemModel", rank_tol: float = RANK_RTOL) -> ReachabilityData:
    """Everything the feasibility formulas and planners need about ``(A2, B2)``.

    For ``d2 = 0`` a placeholder with ``kappa = 1`` and empty matrices is
    returned, so the planners emit zero controls.
    """
    d2, m = model.d2, model.m
    if d2 == 0:
        return ReachabilityData(1, np.zeros((0, m)), np.zeros((m, 0)), np.zeros((0, 0)),
                                0.0, 0.0, 0.0, np.zeros((0, 0)))
    kappa = controllability_index(model.A2, model.B2, rank_tol)
    R = reachability_matrix(model.A2, model.B2, kappa)
    R_pinv = pinv_full_row_rank(R, rank_tol)
    R_I = reachability_matrix(model.A2, np.eye(d2), kappa)
    A2k = np.linalg.matrix_power(model.A2, kappa)
    for arr in (R, R_pinv, R_I, A2k):
        arr.setflags(write=False)
    return ReachabilityData(
        kappa=kappa,
        R=R,
        R_pinv=R_pinv,
        R_I=R_I,
        norm_R=spectral_norm(R),
        norm_R_pinv=spectral_norm(R_pinv),
        norm_R_I=spectral_norm(R_I),
        A2_kappa=A2k,
    )
