"""Block-structured plant ``x+ = blockdiag(A1, A2) x + [B1; B2] u~ + w``.

The plant is supplied already split into a Schur-stable part ``A1`` and an
orthogonal part ``A2`` assembled from ``+1``, ``-1`` and 2x2 rotation
blocks. No similarity transform is attempted here; callers that start from
an arbitrary ``(A, B)`` pair must bring it to this form themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from .exceptions import NotReachable, ScenarioError

SCHUR_DECAY_THRESHOLD = 1e-6
SCHUR_MAX_POWER = 1024
ORTHOGONALITY_TOL = 1e-12
RANK_RTOL = 1e-9

_DEGENERATE_ANGLE_TOL = 1e-12


class BlockKind(str, Enum):
    PLUS_ONE = "PlusOne"
    MINUS_ONE = "MinusOne"
    ROTATION = "Rotation"


@dataclass(frozen=True)
class OrthBlock:
    """One diagonal block of ``A2``.

    ``theta`` is in radians and only used for rotations, where it must lie
    in ``(0, 2*pi)`` and differ from ``pi`` (those angles give ``+-I`` and
    must be declared as scalar blocks instead).
    """

    kind: BlockKind
    theta: float | None = None

    def __post_init__(self):
        kind = BlockKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is BlockKind.ROTATION:
            if self.theta is None:
                raise ScenarioError("Rotation block requires theta")
            theta = float(self.theta)
            if not 0.0 < theta < 2.0 * math.pi:
                raise ScenarioError(f"rotation angle {theta} outside (0, 2*pi)")
            if abs(theta - math.pi) < _DEGENERATE_ANGLE_TOL or theta < _DEGENERATE_ANGLE_TOL:
                raise ScenarioError(
                    f"rotation angle {theta} is degenerate; declare PlusOne/MinusOne blocks"
                )
            object.__setattr__(self, "theta", theta)
        elif self.theta is not None:
            raise ScenarioError(f"{kind.value} block takes no theta")

    @property
    def size(self) -> int:
        return 2 if self.kind is BlockKind.ROTATION else 1

    def matrix(self) -> np.ndarray:
        if self.kind is BlockKind.PLUS_ONE:
            return np.array([[1.0]])
        if self.kind is BlockKind.MINUS_ONE:
            return np.array([[-1.0]])
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])


def build_orthogonal(blocks: Sequence[OrthBlock]) -> np.ndarray:
    """Assemble ``A2`` as the block diagonal of ``blocks`` in listed order.

    An empty list gives a 0x0 matrix.
    """
    if len(blocks) == 0:
        return np.zeros((0, 0))
    return block_diag(*(b.matrix() for b in blocks))


def _as_matrix(value, rows: int, cols: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(rows, cols) if rows * cols == 0 else arr
    if arr.shape != (rows, cols):
        raise ScenarioError(f"{name} has shape {arr.shape}, expected {(rows, cols)}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{name} has non-finite entries")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Plant in block form. Arrays are stored read-only.

    Parameters
    ----------
    A1 : (d1, d1) array_like
        Schur-stable part. May be empty.
    blocks : sequence of OrthBlock
        Diagonal blocks of the orthogonal part ``A2``.
    B1 : (d1, m) array_like
    B2 : (d2, m) array_like
    m : int, optional
        Input dimension; inferred from ``B2`` or ``B1`` when omitted.
    """

    A1: np.ndarray
    blocks: tuple[OrthBlock, ...]
    B1: np.ndarray
    B2: np.ndarray
    m: int | None = None
    A2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, OrthBlock) else OrthBlock(**b) for b in self.blocks)
        object.__setattr__(self, "blocks", tuple(blocks))
        d2 = sum(b.size for b in blocks)
        A1 = np.asarray(self.A1, dtype=float)
        d1 = 0 if A1.size == 0 else A1.shape[0]
        m = self.m
        if m is None:
            for cand in (self.B2, self.B1):
                c = np.asarray(cand, dtype=float)
                if c.ndim == 2 and c.size > 0:
                    m = c.shape[1]
                    break
        if m is None or int(m) < 1:
            raise ScenarioError("input dimension m could not be determined (need m >= 1)")
        m = int(m)
        if d1 + d2 < 1:
            raise ScenarioError("state dimension d1 + d2 must be at least 1")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "A1", _as_matrix(A1, d1, d1, "A1"))
        object.__setattr__(self, "B1", _as_matrix(self.B1, d1, m, "B1"))
        object.__setattr__(self, "B2", _as_matrix(self.B2, d2, m, "B2"))
        A2 = build_orthogonal(blocks)
        A2.setflags(write=False)
        object.__setattr__(self, "A2", A2)

    @property
    def d1(self) -> int:
        return self.A1.shape[0]

    @property
    def d2(self) -> int:
        return self.A2.shape[0]

    @property
    def d(self) -> int:
        return self.d1 + self.d2

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Partition a state (or a batch of states along the last axis)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValueError(f"state has length {x.shape[-1]}, expected {self.d}")
        return x[..., : self.d1], x[..., self.d1 :]


@dataclass(frozen=True, eq=False)
class State:
    x1: np.ndarray
    x2: np.ndarray

    @classmethod
    def from_vector(cls, model: SystemModel, x) -> "State":
        x1, x2 = model.split(x)
        return cls(np.array(x1), np.array(x2))

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.x1, self.x2])


def compose(model: SystemModel) -> tuple[np.ndarray, np.ndarray]:
    """Return the full ``(A, B)`` pair."""
    A = block_diag(model.A1, model.A2)
    B = np.vstack([model.B1, model.B2])
    return A, B


def decompose(A, B, d1: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`compose`: slice ``(A, B)`` back into ``A1, A2, B1, B2``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return A[:d1, :d1], A[d1:, d1:], B[:d1], B[d1:]


@dataclass
class ValidationReport:
    orthogonality_residual: float
    orthogonal_ok: bool
    schur_power: int | None
    schur_ok: bool
    reachability_rank: int
    kappa: int | None
    reachable: bool
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.orthogonal_ok and self.schur_ok and self.reachable


def schur_decay_power(A1, threshold: float = SCHUR_DECAY_THRESHOLD,
                      max_power: int = SCHUR_MAX_POWER) -> int | None:
    """Smallest ``n <= max_power`` with ``||A1^n|| < threshold``, else None.

    ``n = 0`` is returned for an empty matrix.
    """
    A1 = np.asarray(A1, dtype=float)
    if A1.size == 0:
        return 0
    P = np.eye(A1.shape[0])
    for n in range(1, max_power + 1):
        P = P @ A1
        if np.linalg.norm(P, 2) < threshold:
            return n
        if not np.all(np.isfinite(P)):
            return None
    return None


def validate(model: SystemModel, *, orth_tol: float = ORTHOGONALITY_TOL,
             rank_rtol: float = RANK_RTOL) -> ValidationReport:
    """Check the structural hypotheses on ``model``.

    Never raises on a failed check; the report carries every residual and
    the caller decides what to do with a failing model.
    """
    from .reachability import controllability_index, matrix_rank, reachability_matrix

    messages = []
    d2 = model.d2
    resid = float(np.linalg.norm(model.A2.T @ model.A2 - np.eye(d2))) if d2 else 0.0
    orth_ok = resid <= orth_tol
    if not orth_ok:
        messages.append(f"A2 orthogonality residual {resid:.3e} exceeds {orth_tol:g}")

    n = schur_decay_power(model.A1)
    if n is None:
        messages.append(
            f"A1 not Schur stable: ||A1^n|| >= {SCHUR_DECAY_THRESHOLD:g} for all n <= {SCHUR_MAX_POWER}"
        )

    if d2 == 0:
        rank, kappa, reachable = 0, None, True
    else:
        rank = matrix_rank(reachability_matrix(model.A2, model.B2, d2), rank_rtol)
        try:
            kappa = controllability_index(model.A2, model.B2, rank_rtol)
            reachable = True
        except NotReachable:
            kappa, reachable = None, False
            messages.append(f"(A2, B2) not reachable: rank {rank} < d2 = {d2}")

    return ValidationReport(
        orthogonality_residual=resid,
        orthogonal_ok=orth_ok,
        schur_power=n,
        schur_ok=n is not None,
        reachability_rank=rank,
        kappa=kappa,
        reachable=reachable,
        messages=messages,
    )
