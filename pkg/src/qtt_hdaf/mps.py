"""Finite-precision MPS/MPO algebra on qubit-encoded uniform grids.

States are tensor trains of rank-3 tensors ``(left, 2, right)`` with one site
per binary digit of the grid index; site 0 holds the most significant bit.
Operators are trains of rank-4 tensors ``(left, out, in, right)`` whose dense
form is indexed ``[out, in]``.

All values are treated as immutable: every operation returns a new object and
never modifies the arrays it was given.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg


class GridMismatchError(ValueError):
    """Raised when two objects live on incompatible grids or site counts."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid ``[a, b)`` with ``2**n_qubits`` points.

    Attributes:
        a: Left end of the interval (included).
        b: Right end of the interval (excluded).
        n_qubits: Number of binary digits of the grid index.
    """

    a: float
    b: float
    n_qubits: int

    def __post_init__(self) -> None:
        if not self.b > self.a:
            raise ValueError(f"grid needs b > a, got [{self.a}, {self.b})")
        if int(self.n_qubits) != self.n_qubits or self.n_qubits < 2:
            raise ValueError(f"n_qubits must be an integer >= 2, got {self.n_qubits}")

    @classmethod
    def centered(cls, length: float, n_qubits: int) -> Grid:
        """Grid on ``[-length/2, length/2)``."""
        return cls(-0.5 * length, 0.5 * length, n_qubits)

    @property
    def points(self) -> int:
        return 1 << self.n_qubits

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def dx(self) -> float:
        return self.length / self.points

    @property
    def x(self) -> np.ndarray:
        return self.a + self.dx * np.arange(self.points)

    def with_qubits(self, n_qubits: int) -> Grid:
        """Same interval sampled with a different number of qubits."""
        return Grid(self.a, self.b, n_qubits)


@dataclass(frozen=True)
class Tolerances:
    """Truncation budgets.

    Attributes:
        svd_tol: Bound on the relative squared norm ``||psi - phi||^2 / ||psi||^2``
            discarded by one truncation of a state.
        max_bond: Optional hard cap on every bond dimension.
        simplify_tol: Relative squared Frobenius budget used when compressing
            operators.
    """

    svd_tol: float = 1e-28
    max_bond: int | None = None
    simplify_tol: float = 1e-28

    def __post_init__(self) -> None:
        if self.svd_tol < 0 or self.simplify_tol < 0:
            raise ValueError("tolerances must be non-negative")
        if self.max_bond is not None and self.max_bond < 1:
            raise ValueError("max_bond must be positive")


DEFAULT_TOLERANCES = Tolerances()
EXACT = Tolerances(svd_tol=0.0, simplify_tol=0.0)


def _check_train(tensors: Sequence[np.ndarray], rank: int) -> None:
    if len(tensors) < 1:
        raise ValueError("a tensor train needs at least one site")
    for t in tensors:
        if t.ndim != rank:
            raise ValueError(f"expected rank-{rank} tensors, got shape {t.shape}")
    if tensors[0].shape[0] != 1 or tensors[-1].shape[-1] != 1:
        raise ValueError("boundary bonds must have dimension 1")
    for left, right in zip(tensors[:-1], tensors[1:]):
        if left.shape[-1] != right.shape[0]:
            raise ValueError(f"bond mismatch between shapes {left.shape} and {right.shape}")


@dataclass(frozen=True, eq=False)
class MpsState:
    """Quantized tensor train encoding a vector of ``2**n`` amplitudes.

    The represented vector is ``norm_factor`` times the contraction of
    ``tensors``.

    Attributes:
        tensors: Site tensors of shape ``(left, 2, right)``.
        canonical_center: Site of the orthogonality center, or ``None`` when
            the train is in no particular gauge.
        norm_factor: Scalar carried outside the tensors.
        grid: Optional grid the amplitudes are sampled on.
    """

    tensors: tuple[np.ndarray, ...]
    canonical_center: int | None = None
    norm_factor: complex = 1.0
    grid: Grid | None = field(default=None)

    def __post_init__(self) -> None:
        tensors = tuple(np.asarray(t) for t in self.tensors)
        _check_train(tensors, 3)
        if any(t.shape[1] != 2 for t in tensors):
            raise ValueError("physical dimension must be 2")
        if self.grid is not None and self.grid.n_qubits != len(tensors):
            raise GridMismatchError("grid qubit count differs from the number of sites")
        object.__setattr__(self, "tensors", tensors)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dimensions(self) -> list[int]:
        """Dimensions of the ``n - 1`` internal bonds."""
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def max_bond(self) -> int:
        return max([1, *self.bond_dimensions])

    def to_dense(self) -> np.ndarray:
        """Contract the train into a vector of length ``2**n``."""
        out = self.tensors[0].reshape(2, -1)
        for t in self.tensors[1:]:
            out = (out @ t.reshape(t.shape[0], -1)).reshape(-1, t.shape[2])
        return self.norm_factor * out[:, 0]

    def scaled(self, factor: complex) -> MpsState:
        return MpsState(self.tensors, self.canonical_center, self.norm_factor * factor, self.grid)

    def with_grid(self, grid: Grid | None) -> MpsState:
        return MpsState(self.tensors, self.canonical_center, self.norm_factor, grid)

    @classmethod
    def from_dense(cls, vector: np.ndarray, tol: Tolerances = DEFAULT_TOLERANCES,
                   grid: Grid | None = None) -> MpsState:
        """Compress a dense vector of length ``2**n`` by sequential SVDs."""
        state, _ = tt_svd(vector, tol)
        return state.with_grid(grid)

    @classmethod
    def basis_state(cls, index: int, n_sites: int, grid: Grid | None = None) -> MpsState:
        """Computational basis vector ``|index>``."""
        if not 0 <= index < (1 << n_sites):
            raise ValueError("basis index out of range")
        tensors = []
        for site in range(n_sites):
            bit = (index >> (n_sites - 1 - site)) & 1
            t = np.zeros((1, 2, 1), dtype=complex)
            t[0, bit, 0] = 1.0
            tensors.append(t)
        return cls(tuple(tensors), None, 1.0, grid)


@dataclass(frozen=True, eq=False)
class Mpo:
    """Matrix product operator with site tensors ``(left, out, in, right)``."""

    tensors: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        tensors = tuple(np.asarray(t) for t in self.tensors)
        _check_train(tensors, 4)
        if any(t.shape[1:3] != (2, 2) for t in tensors):
            raise ValueError("physical dimensions must be 2")
        object.__setattr__(self, "tensors", tensors)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dimensions(self) -> list[int]:
        return [t.shape[3] for t in self.tensors[:-1]]

    @property
    def max_bond(self) -> int:
        return max([1, *self.bond_dimensions])

    def to_dense(self) -> np.ndarray:
        """Contract the train into a ``2**n x 2**n`` matrix."""
        out = self.tensors[0][0]  # (i, j, r)
        for t in self.tensors[1:]:
            rows, cols, _ = out.shape
            out = np.einsum("IJa,aijb->IiJjb", out, t)
            out = out.reshape(rows * 2, cols * 2, t.shape[3])
        return out[:, :, 0]

    def scaled(self, factor: complex) -> Mpo:
        first = self.tensors[0] * factor
        return Mpo((first, *self.tensors[1:]))

    @classmethod
    def identity(cls, n_sites: int) -> Mpo:
        eye = np.eye(2, dtype=complex).reshape(1, 2, 2, 1)
        return cls(tuple(eye for _ in range(n_sites)))


# ---------------------------------------------------------------------------
# Gauge and truncation kernels on plain tensor lists

def _svd(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # LAPACK is markedly noisier on very wide inputs (spurious singular values
    # near 1e-12 for 2 x 2**19); factor the tall orientation instead.
    if matrix.shape[0] < matrix.shape[1]:
        u, s, vh = _svd(matrix.conj().T)
        return vh.conj().T, s, u.conj().T
    try:
        return np.linalg.svd(matrix, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesvd")


def _phase_fixed_qr(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR with a non-negative real diagonal in ``R``."""
    q, r = np.linalg.qr(matrix)
    d = np.diagonal(r)
    mag = np.abs(d)
    phase = np.where(mag > 0, d / np.where(mag > 0, mag, 1.0), 1.0)
    return q * phase, np.conj(phase)[:, None] * r


def _left_orthonormalize(tensors: list[np.ndarray], site: int) -> None:
    t = tensors[site]
    left, d, right = t.shape[0], t.shape[1], t.shape[-1]
    q, r = _phase_fixed_qr(t.reshape(left * d, right))
    tensors[site] = q.reshape(left, d, q.shape[1])
    tensors[site + 1] = np.tensordot(r, tensors[site + 1], axes=1)


def _right_orthonormalize(tensors: list[np.ndarray], site: int) -> None:
    t = tensors[site]
    left, d, right = t.shape[0], t.shape[1], t.shape[-1]
    q, r = _phase_fixed_qr(t.reshape(left, d * right).conj().T)
    tensors[site] = q.conj().T.reshape(q.shape[1], d, right)
    tensors[site - 1] = np.tensordot(tensors[site - 1], r.conj().T, axes=1)


def _truncation_rank(s: np.ndarray, budget: float, max_bond: int | None) -> tuple[int, float]:
    """Smallest rank whose discarded squared tail fits in ``budget``."""
    s2 = s * s
    tail = np.concatenate([np.cumsum(s2[::-1])[::-1], [0.0]])
    keep = int(np.argmax(tail <= budget))
    keep = max(keep, 1)
    if max_bond is not None:
        keep = min(keep, max_bond)
    return keep, float(tail[keep])


def _sweep_truncate(tensors: list[np.ndarray], budget: float,
                    max_bond: int | None) -> float:
    """Right-to-left SVD sweep on a train whose center is the last site.

    The center tensor is assumed to have unit norm, so ``budget`` and the
    returned discarded weight are relative squared norms. On exit site 0 holds
    the center.
    """
    discarded = 0.0
    for site in range(len(tensors) - 1, 0, -1):
        t = tensors[site]
        left = t.shape[0]
        u, s, vh = _svd(t.reshape(left, -1))
        keep, lost = _truncation_rank(s, budget, max_bond)
        discarded += lost
        tensors[site] = vh[:keep].reshape((keep, *t.shape[1:]))
        tensors[site - 1] = np.tensordot(tensors[site - 1], u[:, :keep] * s[:keep], axes=1)
    return discarded


def tt_svd(vector: np.ndarray, tol: Tolerances = DEFAULT_TOLERANCES) -> tuple[MpsState, float]:
    """Compress a dense vector into a tensor train by sequential SVDs.

    Args:
        vector: Array of length ``2**n``.
        tol: ``svd_tol`` bounds the relative squared error of the result.

    Returns:
        The state, canonical at the last site, and its discarded weight.
    """
    vector = np.asarray(vector, dtype=complex).ravel()
    n = int(round(np.log2(vector.size)))
    if vector.size != 1 << n or n < 1:
        raise ValueError("vector length must be a power of two")
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        zero = [np.zeros((1, 2, 1), dtype=complex) for _ in range(n)]
        return MpsState(tuple(zero), n - 1, 0.0), 0.0
    budget = tol.svd_tol / max(n - 1, 1)
    tensors = []
    rest = (vector / norm).reshape(1, -1)
    discarded = 0.0
    for _ in range(n - 1):
        left = rest.shape[0]
        u, s, vh = _svd(rest.reshape(left * 2, -1))
        keep, lost = _truncation_rank(s, budget, tol.max_bond)
        discarded += lost
        tensors.append(u[:, :keep].reshape(left, 2, keep))
        rest = s[:keep, None] * vh[:keep]
    last = rest.reshape(rest.shape[0], 2, 1)
    last_norm = np.linalg.norm(last)
    tensors.append(last / last_norm)
    return MpsState(tuple(tensors), n - 1, norm * last_norm), discarded


# ---------------------------------------------------------------------------
# State operations

def _same_layout(a: MpsState, b: MpsState) -> Grid | None:
    if a.n_sites != b.n_sites:
        raise GridMismatchError(f"site counts differ: {a.n_sites} vs {b.n_sites}")
    if a.grid is not None and b.grid is not None and a.grid != b.grid:
        raise GridMismatchError(f"grids differ: {a.grid} vs {b.grid}")
    return a.grid if a.grid is not None else b.grid


def canonicalize(state: MpsState, center: int) -> MpsState:
    """Bring ``state`` into mixed-canonical form around ``center``.

    Tensors left of the center become left isometries and tensors right of it
    right isometries; the center is normalized and its norm moves into
    ``norm_factor``. QR never increases bond dimensions.
    """
    n = state.n_sites
    if not 0 <= center < n:
        raise ValueError(f"center {center} outside [0, {n})")
    tensors = list(state.tensors)
    previous = state.canonical_center
    if previous is None:
        left_range, right_range = range(0, center), range(n - 1, center, -1)
    else:
        left_range, right_range = range(previous, center), range(previous, center, -1)
    for site in left_range:
        _left_orthonormalize(tensors, site)
    for site in right_range:
        _right_orthonormalize(tensors, site)
    norm = float(np.linalg.norm(tensors[center]))
    if norm > 0:
        tensors[center] = tensors[center] / norm
    return MpsState(tuple(tensors), center, state.norm_factor * norm, state.grid)


def truncate_report(state: MpsState, tol: Tolerances = DEFAULT_TOLERANCES) -> tuple[MpsState, float]:
    """Truncate ``state`` and report the discarded relative squared weight.

    The per-bond budget is ``svd_tol / (n - 1)``; because the sweep uses nested
    orthogonal projections the reported weight equals
    ``||psi - phi||^2 / ||psi||^2`` up to round-off.
    """
    n = state.n_sites
    if n == 1:
        return canonicalize(state, 0), 0.0
    st = canonicalize(state, n - 1)
    tensors = list(st.tensors)
    discarded = _sweep_truncate(tensors, tol.svd_tol / (n - 1), tol.max_bond)
    norm = float(np.linalg.norm(tensors[0]))
    if norm > 0:
        tensors[0] = tensors[0] / norm
    return MpsState(tuple(tensors), 0, st.norm_factor * norm, state.grid), discarded


def truncate(state: MpsState, tol: Tolerances = DEFAULT_TOLERANCES) -> MpsState:
    """Truncate bonds so that ``||psi - phi||^2 <= svd_tol * ||psi||^2``."""
    return truncate_report(state, tol)[0]


def combine(states: Sequence[MpsState], weights: Sequence[complex],
            tol: Tolerances | None = DEFAULT_TOLERANCES) -> MpsState:
    """Linear combination ``sum_j weights[j] * states[j]``.

    Built by direct-sum bonds, then truncated with ``tol`` (``None`` keeps the
    exact block structure, only canonicalized).
    """
    if len(states) != len(weights) or not states:
        raise ValueError("need matching non-empty states and weights")
    grid = states[0].grid
    for other in states[1:]:
        grid = _same_layout(states[0], other) or grid
    coeffs = np.array([w * s.norm_factor for s, w in zip(states, weights)], dtype=complex)
    scale = float(np.max(np.abs(coeffs)))
    if scale == 0.0:
        scale = 1.0
    n = states[0].n_sites
    if len(states) == 1 or n == 1:
        first = sum(s.tensors[0] * (c / scale) for s, c in zip(states, coeffs))
        rest = states[0].tensors[1:] if len(states) == 1 else ()
        result = MpsState((first, *rest), None, scale, grid)
    else:
        tensors = []
        for site in range(n):
            blocks = [s.tensors[site] for s in states]
            if site == 0:
                t = np.concatenate([b * (c / scale) for b, c in zip(blocks, coeffs)], axis=2)
            elif site == n - 1:
                t = np.concatenate(blocks, axis=0)
            else:
                t = np.zeros((sum(b.shape[0] for b in blocks), 2,
                              sum(b.shape[2] for b in blocks)), dtype=complex)
                i = j = 0
                for b in blocks:
                    t[i:i + b.shape[0], :, j:j + b.shape[2]] = b
                    i += b.shape[0]
                    j += b.shape[2]
            tensors.append(t)
        result = MpsState(tuple(tensors), None, scale, grid)
    if tol is None:
        return canonicalize(result, 0)
    return truncate(result, tol)


def add(a: MpsState, b: MpsState, weights: tuple[complex, complex] = (1.0, 1.0),
        tol: Tolerances | None = DEFAULT_TOLERANCES) -> MpsState:
    """Weighted sum ``w1 * a + w2 * b`` followed by truncation."""
    return combine([a, b], weights, tol)


def inner(a: MpsState, b: MpsState) -> complex:
    """Inner product ``<a|b>``, conjugate-linear in ``a``."""
    _same_layout(a, b)
    env = np.ones((1, 1), dtype=complex)
    for ta, tb in zip(a.tensors, b.tensors):
        tmp = np.tensordot(env, tb, axes=(1, 0))
        env = np.tensordot(ta.conj(), tmp, axes=([0, 1], [0, 1]))
    return complex(np.conj(a.norm_factor) * b.norm_factor * env[0, 0])


def norm(state: MpsState) -> float:
    """Euclidean norm, computed through an orthogonal gauge."""
    if state.canonical_center is not None:
        c = state.canonical_center
        return float(abs(state.norm_factor) * np.linalg.norm(state.tensors[c]))
    return float(abs(canonicalize(state, 0).norm_factor))


def distance(a: MpsState, b: MpsState) -> float:
    """Accurate ``||a - b||`` (no cancellation from expanding the square)."""
    return norm(combine([a, b], [1.0, -1.0], tol=None))


def normalized(state: MpsState) -> MpsState:
    st = canonicalize(state, 0) if state.canonical_center is None else state
    nrm = norm(st)
    if nrm == 0:
        raise ZeroDivisionError("cannot normalize the zero state")
    return st.scaled(1.0 / nrm)


# ---------------------------------------------------------------------------
# Operator application and operator algebra

def apply_mpo(op: Mpo, state: MpsState, tol: Tolerances = DEFAULT_TOLERANCES) -> MpsState:
    """Apply ``op`` to ``state`` by zip-up contraction, then truncate.

    The state is first right-canonicalized; the zip-up sweep discards only
    singular values far below the truncation budget, and a final SVD sweep
    enforces ``tol`` on the result.
    """
    if op.n_sites != state.n_sites:
        raise GridMismatchError(f"site counts differ: {op.n_sites} vs {state.n_sites}")
    n = state.n_sites
    st = canonicalize(state, 0)
    cutoff = np.sqrt(tol.svd_tol / max(n - 1, 1)) * 1e-2
    carry = np.ones((1, 1, 1), dtype=complex)  # (new bond, mpo bond, state bond)
    out = []
    for site in range(n):
        w = op.tensors[site]
        a = st.tensors[site]
        tmp = np.tensordot(carry, w, axes=(1, 0))              # (k, c, i, j, w')
        tmp = np.tensordot(tmp, a, axes=([1, 3], [0, 1]))      # (k, i, w', c')
        k, i, wr, cr = tmp.shape
        if site == n - 1:
            out.append(tmp.reshape(k, i, wr * cr))
            break
        u, s, vh = _svd(tmp.reshape(k * i, wr * cr))
        if s[0] > 0:
            keep = max(1, int(np.count_nonzero(s > cutoff * s[0])))
        else:
            keep = 1
        if tol.max_bond is not None:
            keep = min(keep, 2 * tol.max_bond)
        out.append(u[:, :keep].reshape(k, i, keep))
        carry = (s[:keep, None] * vh[:keep]).reshape(keep, wr, cr)
    result = MpsState(tuple(out), n - 1, st.norm_factor, state.grid)
    return truncate(result, tol)


def _mpo_as_train(op: Mpo) -> list[np.ndarray]:
    return [t.reshape(t.shape[0], 4, t.shape[3]) for t in op.tensors]


def compress_mpo(op: Mpo, tol: Tolerances = DEFAULT_TOLERANCES) -> Mpo:
    """Compress bonds with the relative squared Frobenius budget ``simplify_tol``."""
    n = op.n_sites
    if n == 1:
        return op
    train = _mpo_as_train(op)
    for site in range(n - 1):
        _left_orthonormalize(train, site)
    scale = float(np.linalg.norm(train[-1]))
    if scale == 0.0:
        return Mpo(tuple(np.zeros((1, 2, 2, 1), dtype=complex) for _ in range(n)))
    train[-1] = train[-1] / scale
    _sweep_truncate(train, tol.simplify_tol / (n - 1), tol.max_bond)
    train[0] = train[0] * scale
    return Mpo(tuple(t.reshape(t.shape[0], 2, 2, t.shape[2]) for t in train))


def mpo_compose(a: Mpo, b: Mpo, tol: Tolerances = DEFAULT_TOLERANCES) -> Mpo:
    """Operator product ``a @ b`` (``b`` acts first), compressed."""
    if a.n_sites != b.n_sites:
        raise GridMismatchError(f"site counts differ: {a.n_sites} vs {b.n_sites}")
    tensors = []
    for ta, tb in zip(a.tensors, b.tensors):
        t = np.tensordot(ta, tb, axes=(2, 1))          # (la, i, ra, lb, j, rb)
        t = t.transpose(0, 3, 1, 4, 2, 5)
        la, lb, _, _, ra, rb = t.shape
        tensors.append(t.reshape(la * lb, 2, 2, ra * rb))
    return compress_mpo(Mpo(tuple(tensors)), tol)


def mpo_sum(ops: Sequence[Mpo], weights: Sequence[complex],
            tol: Tolerances | None = DEFAULT_TOLERANCES) -> Mpo:
    """Weighted sum of operators with block bonds, compressed unless ``tol`` is None."""
    if len(ops) != len(weights) or not ops:
        raise ValueError("need matching non-empty operators and weights")
    n = ops[0].n_sites
    if any(o.n_sites != n for o in ops):
        raise GridMismatchError("site counts differ")
    if n == 1:
        t = sum(w * o.tensors[0] for o, w in zip(ops, weights))
        return Mpo((t,))
    tensors = []
    for site in range(n):
        blocks = [o.tensors[site] for o in ops]
        if site == 0:
            t = np.concatenate([blk * w for blk, w in zip(blocks, weights)], axis=3)
        elif site == n - 1:
            t = np.concatenate(blocks, axis=0)
        else:
            t = np.zeros((sum(b.shape[0] for b in blocks), 2, 2,
                          sum(b.shape[3] for b in blocks)), dtype=complex)
            i = j = 0
            for blk in blocks:
                t[i:i + blk.shape[0], :, :, j:j + blk.shape[3]] = blk
                i += blk.shape[0]
                j += blk.shape[3]
        tensors.append(t)
    result = Mpo(tuple(tensors))
    return result if tol is None else compress_mpo(result, tol)


def mpo_add(a: Mpo, b: Mpo, weights: tuple[complex, complex] = (1.0, 1.0),
            tol: Tolerances | None = DEFAULT_TOLERANCES) -> Mpo:
    """Weighted operator sum ``w1 * a + w2 * b``, compressed."""
    return mpo_sum([a, b], weights, tol)
