"""Banded periodic operators as MPOs.

Every operator here is a circulant ``(T f)_s = sum_d g_d f_{(s + d) mod N}``
described by its ring vector ``g``. The ring is compressed into a tensor
train over the bits of ``d`` and turned into an MPO with a binary adder:
each site adds one bit of ``d`` to the output index with a carry passed
from the least significant site to the most significant one, and the final
carry is dropped, which makes the shift cyclic.

The displacement ``Sigma^k`` is the ring with a single one at ``d = k``, so
``(Sigma^k f)(x_s) = f(x_{s+k})`` and ``Sigma^{+1}|s> = |s - 1>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .hdaf import HdafSpec, KernelTable, calibrate_sigma, hdaf_coefficients, solve_width
from .mps import (
    DEFAULT_TOLERANCES,
    EXACT,
    Grid,
    Mpo,
    Tolerances,
    compress_mpo,
    mpo_compose,
    mpo_sum,
    tt_svd,
)


class GridTooCoarseError(ValueError):
    """Raised when a kernel band does not fit on the periodic grid."""


@dataclass(frozen=True)
class BandedOperatorSpec:
    """Periodic banded operator built from a kernel table on a grid."""

    table: KernelTable
    grid: Grid

    def __post_init__(self) -> None:
        if self.table.width >= self.grid.points:
            raise GridTooCoarseError(
                f"band half-width {self.table.width} needs more than {self.grid.n_qubits} qubits")

    def ring(self) -> np.ndarray:
        return kernel_ring(self.table, self.grid.points)


def kernel_ring(table: KernelTable, points: int) -> np.ndarray:
    """Ring vector of the convolution ``(T f)_s = sum_k c_k f(x_s - k dx)``.

    Offsets larger than half the ring wrap around and add up, which is the
    periodic summation of the kernel.
    """
    if table.width >= points:
        raise GridTooCoarseError(f"band half-width {table.width} exceeds {points - 1}")
    ring = np.zeros(points, dtype=complex)
    k = np.arange(1, table.width + 1)
    ring[0] += table.coeffs[0]
    # c_k multiplies f(x_s - k dx), c_{-k} = parity c_k multiplies f(x_s + k dx)
    np.add.at(ring, (-k) % points, table.coeffs[1:])
    np.add.at(ring, k % points, table.parity * table.coeffs[1:])
    return ring


def _adder_tensor(core: np.ndarray) -> np.ndarray:
    """MPO site tensor adding the bit ``d_b`` encoded by ``core`` with carry."""
    left, _, right = core.shape
    w = np.zeros((left, 2, 2, 2, right, 2), dtype=complex)  # (a, c_out, s, j, a', c_in)
    for s_bit in range(2):
        for d_bit in range(2):
            for c_in in range(2):
                total = s_bit + d_bit + c_in
                w[:, total // 2, s_bit, total % 2, :, c_in] += core[:, d_bit, :]
    return w.reshape(left * 2, 2, 2, right * 2)


def circulant_mpo(ring: np.ndarray, tol: Tolerances = DEFAULT_TOLERANCES) -> Mpo:
    """MPO of the circulant matrix ``T[s, j] = ring[(j - s) mod N]``.

    Args:
        ring: Length ``2**n`` vector of offsets.
        tol: ``svd_tol`` compresses the ring, ``simplify_tol`` the operator.
    """
    ring = np.asarray(ring, dtype=complex)
    cores, _ = tt_svd(ring, Tolerances(svd_tol=tol.simplify_tol))
    tensors = [t.copy() for t in cores.tensors]
    tensors[0] = tensors[0] * cores.norm_factor
    n = len(tensors)
    mpo = [_adder_tensor(t) for t in tensors]
    # drop the carry out of the most significant bit: periodic wrap
    first = mpo[0].reshape(1, 2, 2, 2, -1).sum(axis=1)
    mpo[0] = first.reshape(1, 2, 2, -1)
    # no carry into the least significant bit
    mpo[-1] = mpo[-1].reshape(-1, 2, 2, 1, 2)[..., 0]
    if n == 1:
        mpo[0] = mpo[0].reshape(1, 2, 2, 1)
    return compress_mpo(Mpo(tuple(mpo)), tol)


def displacement_mpo(grid: Grid, k: int) -> Mpo:
    """Cyclic shift ``(Sigma^k f)(x_s) = f(x_{(s+k) mod N})``."""
    if abs(k) >= grid.points:
        raise ValueError(f"|k| = {abs(k)} must be below {grid.points}")
    ring = np.zeros(grid.points)
    ring[k % grid.points] = 1.0
    return circulant_mpo(ring, EXACT)


def displacement_sum_mpo(grid: Grid, terms: Mapping[int, complex],
                         tol: Tolerances = DEFAULT_TOLERANCES, batch: int = 8) -> Mpo:
    """``sum_k terms[k] Sigma^k`` assembled from powers of the unit shifts.

    Powers are formed by repeated composition and accumulated by operator
    addition, compressing every ``batch`` summands. Much slower than
    :func:`circulant_mpo`; kept as an independent construction route.
    """
    n = grid.n_qubits
    plus = displacement_mpo(grid, 1)
    minus = displacement_mpo(grid, -1)
    powers = {0: Mpo.identity(n)}
    total: Mpo | None = None
    pending: list[tuple[Mpo, complex]] = []
    for k in sorted(terms, key=abs):
        step = plus if k > 0 else minus
        prev = k - 1 if k > 0 else k + 1
        if k not in powers:
            base = powers.get(prev)
            if base is None:
                base = Mpo.identity(n)
                for _ in range(abs(k)):
                    base = mpo_compose(step, base, tol)
                powers[k] = base
            else:
                powers[k] = mpo_compose(step, base, tol)
        pending.append((powers[k], terms[k]))
        if len(pending) == batch:
            ops = [op for op, _ in pending] + ([total] if total is not None else [])
            ws = [w for _, w in pending] + ([1.0] if total is not None else [])
            total = mpo_sum(ops, ws, tol)
            pending = []
    if pending:
        ops = [op for op, _ in pending] + ([total] if total is not None else [])
        ws = [w for _, w in pending] + ([1.0] if total is not None else [])
        total = mpo_sum(ops, ws, tol)
    if total is None:
        return Mpo.identity(n).scaled(0.0)
    return total


def centered_stencil(order: int) -> dict[int, float]:
    """Three-point centered difference weights (in units of ``dx**-order``)."""
    if order == 1:
        return {1: 0.5, -1: -0.5}
    if order == 2:
        return {1: 1.0, 0: -2.0, -1: 1.0}
    raise ValueError("order must be 1 or 2")


def smooth_stencil(order: int, points: int = 9) -> dict[int, float]:
    """Noise-robust difference weights with maximal flatness at the Nyquist frequency.

    The stencil on offsets ``-h..h`` (``h = (points - 1) / 2``) is exact for
    the lowest polynomials that define the derivative (``x`` for ``order=1``,
    ``1`` and ``x^2`` for ``order=2``) and uses every remaining degree of
    freedom to make the frequency response vanish to the highest possible
    order at ``omega = pi``, so grid-scale noise is strongly damped.

    Returns:
        Weights by offset, in units of ``dx**-order``.
    """
    if points % 2 == 0 or points < 5:
        raise ValueError("points must be odd and at least 5")
    h = (points - 1) // 2
    j = np.arange(1, h + 1, dtype=float)
    # frequency response on symmetric/antisymmetric pairs:
    #   order 1: sum_j 2 a_j sin(j w)       (a_{-j} = -a_j)
    #   order 2: a_0 + sum_j 2 a_j cos(j w) (a_{-j} = a_j)
    rows, rhs = [], []
    if order == 1:
        rows.append(2 * j)                         # d/dw at 0 equals 1
        rhs.append(1.0)
        # (-1)^j sin(j w) expands around pi in odd powers j^(2p+1)
        for p in range(h - 1):
            rows.append(2 * (-1.0) ** j * j ** (2 * p + 1))
            rhs.append(0.0)
        a = np.linalg.solve(np.array(rows), np.array(rhs))
        weights = {int(k): float(v) for k, v in zip(j, a)}
        weights.update({-int(k): -float(v) for k, v in zip(j, a)})
        return weights
    if order == 2:
        cols = np.concatenate([[1.0], 2 * np.ones(h)])
        jj = np.concatenate([[0.0], j])
        rows.append(cols)                          # annihilates constants
        rhs.append(0.0)
        rows.append(cols * jj**2 / 2)              # second moment matches x^2
        rhs.append(1.0)
        sign = (-1.0) ** jj
        for p in range(h - 1):
            rows.append(cols * sign * jj ** (2 * p))
            rhs.append(0.0)
        a = np.linalg.solve(np.array(rows), np.array(rhs))
        weights = {0: float(a[0])}
        for k, v in zip(j, a[1:]):
            weights[int(k)] = float(v)
            weights[-int(k)] = float(v)
        return weights
    raise ValueError("order must be 1 or 2")


def stencil_ring(stencil: Mapping[int, float], points: int, scale: float = 1.0) -> np.ndarray:
    """Ring vector for ``(T f)_s = scale * sum_k stencil[k] f_{s+k}``."""
    ring = np.zeros(points, dtype=complex)
    for k, w in stencil.items():
        ring[k % points] += scale * w
    return ring


def fd_mpo(grid: Grid, order: int, variant: str = "centered",
           tol: Tolerances = DEFAULT_TOLERANCES) -> Mpo:
    """Finite-difference derivative of ``order`` 1 or 2 on the periodic grid.

    Args:
        variant: ``"centered"`` for the three-point formulas or ``"smooth9"``
            for the nine-point noise-robust stencil.
    """
    if variant == "centered":
        stencil = centered_stencil(order)
    elif variant == "smooth9":
        stencil = smooth_stencil(order, 9)
    else:
        raise ValueError(f"unknown finite-difference variant {variant!r}")
    ring = stencil_ring(stencil, grid.points, grid.dx ** -order)
    return circulant_mpo(ring, tol)


def hdaf_table(grid: Grid, M: int, l: int, tau: float = 0.0,
               eps_coef: float = 1e-16) -> KernelTable:
    """Kernel table with calibrated width for ``grid``; checks that the band fits."""
    sigma = calibrate_sigma(M, grid.dx, tau)
    spec = HdafSpec(M=M, sigma=sigma, dx=grid.dx, tau=tau, l=l, eps_coef=eps_coef)
    width = solve_width(spec)
    if width >= grid.points:
        raise GridTooCoarseError(
            f"band half-width {width} needs more than {grid.n_qubits} qubits")
    return hdaf_coefficients(spec, width)


def hdaf_derivative_mpo(grid: Grid, M: int, l: int, eps_coef: float = 1e-16,
                        tol: Tolerances = DEFAULT_TOLERANCES) -> Mpo:
    """HDAF approximation of the ``l``-th derivative as a compressed MPO."""
    if l < 1:
        raise ValueError("derivative order must be at least 1")
    table = hdaf_table(grid, M, l, 0.0, eps_coef)
    return circulant_mpo(BandedOperatorSpec(table, grid).ring(), tol)


def hdaf_propagator_mpo(grid: Grid, M: int, dt: float, eps_coef: float = 1e-16,
                        tol: Tolerances = DEFAULT_TOLERANCES) -> Mpo:
    """Free propagator ``exp(i dt/2 d^2/dx^2)`` filtered by the HDAF kernel."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    table = hdaf_table(grid, M, 0, dt, eps_coef)
    return circulant_mpo(BandedOperatorSpec(table, grid).ring(), tol)


def extend_to_finer_grid(op: Mpo, extra_qubits: int) -> Mpo:
    """Append identity sites at the least significant end.

    On the fine grid the result moves whole blocks of ``2**extra_qubits``
    points exactly as ``op`` moves single points of the coarse grid.
    """
    if extra_qubits < 0:
        raise ValueError("extra_qubits must be non-negative")
    eye = np.eye(2, dtype=complex).reshape(1, 2, 2, 1)
    return Mpo((*op.tensors, *([eye] * extra_qubits)))


def coarse_qubits(grid: Grid, max_dx: float) -> int:
    """Fewest qubits, at most ``grid.n_qubits``, whose spacing does not exceed ``max_dx``."""
    n = grid.n_qubits
    while n > 2 and grid.length / (1 << (n - 1)) <= max_dx:
        n -= 1
    return n
