"""Dense-vector reference implementations used to cross-check the MPS code.

Amplitudes use the same grid normalization as the tensor-train states
(``sqrt(dx) psi(x_s)``), so vector norms and differences are directly the
function norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .hdaf import HdafSpec, hdaf_values, solve_width
from .loading import QuenchParams
from .mps import Grid

MAX_DENSE_QUBITS = 24
MAX_MATRIX_QUBITS = 12


@dataclass(frozen=True, eq=False)
class DenseState:
    """Plain amplitude vector on a grid."""

    amplitudes: np.ndarray
    grid: Grid

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.grid.points,):
            raise ValueError(f"expected {self.grid.points} amplitudes, got {amps.shape}")
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def density(self) -> np.ndarray:
        """``|psi(x_s)|^2`` in function units."""
        return np.abs(self.amplitudes) ** 2 / self.grid.dx


def epsilon(a: np.ndarray | DenseState, b: np.ndarray | DenseState) -> float:
    """Function-norm distance between two grid-normalized states."""
    va = a.amplitudes if isinstance(a, DenseState) else np.asarray(a)
    vb = b.amplitudes if isinstance(b, DenseState) else np.asarray(b)
    return float(np.linalg.norm(va - vb))


def sample_wavefunction(psi: Callable[[np.ndarray], np.ndarray], grid: Grid) -> DenseState:
    return DenseState(math.sqrt(grid.dx) * np.asarray(psi(grid.x), dtype=complex), grid)


def analytic_solution_dense(params: QuenchParams, t: float, grid: Grid) -> DenseState:
    """Exact harmonic-quench state at time ``t``."""
    return sample_wavefunction(lambda x: params.wavefunction(x, t), grid)


def free_gaussian(x: np.ndarray, t: float, width: float = 1.0) -> np.ndarray:
    """Freely spreading Gaussian that starts as ``exp(-x^2 / (2 width^2))``, unit norm."""
    s2 = complex(width**2, t)
    return (math.pi * width**2) ** -0.25 * np.sqrt(width**2 / s2) * np.exp(-x**2 / (2 * s2))


def wavenumbers(grid: Grid) -> np.ndarray:
    return 2 * math.pi * np.fft.fftfreq(grid.points, d=grid.dx)


def fft_split_step(psi: DenseState, V: np.ndarray, dt: float) -> DenseState:
    """One Strang step ``e^{-i dt V/2} F^-1 e^{-i dt k^2/2} F e^{-i dt V/2}``."""
    if psi.grid.n_qubits > MAX_DENSE_QUBITS:
        raise ValueError(f"dense runs support at most {MAX_DENSE_QUBITS} qubits")
    half = np.exp(-0.5j * dt * np.asarray(V))
    kin = np.exp(-0.5j * dt * wavenumbers(psi.grid) ** 2)
    out = half * np.fft.ifft(kin * np.fft.fft(half * psi.amplitudes))
    return DenseState(out, psi.grid)


def _check_matrix_size(grid: Grid) -> None:
    if grid.n_qubits > MAX_MATRIX_QUBITS:
        raise ValueError(f"dense matrices support at most {MAX_MATRIX_QUBITS} qubits")


def dense_hdaf_matrix(spec: HdafSpec, grid: Grid) -> np.ndarray:
    """Circulant matrix ``K[s, j] = dx * delta^(l)(x_s - x_j)`` with periodic images.

    Built directly from kernel values at signed separations, so it is
    independent of the ring construction used for the MPOs.
    """
    _check_matrix_size(grid)
    n = grid.points
    width = min(solve_width(spec), n - 1)
    offsets = np.arange(-width, width + 1)
    vals = spec.dx * hdaf_values(offsets * grid.dx, spec.M, spec.sigma, spec.tau, spec.l)
    mat = np.zeros((n, n), dtype=complex)
    rows = np.arange(n)
    for off, v in zip(offsets, vals):
        # entry multiplies f at x_s - off*dx
        mat[rows, (rows - off) % n] += v
    return mat


def dense_fd_matrix(grid: Grid, stencil: dict[int, float], order: int) -> np.ndarray:
    """Circulant matrix of ``dx**-order * sum_k stencil[k] f_{s+k}``."""
    _check_matrix_size(grid)
    n = grid.points
    mat = np.zeros((n, n))
    rows = np.arange(n)
    for k, w in stencil.items():
        mat[rows, (rows + k) % n] += w
    return mat / grid.dx**order


def dense_hamiltonian(kinetic: np.ndarray, potential: np.ndarray) -> np.ndarray:
    """``-1/2 D2 + diag(V)`` from a second-derivative matrix."""
    return -0.5 * kinetic + np.diag(potential)


def dense_expm(matrix: np.ndarray) -> np.ndarray:
    return scipy.linalg.expm(matrix)


# ---------------------------------------------------------------------------
# Dense steppers mirroring the MPS formulas

def dense_euler(psi: np.ndarray, H: np.ndarray, dt: float) -> np.ndarray:
    return psi - 1j * dt * (H @ psi)


def dense_heun(psi: np.ndarray, H: np.ndarray, dt: float) -> np.ndarray:
    v1 = H @ psi
    v2 = H @ (psi - 1j * dt * v1)
    return psi - 0.5j * dt * (v1 + v2)


def dense_rk4(psi: np.ndarray, H: np.ndarray, dt: float) -> np.ndarray:
    v1 = -(H @ psi)
    v2 = -(H @ (psi + 0.5j * dt * v1))
    v3 = -(H @ (psi + 0.5j * dt * v2))
    v4 = -(H @ (psi + 1j * dt * v3))
    return psi + 1j * dt / 6 * (v1 + 2 * v2 + 2 * v3 + v4)


def dense_crank_nicolson(psi: np.ndarray, H: np.ndarray, dt: float) -> np.ndarray:
    eye = np.eye(len(psi))
    return np.linalg.solve(eye + 0.5j * dt * H, (eye - 0.5j * dt * H) @ psi)


def dense_arnoldi(psi: np.ndarray, H: np.ndarray, dt: float, n_v: int,
                  breakdown: float = 1e-13) -> np.ndarray:
    """Krylov step with the same Gram-Schmidt and projection as the MPS version."""
    basis = [psi / np.linalg.norm(psi)]
    while len(basis) < n_v:
        cand = H @ basis[-1]
        scale = np.linalg.norm(cand)
        for _ in range(2):
            for v in basis:
                cand = cand - np.vdot(v, cand) * v
        nrm = np.linalg.norm(cand)
        if nrm <= breakdown * max(scale, 1.0):
            break
        basis.append(cand / nrm)
    V = np.array(basis).T
    A = V.conj().T @ H @ V
    N = V.conj().T @ V
    small = scipy.linalg.expm(-1j * dt * np.linalg.pinv(N, rcond=1e-12) @ A)
    coeffs = small @ np.linalg.pinv(N, rcond=1e-12) @ (V.conj().T @ psi)
    return V @ coeffs


def dense_split(psi: np.ndarray, kinetic_prop: np.ndarray, half_phase: np.ndarray) -> np.ndarray:
    return half_phase * (kinetic_prop @ (half_phase * psi))
