"""Encoding analytic functions, quench states and potentials as tensor trains."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mps import DEFAULT_TOLERANCES, Grid, Mpo, MpsState, Tolerances, tt_svd

MAX_LOAD_QUBITS = 26
CLAMP_BELOW = 1e-300


class NonFiniteSamplesError(ValueError):
    """Raised when a function to be loaded is not finite on the grid."""


@dataclass(frozen=True)
class QuenchParams:
    """Trap quench ``omega0 -> omegaH`` with an optional central Gaussian barrier.

    Attributes:
        omega0: Initial trap frequency.
        omegaH: Trap frequency after the quench.
        u: Barrier height (0 for the pure harmonic quench).
        sigma_barrier: Barrier width.
    """

    omega0: float = 1.0
    omegaH: float = 0.1
    u: float = 0.0
    sigma_barrier: float = 1.0

    def __post_init__(self) -> None:
        if self.omega0 <= 0 or self.omegaH <= 0:
            raise ValueError("trap frequencies must be positive")
        if self.u < 0 or self.sigma_barrier <= 0:
            raise ValueError("need u >= 0 and sigma_barrier > 0")

    @property
    def ratio(self) -> float:
        """Expansion ratio ``omega0 / omegaH``."""
        return self.omega0 / self.omegaH

    @property
    def sigma_max(self) -> float:
        """Largest wave-packet width reached during the breathing cycle."""
        return math.sqrt(self.omega0) / self.omegaH

    @property
    def sigma_min(self) -> float:
        return 1.0 / math.sqrt(self.omega0)

    @property
    def period(self) -> float:
        """Breathing period ``pi / omegaH`` of the density."""
        return math.pi / self.omegaH

    @property
    def has_analytic_solution(self) -> bool:
        return self.u == 0

    def potential(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = 0.5 * self.omegaH**2 * x**2
        if self.u:
            v = v + self.u * np.exp(-x**2 / (2 * self.sigma_barrier**2))
        return v

    def initial_wavefunction(self, x: np.ndarray) -> np.ndarray:
        """Ground state of the initial trap."""
        x = np.asarray(x, dtype=float)
        return (self.omega0 / math.pi) ** 0.25 * np.exp(-0.5 * self.omega0 * x**2)

    def width_and_chirp(self, t: float) -> tuple[float, float]:
        """Inverse squared width ``omega(t)`` and chirp ``beta(t)`` of the packet."""
        r = self.omegaH / self.omega0
        c, s = math.cos(self.omegaH * t), math.sin(self.omegaH * t)
        omega = self.omegaH / (r * c * c + s * s / r)
        beta = 0.25 * omega * (r - 1 / r) * math.sin(2 * self.omegaH * t)
        return omega, beta

    def global_phase(self, t: float) -> float:
        """Continuous angle ``theta(t)`` with ``tan(theta) = (omega0/omegaH) tan(omegaH t)``.

        The exact state carries the factor ``exp(-i theta / 2)``; without it a
        Gaussian ansatz does not solve the time-dependent equation.
        """
        u = self.omegaH * t
        theta = math.atan2(self.omega0 * math.sin(u), self.omegaH * math.cos(u))
        return theta + 2 * math.pi * round((u - theta) / (2 * math.pi))

    def wavefunction(self, x: np.ndarray, t: float) -> np.ndarray:
        """Exact harmonic-quench wave function (requires ``u == 0``)."""
        if not self.has_analytic_solution:
            raise ValueError("closed form only exists without the barrier")
        x = np.asarray(x, dtype=float)
        omega, beta = self.width_and_chirp(t)
        phase = np.exp(-0.5j * self.global_phase(t))
        return (omega / math.pi) ** 0.25 * phase * np.exp(-(0.5 * omega + 1j * beta) * x**2)


def quench_grid(params: QuenchParams, n_qubits: int) -> Grid:
    """Periodic box ``[-L/2, L/2)`` with ``L = 16 sigma_max``."""
    return Grid.centered(16 * params.sigma_max, n_qubits)


def load_samples(values: np.ndarray, grid: Grid, tol: Tolerances = DEFAULT_TOLERANCES,
                 normalize: bool = True) -> MpsState:
    """Compress grid samples into a state.

    Args:
        values: Samples ``f(x_s)``.
        normalize: If true the state holds ``f / ||f||`` (unit vector norm);
            otherwise it reproduces the samples themselves.
    """
    if grid.n_qubits > MAX_LOAD_QUBITS:
        raise ValueError(f"dense loading supports at most {MAX_LOAD_QUBITS} qubits")
    values = np.asarray(values, dtype=complex)
    if values.shape != (grid.points,):
        raise ValueError(f"expected {grid.points} samples, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise NonFiniteSamplesError("function is not finite on the grid")
    values = np.where(np.abs(values) < CLAMP_BELOW, 0.0, values)
    state, _ = tt_svd(values, tol)
    state = state.with_grid(grid)
    if normalize and state.norm_factor != 0:
        state = state.scaled(1.0 / abs(state.norm_factor))
    return state


def load_function(f: Callable[[np.ndarray], np.ndarray], grid: Grid,
                  tol: Tolerances = DEFAULT_TOLERANCES, normalize: bool = True,
                  return_norm: bool = False) -> MpsState | tuple[MpsState, float]:
    """Sample ``f`` on ``grid`` and compress it.

    Returns:
        The state (normalized by default to ``f(x_s) / sqrt(N_f)``) and, when
        ``return_norm`` is set, the normalization constant ``N_f = sum_s |f(x_s)|^2``.
    """
    values = np.broadcast_to(np.asarray(f(grid.x), dtype=complex), (grid.points,))
    state = load_samples(values, grid, tol, normalize=False)
    norm_f = abs(state.norm_factor)
    if normalize and norm_f != 0:
        state = state.scaled(1.0 / norm_f)
    return (state, norm_f**2) if return_norm else state


def grid_wavefunction(psi: Callable[[np.ndarray], np.ndarray], grid: Grid,
                      tol: Tolerances = DEFAULT_TOLERANCES) -> MpsState:
    """Samples ``sqrt(dx) psi(x_s)`` so the vector norm is the function norm."""
    return load_function(lambda x: math.sqrt(grid.dx) * psi(x), grid, tol, normalize=False)


def initial_state(params: QuenchParams, grid: Grid,
                  tol: Tolerances = DEFAULT_TOLERANCES) -> MpsState:
    """Initial-trap ground state in grid normalization."""
    return grid_wavefunction(params.initial_wavefunction, grid, tol)


def analytic_quench(params: QuenchParams, t: float, grid: Grid,
                    tol: Tolerances = DEFAULT_TOLERANCES) -> MpsState:
    """Exact harmonic-quench state at time ``t`` in grid normalization."""
    return grid_wavefunction(lambda x: params.wavefunction(x, t), grid, tol)


def diagonal_mpo(values: MpsState) -> Mpo:
    """Operator multiplying pointwise by the amplitudes of ``values``."""
    tensors = []
    for site, a in enumerate(values.tensors):
        w = np.zeros((a.shape[0], 2, 2, a.shape[2]), dtype=complex)
        w[:, 0, 0, :] = a[:, 0, :]
        w[:, 1, 1, :] = a[:, 1, :]
        if site == 0:
            w = w * values.norm_factor
        tensors.append(w)
    return Mpo(tuple(tensors))


def potential_mpo(params: QuenchParams, grid: Grid,
                  tol: Tolerances = DEFAULT_TOLERANCES) -> Mpo:
    """Diagonal MPO of ``V(x)``."""
    return diagonal_mpo(load_function(params.potential, grid, tol, normalize=False))


def potential_phase_mpo(params: QuenchParams, grid: Grid, dt: float,
                        tol: Tolerances = DEFAULT_TOLERANCES) -> Mpo:
    """Diagonal MPO of ``exp(-i dt V(x) / 2)``."""
    phase = lambda x: np.exp(-0.5j * dt * params.potential(x))
    return diagonal_mpo(load_function(phase, grid, tol, normalize=False))
