"""Time integrators for ``i d/dt psi = H psi`` with ``H = -1/2 d^2/dx^2 + V`` in MPS form."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np
import scipy.linalg

from .loading import QuenchParams, analytic_quench, potential_mpo, potential_phase_mpo
from .mps import (
    DEFAULT_TOLERANCES,
    Grid,
    Mpo,
    MpsState,
    Tolerances,
    add,
    apply_mpo,
    combine,
    distance,
    inner,
    mpo_add,
    norm,
)
from .operators import (
    coarse_qubits,
    extend_to_finer_grid,
    fd_mpo,
    hdaf_derivative_mpo,
    hdaf_propagator_mpo,
)

METHODS = ("euler", "heun", "rk4", "crank_nicolson", "arnoldi", "split_step")
BREAKDOWN = 1e-13


class ConvergenceError(ArithmeticError):
    """Raised when the implicit solve does not reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class StepperConfig:
    """Integrator settings.

    Attributes:
        dt: Time step.
        method: One of ``METHODS``.
        n_v: Krylov basis size for ``arnoldi``.
        cg_tol: Relative residual target of the implicit solve.
        cg_max_iter: Iteration cap of the implicit solve.
        tol: Truncation budgets applied after every MPS operation.
    """

    dt: float
    method: str = "split_step"
    n_v: int = 10
    cg_tol: float = 1e-10
    cg_max_iter: int = 500
    tol: Tolerances = DEFAULT_TOLERANCES

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not 2 <= self.n_v <= 30:
            raise ValueError("n_v must lie in [2, 30]")
        if not self.cg_tol > 0 or self.cg_max_iter < 1:
            raise ValueError("need cg_tol > 0 and cg_max_iter >= 1")


@dataclass(frozen=True)
class Hamiltonian:
    """``H = kinetic + potential`` with the kinetic part already carrying ``-1/2``."""

    kinetic: Mpo
    potential: Mpo
    combined: Mpo

    @classmethod
    def zero(cls, n_sites: int) -> Hamiltonian:
        z = Mpo.identity(n_sites).scaled(0.0)
        return cls(z, z, z)


@dataclass(frozen=True)
class SplitPropagators:
    """Prebuilt factors of one Strang step."""

    kinetic: Mpo
    half_potential: Mpo
    dt: float


@dataclass(frozen=True)
class KrylovInfo:
    basis_size: int
    breakdown: bool


@dataclass(frozen=True)
class RunRecord:
    """Per-step diagnostics of an evolution."""

    t: float
    step_index: int
    epsilon: float | None
    norm: float
    chi_max: int
    wall_ms: float
    method: str
    dt: float
    n_qubits: int
    tolerance: float


def default_kinetic_qubits(params: QuenchParams, grid: Grid) -> int:
    """Coarsest level whose spacing resolves the narrowest packet by ten points per width.

    Building the HDAF kinetic operator there and extending it to the full grid
    keeps the largest eigenvalue of ``H`` moderate, which limits round-off
    amplification in the explicit and Krylov integrators.
    """
    return coarse_qubits(grid, 0.1 * params.sigma_min)


def build_hamiltonian(params: QuenchParams, grid: Grid, kinetic: str = "hdaf", M: int = 40,
                      eps_coef: float = 1e-16, fd_variant: str = "smooth9",
                      kinetic_qubits: int | None = None,
                      tol: Tolerances = DEFAULT_TOLERANCES) -> Hamiltonian:
    """Assemble ``H`` as MPOs.

    Args:
        kinetic: ``"hdaf"`` or ``"fd"``.
        fd_variant: Stencil for the finite-difference kinetic operator.
        kinetic_qubits: Level at which the HDAF second derivative is built
            before identity extension; ``None`` picks
            :func:`default_kinetic_qubits`. Ignored for ``"fd"``.
    """
    if kinetic == "hdaf":
        level = default_kinetic_qubits(params, grid) if kinetic_qubits is None else kinetic_qubits
        if not 2 <= level <= grid.n_qubits:
            raise ValueError(f"kinetic level {level} outside [2, {grid.n_qubits}]")
        d2 = hdaf_derivative_mpo(grid.with_qubits(level), M, 2, eps_coef, tol)
        d2 = extend_to_finer_grid(d2, grid.n_qubits - level)
    elif kinetic == "fd":
        d2 = fd_mpo(grid, 2, fd_variant, tol)
    else:
        raise ValueError(f"unknown kinetic operator {kinetic!r}")
    kin = d2.scaled(-0.5)
    pot = potential_mpo(params, grid, tol)
    return Hamiltonian(kin, pot, mpo_add(kin, pot, (1.0, 1.0), tol))


@lru_cache(maxsize=32)
def build_split_propagators(params: QuenchParams, grid: Grid, dt: float, M: int = 40,
                            eps_coef: float = 1e-16,
                            tol: Tolerances = DEFAULT_TOLERANCES) -> SplitPropagators:
    """HDAF free propagator and half-step potential phase, cached per ``(V, dt)``."""
    return SplitPropagators(
        kinetic=hdaf_propagator_mpo(grid, M, dt, eps_coef, tol),
        half_potential=potential_phase_mpo(params, grid, dt, tol),
        dt=dt,
    )


def _h(H: Hamiltonian, psi: MpsState, cfg: StepperConfig) -> MpsState:
    return apply_mpo(H.combined, psi, cfg.tol)


def step_euler(psi: MpsState, H: Hamiltonian, cfg: StepperConfig) -> MpsState:
    """``psi - i dt H psi``."""
    return add(psi, _h(H, psi, cfg), (1.0, -1j * cfg.dt), cfg.tol)


def step_heun(psi: MpsState, H: Hamiltonian, cfg: StepperConfig) -> MpsState:
    """Improved Euler: average of the slopes at both ends of the Euler predictor."""
    dt = cfg.dt
    v1 = _h(H, psi, cfg)
    v2 = _h(H, add(psi, v1, (1.0, -1j * dt), cfg.tol), cfg)
    return combine([psi, v1, v2], [1.0, -0.5j * dt, -0.5j * dt], cfg.tol)


def step_rk4(psi: MpsState, H: Hamiltonian, cfg: StepperConfig) -> MpsState:
    """Classical fourth-order Runge-Kutta with stages ``v = -H(...)``."""
    dt = cfg.dt
    v1 = _h(H, psi, cfg).scaled(-1.0)
    v2 = _h(H, add(psi, v1, (1.0, 0.5j * dt), cfg.tol), cfg).scaled(-1.0)
    v3 = _h(H, add(psi, v2, (1.0, 0.5j * dt), cfg.tol), cfg).scaled(-1.0)
    v4 = _h(H, add(psi, v3, (1.0, 1j * dt), cfg.tol), cfg).scaled(-1.0)
    w = 1j * dt / 6
    return combine([psi, v1, v2, v3, v4], [1.0, w, 2 * w, 2 * w, w], cfg.tol)


def step_crank_nicolson(psi: MpsState, H: Hamiltonian, cfg: StepperConfig) -> MpsState:
    """Solve ``(1 + i dt/2 H) x = (1 - i dt/2 H) psi`` by CG on the normal equations.

    With ``A = 1 + i dt/2 H`` the system ``A^dag A x = A^dag (A^dag psi)`` is
    Hermitian positive definite. The iteration starts from ``psi`` and stops
    once the true residual is below ``cg_tol`` times the norm of the right side.

    Raises:
        ConvergenceError: If ``cg_max_iter`` iterations do not suffice.
    """
    half = 0.5 * cfg.dt
    tol = cfg.tol

    def a_dag(v: MpsState) -> MpsState:
        return add(v, _h(H, v, cfg), (1.0, -1j * half), tol)

    def normal(v: MpsState) -> MpsState:
        av = add(v, _h(H, v, cfg), (1.0, 1j * half), tol)
        return a_dag(av)

    rhs = a_dag(a_dag(psi))
    target = cfg.cg_tol * norm(rhs)
    x = psi
    r = add(rhs, normal(x), (1.0, -1.0), tol)
    p = r
    rr = norm(r) ** 2
    for _ in range(cfg.cg_max_iter):
        if math.sqrt(rr) <= target:
            r = add(rhs, normal(x), (1.0, -1.0), tol)
            rr = norm(r) ** 2
            if math.sqrt(rr) <= target:
                return x
            p = r
        ap = normal(p)
        alpha = rr / inner(p, ap).real
        x = add(x, p, (1.0, alpha), tol)
        r = add(r, ap, (1.0, -alpha), tol)
        rr_new = norm(r) ** 2
        p = add(r, p, (1.0, rr_new / rr), tol)
        rr = rr_new
    r = add(rhs, normal(x), (1.0, -1.0), tol)
    residual = norm(r) / max(norm(rhs), 1e-300)
    if residual <= cfg.cg_tol:
        return x
    raise ConvergenceError("Crank-Nicolson solve did not converge", residual)


def arnoldi_step_report(psi: MpsState, H: Hamiltonian,
                        cfg: StepperConfig) -> tuple[MpsState, KrylovInfo]:
    """Restarted Arnoldi step, also reporting the Krylov basis actually used.

    The basis is orthonormalized by modified Gram-Schmidt with a second pass.
    The step is ``V exp(-i dt N^+ A) N^+ V^dag psi`` with ``A = V^dag H V`` and
    ``N = V^dag V`` computed from MPS inner products.
    """
    tol = cfg.tol
    psi_norm = norm(psi)
    if psi_norm == 0:
        return psi, KrylovInfo(1, False)
    basis = [psi.scaled(1.0 / psi_norm)]
    images: list[MpsState] = []
    breakdown = False
    while True:
        w = _h(H, basis[-1], cfg)
        images.append(w)
        if len(basis) == cfg.n_v:
            break
        scale = norm(w)
        for _ in range(2):
            for v in basis:
                w = add(w, v, (1.0, -inner(v, w)), tol)
        w_norm = norm(w)
        if w_norm <= BREAKDOWN * max(scale, 1.0):
            breakdown = True
            break
        basis.append(w.scaled(1.0 / w_norm))
    k = len(basis)
    A = np.array([[inner(basis[i], images[j]) for j in range(k)] for i in range(k)])
    N = np.array([[inner(basis[i], basis[j]) for j in range(k)] for i in range(k)])
    n_inv = np.linalg.pinv(N, rcond=1e-12)
    c0 = np.array([inner(v, psi) for v in basis])
    coeffs = scipy.linalg.expm(-1j * cfg.dt * n_inv @ A) @ (n_inv @ c0)
    return combine(basis, list(coeffs), tol), KrylovInfo(k, breakdown)


def step_arnoldi(psi: MpsState, H: Hamiltonian, cfg: StepperConfig) -> MpsState:
    """Krylov approximation of ``exp(-i dt H) psi`` with ``n_v`` basis vectors."""
    return arnoldi_step_report(psi, H, cfg)[0]


def step_split(psi: MpsState, kinetic_prop: Mpo, half_potential_prop: Mpo,
               cfg: StepperConfig) -> MpsState:
    """Strang step ``e^{-i dt V/2} K_dt e^{-i dt V/2}`` with truncation after each factor."""
    psi = apply_mpo(half_potential_prop, psi, cfg.tol)
    psi = apply_mpo(kinetic_prop, psi, cfg.tol)
    return apply_mpo(half_potential_prop, psi, cfg.tol)


_EXPLICIT = {
    "euler": step_euler,
    "heun": step_heun,
    "rk4": step_rk4,
    "crank_nicolson": step_crank_nicolson,
    "arnoldi": step_arnoldi,
}


def make_stepper(params: QuenchParams, grid: Grid, cfg: StepperConfig,
                 hamiltonian: Hamiltonian | None = None,
                 propagators: SplitPropagators | None = None, kinetic: str = "hdaf",
                 M: int = 40, eps_coef: float = 1e-16,
                 kinetic_qubits: int | None = None) -> Callable[[MpsState], MpsState]:
    """Close over prebuilt operators and return ``psi -> psi_next``."""
    if cfg.method == "split_step":
        if kinetic != "hdaf":
            raise ValueError("the split-step propagator is only available for the HDAF kinetic")
        props = propagators or build_split_propagators(params, grid, cfg.dt, M, eps_coef, cfg.tol)
        return lambda psi: step_split(psi, props.kinetic, props.half_potential, cfg)
    H = hamiltonian or build_hamiltonian(params, grid, kinetic, M, eps_coef,
                                         kinetic_qubits=kinetic_qubits, tol=cfg.tol)
    step = _EXPLICIT[cfg.method]
    return lambda psi: step(psi, H, cfg)


def _record(psi: MpsState, params: QuenchParams, grid: Grid, cfg: StepperConfig, k: int,
            wall_ms: float) -> RunRecord:
    t = k * cfg.dt
    eps = None
    if params.has_analytic_solution:
        eps = distance(psi, analytic_quench(params, t, grid, cfg.tol))
    return RunRecord(t=t, step_index=k, epsilon=eps, norm=norm(psi), chi_max=psi.max_bond,
                     wall_ms=wall_ms, method=cfg.method, dt=cfg.dt, n_qubits=grid.n_qubits,
                     tolerance=cfg.tol.svd_tol)


def step_count(t_final: float, dt: float) -> int:
    """Number of steps ``K`` with ``K dt = t_final``."""
    k = round(t_final / dt)
    if k < 0 or abs(k * dt - t_final) > 1e-9 * max(1.0, abs(t_final)):
        raise ValueError(f"t_final={t_final} is not a multiple of dt={dt}")
    return int(k)


def evolve(psi0: MpsState, params: QuenchParams, grid: Grid, cfg: StepperConfig,
           t_final: float,
           observer: Callable[[RunRecord, MpsState], None] | None = None,
           stepper: Callable[[MpsState], MpsState] | None = None,
           **operator_options) -> Iterator[RunRecord]:
    """Advance ``psi0`` to ``t_final`` and yield one record per step.

    A record for the initial state (step 0) comes first. ``wall_ms`` times the
    step only, not the diagnostics. ``epsilon`` is the function-norm distance
    to the exact state when the problem has one.

    Args:
        observer: Called with every record and the corresponding state.
        stepper: Prebuilt stepper; otherwise one is made from ``cfg`` and
            ``operator_options`` (see :func:`make_stepper`).
    """
    steps = step_count(t_final, cfg.dt)
    advance = stepper or make_stepper(params, grid, cfg, **operator_options)
    psi = psi0
    rec = _record(psi, params, grid, cfg, 0, 0.0)
    if observer:
        observer(rec, psi)
    yield rec
    for k in range(1, steps + 1):
        start = time.perf_counter()
        psi = advance(psi)
        wall_ms = 1e3 * (time.perf_counter() - start)
        rec = _record(psi, params, grid, cfg, k, wall_ms)
        if observer:
            observer(rec, psi)
        yield rec
