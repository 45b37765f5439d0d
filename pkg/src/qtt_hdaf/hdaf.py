"""Hermite distributed approximating functionals (HDAF).

The kernel of order ``M`` and width ``sigma`` is a Gaussian-weighted truncated
Hermite series that acts as a smooth nascent delta. Its ``l``-th derivative,
sampled on a grid and multiplied by ``dx``, gives the band coefficients of a
pseudospectral derivative. Replacing ``sigma**2`` by ``sigma**2 + i*tau``
gives the kernel after free propagation for time ``tau`` under
``exp(i * tau / 2 * d^2/dx^2)``.

With ``s = sqrt(2 (sigma^2 + i tau))``, ``z = x / s`` and
``c = -sigma^2 / (4 (sigma^2 + i tau))`` the kernel reads::

    delta^(l)(x) = (-1)^l / (s^(l+1) sqrt(pi)) * exp(-z^2)
                   * sum_{m=0}^{M/2} H_{2m+l}(z) c^m / m!
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

MAX_ORDER = 400
_RESCALE = 1e200


class HdafOverflowError(ArithmeticError):
    """Raised when a kernel cannot be evaluated in double precision."""


@dataclass(frozen=True)
class HdafSpec:
    """Parameters fully determining one discretized HDAF kernel.

    Attributes:
        M: Even highest Hermite order.
        sigma: Kernel width.
        dx: Grid spacing.
        tau: Free-propagation time (0 for reconstruction and derivatives).
        l: Derivative order.
        eps_coef: Magnitude below which band coefficients are dropped.
    """

    M: int
    sigma: float
    dx: float
    tau: float = 0.0
    l: int = 0
    eps_coef: float = 1e-16

    def __post_init__(self) -> None:
        if self.M < 0 or self.M % 2:
            raise ValueError(f"M must be even and non-negative, got {self.M}")
        if self.M > MAX_ORDER:
            raise HdafOverflowError(f"M={self.M} exceeds the supported order {MAX_ORDER}")
        if self.sigma <= 0 or self.dx <= 0:
            raise ValueError("sigma and dx must be positive")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.l < 0:
            raise ValueError("derivative order must be non-negative")
        if self.eps_coef <= 0:
            raise ValueError("eps_coef must be positive")


@dataclass(frozen=True)
class KernelTable:
    """Band coefficients ``c_k = dx * delta^(l)(k dx)`` for ``k = 0..W``.

    Negative offsets follow from ``c_{-k} = parity * c_k``.
    """

    coeffs: np.ndarray
    parity: int

    @property
    def width(self) -> int:
        return len(self.coeffs) - 1

    def at(self, k: np.ndarray | int) -> np.ndarray:
        """Coefficient at signed offsets ``k`` (zero outside the band)."""
        k = np.asarray(k)
        mag = np.abs(k)
        inside = mag <= self.width
        vals = np.where(inside, self.coeffs[np.minimum(mag, self.width)], 0.0)
        return np.where(k < 0, self.parity * vals, vals)


def _hermite_pair(z: np.ndarray, l: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``H_l(z)``, ``H_{l+1}(z)`` with a shared per-point log scale."""
    log_scale = np.zeros(z.shape)
    prev = np.ones_like(z)
    cur = 2 * z
    for k in range(1, l + 1):
        prev, cur = cur, 2 * z * cur - 2 * k * prev
        big = np.abs(cur) > _RESCALE
        if np.any(big):
            prev = np.where(big, prev / _RESCALE, prev)
            cur = np.where(big, cur / _RESCALE, cur)
            log_scale = log_scale + big * math.log(_RESCALE)
    return prev, cur, log_scale


def hdaf_values(x: np.ndarray, M: int, sigma: float, tau: float = 0.0, l: int = 0) -> np.ndarray:
    """Evaluate ``delta_M^(l)(x; sigma, tau)`` by the Hermite double recurrence.

    The terms ``g_{n,l} = H_{2n+l}(z) c^n / n!`` obey

        g_{n+1,l}   = 2c/(n+1) * (z g_{n,l+1} - (2n+l+1) g_{n,l})
        g_{n+1,l+1} = 2z g_{n+1,l} - 2c (2 + l/(n+1)) g_{n,l+1}

    and the Gaussian factor is applied once at the end in log space, so the
    sum stays finite far into the tails.

    Raises:
        HdafOverflowError: If the result is not finite.
    """
    if M < 0 or M % 2:
        raise ValueError("M must be even and non-negative")
    if M > MAX_ORDER:
        raise HdafOverflowError(f"M={M} exceeds the supported order {MAX_ORDER}")
    x = np.asarray(x, dtype=float)
    s2 = complex(sigma**2, tau)
    s = np.sqrt(2 * s2)
    z = x / s
    c = -sigma**2 / (4 * s2)

    g_l, g_l1, log_scale = _hermite_pair(z.astype(complex), l)
    total = g_l.copy()
    for n in range(M // 2):
        nxt_l = (2 * c / (n + 1)) * (z * g_l1 - (2 * n + l + 1) * g_l)
        nxt_l1 = 2 * z * nxt_l - 2 * c * (2 + l / (n + 1)) * g_l1
        g_l, g_l1 = nxt_l, nxt_l1
        total = total + g_l
        big = np.maximum(np.abs(g_l), np.abs(g_l1)) > _RESCALE
        if np.any(big):
            g_l = np.where(big, g_l / _RESCALE, g_l)
            g_l1 = np.where(big, g_l1 / _RESCALE, g_l1)
            total = np.where(big, total / _RESCALE, total)
            log_scale = log_scale + big * math.log(_RESCALE)

    prefactor = (-1) ** l / (s ** (l + 1) * math.sqrt(math.pi))
    mag = np.abs(total)
    with np.errstate(divide="ignore"):
        log_mag = np.log(mag)
    unit = np.where(mag > 0, total / np.where(mag > 0, mag, 1.0), 0.0)
    with np.errstate(under="ignore", over="ignore"):
        values = prefactor * unit * np.exp(np.where(mag > 0, log_mag + log_scale - z * z, -np.inf))
    if not np.all(np.isfinite(values)):
        raise HdafOverflowError("kernel evaluation overflowed")
    return values


def sigma_from_order(M: int, dx: float) -> float:
    """Width making the sampled kernel equal to one at the origin.

    Uses ``H_{2m}(0) = (-1)^m (2m)!/m!`` so the sum is of central binomials.
    """
    if M < 0 or M % 2:
        raise ValueError("M must be even and non-negative")
    total = 0.0
    term = 1.0
    for m in range(M // 2 + 1):
        if m:
            term *= (2 * m - 1) / (2 * m)  # C(2m, m) / 4^m
        total += term
    return dx * total / math.sqrt(2 * math.pi)


def calibrate_sigma(M: int, dx: float, tau: float = 0.0) -> float:
    """Kernel width: ``max(sigma_M, 3 dx)``, also at least ``sqrt(tau)`` when propagating."""
    if dx <= 0 or tau < 0:
        raise ValueError("need dx > 0 and tau >= 0")
    sigma = max(sigma_from_order(M, dx), 3.0 * dx)
    if tau > 0:
        sigma = max(sigma, math.sqrt(tau))
    return sigma


def width_bound_terms(spec: HdafSpec) -> tuple[float, float, float]:
    """Coefficients ``(a, b, log_eta)`` of the tail bound ``log|c_k| <~ log_eta + b k - a k^2``."""
    s2 = abs(complex(spec.sigma**2, spec.tau))
    order = spec.M + spec.l
    a = spec.dx**2 / (2 * (spec.sigma**2 + spec.tau**2 / spec.sigma**2))
    b = spec.dx * math.sqrt(order / s2)
    log_eta = (math.log(spec.dx) + 0.5 * math.lgamma(order + 1) - 0.5 * math.log(2 * math.pi)
               - 0.5 * (spec.l + 1) * math.log(s2) - math.lgamma(spec.M / 2 + 1)
               + 0.5 * spec.M * math.log(spec.sigma**2 / (2 * s2)))
    return a, b, log_eta


def solve_width(spec: HdafSpec) -> int:
    """Band half-width ``W`` beyond which coefficients fall below ``eps_coef``.

    Solves ``a W^2 - b W + log(eps / eta) = 0`` for its larger root and rounds
    up. A budget so loose that no positive root exists yields ``W = 0``.
    """
    a, b, log_eta = width_bound_terms(spec)
    c = math.log(spec.eps_coef) - log_eta
    disc = b * b - 4 * a * c
    if disc < 0:
        return 0
    root = (b + math.sqrt(disc)) / (2 * a)
    return max(0, math.ceil(root))


def hdaf_coefficients(spec: HdafSpec, width: int | None = None) -> KernelTable:
    """Band coefficients of the kernel, truncated at ``solve_width(spec)``."""
    w = solve_width(spec) if width is None else int(width)
    k = np.arange(w + 1)
    coeffs = spec.dx * hdaf_values(k * spec.dx, spec.M, spec.sigma, spec.tau, spec.l)
    if spec.l % 2:
        coeffs[0] = 0.0
    if spec.tau == 0:
        coeffs = coeffs.real.copy()
    return KernelTable(coeffs=coeffs, parity=-1 if spec.l % 2 else 1)


def filter_spectrum(M: int, sigma: float, k: np.ndarray | float) -> np.ndarray:
    """Fourier transform of the kernel: ``exp(-y) sum_{m<=M/2} y^m/m!`` with ``y = k^2 sigma^2/2``.

    This is the regularized upper incomplete gamma function ``Q(M/2 + 1, y)``.
    """
    k = np.asarray(k, dtype=float)
    return gammaincc(M / 2 + 1, 0.5 * (k * sigma) ** 2)


def transition_wavenumber(M: int, sigma: float) -> float:
    """Edge of the low-pass plateau, ``sqrt(M + 1) / sigma``."""
    return math.sqrt(M + 1) / sigma
