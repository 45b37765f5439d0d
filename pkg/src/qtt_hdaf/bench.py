"""Studies behind the command-line harness: sweeps, fits and result files."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .evolution import (
    Hamiltonian,
    RunRecord,
    StepperConfig,
    build_hamiltonian,
    build_split_propagators,
    evolve,
    make_stepper,
    step_count,
)
from .hdaf import calibrate_sigma, filter_spectrum, sigma_from_order, transition_wavenumber
from .loading import (
    QuenchParams,
    analytic_quench,
    initial_state,
    load_function,
    quench_grid,
)
from .mps import DEFAULT_TOLERANCES, Grid, MpsState, Tolerances, apply_mpo, distance
from .operators import GridTooCoarseError, extend_to_finer_grid, fd_mpo, hdaf_derivative_mpo
from .oracle import analytic_solution_dense, fft_split_step, sample_wavefunction

RECORD_FIELDS = [f.name for f in dataclasses.fields(RunRecord)]
ONE_STEP_METHODS = ("euler", "heun", "rk4", "crank_nicolson", "arnoldi5", "arnoldi10",
                    "split_step")
FD_METHODS = ("euler", "heun", "rk4", "crank_nicolson", "arnoldi5", "arnoldi10")
R2_FLAG = 0.98
PLATEAU_FACTOR = 100.0


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit of ``log y = log C + m log x``.

    Attributes:
        C: Prefactor.
        m: Exponent.
        r_squared: Coefficient of determination in log-log space.
        window: ``(lo, hi)`` range of ``x`` values used.
        n_points: Number of points in the window.
        flagged: True when the fit is unreliable (``r^2`` below 0.98 or fewer
            than three points).
    """

    C: float
    m: float
    r_squared: float
    window: tuple[float, float]
    n_points: int
    flagged: bool

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["window"] = list(self.window)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> FitResult:
        return cls(C=d["C"], m=d["m"], r_squared=d["r_squared"], window=tuple(d["window"]),
                   n_points=d["n_points"], flagged=d["flagged"])


def plateau_window(y: np.ndarray, factor: float = PLATEAU_FACTOR) -> np.ndarray:
    """Mask of points at least ``factor`` times above the smallest positive value."""
    y = np.asarray(y, dtype=float)
    positive = y[(y > 0) & np.isfinite(y)]
    if positive.size == 0:
        return np.zeros(y.shape, dtype=bool)
    return y >= factor * positive.min()


def fit_power_law(x: Sequence[float], y: Sequence[float],
                  mask: np.ndarray | None = None) -> FitResult:
    """Fit ``y = C x^m`` on the positive, finite points selected by ``mask``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    use = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if mask is not None:
        use &= np.asarray(mask, dtype=bool)
    n = int(use.sum())
    if n == 0:
        return FitResult(math.nan, math.nan, math.nan, (math.nan, math.nan), 0, True)
    lx, ly = np.log(x[use]), np.log(y[use])
    window = (float(x[use].min()), float(x[use].max()))
    if n == 1 or np.ptp(lx) == 0:
        return FitResult(math.nan, math.nan, math.nan, window, n, True)
    m, logc = np.polyfit(lx, ly, 1)
    resid = ly - (m * lx + logc)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(math.exp(logc)), float(m), r2, window, n, r2 < R2_FLAG or n < 3)


def fit_one_step(records: Iterable[RunRecord]) -> dict[str, FitResult]:
    """``eps = C dt^m`` per method on the auto-selected non-plateau window."""
    by_method: dict[str, list[RunRecord]] = {}
    for r in records:
        by_method.setdefault(r.method, []).append(r)
    fits = {}
    for method, rows in by_method.items():
        dt = np.array([r.dt for r in rows])
        eps = np.array([np.nan if r.epsilon is None else r.epsilon for r in rows])
        fits[method] = fit_power_law(dt, eps, plateau_window(eps))
    return fits


def fit_evolution(records: Sequence[RunRecord]) -> dict[str, FitResult]:
    """``eps = C t^m`` and cumulative wall time ``T = C t^m`` over all ``t > 0``."""
    t = np.array([r.t for r in records])
    wall = np.cumsum([r.wall_ms for r in records])
    fits = {"wall_ms": fit_power_law(t, wall)}
    if any(r.epsilon is not None for r in records):
        eps = np.array([np.nan if r.epsilon is None else r.epsilon for r in records])
        fits["epsilon"] = fit_power_law(t, eps)
    return fits


# ---------------------------------------------------------------------------
# Result files

def _to_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _record_from_row(row: dict) -> RunRecord:
    eps = row["epsilon"]
    return RunRecord(
        t=float(row["t"]), step_index=int(row["step_index"]),
        epsilon=None if eps in ("", None) else float(eps), norm=float(row["norm"]),
        chi_max=int(row["chi_max"]), wall_ms=float(row["wall_ms"]), method=str(row["method"]),
        dt=float(row["dt"]), n_qubits=int(row["n_qubits"]), tolerance=float(row["tolerance"]))


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


class RecordWriter:
    """Streams rows to CSV (flushing every ``flush_every`` rows) or collects them for JSON."""

    def __init__(self, path: str | Path | None, fmt: str = "csv",
                 fields: Sequence[str] = RECORD_FIELDS, flush_every: int = 100):
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {fmt!r}")
        self.path = None if path is None else Path(path)
        self.fmt = fmt
        self.fields = list(fields)
        self.flush_every = flush_every
        self.rows: list[dict] = []
        self._pending = 0
        self._handle = None
        self._writer = None
        if self.path is not None and fmt == "csv":
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = open(self.path, "w", newline="")
            self._writer = csv.DictWriter(self._handle, fieldnames=self.fields)
            self._writer.writeheader()

    def write(self, row: dict | RunRecord) -> None:
        if isinstance(row, RunRecord):
            row = dataclasses.asdict(row)
        self.rows.append(row)
        if self._writer is not None:
            self._writer.writerow({k: _to_cell(row[k]) for k in self.fields})
            self._pending += 1
            if self._pending >= self.flush_every:
                self._handle.flush()
                self._pending = 0

    def close(self, extras: dict | None = None) -> None:
        """Finish the file; ``extras`` (e.g. ``{"fits": ...}``) go into JSON or a sidecar."""
        extras = extras or {}
        if self._handle is not None:
            self._handle.close()
            self._handle = None
            if extras:
                _sidecar(self.path).write_text(json.dumps(extras, indent=1))
        elif self.path is not None and self.fmt == "json":
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(json.dumps({"records": self.rows, **extras}, indent=1))

    def __enter__(self) -> RecordWriter:
        return self

    def __exit__(self, *exc) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


def fits_to_dict(fits: dict[str, FitResult]) -> dict:
    return {k: v.to_dict() for k, v in fits.items()}


def write_records(path: str | Path, records: Sequence[RunRecord],
                  fits: dict[str, FitResult] | None = None, fmt: str = "csv") -> None:
    writer = RecordWriter(path, fmt)
    for r in records:
        writer.write(r)
    writer.close({"fits": fits_to_dict(fits)} if fits else None)


def read_records(path: str | Path, fmt: str | None = None) -> tuple[list[RunRecord], dict[str, FitResult]]:
    """Load records and stored fits written by :func:`write_records`."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    if fmt == "json":
        data = json.loads(path.read_text())
        records = [_record_from_row(r) for r in data["records"]]
        fits = data.get("fits", {})
    else:
        with open(path, newline="") as fh:
            records = [_record_from_row(r) for r in csv.DictReader(fh)]
        side = _sidecar(path)
        fits = json.loads(side.read_text()).get("fits", {}) if side.exists() else {}
    return records, {k: FitResult.from_dict(v) for k, v in fits.items()}


def write_table(path: str | Path, rows: Sequence[dict], fmt: str = "csv",
                extras: dict | None = None) -> None:
    """Generic table output for sweeps whose rows are not evolution records."""
    fields = list(rows[0]) if rows else []
    writer = RecordWriter(path, fmt, fields=fields)
    for r in rows:
        writer.write(r)
    writer.close(extras)


# ---------------------------------------------------------------------------
# Studies

def parse_method(label: str) -> tuple[str, int]:
    """Split labels like ``arnoldi10`` into ``("arnoldi", 10)``."""
    if label.startswith("arnoldi"):
        digits = label[len("arnoldi"):]
        return "arnoldi", int(digits) if digits else 10
    return label, 10


def derivative_error(grid: Grid, method: str, M: int = 40, build_qubits: int | None = None,
                     width: float = 1.0, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Relative function-norm error of a second-derivative MPO on ``exp(-x^2/(2 width^2))``.

    Args:
        method: ``"fd"`` (centered) or ``"hdaf"``.
        build_qubits: Build the operator at this level and extend it to the grid.
    """
    level = grid.n_qubits if build_qubits is None else build_qubits
    coarse = grid.with_qubits(level)
    if method == "fd":
        op = fd_mpo(coarse, 2, "centered", tol)
    elif method == "hdaf":
        op = hdaf_derivative_mpo(coarse, M, 2, tol=tol)
    else:
        raise ValueError(f"unknown derivative method {method!r}")
    op = extend_to_finer_grid(op, grid.n_qubits - level)
    f = load_function(lambda x: np.exp(-x**2 / (2 * width**2)), grid, tol, normalize=False)
    d2 = apply_mpo(op, f, tol).to_dense()
    x = grid.x
    exact = (x**2 / width**4 - 1 / width**2) * np.exp(-x**2 / (2 * width**2))
    return float(np.linalg.norm(d2 - exact) / np.linalg.norm(exact))


def cmd_derivative_sweep(M_list: Sequence[int] = (8, 20, 40), n_range: Sequence[int] = range(4, 19),
                         mitigation: bool = True, length: float = 40.0,
                         tol: Tolerances = DEFAULT_TOLERANCES) -> list[dict]:
    """Second-derivative error of centered FD and HDAF operators versus qubit count.

    With ``mitigation`` an extra row family (``mitigated=True``) keeps the
    operator built at the qubit count of the smallest direct error and extends
    it to every finer grid.
    """
    rows = []
    methods = [("fd", 0)] + [("hdaf", M) for M in M_list]
    for method, M in methods:
        label = "fd" if method == "fd" else f"hdaf-{M}"
        direct = {}
        for n in n_range:
            grid = Grid.centered(length, n)
            try:
                err = derivative_error(grid, method, M, tol=tol)
            except GridTooCoarseError:
                err = math.nan
            direct[n] = err
            rows.append({"method": label, "M": M, "n": n, "dx": grid.dx, "error": err,
                         "mitigated": False, "build_qubits": n})
        if mitigation:
            finite = {n: e for n, e in direct.items() if np.isfinite(e)}
            if not finite:
                continue
            best = min(finite, key=finite.get)
            for n in n_range:
                if n < best:
                    continue
                grid = Grid.centered(length, n)
                err = derivative_error(grid, method, M, build_qubits=best, tol=tol)
                rows.append({"method": label, "M": M, "n": n, "dx": grid.dx, "error": err,
                             "mitigated": True, "build_qubits": best})
    return rows


def one_step_dts(count: int = 21, lo: float = 1e-3, hi: float = 1e-1) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), count)


def cmd_one_step(methods: Sequence[str] = ONE_STEP_METHODS, dts: Sequence[float] | None = None,
                 n: int = 14, kinetic: str = "hdaf", params: QuenchParams = QuenchParams(),
                 M: int = 40, eps_coef: float = 1e-16, tol: Tolerances = DEFAULT_TOLERANCES,
                 cg_tol: float = 1e-10, repeat: int = 1, kinetic_qubits: int | None = None,
                 fd_variant: str = "smooth9",
                 progress: Callable[[RunRecord], None] | None = None,
                 ) -> tuple[list[RunRecord], dict[str, FitResult]]:
    """One step from the initial quench state for every ``(method, dt)`` cell."""
    dts = one_step_dts() if dts is None else list(dts)
    grid = quench_grid(params, n)
    psi0 = initial_state(params, grid, tol)
    H: Hamiltonian | None = None
    records = []
    for label in methods:
        method, n_v = parse_method(label)
        if method != "split_step" and H is None:
            H = build_hamiltonian(params, grid, kinetic, M, eps_coef, fd_variant,
                                  kinetic_qubits, tol)
        for dt in dts:
            cfg = StepperConfig(dt=float(dt), method=method, n_v=n_v, cg_tol=cg_tol, tol=tol)
            stepper = make_stepper(params, grid, cfg, hamiltonian=H, kinetic=kinetic, M=M,
                                   eps_coef=eps_coef)
            exact = analytic_quench(params, float(dt), grid, tol)
            for _ in range(repeat):
                start = time.perf_counter()
                psi = stepper(psi0)
                wall = 1e3 * (time.perf_counter() - start)
                rec = RunRecord(t=float(dt), step_index=1, epsilon=distance(psi, exact),
                                norm=float(abs(psi.norm_factor)), chi_max=psi.max_bond,
                                wall_ms=wall, method=label, dt=float(dt), n_qubits=n,
                                tolerance=tol.svd_tol)
                records.append(rec)
                if progress:
                    progress(rec)
    return records, fit_one_step(records)


def quench_final_time(params: QuenchParams, dt: float, fraction: float = 0.5) -> float:
    """First multiple of ``dt`` at or after ``fraction * pi / omegaH``."""
    target = fraction * params.period
    return dt * math.ceil(target / dt - 1e-9)


def vector_evolve(params: QuenchParams, grid: Grid, dt: float, t_final: float,
                  observer: Callable[[RunRecord, np.ndarray], None] | None = None,
                  ) -> Iterator[RunRecord]:
    """FFT split-step evolution with the same record stream as :func:`evolve`."""
    steps = step_count(t_final, dt)
    psi = sample_wavefunction(params.initial_wavefunction, grid)
    V = params.potential(grid.x)

    def record(k: int, wall: float) -> RunRecord:
        t = k * dt
        eps = None
        if params.has_analytic_solution:
            eps = float(np.linalg.norm(psi.amplitudes
                                       - analytic_solution_dense(params, t, grid).amplitudes))
        return RunRecord(t=t, step_index=k, epsilon=eps, norm=psi.norm(), chi_max=1,
                         wall_ms=wall, method="fft_split_step", dt=dt,
                         n_qubits=grid.n_qubits, tolerance=0.0)

    rec = record(0, 0.0)
    if observer:
        observer(rec, psi.amplitudes)
    yield rec
    for k in range(1, steps + 1):
        start = time.perf_counter()
        psi = fft_split_step(psi, V, dt)
        wall = 1e3 * (time.perf_counter() - start)
        rec = record(k, wall)
        if observer:
            observer(rec, psi.amplitudes)
        yield rec


def cmd_quench(params: QuenchParams = QuenchParams(), n: int = 14, dt: float = 0.1,
               t_final: float | None = None, backend: str = "mps", M: int = 40,
               eps_coef: float = 1e-16, tol: Tolerances = DEFAULT_TOLERANCES,
               writer: RecordWriter | None = None,
               observer: Callable[[RunRecord, object], None] | None = None,
               ) -> tuple[list[RunRecord], dict[str, FitResult]]:
    """Long split-step evolution; fits error and cumulative run time against ``t``."""
    t_final = quench_final_time(params, dt) if t_final is None else t_final
    grid = quench_grid(params, n)
    if backend == "mps":
        cfg = StepperConfig(dt=dt, method="split_step", tol=tol)
        props = build_split_propagators(params, grid, dt, M, eps_coef, tol)
        stepper = make_stepper(params, grid, cfg, propagators=props)
        stream = evolve(initial_state(params, grid, tol), params, grid, cfg, t_final,
                        observer=observer, stepper=stepper)
    elif backend == "vector":
        stream = vector_evolve(params, grid, dt, t_final, observer)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    records = []
    for rec in stream:
        records.append(rec)
        if writer is not None:
            writer.write(rec)
    fits = fit_evolution([r for r in records if r.t > 0])
    return records, fits


def density_snapshot(state: MpsState | np.ndarray, grid: Grid) -> dict[str, np.ndarray]:
    """Columns ``x, re, im, density`` in function units."""
    amps = state.to_dense() if isinstance(state, MpsState) else np.asarray(state)
    psi = amps / math.sqrt(grid.dx)
    return {"x": grid.x, "re": psi.real, "im": psi.imag, "density": np.abs(psi) ** 2}


def write_snapshot(path: str | Path, snap: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "re_psi", "im_psi", "abs_psi_sq"])
        for row in zip(snap["x"], snap["re"], snap["im"], snap["density"]):
            w.writerow([repr(float(v)) for v in row])


def cmd_double_well(params: QuenchParams = QuenchParams(u=1.0, sigma_barrier=1.0), n: int = 14,
                    dt: float = 0.1, t_final: float | None = None,
                    snapshot_times: Sequence[float] | None = None, M: int = 40,
                    eps_coef: float = 1e-16, tol: Tolerances = DEFAULT_TOLERANCES,
                    writer: RecordWriter | None = None,
                    ) -> tuple[list[RunRecord], dict[float, dict[str, np.ndarray]]]:
    """Expansion through a central barrier; records plus density snapshots.

    Snapshot times snap to the nearest step; the default is every quarter of
    ``pi / omegaH``.
    """
    t_final = quench_final_time(params, dt, 2.0) if t_final is None else t_final
    grid = quench_grid(params, n)
    if snapshot_times is None:
        snapshot_times = [q * 0.25 * params.period for q in range(int(t_final / (0.25 * params.period)) + 1)]
    wanted = {int(round(t / dt)): t for t in snapshot_times}
    snaps: dict[float, dict[str, np.ndarray]] = {}

    def observe(rec: RunRecord, psi: MpsState) -> None:
        if rec.step_index in wanted:
            snaps[rec.t] = density_snapshot(psi, grid)

    cfg = StepperConfig(dt=dt, method="split_step", tol=tol)
    props = build_split_propagators(params, grid, dt, M, eps_coef, tol)
    stepper = make_stepper(params, grid, cfg, propagators=props)
    records = []
    for rec in evolve(initial_state(params, grid, tol), params, grid, cfg, t_final,
                      observer=observe, stepper=stepper):
        records.append(rec)
        if writer is not None:
            writer.write(rec)
    return records, snaps


def cmd_filter_spectrum(M_list: Sequence[int] = (0, 8, 20, 40, 60, 80), points: int = 10_000,
                        k_max_dx: float = 2 * math.pi) -> tuple[list[dict], list[dict]]:
    """Kernel spectrum on ``k dx in [0, k_max_dx]`` with the width fixed by the order.

    Returns:
        Spectrum rows ``(M, k_dx, value)`` and one marker row per ``M`` with
        ``sigma/dx``, ``k* dx`` and the filter value at ``k*``.
    """
    rows, markers = [], []
    k_dx = np.linspace(0.0, k_max_dx, points)
    for M in M_list:
        sigma = sigma_from_order(M, 1.0)
        vals = filter_spectrum(M, sigma, k_dx)
        rows.extend({"M": M, "k_dx": float(k), "value": float(v)} for k, v in zip(k_dx, vals))
        k_star = transition_wavenumber(M, sigma)
        markers.append({"M": M, "sigma_dx": sigma, "k_star_dx": k_star,
                        "value_at_k_star": float(filter_spectrum(M, sigma, k_star)),
                        "calibrated_sigma_dx": calibrate_sigma(M, 1.0)})
    return rows, markers
