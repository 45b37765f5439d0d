import math

import numpy as np
import pytest

from qtt_hdaf.evolution import (
    ConvergenceError,
    Hamiltonian,
    StepperConfig,
    arnoldi_step_report,
    build_hamiltonian,
    build_split_propagators,
    evolve,
    make_stepper,
    step_arnoldi,
    step_count,
    step_crank_nicolson,
    step_euler,
    step_heun,
    step_rk4,
    step_split,
)
from qtt_hdaf.hdaf import HdafSpec, calibrate_sigma
from qtt_hdaf.loading import QuenchParams, initial_state, quench_grid
from qtt_hdaf.mps import Grid, Mpo, MpsState, norm
from qtt_hdaf.oracle import (
    dense_arnoldi,
    dense_crank_nicolson,
    dense_euler,
    dense_expm,
    dense_hamiltonian,
    dense_hdaf_matrix,
    dense_heun,
    dense_rk4,
    dense_split,
    free_gaussian,
)

N_SMALL = 8
DT = 0.01
PARAMS = QuenchParams()


@pytest.fixture(scope="module")
def small():
    """Quench problem on 8 qubits with matching dense operators."""
    grid = quench_grid(PARAMS, N_SMALL)
    H = build_hamiltonian(PARAMS, grid, kinetic_qubits=N_SMALL)
    spec = HdafSpec(M=40, sigma=calibrate_sigma(40, grid.dx), dx=grid.dx, l=2)
    H_dense = dense_hamiltonian(dense_hdaf_matrix(spec, grid), PARAMS.potential(grid.x))
    prop_spec = HdafSpec(M=40, sigma=calibrate_sigma(40, grid.dx, DT), dx=grid.dx, tau=DT)
    K_dense = dense_hdaf_matrix(prop_spec, grid)
    half = np.exp(-0.5j * DT * PARAMS.potential(grid.x))
    psi0 = initial_state(PARAMS, grid)
    return grid, H, H_dense, K_dense, half, psi0


DENSE = {
    "euler": lambda psi, d: dense_euler(psi, d["H"], DT),
    "heun": lambda psi, d: dense_heun(psi, d["H"], DT),
    "rk4": lambda psi, d: dense_rk4(psi, d["H"], DT),
    "crank_nicolson": lambda psi, d: dense_crank_nicolson(psi, d["H"], DT),
    "arnoldi": lambda psi, d: dense_arnoldi(psi, d["H"], DT, 10),
    "split_step": lambda psi, d: dense_split(psi, d["K"], d["half"]),
}


def run_both(small, method, steps=20, cg_tol=1e-12):
    grid, H, H_dense, K_dense, half, psi0 = small
    cfg = StepperConfig(dt=DT, method=method, cg_tol=cg_tol)
    stepper = make_stepper(PARAMS, grid, cfg, hamiltonian=H)
    psi, dense = psi0, psi0.to_dense()
    d = {"H": H_dense, "K": K_dense, "half": half}
    worst = 0.0
    for _ in range(steps):
        psi = stepper(psi)
        dense = DENSE[method](dense, d)
        worst = max(worst, float(np.linalg.norm(psi.to_dense() - dense)))
    return worst, psi, dense


class TestDenseEquivalence:
    def test_hamiltonian_matches_dense(self, small):
        _, H, H_dense, *_ = small
        np.testing.assert_allclose(H.combined.to_dense(), H_dense, atol=1e-10 * np.abs(H_dense).max())

    @pytest.mark.parametrize("method", list(DENSE))
    def test_twenty_steps(self, small, method):
        worst, _, _ = run_both(small, method)
        assert worst <= 1e-10

    def test_split_factors_match(self, small):
        grid, *_ = small
        props = build_split_propagators(PARAMS, grid, DT)
        _, _, _, K_dense, half, _ = small
        np.testing.assert_allclose(props.kinetic.to_dense(), K_dense, atol=1e-12)
        np.testing.assert_allclose(np.diag(props.half_potential.to_dense()), half, atol=1e-13)


class TestTrivialCases:
    @pytest.mark.parametrize("method", ["euler", "heun", "rk4", "crank_nicolson", "arnoldi"])
    def test_zero_hamiltonian_is_identity(self, small, method):
        grid, *_, psi0 = small
        cfg = StepperConfig(dt=0.1, method=method)
        stepper = make_stepper(PARAMS, grid, cfg, hamiltonian=Hamiltonian.zero(N_SMALL))
        np.testing.assert_allclose(stepper(psi0).to_dense(), psi0.to_dense(), atol=1e-14)

    def test_zero_steps(self, small):
        grid, *_, psi0 = small
        records = list(evolve(psi0, PARAMS, grid, StepperConfig(dt=0.1), 0.0))
        assert len(records) == 1 and records[0].step_index == 0
        assert records[0].epsilon == pytest.approx(0.0, abs=1e-13)

    def test_step_count(self):
        assert step_count(1.0, 0.1) == 10
        with pytest.raises(ValueError):
            step_count(1.05, 0.1)

    def test_config_validation(self):
        for kwargs in ({"dt": 0.0}, {"dt": 0.1, "method": "leapfrog"}, {"dt": 0.1, "n_v": 1},
                       {"dt": 0.1, "cg_tol": 0.0}):
            with pytest.raises(ValueError):
                StepperConfig(**kwargs)


@pytest.fixture(scope="module")
def eigen(small):
    grid, H, H_dense, *_ = small
    vals, vecs = np.linalg.eigh(0.5 * (H_dense + H_dense.conj().T))
    vec = vecs[:, 3]
    return grid, H, vals[3], vec, MpsState.from_dense(vec)


class TestEigenstates:
    def test_euler_multiplies(self, eigen):
        grid, H, E, vec, psi = eigen
        out = step_euler(psi, H, StepperConfig(dt=DT, method="euler"))
        np.testing.assert_allclose(out.to_dense(), (1 - 1j * DT * E) * vec, atol=1e-11)

    def test_arnoldi_invariant_subspace(self, eigen):
        grid, H, E, vec, psi = eigen
        out, info = arnoldi_step_report(psi, H, StepperConfig(dt=DT, method="arnoldi", n_v=10))
        assert info.breakdown and info.basis_size == 1
        np.testing.assert_allclose(out.to_dense(), np.exp(-1j * DT * E) * vec, atol=1e-11)

    def test_crank_nicolson_phase(self, eigen):
        grid, H, E, vec, psi = eigen
        out = step_crank_nicolson(psi, H, StepperConfig(dt=DT, method="crank_nicolson"))
        cayley = (1 - 0.5j * DT * E) / (1 + 0.5j * DT * E)
        np.testing.assert_allclose(out.to_dense(), cayley * vec, atol=1e-9)


class TestSteppers:
    def test_arnoldi_against_exact_exponential(self, small):
        grid, H, H_dense, *_, psi0 = small
        out = step_arnoldi(psi0, H, StepperConfig(dt=DT, method="arnoldi", n_v=10))
        want = dense_expm(-1j * DT * H_dense) @ psi0.to_dense()
        assert np.linalg.norm(out.to_dense() - want) <= 1e-10

    def test_crank_nicolson_preserves_norm(self, small):
        grid, H, *_, psi0 = small
        out = step_crank_nicolson(psi0, H, StepperConfig(dt=0.1, method="crank_nicolson"))
        assert norm(out) == pytest.approx(norm(psi0), abs=1e-10)

    def test_crank_nicolson_reports_failure(self, small):
        grid, H, *_, psi0 = small
        cfg = StepperConfig(dt=0.1, method="crank_nicolson", cg_tol=1e-14, cg_max_iter=1)
        with pytest.raises(ConvergenceError) as info:
            step_crank_nicolson(psi0, H, cfg)
        assert info.value.residual > 1e-14

    def test_local_error_orders(self, small):
        """Halving dt shrinks the one-step error by about 2**(p+1)."""
        grid, H, H_dense, *_, psi0 = small
        v = psi0.to_dense()
        for step, order in ((step_euler, 1), (step_heun, 2), (step_rk4, 4)):
            errs = []
            for dt in (0.02, 0.01):
                out = step(psi0, H, StepperConfig(dt=dt))
                errs.append(np.linalg.norm(out.to_dense() - dense_expm(-1j * dt * H_dense) @ v))
            assert math.log2(errs[0] / errs[1]) == pytest.approx(order + 1, abs=0.3)

    def test_split_free_gaussian(self):
        grid = Grid.centered(40.0, 12)
        params = QuenchParams(omegaH=1e-9)
        cfg = StepperConfig(dt=0.1)
        props = build_split_propagators(params, grid, 0.1)
        psi = MpsState.from_dense(math.sqrt(grid.dx) * free_gaussian(grid.x, 0.0))
        out = step_split(psi, props.kinetic, Mpo.identity(12), cfg)
        want = math.sqrt(grid.dx) * free_gaussian(grid.x, 0.1)
        assert np.linalg.norm(out.to_dense() - want) <= 1e-8

    def test_unknown_kinetic(self, small):
        grid, *_ = small
        with pytest.raises(ValueError):
            build_hamiltonian(PARAMS, grid, kinetic="spectral")
        with pytest.raises(ValueError):
            make_stepper(PARAMS, grid, StepperConfig(dt=0.1), kinetic="fd")


class TestEvolve:
    def test_records(self, small):
        grid, *_, psi0 = small
        seen = []
        records = list(evolve(psi0, PARAMS, grid, StepperConfig(dt=0.1), 0.5,
                              observer=lambda rec, psi: seen.append(norm(psi))))
        assert [r.step_index for r in records] == list(range(6))
        assert records[-1].t == pytest.approx(0.5)
        assert all(r.epsilon is not None and r.chi_max >= 1 for r in records)
        assert seen == [r.norm for r in records]
        assert records[0].wall_ms == 0.0 and all(r.wall_ms > 0 for r in records[1:])

    def test_no_epsilon_with_barrier(self):
        params = QuenchParams(u=1.0)
        grid = quench_grid(params, 8)
        records = list(evolve(initial_state(params, grid), params, grid, StepperConfig(dt=0.1), 0.2))
        assert all(r.epsilon is None for r in records)

    def test_split_norm_over_hundred_steps(self):
        grid = quench_grid(PARAMS, 12)
        records = list(evolve(initial_state(PARAMS, grid), PARAMS, grid, StepperConfig(dt=0.1), 10.0))
        assert abs(records[-1].norm - records[0].norm) <= 1e-8
