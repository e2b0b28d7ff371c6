import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from carleman_lab.carleman import (
    BudgetError,
    ReferenceError_,
    Trajectory,
    block_sizes,
    carleman_blocks,
    estimate_nnz,
    fit_exponential,
    initial_carleman_state,
    integrate_linear,
    truncation_error_sweep,
)
from carleman_lab.field_ops import QuadraticODE, assemble_system
from carleman_lab.grid_ops import dirichlet_grid, make_grid
from carleman_lab.reference import integrate_nonlinear, toy_system, toy_truncated_solution

TIGHT = dict(atol=1e-13, rtol=1e-12)


def small_burgers(N=4, nu=0.3, forcing=None, time_dependent=False):
    return assemble_system(dirichlet_grid(1, N, -0.5, 0.5), nu, forcing, time_dependent)


class TestBlocks:
    def test_order_one_is_F1(self):
        sys_ = small_burgers()
        cs = carleman_blocks(sys_, 1)
        assert abs(cs.A - sys_.F1).max() == 0
        assert cs.A is not sys_.F1

    def test_scalar_order_two(self):
        cs = carleman_blocks(toy_system(2.0), 2)
        np.testing.assert_array_equal(cs.A.toarray(), [[-1.0, -2.0], [0.0, -2.0]])

    def test_scalar_order_three_bidiagonal(self):
        A = carleman_blocks(toy_system(0.5), 3).A.toarray()
        np.testing.assert_array_equal(A, [[-1, -0.5, 0], [0, -2, -1.0], [0, 0, -3]])

    def test_size(self):
        ode = QuadraticODE(sp.identity(2, format="csr"), sp.csr_matrix((2, 4)), lambda t: np.zeros(2))
        assert carleman_blocks(ode, 3).size == 14
        assert block_sizes(2, 3) == [2, 4, 8]

    def test_block_structure(self):
        sys_ = small_burgers()
        cs = carleman_blocks(sys_, 3)
        A = cs.A.tolil()
        o = cs.block_offsets
        # no coupling further than one block up or down
        assert A[o[0] : o[1], o[2] : o[3]].nnz == 0
        assert A[o[2] : o[3], o[0] : o[1]].nnz == 0
        # diagonal block 2 is F1 ⊗ I + I ⊗ F1
        I = sp.identity(sys_.n)
        expected = sp.kron(sys_.F1, I) + sp.kron(I, sys_.F1)
        assert abs(A[o[1] : o[2], o[1] : o[2]] - expected).max() < 1e-12

    def test_static_drive_in_lower_blocks(self):
        f = lambda X, t: np.ones_like(X[0])
        sys_ = small_burgers(forcing=f)
        cs = carleman_blocks(sys_, 2)
        o = cs.block_offsets
        lower = cs.A.tolil()[o[1] : o[2], o[0] : o[1]].toarray()
        f0 = sys_.f0(0.0).reshape(-1, 1)
        I = np.eye(sys_.n)
        np.testing.assert_allclose(lower, np.kron(f0, I) + np.kron(I, f0), atol=1e-12)

    @pytest.mark.parametrize("C", [1, 2, 3, 4])
    def test_nnz_estimate_is_upper_bound(self, C):
        sys_ = small_burgers(forcing=lambda X, t: X[0])
        assert carleman_blocks(sys_, C).nnz <= estimate_nnz(sys_, C)

    def test_budget(self):
        sys_ = small_burgers(N=8)
        with pytest.raises(BudgetError) as info:
            carleman_blocks(sys_, 4, nnz_budget=1000)
        err = info.value
        assert err.order == 4 and err.size == 8 + 64 + 512 + 4096
        assert err.nnz_estimate > err.budget == 1000
        assert isinstance(err, MemoryError)

    @pytest.mark.parametrize("order", [0, -1, 1.5])
    def test_bad_order(self, order):
        with pytest.raises(ValueError):
            carleman_blocks(toy_system(1.0), order)


class TestInitialState:
    def test_scalar(self):
        np.testing.assert_array_equal(initial_carleman_state([2.0], 3), [2.0, 4.0, 8.0])

    def test_vector(self):
        np.testing.assert_array_equal(initial_carleman_state([1.0, 2.0], 2), [1, 2, 1, 2, 2, 4])

    def test_order_one(self):
        np.testing.assert_array_equal(initial_carleman_state([3.0, -1.0], 1), [3.0, -1.0])


class TestIntegrateLinear:
    def test_pure_decay(self):
        cs = carleman_blocks(QuadraticODE(sp.csr_matrix([[-1.0]]), sp.csr_matrix((1, 1)), lambda t: np.zeros(1)), 1)
        traj = integrate_linear(cs, [1.0], (0, 1), [1.0], **TIGHT)
        assert traj.states[-1, 0] == pytest.approx(np.exp(-1), abs=1e-12)

    def test_toy_order_two(self):
        cs = carleman_blocks(toy_system(0.1), 2)
        traj = integrate_linear(cs, [1.0, 1.0], (0, 1), [1.0], **TIGHT)
        e = np.exp(-1)
        # y1 = e^{-t} - 0.1 (e^{-t} - e^{-2t})
        assert traj.states[-1, 0] == pytest.approx(e - 0.1 * (e - e**2), abs=1e-12)

    @pytest.mark.parametrize("C", [1, 2, 3, 5, 8])
    @pytest.mark.parametrize("R,t", [(0.5, 1.0), (2.0, 0.5), (1.0, 2.0)])
    def test_toy_equals_partial_geometric_sum(self, R, t, C):
        cs = carleman_blocks(toy_system(R), C)
        traj = integrate_linear(cs, initial_carleman_state([1.0], C), (0, t), [t], **TIGHT)
        assert traj.states[-1, 0] == pytest.approx(toy_truncated_solution(R, 1.0, t, C), abs=1e-10)

    def test_wrong_size(self):
        cs = carleman_blocks(toy_system(1.0), 3)
        with pytest.raises(ValueError):
            integrate_linear(cs, [1.0, 1.0], (0, 1))

    def test_dynamic_drive_matches_static(self):
        f = lambda X, t: 0.5 * np.cos(np.pi * X[0])
        static = carleman_blocks(small_burgers(forcing=f), 3)
        dynamic = carleman_blocks(small_burgers(forcing=f, time_dependent=True), 3)
        assert not dynamic.static_drive
        y0 = initial_carleman_state(0.3 * np.ones(4), 3)
        a = integrate_linear(static, y0, (0, 0.5), [0.5], **TIGHT).states[-1]
        b = integrate_linear(dynamic, y0, (0, 0.5), [0.5], **TIGHT).states[-1]
        np.testing.assert_allclose(a, b, atol=1e-11)

    @given(seed=st.integers(0, 10_000), C=st.integers(2, 3))
    @settings(max_examples=15, deadline=None)
    def test_tensor_blocks_stay_symmetric(self, seed, C):
        sys_ = small_burgers(N=4)
        u0 = 0.5 * np.random.default_rng(seed).standard_normal(4)
        cs = carleman_blocks(sys_, C)
        y = integrate_linear(cs, initial_carleman_state(u0, C), (0, 0.3), [0.3]).states[-1]
        Y2 = cs.block(y, 2).reshape(4, 4)
        np.testing.assert_allclose(Y2, Y2.T, atol=1e-9)
        if C == 3:
            Y3 = cs.block(y, 3).reshape(4, 4, 4)
            np.testing.assert_allclose(Y3, Y3.transpose(1, 2, 0), atol=1e-9)
            np.testing.assert_allclose(Y3, Y3.transpose(1, 0, 2), atol=1e-9)

    def test_meta(self):
        traj = integrate_linear(carleman_blocks(toy_system(1.0), 2), [1.0, 1.0], (0, 1), [0.5, 1.0])
        assert traj.meta["solver"] == "RK45"
        assert traj.meta["wall_time_s"] >= 0


class TestTrajectory:
    def test_at_requires_stored_time(self):
        traj = Trajectory(np.array([0.0, 1.0]), np.array([[1.0], [2.0]]))
        assert traj.at(1.0)[0] == 2.0
        with pytest.raises(ReferenceError_):
            traj.at(0.5)

    def test_times_increasing(self):
        with pytest.raises(ValueError):
            Trajectory(np.array([1.0, 0.0]), np.zeros((2, 1)))


class TestSweep:
    def test_linear_system_exact_at_every_order(self):
        ode = QuadraticODE(
            sp.csr_matrix([[-1.0, 0.2], [0.0, -0.5]]), sp.csr_matrix((2, 4)), lambda t: np.zeros(2)
        )
        u0 = np.array([1.0, -1.0])
        ref = integrate_nonlinear(ode, u0, (0, 1), [1.0], **TIGHT)
        res = truncation_error_sweep(ode, u0, [1, 2, 3], 1.0, ref, **TIGHT)
        assert res.errors.max() < 1e-10

    def test_toy_sweep_decays_geometrically(self):
        ode = toy_system(0.5)
        ref = integrate_nonlinear(ode, np.array([1.0]), (0, 1), [1.0], **TIGHT)
        res = truncation_error_sweep(ode, [1.0], range(1, 7), 1.0, ref, **TIGHT)
        assert res.monotone
        q = 0.5 * (1 - np.exp(-1))
        assert res.fit.ratio == pytest.approx(q, rel=1e-3)
        assert res.fit.r_squared > 0.999

    def test_workers_preserve_order(self):
        ode = small_burgers()
        u0 = 0.4 * np.sin(2 * np.pi * ode.grid.nodes())
        ref = integrate_nonlinear(ode, u0, (0, 0.5), [0.5], **TIGHT)
        serial = truncation_error_sweep(ode, u0, [1, 2, 3], 0.5, ref, **TIGHT)
        pooled = truncation_error_sweep(ode, u0, [1, 2, 3], 0.5, ref, workers=3, **TIGHT)
        assert [r.C for r in pooled.rows] == [1, 2, 3]
        np.testing.assert_array_equal(serial.errors, pooled.errors)

    def test_burgers_monotone(self):
        ode = small_burgers(nu=0.3)
        u0 = 0.4 * np.sin(2 * np.pi * ode.grid.nodes())
        ref = integrate_nonlinear(ode, u0, (0, 0.8), [0.8], **TIGHT)
        res = truncation_error_sweep(ode, u0, [1, 2, 3, 4], 0.8, ref, **TIGHT)
        assert res.monotone and res.fit is not None

    def test_reference_time_missing(self):
        ode = toy_system(0.5)
        ref = integrate_nonlinear(ode, np.array([1.0]), (0, 1), [1.0])
        with pytest.raises(ReferenceError_):
            truncation_error_sweep(ode, [1.0], [1, 2], 0.5, ref)

    def test_orders_must_ascend(self):
        ode = toy_system(0.5)
        ref = integrate_nonlinear(ode, np.array([1.0]), (0, 1), [1.0])
        with pytest.raises(ValueError):
            truncation_error_sweep(ode, [1.0], [2, 1], 1.0, ref)

    def test_fit_exponential_exact(self):
        fit = fit_exponential([1, 2, 3, 4], [0.1**k for k in range(1, 5)])
        assert fit.ratio == pytest.approx(0.1)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.rate == pytest.approx(np.log(10))


class TestPeriodicEmbedding:
    def test_2d_order_two_size(self):
        ode = assemble_system(make_grid(2, 4, 1.0, ["periodic"] * 2), 0.1)
        cs = carleman_blocks(ode, 2)
        assert cs.size == 32 + 32**2
