"""Carleman embedding of a quadratic ODE and its truncated linear dynamics.

The stacked state is y = (u, u⊗u, ..., u^{⊗C}) with block j of size n^j. The
transfer matrix is block tridiagonal::

    dy_j/dt = A^j_{j-1} y_{j-1} + A^j_j y_j + A^j_{j+1} y_{j+1}

where each block is a sum over tensor slots of I ⊗ .. ⊗ F ⊗ .. ⊗ I with
F = F0, F1, F2 respectively. The last block drops its F2 coupling.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.stats import linregress

from .field_ops import QuadraticODE

DEFAULT_NNZ_BUDGET = 50_000_000
DEFAULT_ATOL = 1e-10
DEFAULT_RTOL = 1e-8


class BudgetError(MemoryError):
    """The truncated system would exceed the configured nonzero budget."""

    def __init__(self, order: int, size: int, nnz_estimate: int, budget: int):
        self.order, self.size, self.nnz_estimate, self.budget = order, size, nnz_estimate, budget
        super().__init__(
            f"Carleman order {order}: S={size}, estimated nnz={nnz_estimate} exceeds budget {budget}"
        )


class SolverError(RuntimeError):
    """Time integration stopped early; ``t_reached`` is the last accepted time."""

    def __init__(self, message: str, t_reached: float):
        self.t_reached = t_reached
        super().__init__(f"{message} (reached t={t_reached:.6g})")


class ReferenceError_(LookupError):
    """The reference trajectory does not contain the requested time."""


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("row count does not match number of times")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def at(self, t: float, atol: float = 1e-12) -> np.ndarray:
        """State at a stored time; no interpolation."""
        hit = np.flatnonzero(np.abs(self.times - t) <= atol * max(1.0, abs(t)))
        if hit.size == 0:
            raise ReferenceError_(f"trajectory has no sample at t={t}")
        return self.states[hit[0]]

    def columns(self, stop: int) -> "Trajectory":
        return Trajectory(self.times, self.states[:, :stop], dict(self.meta))


def block_sizes(n: int, order: int) -> list[int]:
    return [n**j for j in range(1, order + 1)]


def _slot_sum(F: sp.spmatrix, n: int, j: int) -> sp.coo_matrix:
    """Σ_ν I^{⊗(ν-1)} ⊗ F ⊗ I^{⊗(j-ν)}."""
    parts = []
    for nu in range(1, j + 1):
        left = sp.identity(n ** (nu - 1), format="csr")
        right = sp.identity(n ** (j - nu), format="csr")
        parts.append(sp.kron(sp.kron(left, F, format="csr"), right, format="coo"))
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return sp.coo_matrix(out)


def estimate_nnz(system: QuadraticODE, order: int) -> int:
    """Upper bound on stored nonzeros of the transfer matrix."""
    n = system.n
    nnz1, nnz2 = system.F1.nnz, system.F2.nnz
    nnz0 = int(np.count_nonzero(system.f0(0.0)))
    total = 0
    for j in range(1, order + 1):
        total += j * nnz1 * n ** (j - 1)
        if j < order:
            total += j * nnz2 * n ** (j - 1)
        if j > 1:
            total += j * nnz0 * n ** (j - 1)
    return total


@dataclass(frozen=True)
class CarlemanSystem:
    """Truncated embedding ``dy/dt = A y + b(t)``.

    When the drive is time dependent the F0 sub-diagonal blocks are excluded
    from ``A`` and applied at each evaluation through ``rhs``.
    """

    order: int
    n: int
    block_offsets: tuple[int, ...]
    A: sp.csr_matrix
    drive: Callable[[float], np.ndarray]
    static_drive: bool = True

    @property
    def size(self) -> int:
        return self.block_offsets[-1]

    @property
    def nnz(self) -> int:
        return int(self.A.nnz)

    def b(self, t: float = 0.0) -> np.ndarray:
        out = np.zeros(self.size)
        out[: self.n] = self.drive(t)
        return out

    def block(self, y: np.ndarray, j: int) -> np.ndarray:
        """Block j (1-based) of a stacked state or of each row of a state matrix."""
        lo, hi = self.block_offsets[j - 1], self.block_offsets[j]
        return y[..., lo:hi]

    def _dynamic_lower(self, y: np.ndarray, f0: np.ndarray) -> np.ndarray:
        out = np.zeros(self.size)
        n = self.n
        for j in range(2, self.order + 1):
            prev = self.block(y, j - 1).reshape((n,) * (j - 1))
            acc = np.zeros((n,) * j)
            for nu in range(j):
                acc += np.expand_dims(prev, nu) * f0.reshape((1,) * nu + (n,) + (1,) * (j - 1 - nu))
            out[self.block_offsets[j - 1] : self.block_offsets[j]] = acc.ravel()
        return out

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        f0 = self.drive(t)
        out = self.A @ y
        out[: self.n] += f0
        if not self.static_drive:
            out += self._dynamic_lower(y, f0)
        return out


def carleman_blocks(
    system: QuadraticODE, order: int, nnz_budget: int = DEFAULT_NNZ_BUDGET
) -> CarlemanSystem:
    """Assemble the order-``order`` truncated transfer matrix of ``system``."""
    if int(order) != order or order < 1:
        raise ValueError(f"truncation order must be a positive integer, got {order}")
    n = system.n
    sizes = block_sizes(n, order)
    offsets = tuple(int(v) for v in np.concatenate([[0], np.cumsum(sizes)]))
    S = offsets[-1]
    estimate = estimate_nnz(system, order)
    if estimate > nnz_budget:
        raise BudgetError(order, S, estimate, nnz_budget)

    static = system.f0_static
    drive = system.F0
    if order == 1:
        A = sp.csr_matrix(system.F1, copy=True)
        return CarlemanSystem(1, n, offsets, A, drive, static)

    F0col = sp.csr_matrix(system.f0(0.0).reshape(n, 1))
    rows, cols, vals = [], [], []

    def place(block: sp.coo_matrix, j: int, k: int) -> None:
        rows.append(block.row + offsets[j - 1])
        cols.append(block.col + offsets[k - 1])
        vals.append(block.data)

    for j in range(1, order + 1):
        place(_slot_sum(system.F1, n, j), j, j)
        if j < order:
            place(_slot_sum(system.F2, n, j), j, j + 1)
        if j > 1 and static:
            place(_slot_sum(F0col, n, j), j, j - 1)
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(S, S)
    ).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return CarlemanSystem(order, n, offsets, A, drive, static)


def initial_carleman_state(u0: np.ndarray, order: int) -> np.ndarray:
    """(u0, u0⊗u0, ..., u0^{⊗order}) concatenated."""
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    blocks, cur = [], np.ones(1)
    for _ in range(order):
        cur = np.kron(cur, u0)
        blocks.append(cur)
    return np.concatenate(blocks)


def _solve(
    fun, y0, t_span, t_eval, atol, rtol, method, jac=None, max_step=np.inf
) -> Trajectory:
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError(f"need t_span[1] > t_span[0], got {t_span}")
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
    kwargs = {} if jac is None or method in ("RK45", "RK23", "DOP853") else {"jac": jac}
    start = time.perf_counter()
    sol = solve_ivp(
        fun, (t0, t1), np.asarray(y0, dtype=float), method=method, t_eval=t_eval,
        atol=atol, rtol=rtol, max_step=max_step, **kwargs,
    )
    elapsed = time.perf_counter() - start
    if sol.status != 0 or not np.all(np.isfinite(sol.y)):
        t_reached = float(sol.t[-1]) if sol.t.size else t0
        raise SolverError(f"{method} failed: {sol.message}", t_reached)
    meta = {"solver": method, "atol": atol, "rtol": rtol, "nfev": int(sol.nfev),
            "wall_time_s": elapsed}
    return Trajectory(np.asarray(sol.t), np.asarray(sol.y).T, meta)


def integrate_linear(
    cs: CarlemanSystem,
    y0: np.ndarray,
    t_span: Sequence[float],
    t_eval: Sequence[float] | None = None,
    atol: float = DEFAULT_ATOL,
    rtol: float = DEFAULT_RTOL,
    method: str = "RK45",
) -> Trajectory:
    """Integrate ``dy/dt = A y + b(t)``; ``method`` is any ``solve_ivp`` method."""
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (cs.size,):
        raise ValueError(f"initial state has size {y0.size}, expected {cs.size}")
    jac = cs.A if cs.static_drive else None
    return _solve(cs.rhs, y0, t_span, t_eval, atol, rtol, method, jac=jac)


@dataclass(frozen=True)
class SweepRow:
    C: int
    S: int
    nnz: int
    error: float
    wall_time_s: float


@dataclass(frozen=True)
class DecayFit:
    """log(error) ≈ intercept + C·log(ratio)."""

    rate: float
    ratio: float
    intercept: float
    r_squared: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    monotone: bool
    fit: DecayFit | None

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.rows])

    @property
    def orders(self) -> np.ndarray:
        return np.array([r.C for r in self.rows])


def fit_exponential(orders: Sequence[int], errors: Sequence[float]) -> DecayFit:
    res = linregress(np.asarray(orders, dtype=float), np.log(np.asarray(errors, dtype=float)))
    return DecayFit(-res.slope, float(np.exp(res.slope)), float(res.intercept), float(res.rvalue**2))


def truncation_error_sweep(
    system: QuadraticODE,
    u0: np.ndarray,
    orders: Sequence[int],
    t_eval: float,
    reference: Trajectory,
    atol: float = DEFAULT_ATOL,
    rtol: float = DEFAULT_RTOL,
    method: str = "RK45",
    nnz_budget: int = DEFAULT_NNZ_BUDGET,
    workers: int = 1,
) -> SweepResult:
    """Relative 2-norm error of block 1 at ``t_eval`` for each truncation order.

    A ``DecayFit`` is attached when the errors are strictly decreasing and
    positive.
    """
    orders = [int(c) for c in orders]
    if not orders or any(b <= a for a, b in zip(orders, orders[1:])):
        raise ValueError("orders must be nonempty and strictly ascending")
    u_ref = reference.at(t_eval)[: system.n]
    ref_norm = np.linalg.norm(u_ref)
    u0 = np.asarray(u0, dtype=float)

    def one(C: int) -> SweepRow:
        start = time.perf_counter()
        cs = carleman_blocks(system, C, nnz_budget)
        traj = integrate_linear(
            cs, initial_carleman_state(u0, C), (0.0, t_eval), [t_eval], atol, rtol, method
        )
        u_C = traj.states[-1, : system.n]
        err = float(np.linalg.norm(u_C - u_ref) / ref_norm)
        return SweepRow(C, cs.size, cs.nnz, err, time.perf_counter() - start)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = tuple(pool.map(one, orders))
    else:
        rows = tuple(one(C) for C in orders)
    errs = np.array([r.error for r in rows])
    monotone = bool(np.all(np.diff(errs) < 0))
    fit = None
    if monotone and len(rows) >= 2 and np.all(errs > 0):
        fit = fit_exponential([r.C for r in rows], errs)
    return SweepResult(rows, monotone, fit)
