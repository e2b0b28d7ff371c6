"""Assembly of the discretised quadratic system dU/dt = F2 U⊗U + F1 U + F0(t).

The state stacks the d velocity components, each a flattened N^d field::

    U = (u_1[0..N^d-1], u_2[...], ..., u_d[...])

F2 is built from the projector P (P(a⊗b) = a∘b), the block-cyclic shift C and
the axis derivatives. Block l of F2(U⊗U) is the convective term
-sum_q u_q ∘ ∂_q u_l.

Dirichlet boundaries are split three ways: the second-difference traces go to
F0, and the first-derivative traces in the convective term, which multiply an
interior unknown, go to F1 as a diagonal correction. No constant term comes out
of the nonlinear part.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .grid_ops import (
    AffineOperator,
    BCKind,
    BoundaryKind,
    GridError,
    GridSpec,
    first_derivative,
    second_derivative,
    spectral_norm,
)

Forcing = Callable[[tuple[np.ndarray, ...], float], np.ndarray]


class ForcingError(RuntimeError):
    """The forcing function failed or produced non-finite values."""


class EigenError(RuntimeError):
    """Eigen-decomposition failed or the spectrum violates a requirement."""


def kron(A, B) -> sp.csr_matrix:
    """Sparse Kronecker product."""
    return sp.kron(sp.csr_matrix(A), sp.csr_matrix(B), format="csr")


def kron_chain(mats: Sequence) -> sp.csr_matrix:
    out = sp.csr_matrix(mats[0])
    for m in mats[1:]:
        out = kron(out, m)
    return out


@dataclass(frozen=True)
class PermutationBlock:
    d: int
    block_size: int
    matrix: sp.csr_matrix

    def power(self, g: int) -> sp.csr_matrix:
        """C^g for any integer g; negative powers wrap as C^(d-|g|)."""
        g %= self.d
        out = sp.identity(self.d * self.block_size, format="csr")
        for _ in range(g):
            out = (self.matrix @ out).tocsr()
        return out


def cyclic_perm(d: int, N: int) -> PermutationBlock:
    """Block-cyclic shift: block k of C U is block k+1 (mod d) of U."""
    if d < 1:
        raise GridError(f"need d >= 1, got {d}")
    M = N**d
    shift = sp.csr_matrix(np.roll(np.eye(d), 1, axis=1))
    return PermutationBlock(d, M, kron(shift, sp.identity(M)))


def projector(d: int, N: int) -> sp.csr_matrix:
    """P of shape n x n^2 (n = d N^d) with P(a⊗b) = a∘b."""
    n = d * N**d
    i = np.arange(n)
    return sp.csr_matrix((np.ones(n), (i, i * n + i)), shape=(n, n * n))


def block_projector(d: int, l: int, M: int) -> sp.csr_matrix:
    """Direct sum with identity in block l and zero blocks elsewhere."""
    e = sp.csr_matrix(([1.0], ([l], [l])), shape=(d, d))
    return kron(e, sp.identity(M))


def axis_operator(mat, axis: int, d: int, N: int) -> sp.csr_matrix:
    """I ⊗ ... ⊗ mat ⊗ ... ⊗ I with ``mat`` on ``axis`` (axis 0 slowest)."""
    factors = [sp.identity(N, format="csr")] * d
    factors[axis] = sp.csr_matrix(mat)
    return kron_chain(factors)


def _lift_vector(vec: np.ndarray, axis: int, d: int, N: int) -> np.ndarray:
    """1 ⊗ ... ⊗ vec ⊗ ... ⊗ 1 as a flat N^d vector."""
    out = np.ones(1)
    for q in range(d):
        out = np.kron(out, vec if q == axis else np.ones(N))
    return out


def _validate_bc(grid: GridSpec) -> None:
    if len(grid.bc) != grid.d:
        raise GridError(f"grid has {len(grid.bc)} boundary kinds for d={grid.d}")
    for b in grid.bc:
        if not isinstance(b, BoundaryKind) or b.kind not in tuple(BCKind):
            raise GridError(f"invalid boundary kind {b!r}")
        if b.kind is BCKind.DIRICHLET and (b.left is None or b.right is None):
            raise GridError("Dirichlet boundary without traces")


def laplacian(grid: GridSpec) -> sp.csr_matrix:
    """Sum over axes of the one-axis second derivative, acting on one component."""
    _validate_bc(grid)
    d, N, dx = grid.d, grid.N, grid.dx
    out = sp.csr_matrix((N**d, N**d))
    for q in range(d):
        out = out + axis_operator(second_derivative(grid.bc[q], N, dx).matrix, q, d, N)
    return out.tocsr()


def dirichlet_convective_correction(grid: GridSpec, t: float = 0.0) -> sp.csr_matrix:
    """Linear part of -u_q (D_q u_l + b_q) coming from the Dirichlet offset b_q."""
    d, N, dx = grid.d, grid.N, grid.dx
    M = N**d
    n = d * M
    out = sp.csr_matrix((n, n))
    for q, b in enumerate(grid.bc):
        if b.kind is not BCKind.DIRICHLET:
            continue
        offset = first_derivative(b, N, dx).offset_at(t)
        diag = sp.diags(-_lift_vector(offset, q, d, N))
        for l in range(d):
            # block (l, q): multiplies u_q
            e = sp.csr_matrix(([1.0], ([l], [q])), shape=(d, d))
            out = out + kron(e, diag)
    return out.tocsr()


def assemble_F1(grid: GridSpec, nu: float, t_boundary: float = 0.0) -> sp.csr_matrix:
    """nu * (⊕_l Laplacian) plus the Dirichlet convective correction.

    The correction uses the traces at ``t_boundary``; F1 is time independent,
    so time-varying traces are only represented exactly in F0.
    """
    if not nu > 0:
        raise GridError(f"viscosity must be positive, got {nu}")
    lap = laplacian(grid)
    F1 = nu * kron(sp.identity(grid.d), lap)
    if any(b.kind is BCKind.DIRICHLET for b in grid.bc):
        F1 = F1 + dirichlet_convective_correction(grid, t_boundary)
    return sp.csr_matrix(F1)


def assemble_F2(grid: GridSpec) -> sp.csr_matrix:
    """-sum_{l,q} P [(E_l C^(q-l)) ⊗ (E_l D_q)] with E_l the block-l projector.

    (E_l C^(q-l) U) holds u_q in block l and (E_l D_q U) holds ∂_q u_l there,
    so the Hadamard product picks out u_q ∂_q u_l. For d = 1 this is
    F2(u⊗u) = -u ∘ (D u).
    """
    _validate_bc(grid)
    d, N, dx = grid.d, grid.N, grid.dx
    M = N**d
    P = projector(d, N)
    C = cyclic_perm(d, N)
    derivs = [
        kron(sp.identity(d), axis_operator(first_derivative(grid.bc[q], N, dx).matrix, q, d, N))
        for q in range(d)
    ]
    total = None
    for l in range(d):
        E = block_projector(d, l, M)
        for q in range(d):
            left = (E @ C.power(q - l)).tocsr()
            right = (E @ derivs[q]).tocsr()
            term = P @ kron(left, right)
            total = term if total is None else total + term
    return sp.csr_matrix(-total)


def _sample_forcing(grid: GridSpec, forcing, t: float) -> np.ndarray:
    d, M = grid.d, grid.n_points
    if forcing is None:
        return np.zeros(d * M)
    X = grid.mesh()
    try:
        if callable(forcing):
            vals = np.asarray(forcing(X, t), dtype=float)
            vals = np.broadcast_to(vals, (M,)) if d == 1 and vals.ndim <= 1 else vals
        else:
            if len(forcing) != d:
                raise ForcingError(f"need {d} forcing components, got {len(forcing)}")
            vals = np.concatenate(
                [np.broadcast_to(np.asarray(f(X, t), dtype=float), (M,)) for f in forcing]
            )
    except ForcingError:
        raise
    except Exception as exc:
        raise ForcingError(f"forcing evaluation failed at t={t}: {exc}") from exc
    vals = np.asarray(vals, dtype=float).reshape(-1)
    if vals.size != d * M:
        raise ForcingError(f"forcing returned {vals.size} values, expected {d * M}")
    if not np.all(np.isfinite(vals)):
        raise ForcingError(f"forcing is not finite at t={t}")
    return vals


def dirichlet_drive(grid: GridSpec, nu: float, t: float) -> np.ndarray:
    """nu * (1 ⊗ .. ⊗ b2(t) ⊗ .. ⊗ 1) summed over Dirichlet axes, for every component."""
    d, N, dx = grid.d, grid.N, grid.dx
    drive = np.zeros(N**d)
    for q, b in enumerate(grid.bc):
        if b.kind is BCKind.DIRICHLET:
            b2 = second_derivative(b, N, dx).offset_at(t)
            drive += _lift_vector(b2, q, d, N)
    return nu * np.tile(drive, d)


def assemble_F0(grid: GridSpec, forcing, t: float, nu: float = 0.0) -> np.ndarray:
    """Drive vector at time t: sampled forcing plus Dirichlet diffusion traces.

    ``forcing`` is None, a callable ``f(X, t)`` returning all d components
    stacked (or one component when d = 1), or a sequence of d per-component
    callables. ``X`` is the tuple of flattened node coordinates.
    """
    f0 = _sample_forcing(grid, forcing, t)
    if nu and any(b.kind is BCKind.DIRICHLET for b in grid.bc):
        f0 = f0 + dirichlet_drive(grid, nu, t)
    return f0


@dataclass(frozen=True)
class QuadraticODE:
    """dU/dt = F2 (U⊗U) + F1 U + F0(t) on ``grid``."""

    F1: sp.csr_matrix
    F2: sp.csr_matrix
    F0: Callable[[float], np.ndarray]
    grid: GridSpec | None = None
    nu: float = 0.0
    f0_static: bool = True
    _quad: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.F1.shape[0]
        if self.F1.shape != (n, n):
            raise GridError(f"F1 must be square, got {self.F1.shape}")
        if self.F2.shape != (n, n * n):
            raise GridError(f"F2 must be {n}x{n * n}, got {self.F2.shape}")
        coo = sp.coo_matrix(self.F2)
        a, b = np.divmod(coo.col, n)
        object.__setattr__(self, "_quad", (coo.row, a, b, coo.data))

    @property
    def n(self) -> int:
        return self.F1.shape[0]

    def f0(self, t: float = 0.0) -> np.ndarray:
        return np.asarray(self.F0(t), dtype=float)

    def quadratic(self, u: np.ndarray, v: np.ndarray | None = None) -> np.ndarray:
        """F2 (u⊗v) without forming the n^2 vector."""
        v = u if v is None else v
        rows, a, b, vals = self._quad
        return np.bincount(rows, weights=vals * u[a] * v[b], minlength=self.n)

    def rhs(self, t: float, u: np.ndarray) -> np.ndarray:
        return self.quadratic(u) + self.F1 @ u + self.f0(t)

    def jacobian(self, t: float, u: np.ndarray) -> sp.csr_matrix:
        rows, a, b, vals = self._quad
        n = self.n
        J = sp.csr_matrix(
            (np.concatenate([vals * u[b], vals * u[a]]), (np.concatenate([rows, rows]), np.concatenate([a, b]))),
            shape=(n, n),
        )
        return (J + self.F1).tocsr()

    def to_json(self, sample_times: Sequence[float] = (0.0,)) -> dict:
        doc = {
            "F1": AffineOperator(self.F1).to_json(),
            "F2": AffineOperator(self.F2).to_json(),
            "F0": {
                "offset_kind": "static" if self.f0_static else "sampled",
                "offset_samples": [
                    {"t": float(t), "values": self.f0(t).tolist()} for t in sample_times
                ],
            },
            "nu": self.nu,
        }
        if self.grid is not None:
            doc.update({k: v for k, v in self.grid.to_json().items()})
        return doc

    def dumps(self, sample_times: Sequence[float] = (0.0,)) -> str:
        return json.dumps(self.to_json(sample_times), sort_keys=True)


def assemble_system(
    grid: GridSpec,
    nu: float,
    forcing=None,
    time_dependent: bool = False,
) -> QuadraticODE:
    """Full quadratic system for the viscous Burgers / Navier-Stokes convective form."""
    F1 = assemble_F1(grid, nu)
    F2 = assemble_F2(grid)
    if time_dependent:
        F0 = lambda t: assemble_F0(grid, forcing, t, nu)  # noqa: E731
    else:
        static = assemble_F0(grid, forcing, 0.0, nu)
        static.setflags(write=False)
        F0 = lambda t: static  # noqa: E731
    return QuadraticODE(F1, F2, F0, grid, nu, f0_static=not time_dependent)


def f1_dominant_eig(
    F1, require_negative: bool = False, tol: float = 0.0, dense_limit: int = 4096
) -> float:
    """Largest real part over the spectrum of F1.

    With ``require_negative`` an ``EigenError`` is raised unless the result is
    below ``-tol``.
    """
    m = sp.csr_matrix(F1)
    n = m.shape[0]
    if m.shape != (n, n):
        raise EigenError(f"F1 must be square, got {m.shape}")
    try:
        if n <= dense_limit:
            vals = np.linalg.eigvals(m.toarray())
        else:
            from scipy.sparse.linalg import eigs

            vals = eigs(m, k=6, which="LR", return_eigenvectors=False)
    except Exception as exc:  # LinAlgError, ArpackNoConvergence
        raise EigenError(f"eigensolver failed: {exc}") from exc
    lead = float(np.max(vals.real))
    if require_negative and lead >= -tol:
        raise EigenError(f"F1 is not strictly dissipative: max Re(lambda) = {lead}")
    return lead


def axis_derivative_norm(grid: GridSpec) -> float:
    """max over axes of ||D||_2 for the single-coordinate first derivative."""
    return max(
        spectral_norm(first_derivative(b, grid.N, grid.dx).matrix) for b in grid.bc
    )
