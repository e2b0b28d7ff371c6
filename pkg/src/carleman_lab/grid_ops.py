"""Uniform grids and single-coordinate finite-difference operators.

All derivative operators are second-order central differences. Periodic and
open boundaries give purely linear operators; Dirichlet boundaries give an
affine operator ``D u + b(t)`` whose offset carries the boundary traces.

Node placement along every axis is ``origin + i * dx`` for ``i = 0..N-1`` with
``dx = L / (N - 1)``. For Dirichlet axes those N nodes are the unknowns and the
traces live one spacing outside them (``origin - dx`` and ``origin + L + dx``);
:func:`dirichlet_grid` picks ``origin``/``L`` so the traces land on a given
physical interval.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp

TraceFn = Callable[[float], float]
TraceLike = Union[float, int, TraceFn]


class GridError(ValueError):
    """Invalid grid or operator request."""


class GridResolutionWarning(UserWarning):
    """N is allowed but not a power of two."""


class BCKind(str, Enum):
    PERIODIC = "periodic"
    OPEN = "open"
    DIRICHLET = "dirichlet"


def _as_trace(value: TraceLike) -> TraceFn:
    if callable(value):
        return value
    v = float(value)
    return lambda t: v


@dataclass(frozen=True)
class BoundaryKind:
    """Boundary condition of one axis.

    For Dirichlet, ``left``/``right`` are the traces U_0(t), U_{N+1}(t); they
    apply to every velocity component on that face.
    """

    kind: BCKind
    left: TraceFn | None = None
    right: TraceFn | None = None

    @classmethod
    def periodic(cls) -> "BoundaryKind":
        return cls(BCKind.PERIODIC)

    @classmethod
    def open(cls) -> "BoundaryKind":
        return cls(BCKind.OPEN)

    @classmethod
    def dirichlet(cls, left: TraceLike = 0.0, right: TraceLike = 0.0) -> "BoundaryKind":
        return cls(BCKind.DIRICHLET, _as_trace(left), _as_trace(right))

    def traces(self, t: float = 0.0) -> tuple[float, float]:
        if self.kind is not BCKind.DIRICHLET:
            return 0.0, 0.0
        left, right = float(self.left(t)), float(self.right(t))
        if not (np.isfinite(left) and np.isfinite(right)):
            raise GridError(f"non-finite Dirichlet trace at t={t}: ({left}, {right})")
        return left, right

    def to_json(self, t: float = 0.0) -> dict:
        doc: dict = {"kind": self.kind.value}
        if self.kind is BCKind.DIRICHLET:
            doc["left"], doc["right"] = self.traces(t)
        return doc

    @classmethod
    def from_json(cls, doc: dict | str) -> "BoundaryKind":
        if isinstance(doc, str):
            doc = {"kind": doc}
        kind = BCKind(doc["kind"])
        if kind is BCKind.DIRICHLET:
            return cls.dirichlet(doc.get("left", 0.0), doc.get("right", 0.0))
        return cls(kind)


PERIODIC = BoundaryKind.periodic()
OPEN = BoundaryKind.open()


@dataclass(frozen=True)
class GridSpec:
    d: int
    N: int
    L: float
    bc: tuple[BoundaryKind, ...]
    origin: float = 0.0

    @property
    def dx(self) -> float:
        return self.L / (self.N - 1)

    @property
    def n_points(self) -> int:
        return self.N**self.d

    @property
    def n_state(self) -> int:
        return self.d * self.N**self.d

    @property
    def is_power_of_two(self) -> bool:
        return self.N & (self.N - 1) == 0

    def nodes(self) -> np.ndarray:
        return self.origin + self.dx * np.arange(self.N)

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Node coordinates per axis, flattened with axis 0 slowest."""
        x = self.nodes()
        grids = np.meshgrid(*([x] * self.d), indexing="ij")
        return tuple(g.ravel() for g in grids)

    def period(self, axis: int = 0) -> float:
        """Length of one period of the (possibly extended) axis signal."""
        kind = self.bc[axis].kind
        if kind is BCKind.PERIODIC:
            return self.N * self.dx
        if kind is BCKind.DIRICHLET:
            return 2 * (self.N + 1) * self.dx
        return 2 * self.N * self.dx

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "N": self.N,
            "L": self.L,
            "origin": self.origin,
            "bc": [b.to_json() for b in self.bc],
        }


def make_grid(
    d: int,
    N: int,
    L: float,
    bc: Sequence[BoundaryKind | str],
    origin: float = 0.0,
) -> GridSpec:
    """Validate and build a uniform hypercube grid with ``dx = L/(N-1)``.

    A ``GridResolutionWarning`` is emitted when N is not a power of two.
    """
    if d not in (1, 2, 3):
        raise GridError(f"dimension must be 1, 2 or 3, got {d}")
    if int(N) != N or N < 4:
        raise GridError(f"need N >= 4 grid points per axis, got {N}")
    if not L > 0:
        raise GridError(f"box length must be positive, got {L}")
    bcs = tuple(BoundaryKind.from_json(b) if isinstance(b, (str, dict)) else b for b in bc)
    if len(bcs) != d:
        raise GridError(f"expected {d} boundary kinds, got {len(bcs)}")
    for b in bcs:
        if not isinstance(b, BoundaryKind):
            raise GridError(f"not a boundary kind: {b!r}")
    grid = GridSpec(d, int(N), float(L), bcs, float(origin))
    if not grid.is_power_of_two:
        warnings.warn(f"N={N} is not a power of 2", GridResolutionWarning, stacklevel=2)
    return grid


def dirichlet_grid(
    d: int, N: int, a: float, b: float, left: TraceLike = 0.0, right: TraceLike = 0.0
) -> GridSpec:
    """Grid whose Dirichlet traces sit exactly at ``a`` and ``b``.

    The N unknowns are the interior nodes of [a, b]; spacing is (b-a)/(N+1).
    """
    if not b > a:
        raise GridError(f"need b > a, got [{a}, {b}]")
    h = (b - a) / (N + 1)
    bc = [BoundaryKind.dirichlet(left, right)] * d
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridResolutionWarning)
        return make_grid(d, N, (N - 1) * h, bc, origin=a + h)


@dataclass(frozen=True)
class AffineOperator:
    """``apply(u, t) = matrix @ u + offset(t)``; ``offset=None`` means zero."""

    matrix: sp.csr_matrix
    offset: Callable[[float], np.ndarray] | None = field(default=None, compare=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def is_linear(self) -> bool:
        return self.offset is None

    def offset_at(self, t: float = 0.0) -> np.ndarray:
        if self.offset is None:
            return np.zeros(self.matrix.shape[0])
        return np.asarray(self.offset(t), dtype=float)

    def apply(self, u: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.matrix @ np.asarray(u, dtype=float) + self.offset_at(t)

    def to_json(self, sample_times: Sequence[float] = (0.0,)) -> dict:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        triplets = [
            [int(coo.row[k]), int(coo.col[k]), float(coo.data[k])] for k in order
        ]
        doc = {
            "rows": int(self.matrix.shape[0]),
            "cols": int(self.matrix.shape[1]),
            "triplets": triplets,
            "offset_kind": "zero" if self.offset is None else "sampled",
            "offset_samples": [],
        }
        if self.offset is not None:
            doc["offset_samples"] = [
                {"t": float(t), "values": self.offset_at(t).tolist()} for t in sample_times
            ]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "AffineOperator":
        """Rebuild an operator; a sampled offset becomes piecewise constant in t."""
        trip = np.asarray(doc["triplets"], dtype=float).reshape(-1, 3)
        matrix = sp.csr_matrix(
            (trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))),
            shape=(doc["rows"], doc["cols"]),
        )
        samples = doc.get("offset_samples") or []
        if doc.get("offset_kind", "zero") == "zero" or not samples:
            return cls(matrix)
        times = np.array([s["t"] for s in samples])
        values = np.array([s["values"] for s in samples], dtype=float)

        def offset(t: float) -> np.ndarray:
            k = max(int(np.searchsorted(times, t, side="right")) - 1, 0)
            return values[k].copy()

        return cls(matrix, offset)


def _check_size(N: int, minimum: int = 3) -> None:
    if int(N) != N or N < minimum:
        raise GridError(f"operator needs N >= {minimum}, got {N}")


def _central_first(N: int, dx: float) -> sp.lil_matrix:
    off = np.full(N - 1, 1.0 / (2.0 * dx))
    return sp.diags([-off, off], [-1, 1], shape=(N, N), format="lil")


def derivative_pbc(N: int, dx: float) -> AffineOperator:
    """Periodic central first derivative (antisymmetric circulant)."""
    _check_size(N)
    m = _central_first(N, dx)
    m[0, N - 1] = -1.0 / (2.0 * dx)
    m[N - 1, 0] = 1.0 / (2.0 * dx)
    return AffineOperator(m.tocsr())


def derivative_obc(N: int, dx: float) -> AffineOperator:
    """Open-boundary central first derivative: tridiagonal, no wrap."""
    _check_size(N)
    return AffineOperator(_central_first(N, dx).tocsr())


def second_difference(N: int, dx: float) -> sp.csr_matrix:
    """tridiag(1, -2, 1) / dx**2."""
    _check_size(N)
    main = np.full(N, -2.0)
    side = np.ones(N - 1)
    return sp.diags([side, main, side], [-1, 0, 1], format="csr") / dx**2


def derivative_dirichlet(
    N: int, dx: float, order: int, left: TraceLike = 0.0, right: TraceLike = 0.0
) -> AffineOperator:
    """Dirichlet derivative of order 1 or 2 on the N interior unknowns.

    The boundary traces enter only through the offset vector: for order 1 it
    is ``(-left, 0, ..., 0, right) / (2 dx)``, for order 2
    ``(left, 0, ..., 0, right) / dx**2``.
    """
    _check_size(N)
    lf, rf = _as_trace(left), _as_trace(right)
    if order == 1:
        matrix = _central_first(N, dx).tocsr()
        scale_l, scale_r = -1.0 / (2.0 * dx), 1.0 / (2.0 * dx)
    elif order == 2:
        matrix = second_difference(N, dx)
        scale_l = scale_r = 1.0 / dx**2
    else:
        raise GridError(f"unsupported derivative order {order}; use 1 or 2")

    def offset(t: float) -> np.ndarray:
        b = np.zeros(N)
        b[0] += scale_l * float(lf(t))
        b[-1] += scale_r * float(rf(t))
        return b

    return AffineOperator(matrix, offset)


def first_derivative(bc: BoundaryKind, N: int, dx: float) -> AffineOperator:
    if bc.kind is BCKind.PERIODIC:
        return derivative_pbc(N, dx)
    if bc.kind is BCKind.OPEN:
        return derivative_obc(N, dx)
    return derivative_dirichlet(N, dx, 1, bc.left, bc.right)


def second_derivative(bc: BoundaryKind, N: int, dx: float) -> AffineOperator:
    """Periodic/open: square of the first derivative. Dirichlet: 3-point stencil."""
    if bc.kind is BCKind.DIRICHLET:
        return derivative_dirichlet(N, dx, 2, bc.left, bc.right)
    d1 = first_derivative(bc, N, dx).matrix
    return AffineOperator((d1 @ d1).tocsr())


# --- spectra -----------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumReport:
    kind: BCKind
    order: int
    numerical: np.ndarray
    derived: np.ndarray
    paper: np.ndarray
    derived_error: float
    paper_error: float
    tol: float

    @property
    def derived_agrees(self) -> bool:
        return self.derived_error <= self.tol

    @property
    def paper_agrees(self) -> bool:
        return self.paper_error <= self.tol


def sort_spectrum(vals: np.ndarray) -> np.ndarray:
    vals = np.asarray(vals, dtype=complex)
    key = np.lexsort((np.round(vals.real, 9), np.round(vals.imag, 9)))
    return vals[key]


def spectrum_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Max relative distance between two eigenvalue multisets."""
    a, b = sort_spectrum(a), sort_spectrum(b)
    scale = max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def circulant_eigenvalues(first_row: np.ndarray) -> np.ndarray:
    """Eigenvalues of a circulant with first row c: sum_j c_j w^(jk)."""
    c = np.asarray(first_row, dtype=complex)
    N = len(c)
    j = np.arange(N)
    return np.array([np.sum(c * np.exp(2j * np.pi * j * k / N)) for k in range(N)])


def tridiagonal_toeplitz_eigenvalues(N: int, a: float, b: float, c: float) -> np.ndarray:
    """Eigenvalues of tridiag(sub=c, diag=a, super=b): a + 2 sqrt(bc) cos(pi k/(N+1))."""
    k = np.arange(1, N + 1)
    return a + 2.0 * np.sqrt(complex(b * c)) * np.cos(np.pi * k / (N + 1))


def analytic_spectrum(
    kind: BCKind | BoundaryKind, N: int, dx: float, order: int = 1, tol: float = 1e-9
) -> SpectrumReport:
    """Compare the spectrum of the constructed operator with closed forms.

    ``derived`` uses the exact circulant / tridiagonal-Toeplitz formulas (1/dx
    prefactor); ``paper`` uses the alternative 1/(2 dx) prefactor. The numerical
    spectrum of the matrix is the reference for both error figures.
    """
    if isinstance(kind, BoundaryKind):
        kind = kind.kind
    kind = BCKind(kind)
    if kind is BCKind.DIRICHLET:
        raise GridError("spectrum of an affine Dirichlet operator is not defined here")
    if order not in (1, 2):
        raise GridError(f"unsupported order {order}")
    bc = BoundaryKind(kind)
    m = first_derivative(bc, N, dx).matrix
    if order == 2:
        m = m @ m
    numerical = np.linalg.eigvals(m.toarray())

    if kind is BCKind.PERIODIC:
        k = np.arange(N)
        row = np.zeros(N)
        row[1], row[-1] = 1.0 / (2 * dx), -1.0 / (2 * dx)
        derived = circulant_eigenvalues(row)
        paper = 1j * np.sin(2 * np.pi * k / N) / (2 * dx)
    else:
        derived = tridiagonal_toeplitz_eigenvalues(N, 0.0, 1.0 / (2 * dx), -1.0 / (2 * dx))
        k = np.arange(1, N + 1)
        L = (N - 1) * dx
        paper = 1j * (N - 1) / (2 * L) * np.cos(np.pi * k / (N + 1))
    if order == 2:
        derived, paper = derived**2, paper**2
    return SpectrumReport(
        kind=kind,
        order=order,
        numerical=sort_spectrum(numerical),
        derived=sort_spectrum(derived),
        paper=sort_spectrum(paper),
        derived_error=spectrum_distance(derived, numerical),
        paper_error=spectrum_distance(paper, numerical),
        tol=tol,
    )


def pbc_kernel_vectors(N: int) -> np.ndarray:
    """The two normalised alternating kernel vectors of the even-N periodic derivative."""
    if N % 2:
        raise GridError("alternating kernel vector needs even N")
    ones = np.ones(N) / np.sqrt(N)
    alt = np.where(np.arange(N) % 2 == 0, 1.0, -1.0) / np.sqrt(N)
    return np.vstack([ones, alt])


def spectral_norm(op, dense_limit: int = 1024) -> float:
    """Largest singular value of a matrix or operator.

    Dense path when the smaller side is at most ``dense_limit`` (via the Gram
    matrix of that side); otherwise power iteration on M^T M from a fixed
    seeded Gaussian start. An all-ones start would sit in the kernel of the
    periodic derivative.
    """
    m = op.matrix if isinstance(op, AffineOperator) else op
    m = sp.csr_matrix(m) if not sp.issparse(m) else m.tocsr()
    if m.shape[0] == 0 or m.shape[1] == 0:
        raise GridError("spectral norm of an empty matrix")
    if m.nnz == 0 or not np.any(m.data):
        return 0.0
    rows, cols = m.shape
    if min(rows, cols) <= dense_limit:
        if max(rows, cols) <= 2 * dense_limit:
            return float(np.linalg.norm(m.toarray(), 2))
        gram = (m @ m.T) if rows <= cols else (m.T @ m)
        lam = np.linalg.eigvalsh(gram.toarray())
        return float(np.sqrt(max(lam[-1], 0.0)))
    v = np.random.default_rng(0).standard_normal(cols)
    v /= np.linalg.norm(v)
    sigma2 = 0.0
    for _ in range(20000):
        w = m.T @ (m @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - sigma2) <= 1e-14 * new:
            sigma2 = new
            break
        sigma2 = new
    return float(np.sqrt(sigma2))
