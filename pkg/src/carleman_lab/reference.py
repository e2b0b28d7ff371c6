"""Nonlinear reference solutions: direct integration, steady Burgers shock, scalar toy ODE."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.special import expit

from .carleman import DEFAULT_ATOL, DEFAULT_RTOL, SolverError, Trajectory, _solve
from .field_ops import QuadraticODE


class ShockError(ValueError):
    """Shock parameters do not describe a decaying viscous shock."""


class ToyPoleError(ArithmeticError):
    """The toy solution crosses its pole before the requested time."""


def integrate_nonlinear(
    system: QuadraticODE,
    u0: np.ndarray,
    t_span: Sequence[float],
    t_eval: Sequence[float] | None = None,
    atol: float = DEFAULT_ATOL,
    rtol: float = DEFAULT_RTOL,
    method: str = "RK45",
) -> Trajectory:
    """Integrate du/dt = F2(u⊗u) + F1 u + F0(t).

    Explicit Runge-Kutta by default; implicit methods (``"BDF"``, ``"Radau"``)
    receive the analytic Jacobian. A failed step raises ``SolverError`` with
    the time reached.
    """
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (system.n,):
        raise ValueError(f"initial state has size {u0.size}, expected {system.n}")
    return _solve(system.rhs, u0, t_span, t_eval, atol, rtol, method, jac=system.jacobian)


@dataclass(frozen=True)
class SteadyState:
    u: np.ndarray
    t: float
    residual: float
    converged: bool
    newton_steps: int


def integrate_to_steady(
    system: QuadraticODE,
    u0: np.ndarray,
    tol: float = 1e-8,
    t_max: float = 50.0,
    chunk: float = 1.0,
    newton_maxiter: int = 20,
) -> SteadyState:
    """March with BDF until ‖du/dt‖∞ < ``tol`` or ``t_max``, then Newton-polish.

    Marching brings the state into the basin of the steady solution; Newton
    on F(u) = 0 with the analytic Jacobian then drives the residual to
    round-off. ``converged`` reports whether the final residual meets ``tol``.
    """
    u = np.asarray(u0, dtype=float).copy()
    t = 0.0
    loose = max(tol, 1e-4)
    while t < t_max:
        step = min(chunk, t_max - t)
        traj = _solve(system.rhs, u, (t, t + step), None, 1e-10, 1e-8, "BDF", jac=system.jacobian)
        u, t = traj.states[-1], float(traj.times[-1])
        res = float(np.max(np.abs(system.rhs(t, u))))
        if res < loose:
            break
        chunk *= 2
    steps = 0
    for steps in range(1, newton_maxiter + 1):
        r = system.rhs(t, u)
        if np.max(np.abs(r)) < tol * 1e-2:
            break
        du = spsolve(sp.csc_matrix(system.jacobian(t, u)), -r)
        if not np.all(np.isfinite(du)):
            raise SolverError("Newton step diverged", t)
        u = u + du
    res = float(np.max(np.abs(system.rhs(t, u))))
    return SteadyState(u, t, res, res < tol, steps)


@dataclass(frozen=True)
class ShockProfile:
    """Viscous Burgers shock connecting ``ua`` (left) to ``ub`` (right)."""

    ua: float
    ub: float
    nu: float

    def __post_init__(self):
        if not self.ua > self.ub:
            raise ShockError(f"need ua > ub for a decaying shock, got ua={self.ua}, ub={self.ub}")
        if not self.nu > 0:
            raise ShockError(f"viscosity must be positive, got {self.nu}")

    @property
    def width(self) -> float:
        return 2.0 * self.nu / (self.ua - self.ub)

    @property
    def slope_width(self) -> float:
        """(ua - ub) / |u'(0)|, the width read off the centre slope; equals 4·width."""
        return 8.0 * self.nu / (self.ua - self.ub)

    def __call__(self, x) -> np.ndarray:
        z = (self.ua - self.ub) * np.asarray(x, dtype=float) / (2.0 * self.nu)
        # expit(z) = e^z/(1+e^z) without overflow
        return self.ua + (self.ub - self.ua) * expit(z)

    def slope(self, x) -> np.ndarray:
        z = (self.ua - self.ub) * np.asarray(x, dtype=float) / (2.0 * self.nu)
        s = expit(z)
        return -((self.ua - self.ub) ** 2) / (2.0 * self.nu) * s * (1.0 - s)


def burgers_steady_shock(ua: float, ub: float, nu: float, x) -> np.ndarray:
    return ShockProfile(ua, ub, nu)(x)


def shock_width(ua: float, ub: float, nu: float) -> float:
    return ShockProfile(ua, ub, nu).width


def observed_order(errors: Sequence[float], spacings: Sequence[float]) -> np.ndarray:
    """Pairwise convergence orders log(e_k/e_{k+1}) / log(h_k/h_{k+1})."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(spacings, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


def toy_system(R_coef: float) -> QuadraticODE:
    """dx/dt = -x - 𝓡 x² as a one-dimensional quadratic system."""
    zero = np.zeros(1)
    zero.setflags(write=False)
    return QuadraticODE(
        sp.csr_matrix([[-1.0]]), sp.csr_matrix([[-float(R_coef)]]), lambda t: zero
    )


def toy_solution(R_coef: float, x0: float, t):
    """x(t) = x0 e^{-t} / (1 + 𝓡 x0 (1 - e^{-t}))."""
    t_arr = np.asarray(t, dtype=float)
    decay = np.exp(-t_arr)
    denom = 1.0 + R_coef * x0 * (1.0 - decay)
    # the denominator is monotone in t, so a sign change shows up at the endpoints
    if np.any(denom <= 1e-12) or (R_coef * x0 < -1.0 and np.any(t_arr >= -math.log1p(1.0 / (R_coef * x0)))):
        raise ToyPoleError(f"toy solution with 𝓡x0={R_coef * x0} blows up before t={np.max(t_arr)}")
    out = x0 * decay / denom
    return float(out) if np.ndim(out) == 0 else out


def toy_truncated_solution(R_coef: float, x0: float, t, order: int):
    """Block-1 solution of the order-C truncated embedding of the toy ODE.

    The truncated triangular system integrates to the first ``order`` terms of
    the geometric series x0 e^{-t} Σ_k (-𝓡 x0 (1 - e^{-t}))^k.
    """
    t = np.asarray(t, dtype=float)
    q = -R_coef * x0 * (1.0 - np.exp(-t))
    k = np.arange(order).reshape((-1,) + (1,) * t.ndim)
    out = x0 * np.exp(-t) * np.sum(q**k, axis=0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ConvergenceRadius:
    t_star: float
    boundary: bool

    @property
    def finite(self) -> bool:
        return math.isfinite(self.t_star)


def radius_of_convergence(R_coef: float, x0: float = 1.0) -> ConvergenceRadius:
    """Time t* = -log(1 - 1/(𝓡x0)) up to which the Carleman series converges.

    Returns an infinite radius for 𝓡x0 ≤ 1; 𝓡x0 = 1 is flagged as the
    boundary case.
    """
    r = float(R_coef) * float(x0)
    if r < 1.0:
        return ConvergenceRadius(math.inf, False)
    if r == 1.0:
        return ConvergenceRadius(math.inf, True)
    return ConvergenceRadius(-math.log1p(-1.0 / r), False)
