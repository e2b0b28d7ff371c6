"""Resolution scales, the nonlinearity ratio R and the N-Re efficiency atlas."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import bisect, brentq

PI2 = math.pi**2


class RegimeError(ValueError):
    """Invalid physical parameters."""


class NonDissipativeError(RegimeError):
    """The dominant linear eigenvalue is not negative, so R is undefined."""


class Flavor(str, Enum):
    INCOMPRESSIBLE_3D = "Incompressible3D"
    EXTREME_GRADIENTS_3D = "ExtremeGradients3D"
    COMPRESSIBLE_3D = "Compressible3D"
    PASSIVE_SCALAR_3D = "PassiveScalar3D"
    TWO_D = "TwoD"
    BURGERS_1D = "Burgers1D"


class RegionLabel(str, Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    V = "V"


@dataclass(frozen=True)
class FlowParams:
    Re: float
    U: float = 1.0
    L: float = 1.0
    d: int = 1
    flavor: Flavor = Flavor.BURGERS_1D
    u0_norm: float = 1.0
    f0_norm: float = 0.0
    beta: float = 0.78
    beta_err: float = 0.03
    Sc: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "flavor", Flavor(self.flavor))
        for name in ("Re", "U", "L"):
            if not getattr(self, name) > 0:
                raise RegimeError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d not in (1, 2, 3):
            raise RegimeError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.u0_norm < 0 or self.f0_norm < 0:
            raise RegimeError("norms must be nonnegative")
        if self.flavor is Flavor.PASSIVE_SCALAR_3D and not (self.Sc is not None and self.Sc > 0):
            raise RegimeError("PassiveScalar3D needs a positive Schmidt number Sc")

    @property
    def nu(self) -> float:
        return self.U * self.L / self.Re

    def with_Re(self, Re: float) -> "FlowParams":
        return replace(self, Re=float(Re))

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["flavor"] = self.flavor.value
        doc["nu"] = self.nu
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "FlowParams":
        doc = {k: v for k, v in doc.items() if k != "nu"}
        return cls(**doc)


@dataclass(frozen=True)
class KolmogorovEstimate:
    eta: float
    limiting_scale: float
    N_min: int
    epsilon: float
    tau: float
    u_eta: float
    eta_ext: float | None = None
    eta_min: float | None = None
    eta_B: float | None = None
    eta_ext_band: tuple[float, float] | None = None
    N_mixing_printed: int | None = None


def _ceil(x: float) -> int:
    # Re**0.75 lands a few ulps above integers such as 1000
    return int(math.ceil(x * (1.0 - 1e-12)))


def _scales(p: FlowParams, Re: float) -> tuple[float, dict]:
    """Limiting length over L, plus the flavor's named scales (also over L)."""
    eta = Re**-0.75
    extra: dict = {}
    f = p.flavor
    if f is Flavor.INCOMPRESSIBLE_3D or f is Flavor.COMPRESSIBLE_3D:
        return eta, {"eta": eta}
    if f is Flavor.EXTREME_GRADIENTS_3D:
        alpha = p.beta - 0.5
        eta_ext = eta * Re ** (-alpha / 2)
        eta_min = 1.0 / Re
        extra = {"eta": eta, "eta_ext": eta_ext, "eta_min": eta_min}
        return min(eta_ext, eta_min), extra
    if f is Flavor.PASSIVE_SCALAR_3D:
        eta_B = eta / math.sqrt(p.Sc)
        return eta_B, {"eta": eta, "eta_B": eta_B}
    if f is Flavor.TWO_D:
        eta = Re**-0.5
        return eta, {"eta": eta}
    eta = 1.0 / Re
    return eta, {"eta": eta}


def kolmogorov_scale(params: FlowParams) -> KolmogorovEstimate:
    """Smallest dynamically relevant length and grid points needed to resolve it."""
    p = params
    limiting, s = _scales(p, p.Re)
    L = p.L
    eta = s["eta"] * L
    kw = {}
    if "eta_ext" in s:
        kw["eta_ext"] = s["eta_ext"] * L
        kw["eta_min"] = s["eta_min"] * L
        band = []
        for beta in (p.beta + p.beta_err, p.beta - p.beta_err):
            band.append(eta * p.Re ** (-(beta - 0.5) / 2))
        kw["eta_ext_band"] = (band[0], band[1])
    if "eta_B" in s:
        kw["eta_B"] = s["eta_B"] * L
        kw["N_mixing_printed"] = _ceil(p.Re**0.75 / math.sqrt(p.Sc))
    return KolmogorovEstimate(
        eta=eta,
        limiting_scale=limiting * L,
        N_min=max(2, _ceil(1.0 / limiting)),
        epsilon=p.U**3 / L,
        tau=L / p.U,
        u_eta=p.nu / eta,
        **kw,
    )


def kolmogorov_frontier_Re(params: FlowParams, N: float) -> float:
    """Re at which the flavor's resolution requirement L/limiting equals N."""
    if N <= 1:
        return 0.0
    g = lambda logRe: -math.log(_scales(params, math.exp(logRe))[0]) - math.log(N)  # noqa: E731
    return math.exp(brentq(g, -30.0, 60.0, xtol=1e-14, rtol=4 * np.finfo(float).eps))


def compute_R(f1_dominant_eig: float, f2_norm: float, f0_norm: float, u0_norm: float) -> float:
    """R = (‖u0‖ ‖F2‖ + ‖F0‖/‖u0‖) / |Re λ1|."""
    if not f1_dominant_eig < 0:
        raise NonDissipativeError(
            f"dominant eigenvalue {f1_dominant_eig} is not negative; R is undefined"
        )
    if not u0_norm > 0:
        raise RegimeError(f"initial-condition norm must be positive, got {u0_norm}")
    if f2_norm < 0 or f0_norm < 0:
        raise RegimeError("norms must be nonnegative")
    return (u0_norm * f2_norm + f0_norm / u0_norm) / abs(f1_dominant_eig)


def _bracket(p: FlowParams, N: float) -> float:
    d = p.d
    return p.u0_norm * d * d * N**1.5 / (2.0 * p.L) + p.f0_norm / p.u0_norm


def estimate_R_of_N(params: FlowParams, N: float) -> float:
    """Open-boundary estimate R(N) = L²/(d ν π²) · (‖u0‖ d² N^{3/2}/(2L) + ‖F0‖/‖u0‖)."""
    p = params
    if not p.u0_norm > 0:
        raise RegimeError("u0_norm must be positive")
    return p.L**2 / (p.d * p.nu * PI2) * _bracket(p, N)


def efficiency_frontier_Re(params: FlowParams, N: float) -> float:
    """Re with R(N) = 1; for d = 1 this is Uπ²/(‖u0‖N^{3/2}/2 + L‖F0‖/‖u0‖)."""
    p = params
    if not p.u0_norm > 0:
        raise RegimeError("u0_norm must be positive")
    return p.d * p.U * PI2 / (p.L * _bracket(p, N))


@dataclass(frozen=True)
class RKS:
    r_paper: float
    r_substituted: float

    @property
    def divergence(self) -> float:
        return self.r_substituted - self.r_paper


def r_ks(params: FlowParams) -> RKS:
    """R at the Kolmogorov-scale grid: the closed form and R(N_min) side by side."""
    p = params
    if not p.u0_norm > 0:
        raise RegimeError("u0_norm must be positive")
    r_paper = p.u0_norm * (2.0 * p.Re * p.U) ** 1.5 / PI2 + p.L * p.f0_norm / (PI2 * p.u0_norm)
    r_sub = estimate_R_of_N(p, kolmogorov_scale(p).N_min)
    return RKS(r_paper, r_sub)


def n_star_rhs(params: FlowParams, N: float) -> float:
    p = params
    return p.U * PI2 / (p.d / 2 * p.u0_norm * N**1.5 + p.L * p.f0_norm / (p.d * p.u0_norm))


@dataclass(frozen=True)
class Crossing:
    N_star: float
    residual: float


def crossing_N_star(params: FlowParams, lo: float = 1.0, hi: float = 1e6) -> Crossing:
    """Fixed point N = Uπ² / ((d/2)‖u0‖N^{3/2} + L‖F0‖/(d‖u0‖)) by bisection."""
    if not params.u0_norm > 0:
        raise RegimeError("u0_norm must be positive")
    g = lambda N: N - n_star_rhs(params, N)  # noqa: E731
    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0.0:
        root = lo
    elif g_hi == 0.0:
        root = hi
    elif g_lo * g_hi > 0:
        raise RegimeError(f"no sign change of N - RHS(N) on [{lo}, {hi}]")
    else:
        root = bisect(g, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=400)
    return Crossing(float(root), abs(g(root)))


@dataclass(frozen=True)
class RegionPoint:
    N: float
    Re: float
    R: float
    R_ks_paper: float
    N_K: int
    label: RegionLabel


def classify_region(params: FlowParams, N: float) -> RegionPoint:
    """Region I-V of the (N, Re) point; ties go to the efficient/resolved side."""
    if N < 1:
        raise RegimeError(f"need N >= 1, got {N}")
    R = estimate_R_of_N(params, N)
    N_K = kolmogorov_scale(params).N_min
    rks = r_ks(params).r_paper
    eff, resolved, eff_ks = R <= 1.0, N >= N_K, rks <= 1.0
    if eff:
        label = RegionLabel.II if resolved else RegionLabel.I
    elif not resolved:
        label = RegionLabel.V
    else:
        label = RegionLabel.III if eff_ks else RegionLabel.IV
    return RegionPoint(float(N), params.Re, R, rks, N_K, label)


@dataclass(frozen=True)
class FrontierPoint:
    N: float
    Re_frontier: float
    N_K_frontier: float


@dataclass(frozen=True)
class RegionMap:
    points: tuple[RegionPoint, ...]
    frontier: tuple[FrontierPoint, ...]

    @property
    def labels(self) -> set[str]:
        return {p.label.value for p in self.points}


def lattice(lo: float, hi: float, count: int, integer: bool = False) -> np.ndarray:
    vals = np.geomspace(lo, hi, count)
    return np.unique(np.rint(vals)) if integer else vals


def region_map(
    params: FlowParams,
    N_range: Sequence[float],
    Re_range: Sequence[float],
    resolution: int | Sequence[int] = 64,
    integer_N: bool = True,
    workers: int = 1,
) -> RegionMap:
    """Labels over a log-spaced (N, Re) lattice plus both frontier curves.

    Rows are ordered by N then Re regardless of ``workers``.
    """
    nN, nRe = (resolution, resolution) if np.isscalar(resolution) else resolution
    if nN < 2 or nRe < 2:
        raise RegimeError("need at least 2 lattice points per axis")
    if min(*N_range, *Re_range) <= 0:
        raise RegimeError("ranges must be positive")
    Ns = lattice(N_range[0], N_range[1], nN, integer_N)
    Res = lattice(Re_range[0], Re_range[1], nRe)
    pairs = [(N, Re) for N in Ns for Re in Res]
    task = lambda nr: classify_region(params.with_Re(nr[1]), nr[0])  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = tuple(pool.map(task, pairs))
    else:
        points = tuple(map(task, pairs))
    frontier = tuple(
        FrontierPoint(float(N), efficiency_frontier_Re(params, N), kolmogorov_frontier_Re(params, N))
        for N in Ns
    )
    return RegionMap(points, frontier)
