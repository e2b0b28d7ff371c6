"""Experiment drivers: validated config in, tables and derived quantities out.

Every function takes the defaults-filled config produced by
``config.validate_config`` and returns an ``ExperimentResult``. Numeric
defaults come from the schema, not from here.
"""
from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import grid_ops as go
from .carleman import (
    Trajectory,
    carleman_blocks,
    fit_exponential,
    initial_carleman_state,
    integrate_linear,
    truncation_error_sweep,
)
from .field_ops import QuadraticODE, assemble_system, axis_derivative_norm, f1_dominant_eig
from .grid_ops import GridResolutionWarning, GridSpec
from .reference import (
    ShockProfile,
    integrate_nonlinear,
    integrate_to_steady,
    observed_order,
    radius_of_convergence,
    toy_solution,
    toy_system,
)
from .regimes import (
    FlowParams,
    classify_region,
    compute_R,
    crossing_N_star,
    kolmogorov_scale,
    r_ks,
    region_map,
)
from .spectral import cascade_compare, energy_spectrum, kappa_bounds
from .tables import Table


@dataclass
class ExperimentResult:
    tables: list[Table]
    derived: dict
    documents: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def _pmap(fn: Callable, items, workers: int) -> list:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def build_grid(g: dict, N: int | None = None) -> GridSpec:
    N = g["N"] if N is None else N
    a, b = g["interval"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridResolutionWarning)
        if g["bc"] == "dirichlet":
            return go.dirichlet_grid(g["d"], N, a, b, g["left"], g["right"])
        return go.make_grid(g["d"], N, b - a, [g["bc"]] * g["d"], origin=a)


def build_forcing(f: dict):
    if f["kind"] == "none":
        return None
    A, c, s = f["amplitude"], f["center"], f["sigma"]

    def gaussian(X, t):
        r2 = sum((x - c) ** 2 for x in X)
        bump = A * np.exp(-r2 / (2 * s * s))
        return np.tile(bump, len(X))

    return gaussian


def build_initial(ic: dict, grid: GridSpec, nu: float) -> np.ndarray:
    x = grid.mesh()[0]
    kind = ic["kind"]
    if kind == "sine":
        u = ic["amplitude"] * np.sin(2 * np.pi * ic["wavenumber"] * x)
    elif kind == "linear":
        u = ic["slope"] * x
    elif kind == "shock":
        bc = grid.bc[0]
        u = ShockProfile(bc.left(0.0), bc.right(0.0), nu)(x)
    else:
        u = np.zeros_like(x)
    return np.tile(u, grid.d)


def initial_peak(ic: dict, u0: np.ndarray) -> float:
    """max_x |u(x, 0)| of the continuous initial field where known, else of the samples."""
    if ic["kind"] == "sine":
        return abs(ic["amplitude"])
    return float(np.max(np.abs(u0)))


def viscosity(phys: dict) -> float:
    return phys["U"] * phys["L"] / phys["Re"]


def _system(p: dict, N: int | None = None) -> tuple[GridSpec, QuadraticODE, float]:
    grid = build_grid(p["grid"], N)
    nu = viscosity(p["physics"])
    return grid, assemble_system(grid, nu, build_forcing(p["forcing"])), nu


def _steady_shock_reference(grid: GridSpec, nu: float) -> ShockProfile | None:
    bc = grid.bc[0]
    if grid.d != 1 or bc.kind is not go.BCKind.DIRICHLET:
        return None
    ua, ub = bc.left(0.0), bc.right(0.0)
    return ShockProfile(ua, ub, nu) if ua > ub else None


def run_ops(cfg: dict, workers: int = 1) -> ExperimentResult:
    p = cfg["problem"]
    spectra = Table(
        "spectra", ["kind", "N", "index", "numerical_im", "derived_im", "paper_im", "max_real"],
        plot="lines", plot_spec={"x": "index", "y": "numerical_im", "group": "N"},
    )
    derived: dict = {"spectrum_max_deviation": {}}
    for kind in (go.BCKind.PERIODIC, go.BCKind.OPEN):
        for N in p["spectrum_sizes"]:
            rep = go.analytic_spectrum(kind, N, 1.0 / (N - 1))
            for i, (num, der, pap) in enumerate(zip(rep.numerical, rep.derived, rep.paper)):
                spectra.append(kind.value, N, i, num.imag, der.imag, pap.imag, num.real)
            derived["spectrum_max_deviation"][f"{kind.value}_{N}"] = {
                "derived": rep.derived_error, "paper": rep.paper_error,
            }
    grid = build_grid(p["grid"])
    ode = assemble_system(grid, p["nu"], build_forcing(p["forcing"]))
    f2n = go.spectral_norm(ode.F2)
    dn = axis_derivative_norm(grid)
    norms = Table("norms", ["d", "N", "bc", "F2_norm", "D_norm", "bound", "holds"])
    norms.append(grid.d, grid.N, grid.bc[0].kind.value, f2n, dn, grid.d**2 * dn, f2n <= grid.d**2 * dn * (1 + 1e-12))
    derived.update({
        "dx": grid.dx, "n": ode.n, "F2_norm": f2n, "D_norm": dn,
        "norm_bound_holds": bool(f2n <= grid.d**2 * dn * (1 + 1e-12)),
    })
    if ode.n <= 4096:
        derived["F1_dominant_eig"] = f1_dominant_eig(ode.F1)
    return ExperimentResult([spectra, norms], derived, {"operators": ode.to_json(p["sample_times"])})


def _steady_error(p: dict, solver: dict, N: int | None) -> tuple[GridSpec, np.ndarray, float, ShockProfile | None, object]:
    grid, ode, nu = _system(p, N)
    u0 = build_initial(p["initial"], grid, nu)
    phys = p["physics"]
    st = integrate_to_steady(ode, u0, tol=solver["steady_tol"], t_max=solver["steady_t_factor"] * phys["L"] / phys["U"])
    ref = _steady_shock_reference(grid, nu)
    err = float(np.max(np.abs(st.u - ref(grid.nodes())))) if ref is not None else math.nan
    return grid, st.u, err, ref, st


def run_dns(cfg: dict, workers: int = 1) -> ExperimentResult:
    p, solver = cfg["problem"], cfg["solver"]
    phys = p["physics"]
    nu = viscosity(phys)
    derived: dict = {"nu": nu, "N_K": kolmogorov_scale(FlowParams(Re=phys["Re"], U=phys["U"], L=phys["L"])).N_min}
    tables = []
    if p["steady"]:
        grid, u, err, ref, st = _steady_error(p, solver, None)
        tab = Table("steady", ["x", "u", "u_exact", "error"], plot="lines", plot_spec={"x": "x", "y": "u"})
        exact = ref(grid.nodes()) if ref is not None else np.full(grid.N, math.nan)
        for x, ui, ue in zip(grid.nodes(), u[: grid.N], exact):
            tab.append(x, ui, ue, abs(ui - ue))
        tables.append(tab)
        derived.update({"dx": grid.dx, "steady_residual": st.residual, "steady_converged": st.converged,
                        "steady_t": st.t, "max_error": err})
        if ref is not None:
            derived["shock_width"] = ref.width
        if p["refinements"]:
            results = _pmap(lambda N: _steady_error(p, solver, N), p["refinements"], workers)
            conv = Table("convergence", ["N", "dx", "error", "order"], plot="loglog",
                         plot_spec={"x": "dx", "y": "error"})
            dxs = [r[0].dx for r in results]
            errs = [r[2] for r in results]
            orders = [math.nan] + list(observed_order(errs, dxs))
            for N, dx, e, o in zip(p["refinements"], dxs, errs, orders):
                conv.append(N, dx, e, o)
            tables.append(conv)
            derived["observed_orders"] = orders[1:]
    else:
        grid, ode, _ = _system(p)
        u0 = build_initial(p["initial"], grid, nu)
        times = np.linspace(0.0, p["t_end"], p["samples"])
        traj = integrate_nonlinear(ode, u0, (0.0, p["t_end"]), times, solver["atol"], solver["rtol"], solver["method"])
        tab = Table("trajectory", ["t"] + [f"u_{i + 1}" for i in range(ode.n)])
        for t, row in zip(traj.times, traj.states):
            tab.append(t, *row)
        tables.append(tab)
        derived.update({"dx": grid.dx, "nfev": traj.meta["nfev"]})
    return ExperimentResult(tables, derived)


def run_spectrum(cfg: dict, workers: int = 1) -> ExperimentResult:
    p, solver = cfg["problem"], cfg["solver"]
    phys = p["physics"]
    nu = viscosity(phys)
    sizes = sorted(p["sizes"])

    def one(N):
        grid = build_grid({**p["grid"], "N": N})
        ode = assemble_system(grid, nu, build_forcing(p["forcing"]))
        u0 = build_initial(p["initial"], grid, nu)
        traj = integrate_nonlinear(ode, u0, (0.0, p["t_eval"]), [p["t_eval"]], solver["atol"], solver["rtol"], solver["method"])
        return grid, energy_spectrum(traj.states[-1][: grid.N], grid)

    results = _pmap(one, sizes, workers)
    series = [s for _, s in results]
    cmp = cascade_compare(series, dealias_fraction=p["dealias_fraction"], threshold=p["threshold"])
    spectra = Table("spectra", ["series_id", "N", "kappa", "energy"], plot="loglog",
                    plot_spec={"x": "kappa", "y": "energy", "group": "N"})
    for i, ((grid, s), N) in enumerate(zip(results, sizes)):
        for k, e in zip(s.kappa[1:], s.energy[1:]):
            spectra.append(i, N, k, e)
    comparison = Table("comparison", ["series_id", "N", "band", "deviation", "flag"])
    for r in cmp.rows:
        comparison.append(r.series_id, sizes[r.series_id], r.band, r.deviation, r.flag)
    derived = {
        "nu": nu,
        "N_K": kolmogorov_scale(FlowParams(Re=phys["Re"], U=phys["U"], L=phys["L"])).N_min,
        "dx": {str(N): g.dx for (g, _), N in zip(results, sizes)},
        "kappa_bounds": {str(N): list(kappa_bounds(g, p["dealias_fraction"])) for (g, _), N in zip(results, sizes)},
        "common_band": list(cmp.common_band),
        "reference_N": sizes[cmp.reference_index],
        "under_resolved": {str(sizes[i]): cmp.under_resolved(i) for i in range(len(sizes)) if i != cmp.reference_index},
        "deviation_all": {str(sizes[i]): cmp.deviation(i, "all") for i in range(len(sizes)) if i != cmp.reference_index},
        "deviation_top_third": {str(sizes[i]): cmp.deviation(i, "top_third") for i in range(len(sizes)) if i != cmp.reference_index},
    }
    return ExperimentResult([spectra, comparison], derived)


def _error_table(result, timing: bool) -> Table:
    cols = ["C", "S", "nnz", "error"] + (["wall_time_s"] if timing else [])
    tab = Table("errors", cols, plot="semilogy", plot_spec={"x": "C", "y": "error"})
    for r in result.rows:
        tab.append(r.C, r.S, r.nnz, r.error, *([r.wall_time_s] if timing else []))
    return tab


def _fit_fields(result) -> dict:
    out = {"monotone": result.monotone}
    if result.fit is not None:
        out.update({"decay_rate": result.fit.rate, "decay_ratio": result.fit.ratio,
                    "fit_r_squared": result.fit.r_squared})
    return out


def burgers_R(grid: GridSpec, ode: QuadraticODE, u0: np.ndarray) -> dict:
    lam = f1_dominant_eig(ode.F1)
    f2 = go.spectral_norm(ode.F2)
    f0 = float(np.linalg.norm(ode.f0(0.0)))
    un = float(np.linalg.norm(u0))
    return {"lambda1": lam, "F2_norm": f2, "F0_norm": f0, "u0_norm": un, "R": compute_R(lam, f2, f0, un)}


def run_carleman_sweep(cfg: dict, workers: int = 1) -> ExperimentResult:
    p, solver, out = cfg["problem"], cfg["solver"], cfg["output"]
    kw = dict(atol=solver["atol"], rtol=solver["rtol"], method=solver["method"],
              nnz_budget=solver["nnz_budget"], workers=workers)
    tables = []
    if p["system"] == "toy":
        R, x0, T = p["R_coef"], p["x0"], p["t_eval"]
        ode, u0 = toy_system(R), np.array([x0])
        ref = Trajectory(np.array([0.0, T]), np.array([[x0], [toy_solution(R, x0, T)]]), {"solver": "closed form"})
        rad = radius_of_convergence(R, x0)
        derived = {"t_eval": T, "t_star": rad.t_star, "R_coef": R}
    else:
        grid, ode, nu = _system(p)
        u0 = build_initial(p["initial"], grid, nu)
        U0 = initial_peak(p["initial"], u0)
        T = p.get("t_eval") or 1.0 / (3.0 * U0)
        ref = integrate_nonlinear(ode, u0, (0.0, T), [T], solver["atol"], solver["rtol"], solver["method"])
        derived = {"t_eval": T, "U0": U0, "nu": nu, "dx": grid.dx, **{f"{k}_N{grid.N}": v for k, v in burgers_R(grid, ode, u0).items()}}
        if p["R_sizes"]:
            rt = Table("R", ["N", "lambda1", "F2_norm", "F0_norm", "u0_norm", "R"])
            for N in p["R_sizes"]:
                g, o, _ = _system(p, N)
                vals = burgers_R(g, o, build_initial(p["initial"], g, nu))
                rt.append(N, *vals.values())
                derived.update({f"{k}_N{N}": v for k, v in vals.items()})
            tables.append(rt)
    result = truncation_error_sweep(ode, u0, p["orders"], T, ref, **kw)
    tables.insert(0, _error_table(result, out["record_timing"]))
    derived.update(_fit_fields(result))
    derived["max_S"] = max(r.S for r in result.rows)
    return ExperimentResult(tables, derived)


def toy_carleman_errors(R: float, x0: float, t: float, max_order: int, solver: dict) -> list[float]:
    """Relative block-1 error of the integrated truncated toy system for C = 1..max_order."""
    exact = toy_solution(R, x0, t)
    errs = []
    for C in range(1, max_order + 1):
        cs = carleman_blocks(toy_system(R), C, solver["nnz_budget"])
        traj = integrate_linear(cs, initial_carleman_state([x0], C), (0.0, t), [t],
                                solver["atol"], solver["rtol"], solver["method"])
        errs.append(abs(traj.states[-1, 0] - exact) / abs(exact))
    return errs


def run_toy_radius(cfg: dict, workers: int = 1) -> ExperimentResult:
    p, solver = cfg["problem"], cfg["solver"]
    x0, Cmax = p["x0"], p["max_order"]
    cases = [(R, t) for R in p["R_coefs"] for t in p["times"]]
    errs = _pmap(lambda rt: toy_carleman_errors(rt[0], x0, rt[1], Cmax, solver), cases, workers)
    tab = Table("toy_radius", ["R_coef", "t", "t_star", "C", "error"], plot="semilogy",
                plot_spec={"x": "C", "y": "error", "group": "t"})
    derived: dict = {"cases": []}
    for (R, t), e in zip(cases, errs):
        ts = radius_of_convergence(R, x0).t_star
        for C, err in enumerate(e, start=1):
            tab.append(R, t, ts, C, err)
        diffs = np.diff(e)
        stall = next((C + 1 for C, d in enumerate(diffs, start=1) if d >= 0), None)
        case = {"R_coef": R, "t": t, "t_star": ts, "decreasing": bool(np.all(diffs < 0)), "first_non_decrease_C": stall}
        if np.all(diffs < 0):
            fit = fit_exponential(range(1, Cmax + 1), e)
            case.update({"decay_ratio": fit.ratio, "fit_r_squared": fit.r_squared})
        derived["cases"].append(case)
    return ExperimentResult([tab], derived)


def run_regimes_map(cfg: dict, workers: int = 1) -> ExperimentResult:
    p = cfg["problem"]
    params = FlowParams(Re=float(p["Re_range"][0]), **p["params"])
    rmap = region_map(params, p["N_range"], p["Re_range"], p["resolution"], workers=workers)
    m = Table("map", ["N", "Re", "R", "R_ks_paper", "N_K", "label"], plot="regions",
              plot_spec={"x": "N", "y": "Re", "overlay": "frontier"})
    for pt in rmap.points:
        m.append(pt.N, pt.Re, pt.R, pt.R_ks_paper, pt.N_K, pt.label)
    fr = Table("frontier", ["N", "Re_frontier", "N_K_frontier"], plot="loglog",
               plot_spec={"x": "N", "y": "Re_frontier"})
    for f in rmap.frontier:
        fr.append(f.N, f.Re_frontier, f.N_K_frontier)
    tables = [m, fr]
    cross = crossing_N_star(params)
    derived = {"N_star": cross.N_star, "N_star_residual": cross.residual,
               "labels_present": sorted(rmap.labels), "lattice_points": len(rmap.points)}
    if p["spot_checks"]:
        spots = Table("spots", ["N", "Re", "R", "R_ks_paper", "R_ks_substituted", "N_K", "label"])
        for N, Re in p["spot_checks"]:
            q = params.with_Re(Re)
            pt = classify_region(q, N)
            spots.append(N, Re, pt.R, pt.R_ks_paper, r_ks(q).r_substituted, pt.N_K, pt.label)
        tables.append(spots)
    return ExperimentResult(tables, derived)


RUNNERS: dict[str, Callable[[dict, int], ExperimentResult]] = {
    "ops": run_ops,
    "dns": run_dns,
    "spectrum": run_spectrum,
    "carleman-sweep": run_carleman_sweep,
    "toy-radius": run_toy_radius,
    "regimes-map": run_regimes_map,
}


def run_experiment(cfg: dict, workers: int = 1) -> ExperimentResult:
    start = time.perf_counter()
    res = RUNNERS[cfg["experiment"]](cfg, workers)
    res.timings["compute_s"] = time.perf_counter() - start
    return res
