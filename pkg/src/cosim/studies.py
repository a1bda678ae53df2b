"""Convergence-order and model-reduction studies."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coupler import CoupledProblem, DynamicIteration, Monolithic, WeakSync, run, sup_deviation
from .eqs import EQSSystem, partition, solve_full
from .integrate import IntegratorConfig
from .pod import RankDeficient, build_basis, mor_report, reduce, solve_reduced


def map_ordered(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally on a thread pool; order is kept."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


@dataclass
class RateTable:
    parameter: str
    values: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    residual: float
    floor: float
    floor_reached: bool
    iterations: list = field(default_factory=list)

    @property
    def local_slopes(self) -> np.ndarray:
        """Slope between consecutive points (first entry NaN)."""
        out = np.full(self.values.size, np.nan)
        v, e = self.values, self.errors
        with np.errstate(divide="ignore", invalid="ignore"):
            out[1:] = np.log(e[1:] / e[:-1]) / np.log(v[1:] / v[:-1])
        return out


def fit_loglog(values, errors, floor: float = 0.0) -> tuple[float, float, float, bool]:
    """Least-squares fit ``log e = slope * log v + intercept``.

    Points with ``error <= floor`` are dropped. Returns ``(slope, intercept,
    rms residual, floor_reached)``; with fewer than two usable points the
    fit is NaN and ``floor_reached`` is set.
    """
    v = np.asarray(values, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = e > floor
    if keep.sum() < 2:
        return math.nan, math.nan, math.nan, True
    x, y = np.log(v[keep]), np.log(e[keep])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(res**2))), bool(keep.sum() < v.size)


def convergence_study(
    factory: Callable[[], CoupledProblem],
    parameter: str,
    values: Sequence[float],
    T_end: float,
    cfg: IntegratorConfig,
    sweep: str = "gauss-seidel",
    order=None,
    sweeps: int = 1,
    quantity: str = "all",
    threads: int = 1,
) -> RateTable:
    """Error of a partitioned run against the monolithic run at the same step.

    ``parameter == "window"``: dynamic iteration limited to ``sweeps`` sweeps
    per window of length ``H`` (the default of one sweep measures the
    first-sweep splitting error). ``parameter == "sync_step"``: weak
    coupling. Both runs share the integrator, so the time discretisation
    error cancels and only the splitting error remains. The error is the
    sup-norm deviation over all nodes of the chosen ``quantity``
    (``"all"``, ``"y"`` or ``"z"``).
    """
    if parameter not in ("window", "sync_step"):
        raise ValueError("parameter must be 'window' or 'sync_step'")
    values = [float(v) for v in values]
    ref = run(factory(), Monolithic(), T_end, cfg).trajectories

    def point(v):
        problem = factory()
        if parameter == "window":
            mode = DynamicIteration(window=v, sweep=sweep, k_max=sweeps, tol=1e-300)
        else:
            mode = WeakSync(v)
        res = run(problem, mode, T_end, cfg, order=order)
        its = res.convergence.iterations if res.convergence else []
        return sup_deviation(ref, res.trajectories, part=quantity), its

    results = map_ordered(point, values, threads)
    errors = np.array([r[0] for r in results])
    floor = 10.0 * cfg.newton_tol
    slope, icpt, resid, floor_reached = fit_loglog(values, errors, floor)
    return RateTable(parameter, np.array(values), errors, slope, icpt, resid, floor, floor_reached, [r[1] for r in results])


@dataclass
class MORStudy:
    n: int
    sigma: np.ndarray
    rows: list[dict]
    full_time: float = 0.0


def mor_study(
    sys: EQSSystem,
    times,
    cfg: IntegratorConfig,
    p_values: Sequence,
    energy: float | None = None,
    threads: int = 1,
) -> MORStudy:
    """One full solve, POD of its exterior snapshots, and one reduced solve per ``p``.

    An entry ``"n"`` in ``p_values`` stands for the full exterior dimension
    (a complete orthonormal basis). With ``energy`` set, an extra row uses
    the smallest basis capturing that energy fraction.
    """
    full = solve_full(sys, times, cfg)
    part = partition(sys)
    n = sys.n_exterior
    requests = [(n if p == "n" else int(p), "fixed") for p in p_values]
    if energy is not None:
        requests.append((None, "energy"))

    def point(req):
        p, how = req
        if how == "energy":
            basis = build_basis(full.snapshots, energy=energy)
        else:
            basis = build_basis(full.snapshots, p=p, complete=True)
        red = solve_reduced(reduce(part, basis), times, cfg)
        rep = mor_report(full, red, sys.unknowns, n, basis.p)
        return {
            "selection": how,
            "p": basis.p,
            "energy_captured": basis.energy_captured,
            "relative_l2": rep.relative_l2,
            "max_node_error": rep.max_node_error,
            "reduction_factor": rep.reduction_factor,
        }

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficient)
        rows = map_ordered(point, requests, threads)
        sigma = build_basis(full.snapshots, p=1).sigma
    return MORStudy(n, sigma, rows)
