"""Command-line scenario runner.

Verbs: ``run``, ``convergence-study``, ``mor-study``, ``validate``.
Exit codes: 0 success, 2 configuration error, 3 solver failure (a
``diagnostics.json`` is written next to the other outputs).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .coupler import (
    CoupledProblem,
    DynamicIteration,
    Monolithic,
    OneWay,
    WeakSync,
    estimate_contraction,
    run,
    suggest_order,
)
from .electrothermal import CableConfig, CableGeometry, MaterialLaw, cable_problem, cable_results
from .eqs import Arr2DConfig, arr2d, excitation, solve_full
from .errors import (
    ConfigError,
    CosimError,
    CycleDetected,
    GridMismatch,
    IterationDiverged,
    NewtonDiverged,
    PicardDiverged,
    SingularAlgebraicPart,
    WiringError,
)
from .integrate import IntegratorConfig, window_grid
from .scenario import Scenario, load_scenario, resolve_factory
from .studies import convergence_study, mor_study
from .testsystems import lin2

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
SOLVER_ERRORS = (IterationDiverged, NewtonDiverged, PicardDiverged, SingularAlgebraicPart)


# --------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.16e" % float(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    """Comma-separated, '.' decimal, floats with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _threads() -> int:
    raw = os.environ.get("COSIM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"COSIM_THREADS must be a positive integer, got {raw!r}", key="COSIM_THREADS") from None
    if n < 1:
        raise ConfigError("COSIM_THREADS must be a positive integer", key="COSIM_THREADS")
    return n


def _integrator(scn: Scenario) -> IntegratorConfig:
    i = scn.integrator
    return IntegratorConfig(method=i["method"], h=i["h"], newton_tol=i["newton_tol"], newton_max=i["newton_max"])


def _mode(scn: Scenario):
    c = scn.coupling
    m = c["mode"]
    if m == "monolithic":
        return Monolithic()
    if m == "one-way":
        return OneWay(freeze_feedback=True)
    try:
        if m == "weak":
            return WeakSync(c["sync_step"])
        return DynamicIteration(window=c["window"], sweep=m, k_max=c["k_max"], tol=c["tol"])
    except ValueError as exc:
        raise ConfigError(f"invalid coupling parameters: {exc}", key="coupling") from None


def _units(scn: Scenario) -> str:
    return "s" if scn.model in ("cable",) else "-"


def cable_config(scn: Scenario) -> CableConfig:
    p = scn.params
    try:
        law = MaterialLaw(p["k0"], p["alpha_T"], p["beta_E"], p["Cp"], p["rho"], p["lambda_th"])
        geo = CableGeometry(p["r_in"], p["r_out"], p["n_cells"])
    except ValueError as exc:
        raise ConfigError(f"invalid cable parameters: {exc}", key="params") from None
    return CableConfig(
        law=law,
        geometry=geo,
        U0=p["U0"],
        ramp_time=p["ramp_time"],
        T_outer=p["T_outer"],
        T_init=p["T_init"],
        conductor_loss=p["conductor_loss"],
        conductor_losses=p["conductor_losses"],
        insulation_losses=p["insulation_losses"],
        t_end=scn.t_end,
    )


def problem_factory(scn: Scenario):
    """Zero-argument callable building a fresh coupled problem for ``scn``."""
    p = scn.params
    if scn.model == "lin2":
        if len(p["y0"]) != 2:
            raise ConfigError("'params.y0' needs two entries", key="params.y0")
        return lambda: lin2(p["a"], p["b"], tuple(p["y0"]), p["c1"], p["c2"], p["freeze_y"])
    if scn.model == "cable":
        cfg = cable_config(scn)
        return lambda: cable_problem(cfg)
    if scn.model == "user-dae":
        fn = resolve_factory(p["factory"])
        kwargs = dict(p["kwargs"])

        def build():
            prob = fn(**kwargs)
            if not isinstance(prob, CoupledProblem):
                raise ConfigError("'params.factory' must return a CoupledProblem", key="params.factory")
            return prob

        return build
    raise ConfigError(f"model '{scn.model}' has no coupled problem", key="model")


def _order(scn: Scenario, problem: CoupledProblem):
    o = scn.coupling["order"]
    if o is None:
        return list(problem.names)
    if o == "auto":
        return suggest_order(problem)[0]
    try:
        return problem.check_order(o)
    except (ValueError, WiringError) as exc:
        raise ConfigError(f"invalid 'coupling.order': {exc}", key="coupling.order") from None


def _time_indices(t: np.ndarray, times) -> list[int]:
    if times is None:
        return list(range(t.size))
    return sorted({int(np.argmin(np.abs(t - s))) for s in times})


# --------------------------------------------------------------------------
# verbs


def _write_sweeps(out: Path, prefix: str, sweeps) -> str:
    name = f"{prefix}sweeps.csv"
    header = ["window [-]", "k [-]", "t_start [s]", "t_end [s]", "delta_y [-]", "delta_z [-]", "alpha_estimate [-]", "converged [-]"]
    write_csv(out / name, header, [list(r.as_row().values()) for r in sweeps])
    return name


def _run_coupled(scn: Scenario, out: Path, manifest: dict) -> None:
    problem = problem_factory(scn)()
    order = _order(scn, problem)
    mode = _mode(scn)
    cfg = _integrator(scn)
    prefix = scn.output["prefix"]
    manifest["order"] = order
    try:
        manifest["alpha_jacobian"] = estimate_contraction(problem, order, sweep="jacobi" if scn.coupling["mode"] == "jacobi" else "gauss-seidel")
    except SingularAlgebraicPart:
        manifest["alpha_jacobian"] = None
    try:
        result = run(problem, mode, scn.t_end, cfg, order=order, workers=_threads())
    except IterationDiverged as exc:
        if exc.reports:
            manifest["outputs"].append(_write_sweeps(out, prefix, exc.reports))
        raise
    if result.convergence is not None:
        manifest["sweeps_per_window"] = result.convergence.iterations
        manifest["alpha_measured"] = result.convergence.contraction_factor
        manifest["all_windows_converged"] = result.convergence.all_converged
        manifest["outputs"].append(_write_sweeps(out, prefix, result.sweeps))
    if result.weak is not None:
        name = f"{prefix}sync.csv"
        write_csv(out / name, ["t_sync [s]", "lag [-]"], zip(result.weak.sync_points, result.weak.lags))
        manifest["outputs"].append(name)
        manifest["lag_converging"] = result.weak.lag_converging
    manifest["newton_iterations"] = {n: tr.newton_iterations for n, tr in result.trajectories.items()}
    u = _units(scn)
    if scn.model == "cable":
        res = cable_results(problem, result)
        idx = _time_indices(res.t, scn.output["times"])
        rows = []
        for k in idx:
            phi_c = 0.5 * (res.phi[k, :-1] + res.phi[k, 1:])
            for i, r in enumerate(res.r_cells):
                rows.append([res.t[k], r, phi_c[i], res.E[k, i], res.T[k, i], res.Q_E[k, i]])
        name = f"{prefix}profiles.csv"
        write_csv(out / name, ["t [s]", "r [m]", "phi [V]", "E [kV/mm]", "T [degC]", "Q_E [W/m^3]"], rows)
        manifest["outputs"].append(name)
        name = f"{prefix}cable_summary.csv"
        write_csv(
            out / name,
            ["t [s]", "T_inner [degC]", "T_outer [degC]", "E_inner [kV/mm]", "E_outer [kV/mm]", "E_outer_over_inner [-]"],
            ([res.t[k], res.T[k, 0], res.T[k, -1], res.E[k, 0], res.E[k, -1], res.E[k, -1] / res.E[k, 0]] for k in range(res.t.size)),
        )
        manifest["outputs"].append(name)
        return
    first = result.trajectories[problem.names[0]]
    t = first.t
    header = [f"t [{u}]"]
    cols = []
    for n in problem.names:
        tr = result.trajectories[n]
        header += [f"{n}.y{i} [-]" for i in range(tr.y.shape[1])]
        header += [f"{n}.z{i} [-]" for i in range(tr.z.shape[1])]
        cols += [tr.y, tr.z]
    data = np.hstack([t[:, None]] + cols)
    idx = _time_indices(t, scn.output["times"])
    name = f"{prefix}trajectory.csv"
    write_csv(out / name, header, data[idx])
    manifest["outputs"].append(name)


def _eqs_setup(scn: Scenario):
    p = dict(scn.params)
    exc = excitation(p.pop("excitation"), t_rise=p.pop("t_rise"), amplitude=1.0, frequency=p.pop("frequency"))
    try:
        sys_ = arr2d(Arr2DConfig(**p), exc)
    except (ValueError, CosimError) as e:
        raise ConfigError(f"invalid ARR2D parameters: {e}", key="params") from None
    cfg = _integrator(scn)
    try:
        times = window_grid(0.0, scn.t_end, cfg.h)
    except GridMismatch as e:
        raise ConfigError(str(e), key="integrator.h") from None
    return sys_, cfg, times


def _run_eqs(scn: Scenario, out: Path, manifest: dict) -> None:
    sys_, cfg, times = _eqs_setup(scn)
    tr = solve_full(sys_, times, cfg)
    manifest["newton_iterations"] = tr.newton_iterations
    manifest["unknowns"] = {"interior": sys_.n_interior, "exterior": sys_.n_exterior}
    x, y = sys_.grid.coordinates()
    idx = _time_indices(times, scn.output["times"] if scn.output["times"] is not None else [scn.t_end])
    rows = []
    for k in idx:
        for node in range(sys_.grid.n_nodes):
            rows.append([times[k], node, x[node], y[node], tr.phi[k, node]])
    name = f"{scn.output['prefix']}potential.csv"
    write_csv(out / name, ["t [-]", "node [-]", "x [-]", "y [-]", "phi [-]"], rows)
    manifest["outputs"].append(name)


def cmd_run(scn: Scenario, out: Path, manifest: dict) -> None:
    if scn.model == "eqs-arr2d":
        _run_eqs(scn, out, manifest)
    else:
        _run_coupled(scn, out, manifest)


def cmd_convergence_study(scn: Scenario, out: Path, manifest: dict) -> None:
    if scn.study is None:
        raise ConfigError("convergence-study needs a 'study' section", key="study")
    if scn.model == "eqs-arr2d":
        raise ConfigError("convergence-study applies to coupled models only", key="model")
    st = scn.study
    factory = problem_factory(scn)
    problem = factory()
    order = _order(scn, problem)
    sweep = "jacobi" if scn.coupling["mode"] == "jacobi" else "gauss-seidel"
    cfg = _integrator(scn)
    table = convergence_study(
        factory, st["parameter"], st["values"], scn.t_end, cfg, sweep, order, st["sweeps"], st["quantity"], _threads()
    )
    u = _units(scn)
    prefix = scn.output["prefix"]
    name = f"{prefix}convergence.csv"
    write_csv(
        out / name,
        [f"{st['parameter']} [{u}]", "error [-]", "local_slope [-]"],
        zip(table.values, table.errors, table.local_slopes),
    )
    fit = f"{prefix}convergence_fit.csv"
    write_csv(
        out / fit,
        ["slope [-]", "intercept [-]", "residual [-]", "floor [-]", "floor_reached [-]"],
        [[table.slope, table.intercept, table.residual, table.floor, table.floor_reached]],
    )
    manifest["outputs"] += [name, fit]
    manifest["slope"] = None if math.isnan(table.slope) else table.slope
    manifest["floor_reached"] = table.floor_reached
    manifest["sweeps_per_window"] = table.iterations
    manifest["order"] = order


def cmd_mor_study(scn: Scenario, out: Path, manifest: dict) -> None:
    if scn.model != "eqs-arr2d":
        raise ConfigError("mor-study needs model 'eqs-arr2d'", key="model")
    mor = scn.mor or {"p": [1, 2, 4, 8], "energy": None}
    sys_, cfg, times = _eqs_setup(scn)
    for p in mor["p"]:
        if p != "n" and p > sys_.n_exterior:
            raise ConfigError(f"'mor.p' entry {p} exceeds the exterior dimension {sys_.n_exterior}", key="mor.p")
    st = mor_study(sys_, times, cfg, mor["p"], mor["energy"], _threads())
    prefix = scn.output["prefix"]
    name = f"{prefix}mor_errors.csv"
    write_csv(
        out / name,
        ["selection [-]", "p [-]", "energy_captured [-]", "relative_l2 [-]", "max_node_error [-]", "reduction_factor [-]"],
        ([r["selection"], r["p"], r["energy_captured"], r["relative_l2"], r["max_node_error"], r["reduction_factor"]] for r in st.rows),
    )
    sig = st.sigma
    energy = np.cumsum(sig**2) / np.sum(sig**2) if np.sum(sig**2) > 0 else np.ones_like(sig)
    spec = f"{prefix}spectrum.csv"
    write_csv(
        out / spec,
        ["index [-]", "sigma [-]", "sigma_over_sigma1 [-]", "cumulative_energy [-]"],
        ([i + 1, s, s / sig[0] if sig[0] > 0 else 0.0, e] for i, (s, e) in enumerate(zip(sig, energy))),
    )
    manifest["outputs"] += [name, spec]
    manifest["n_exterior"] = st.n
    manifest["mor"] = st.rows


VERBS = {
    "run": cmd_run,
    "convergence-study": cmd_convergence_study,
    "mor-study": cmd_mor_study,
}


def _diagnostics(exc: Exception) -> dict:
    d = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, IterationDiverged):
        d["contraction_factor"] = exc.contraction_factor
        d["window"] = exc.window
        d["sweeps"] = [r.as_row() for r in exc.reports]
    if isinstance(exc, NewtonDiverged):
        d["t"] = exc.t
        d["residual_norm"] = exc.residual_norm
    if isinstance(exc, PicardDiverged):
        d["trace"] = [list(map(float, tr)) for tr in exc.trace]
    return d


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cosim", description="Co-simulation scenario runner")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in ("run", "convergence-study", "mor-study", "validate"):
        sp = sub.add_parser(verb)
        sp.add_argument("--scenario", required=True, help="scenario YAML file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="seed for randomized parts (recorded in the manifest)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scn = load_scenario(args.scenario)
        if args.verb == "validate":
            print(f"{args.scenario}: valid ({scn.model})")
            return EXIT_OK
        threads = _threads()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": __version__,
        "verb": args.verb,
        "scenario": str(args.scenario),
        "config_sha256": scn.config_hash,
        "model": scn.model,
        "mode": scn.coupling["mode"],
        "seed": args.seed,
        "threads": threads,
        "outputs": [],
    }
    start = time.perf_counter()
    code = EXIT_OK
    try:
        VERBS[args.verb](scn, out, manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GridMismatch, CycleDetected, WiringError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        with open(out / "diagnostics.json", "w") as fh:
            json.dump(_diagnostics(exc), fh, indent=2, default=_json_default, allow_nan=True)
        manifest["outputs"].append("diagnostics.json")
        manifest["failure"] = type(exc).__name__
        code = EXIT_SOLVER
    manifest["wall_time_s"] = time.perf_counter() - start
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=_json_default, allow_nan=True)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
