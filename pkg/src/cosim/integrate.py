"""Fixed-step implicit time integration with a damped Newton solver.

Two methods are offered for semi-explicit systems:

* ``implicit-euler``: ``y+ = y + h f(t+h, y+, z+)``, ``0 = g(t+h, y+, z+)``
* ``trapezoidal``: ``y+ = y + h/2 (f(t, y, z) + f(t+h, y+, z+))`` with the
  constraint enforced at the end point only (stiffly accurate for ``z``).

Inputs are callables of time (usually :class:`~cosim.waveform.Waveform`)
and are sampled at ``t`` and ``t+h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .dae import SemiExplicitSystem, consistent_algebraic, fd_jacobian
from .errors import GridMismatch, NewtonDiverged, SingularMatrix
from .linalg import LUFactorization

METHODS = ("implicit-euler", "trapezoidal")


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "implicit-euler"
    h: float = 0.01
    newton_tol: float = 1e-10
    newton_max: int = 25
    fd_step: float = 1e-7
    max_halvings: int = 8

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown integration method {self.method!r}; choose from {METHODS}")
        if not self.h > 0:
            raise ValueError("step size h must be positive")
        if not (self.newton_tol > 0 and self.fd_step > 0):
            raise ValueError("tolerances must be positive")
        if self.newton_max < 1:
            raise ValueError("newton_max must be >= 1")

    @property
    def theta(self) -> float:
        return 1.0 if self.method == "implicit-euler" else 0.5


@dataclass
class Trajectory:
    """Samples of one system on a time grid: ``y[i]``, ``z[i]`` at ``t[i]``."""

    t: np.ndarray
    y: np.ndarray
    z: np.ndarray
    name: str = ""
    newton_iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def final_y(self) -> np.ndarray:
        return self.y[-1]

    @property
    def final_z(self) -> np.ndarray:
        return self.z[-1]

    def __len__(self):
        return self.t.size

    def concat(self, other: "Trajectory") -> "Trajectory":
        """Append ``other``, dropping its first node if it repeats our last."""
        skip = 1 if other.t.size and self.t.size and other.t[0] == self.t[-1] else 0
        return Trajectory(
            np.concatenate([self.t, other.t[skip:]]),
            np.vstack([self.y, other.y[skip:]]),
            np.vstack([self.z, other.z[skip:]]),
            self.name,
            self.newton_iterations + other.newton_iterations,
        )

    def g_residual(self, sys: SemiExplicitSystem, inputs=None) -> float:
        """Largest ``|g|`` over all nodes."""
        if sys.nz == 0:
            return 0.0
        inputs = inputs or {}
        worst = 0.0
        for i, ti in enumerate(self.t):
            u = {k: np.asarray(w(ti)) for k, w in inputs.items()}
            worst = max(worst, float(np.max(np.abs(sys.g(ti, self.y[i], self.z[i], u)))))
        return worst


def _inf_norm(r) -> float:
    return float(np.max(np.abs(r))) if np.size(r) else 0.0


def _dense_solve(J, rhs):
    return LUFactorization(J).solve(rhs)


def newton_solve(
    residual: Callable[[np.ndarray], np.ndarray],
    x0,
    cfg: IntegratorConfig = IntegratorConfig(),
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None,
    linear_solve: Callable | None = None,
    stats: dict | None = None,
) -> np.ndarray:
    """Damped Newton iteration until ``||residual(x)||_inf <= cfg.newton_tol``.

    When a full step increases the residual norm the step is halved, at most
    ``cfg.max_halvings`` times. Without an explicit ``jacobian`` a
    forward-difference Jacobian is rebuilt every iteration.

    Raises
    ------
    NewtonDiverged
        After ``cfg.newton_max`` iterations, or when the Jacobian is singular.
        Carries the last iterate and its residual norm.
    """
    solve = linear_solve or _dense_solve
    x = np.array(x0, dtype=float).reshape(-1)
    r = np.asarray(residual(x), dtype=float)
    nr = _inf_norm(r)
    if stats is not None:
        stats.setdefault("iterations", 0)
    if nr <= cfg.newton_tol:
        return x
    for it in range(1, cfg.newton_max + 1):
        J = jacobian(x) if jacobian is not None else fd_jacobian(residual, x, cfg.fd_step, r)
        try:
            dx = solve(J, -r)
        except SingularMatrix as exc:
            raise NewtonDiverged(f"singular Newton matrix: {exc}", x=x, residual_norm=nr) from exc
        lam = 1.0
        for _ in range(cfg.max_halvings + 1):
            x_new = x + lam * dx
            r_new = np.asarray(residual(x_new), dtype=float)
            nr_new = _inf_norm(r_new)
            if math.isfinite(nr_new) and nr_new <= nr:
                break
            lam *= 0.5
        if not math.isfinite(nr_new):
            raise NewtonDiverged("residual became non-finite", x=x, residual_norm=nr)
        x, r, nr = x_new, r_new, nr_new
        if stats is not None:
            stats["iterations"] += 1
        if nr <= cfg.newton_tol:
            return x
    raise NewtonDiverged(
        f"Newton did not converge in {cfg.newton_max} iterations (|r| = {nr:.3e})",
        x=x,
        residual_norm=nr,
    )


def _eval_inputs(inputs: Mapping[str, Callable], t: float) -> dict:
    return {k: np.asarray(w(t), dtype=float) for k, w in inputs.items()}


def step(
    sys: SemiExplicitSystem,
    t: float,
    y,
    z,
    inputs: Mapping[str, Callable] | None,
    cfg: IntegratorConfig,
    h: float | None = None,
    stats: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Advance one step of size ``h`` (default ``cfg.h``) from ``t``."""
    h = cfg.h if h is None else h
    inputs = inputs or {}
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    ny = sys.ny
    t1 = t + h
    u1 = _eval_inputs(inputs, t1)
    if cfg.method == "trapezoidal" and ny:
        f0 = np.asarray(sys.f(t, y, z, _eval_inputs(inputs, t)), dtype=float)
    else:
        f0 = None

    def residual(x):
        yp, zp = x[:ny], x[ny:]
        parts = []
        if ny:
            fp = np.asarray(sys.f(t1, yp, zp, u1), dtype=float)
            if f0 is None:
                parts.append(yp - y - h * fp)
            else:
                parts.append(yp - y - 0.5 * h * (f0 + fp))
        if sys.nz:
            parts.append(np.asarray(sys.g(t1, yp, zp, u1), dtype=float))
        return np.concatenate(parts) if parts else np.zeros(0)

    x0 = np.concatenate([y, z])
    try:
        x = newton_solve(residual, x0, cfg, stats=stats)
    except NewtonDiverged as exc:
        raise NewtonDiverged(
            f"{sys.name or 'system'}: step at t={t:.6g} failed: {exc}",
            x=exc.x,
            residual_norm=exc.residual_norm,
            t=t,
        ) from exc
    return x[:ny], x[ny:]


def grid_steps(t_a: float, t_b: float, h: float) -> int:
    n_float = (t_b - t_a) / h
    n = int(round(n_float))
    if n < 1 or abs(n_float - n) > 1e-12 * max(1.0, n):
        raise GridMismatch(f"step {h} does not tile [{t_a}, {t_b}] ({n_float} steps)")
    return n


def window_grid(t_a: float, t_b: float, h: float) -> np.ndarray:
    n = grid_steps(t_a, t_b, h)
    t = t_a + (t_b - t_a) * np.arange(n + 1) / n
    t[-1] = t_b
    return t


def integrate_window(
    sys: SemiExplicitSystem,
    window: tuple[float, float],
    inputs: Mapping[str, Callable] | None,
    cfg: IntegratorConfig,
    y0=None,
    z0=None,
    consistent: bool = True,
) -> Trajectory:
    """Integrate ``sys`` over ``window`` with a fixed step.

    The algebraic initial value is made consistent with the inputs at the
    window start (Newton on ``g``) unless ``consistent=False``.

    Raises
    ------
    GridMismatch
        If ``cfg.h`` does not tile the window.
    NewtonDiverged
    """
    t_a, t_b = window
    t = window_grid(t_a, t_b, cfg.h)
    inputs = inputs or {}
    y = np.array(sys.y0 if y0 is None else y0, dtype=float)
    z = np.array(sys.z0 if z0 is None else z0, dtype=float)
    stats = {"iterations": 0}
    if consistent and sys.nz:
        z = consistent_algebraic(
            sys, t_a, y, z, _eval_inputs(inputs, t_a),
            IntegratorConfig(newton_tol=cfg.newton_tol, newton_max=cfg.newton_max, fd_step=cfg.fd_step),
        )
    Y = np.empty((t.size, sys.ny))
    Z = np.empty((t.size, sys.nz))
    Y[0], Z[0] = y, z
    for i in range(t.size - 1):
        y, z = step(sys, t[i], y, z, inputs, cfg, h=t[i + 1] - t[i], stats=stats)
        Y[i + 1], Z[i + 1] = y, z
    return Trajectory(t, Y, Z, sys.name, stats["iterations"])


DENSE_FILL = 0.1  # above this fill ratio a sparse Newton matrix is factored densely


def _sparse_solve(J, rhs):
    n = J.shape[0]
    if J.nnz > DENSE_FILL * n * n:
        return _dense_solve(J.toarray(), rhs)
    try:
        lu = scipy.sparse.linalg.splu(scipy.sparse.csc_matrix(J))
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from exc
    return lu.solve(rhs)


def integrate_linear_implicit(
    mass,
    flux: Callable[[float, np.ndarray], np.ndarray],
    flux_jacobian: Callable[[float, np.ndarray], np.ndarray],
    x0,
    times,
    cfg: IntegratorConfig,
    mass_source: Callable[[float, float], np.ndarray] | None = None,
    stats: dict | None = None,
    factorize: Callable[[float, float, np.ndarray], Callable[[np.ndarray], np.ndarray]] | None = None,
) -> np.ndarray:
    """Integrate ``M x' + N(t, x) = 0`` on the given time grid.

    Each step solves
    ``[M (x+ - x) + d(t, t+h)] / h + theta N(t+h, x+) + (1 - theta) N(t, x) = 0``
    by Newton with the analytic Jacobian ``M/h + theta dN/dx``. The optional
    ``mass_source`` supplies ``d``, the mass-weighted increment of prescribed
    (Dirichlet) unknowns. ``mass`` and the Jacobian may be dense arrays or
    scipy sparse matrices. ``factorize(t, h, x)``, when given, replaces the
    assembly and factorization of the Newton matrix: it must return a
    function solving ``(M/h + theta dN/dx(t, x)) dx = r`` for ``dx``, and
    ``flux_jacobian`` is then unused.

    Returns
    -------
    X : (len(times), n) ndarray
    """
    times = np.asarray(times, dtype=float)
    theta = cfg.theta
    sparse = scipy.sparse.issparse(mass)
    solve = _sparse_solve if sparse else _dense_solve
    X = np.empty((times.size, np.size(x0)))
    x = np.array(x0, dtype=float)
    X[0] = x
    stats = {"iterations": 0} if stats is None else stats
    stats.setdefault("iterations", 0)
    for i in range(times.size - 1):
        t0, t1 = times[i], times[i + 1]
        h = t1 - t0
        base = -(mass @ x)
        if mass_source is not None:
            base = base + mass_source(t0, t1)
        if theta < 1.0:
            base = base + h * (1.0 - theta) * flux(t0, x)

        def residual(xp):
            return (mass @ xp + base) / h + theta * flux(t1, xp)

        if factorize is None:
            def jacobian(xp):
                return mass / h + theta * flux_jacobian(t1, xp)

            step_solve = solve
        else:
            def jacobian(xp):
                return factorize(t1, h, xp)

            def step_solve(J, rhs):
                return J(rhs)

        try:
            x = newton_solve(residual, x, cfg, jacobian=jacobian, linear_solve=step_solve, stats=stats)
        except NewtonDiverged as exc:
            raise NewtonDiverged(
                f"step at t={t0:.6g} failed: {exc}", x=exc.x, residual_norm=exc.residual_norm, t=t0
            ) from exc
        X[i + 1] = x
    return X
