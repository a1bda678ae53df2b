"""Radially symmetric HVDC cable insulation: stationary current + transient heat.

Conventions: inside the material law the temperature is in degrees Celsius
and the field magnitude in kV/mm; everything else is SI. Quantities per unit
cable length are in W/m and A/m.

The insulation ``r_in <= r <= r_out`` is split into ``n_cells`` shells with
logarithmically spaced edges. Potentials live on the edges (nodes), while
temperature, field, conductivity and Joule density live on the cells, whose
representative radius is the geometric mean of the edges. The shell
conductance ``2 pi k / ln(r_{i+1} / r_i)`` is exact for a constant ``k``, so
the cold-cable potential is reproduced exactly at the nodes.

The default parameters below are plausible placeholders (not normative);
only the temperature and field coefficients of 0.1 are typical values for
polyethylene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coupler import (
    CoupledProblem,
    CouplingResult,
    Monolithic,
    OneWay,
    run,
)
from .dae import PortKind, SemiExplicitSystem, in_port, out_port
from .errors import PicardDiverged
from .integrate import IntegratorConfig
from .linalg import solve_tridiagonal

V_PER_M_TO_KV_PER_MM = 1e-6
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MaterialLaw:
    """Insulation material data.

    ``k0`` [S/m] is the conductivity at 0 degC and 0 kV/mm, ``alpha_T``
    [1/K] and ``beta_E`` [mm/kV] the temperature and field coefficients.
    """

    k0: float = 1e-16
    alpha_T: float = 0.1
    beta_E: float = 0.1
    Cp: float = 2000.0
    rho: float = 920.0
    lambda_th: float = 0.3

    def __post_init__(self):
        for name in ("k0", "alpha_T", "beta_E", "Cp", "rho", "lambda_th"):
            if not getattr(self, name) > 0:
                raise ValueError(f"material parameter {name} must be positive")

    @property
    def heat_capacity(self) -> float:
        """Volumetric heat capacity rho * Cp [J/(m^3 K)]."""
        return self.rho * self.Cp


def conductivity(T, E, law: MaterialLaw):
    """``k0 * exp(alpha_T * T) * exp(beta_E * E)`` with T in degC and E in kV/mm."""
    return law.k0 * np.exp(law.alpha_T * np.asarray(T) + law.beta_E * np.asarray(E))


@dataclass(frozen=True)
class CableGeometry:
    r_in: float = 0.010
    r_out: float = 0.030
    n_cells: int = 64

    def __post_init__(self):
        if not 0 < self.r_in < self.r_out:
            raise ValueError("need 0 < r_in < r_out")
        if self.n_cells < 4:
            raise ValueError("need at least 4 cells")

    @property
    def edges(self) -> np.ndarray:
        return self.r_in * (self.r_out / self.r_in) ** (np.arange(self.n_cells + 1) / self.n_cells)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return np.sqrt(e[:-1] * e[1:])

    @property
    def log_widths(self) -> np.ndarray:
        e = self.edges
        return np.log(e[1:] / e[:-1])

    @property
    def volumes(self) -> np.ndarray:
        """Shell cross-section areas (volume per unit length) [m^2]."""
        e = self.edges
        return math.pi * (e[1:] ** 2 - e[:-1] ** 2)


@dataclass
class ElectroThermalState:
    phi: np.ndarray  # V, per node
    T: np.ndarray  # degC, per cell
    E: np.ndarray  # kV/mm, per cell
    Q_E: np.ndarray  # W/m^3, per cell
    J: np.ndarray | None = None  # A/m^2 at the cell radius
    current: float = 0.0  # A/m


def cell_field(phi, geometry: CableGeometry) -> np.ndarray:
    """Field magnitude per cell in V/m, exact at the cell radius for constant k."""
    phi = np.asarray(phi)
    return np.abs(phi[..., :-1] - phi[..., 1:]) / (geometry.centers * geometry.log_widths)


def joule_source(phi, T, law: MaterialLaw, geometry: CableGeometry) -> np.ndarray:
    """Volumetric Joule loss ``k(T, |E|) |E|^2`` per cell [W/m^3]."""
    E = cell_field(phi, geometry)
    k = conductivity(T, E * V_PER_M_TO_KV_PER_MM, law)
    return k * E**2


def face_currents(phi, T, law: MaterialLaw, geometry: CableGeometry) -> np.ndarray:
    """Current per unit length through each shell, ``2 pi k dphi / ln(r+/r-)`` [A/m]."""
    phi = np.asarray(phi)
    E = cell_field(phi, geometry)
    k = conductivity(T, E * V_PER_M_TO_KV_PER_MM, law)
    return TWO_PI * k * (phi[:-1] - phi[1:]) / geometry.log_widths


def _balance_residual(phi, k, geometry, scale):
    G = k / geometry.log_widths
    left, right = G[:-1], G[1:]
    inner = phi[1:-1]
    return (left * (inner - phi[:-2]) + right * (inner - phi[2:])) / ((left + right) * scale)


@dataclass
class StationaryCurrentSolution:
    phi: np.ndarray
    E: np.ndarray  # kV/mm
    J: np.ndarray  # A/m^2
    Q_E: np.ndarray  # W/m^3
    current: float  # A/m
    iterations: int
    trace: list = field(default_factory=list)

    def conservation_error(self, T, law, geometry) -> float:
        """Relative spread of the shell currents."""
        I = face_currents(self.phi, T, law, geometry)
        ref = np.max(np.abs(I))
        return float((I.max() - I.min()) / ref) if ref > 0 else 0.0


def log_potential(geometry: CableGeometry, U0: float, r=None) -> np.ndarray:
    """Potential of a homogeneous coaxial insulation."""
    r = geometry.edges if r is None else np.asarray(r)
    return U0 * np.log(geometry.r_out / r) / math.log(geometry.r_out / geometry.r_in)


def solve_stationary_current(
    geometry: CableGeometry,
    T,
    law: MaterialLaw,
    U0: float,
    tol: float = 1e-10,
    max_iter: int = 200,
    phi0=None,
) -> StationaryCurrentSolution:
    """Solve ``div(k(T, |E|) grad phi) = 0`` with ``phi(r_in) = U0``, ``phi(r_out) = 0``.

    The field dependence of ``k`` is resolved by Picard iteration: each
    iterate solves the tridiagonal flux-balance system with the conductivity
    frozen at the previous potential. The damping factor on the increment is
    halved whenever the relative imbalance of the face currents would grow,
    and stays reduced for the remaining iterations. Iteration stops when the
    potential update is below ``tol * |U0|`` and that imbalance is below
    ``tol``.

    Raises
    ------
    PicardDiverged
        With the per-iteration ``(update, residual)`` trace.
    """
    T = np.broadcast_to(np.asarray(T, dtype=float), (geometry.n_cells,))
    n = geometry.n_cells
    if U0 == 0.0:
        z = np.zeros(n)
        return StationaryCurrentSolution(np.zeros(n + 1), z, z.copy(), z.copy(), 0.0, 0)
    phi = log_potential(geometry, U0) if phi0 is None else np.array(phi0, dtype=float)
    phi[0], phi[-1] = U0, 0.0
    scale = abs(U0)
    lw = geometry.log_widths

    def k_of(p):
        return conductivity(T, cell_field(p, geometry) * V_PER_M_TO_KV_PER_MM, law)

    def resid(p):
        # relative imbalance of the face currents
        I = k_of(p) * (p[:-1] - p[1:]) / lw
        ref = float(np.max(np.abs(I)))
        return float(np.max(np.abs(np.diff(I)))) / ref if ref > 0 else 0.0

    res = resid(phi)
    trace = []
    omega = 1.0
    for it in range(1, max_iter + 1):
        G = k_of(phi) / lw
        diag = G[:-1] + G[1:]
        rhs = np.zeros(n - 1)
        rhs[0] = G[0] * U0
        lin = np.empty(n + 1)
        lin[0], lin[-1] = U0, 0.0
        lin[1:-1] = solve_tridiagonal(-G[1:-1], diag, -G[1:-1], rhs)
        step = lin - phi
        for _ in range(30):
            cand = phi + omega * step
            res_new = resid(cand)
            if res_new <= res or omega < 1e-6:
                break
            omega *= 0.5
        update = float(np.max(np.abs(cand - phi)))
        phi, res = cand, res_new
        trace.append((update, res))
        if not math.isfinite(update):
            break
        if update <= tol * scale and res <= tol:
            E = cell_field(phi, geometry)
            k = k_of(phi)
            I = TWO_PI * k * (phi[:-1] - phi[1:]) / lw
            return StationaryCurrentSolution(
                phi,
                E * V_PER_M_TO_KV_PER_MM,
                k * E,
                k * E**2,
                float(np.mean(I)),
                it,
                trace,
            )
    raise PicardDiverged(f"Picard iteration did not converge in {max_iter} iterations", trace)


# --------------------------------------------------------------------------
# subsystems


@dataclass(frozen=True)
class HeatBoundary:
    """Thermal boundary data.

    ``T_outer`` is fixed at ``r_out``; ``conductor_loss`` [W/m] enters at
    ``r_in`` (0 means insulated).
    """

    T_outer: float = 20.0
    conductor_loss: float = 0.0


def _heat_operator(geometry: CableGeometry, law: MaterialLaw):
    rc = geometry.centers
    G = TWO_PI * law.lambda_th / np.log(rc[1:] / rc[:-1])
    G_out = TWO_PI * law.lambda_th / math.log(geometry.r_out / rc[-1])
    return G, G_out


def heat_balance(T, Q, geometry, law, boundary, insulation_losses=True) -> np.ndarray:
    """Net heat input per cell and unit length [W/m]."""
    G, G_out = _heat_operator(geometry, law)
    flow = G * (T[:-1] - T[1:])
    net = np.zeros_like(T)
    net[:-1] -= flow
    net[1:] += flow
    net[-1] -= G_out * (T[-1] - boundary.T_outer)
    net[0] += boundary.conductor_loss
    if insulation_losses:
        net += Q * geometry.volumes
    return net


def outer_heat_flux(T, geometry, law, boundary) -> float:
    _, G_out = _heat_operator(geometry, law)
    return float(G_out * (T[-1] - boundary.T_outer))


def heat_subsystem(
    geometry: CableGeometry,
    law: MaterialLaw,
    boundary: HeatBoundary = HeatBoundary(),
    T0=None,
    insulation_losses: bool = True,
    name: str = "heat",
) -> SemiExplicitSystem:
    """Finite-volume ``rho Cp dT/dt - div(lambda grad T) = Q_E`` as a pure ODE.

    Input port ``Q_E`` (W/m^3 per cell), output port ``T`` (degC per cell).
    """
    n = geometry.n_cells
    cap = law.heat_capacity * geometry.volumes
    T0 = np.full(n, boundary.T_outer) if T0 is None else np.broadcast_to(np.asarray(T0, float), (n,))

    def f(t, y, z, u):
        return heat_balance(y, u["Q_E"], geometry, law, boundary, insulation_losses) / cap

    def g(t, y, z, u):
        return np.zeros(0)

    return SemiExplicitSystem(
        name=name,
        ny=n,
        nz=0,
        f=f,
        g=g,
        y0=T0,
        z0=np.zeros(0),
        input_ports=[in_port("Q_E", PortKind.SOURCE_TERM, n)],
        output_ports=[out_port("T", PortKind.MATERIAL_PARAMETER, n)],
        output=lambda t, y, z: {"T": y},
        meta={"geometry": geometry, "law": law, "boundary": boundary},
    )


def steady_temperature(geometry, law, boundary: HeatBoundary, Q=None, insulation_losses=True) -> np.ndarray:
    """Steady state of the discrete heat equation for a fixed source."""
    n = geometry.n_cells
    Q = np.zeros(n) if Q is None else np.asarray(Q, dtype=float)
    G, G_out = _heat_operator(geometry, law)
    diag = np.zeros(n)
    diag[:-1] += G
    diag[1:] += G
    diag[-1] += G_out
    rhs = np.zeros(n)
    rhs[-1] += G_out * boundary.T_outer
    rhs[0] += boundary.conductor_loss
    if insulation_losses:
        rhs += Q * geometry.volumes
    return solve_tridiagonal(-G, diag, -G, rhs)


def _as_voltage(U0) -> Callable[[float], float]:
    if callable(U0):
        return U0
    value = float(U0)
    return lambda t: value


def field_subsystem(
    geometry: CableGeometry,
    law: MaterialLaw,
    U0,
    T0=20.0,
    U_ref: float | None = None,
    name: str = "field",
) -> SemiExplicitSystem:
    """Stationary current problem as an all-algebraic subsystem (``ny = 0``).

    Unknowns are ``z = (phi_interior / U_ref, Q_E / Q_ref)`` with
    ``Q_ref = k0 (U_ref / (r_out - r_in))^2``; the constraints are the
    normalised flux balance at interior nodes and the Joule density
    definition. Input port ``T``, output port ``Q_E`` [W/m^3].
    ``U0`` may be a constant or a function of time.
    """
    n = geometry.n_cells
    volt = _as_voltage(U0)
    U_ref = abs(volt(0.0)) if U_ref is None else U_ref
    U_ref = U_ref if U_ref > 0 else 1.0
    Q_ref = law.k0 * (U_ref / (geometry.r_out - geometry.r_in)) ** 2
    T0 = np.broadcast_to(np.asarray(T0, dtype=float), (n,))
    sol = solve_stationary_current(geometry, T0, law, volt(0.0))
    z0 = np.concatenate([sol.phi[1:-1] / U_ref, sol.Q_E / Q_ref])

    def potential(t, z):
        phi = np.empty(n + 1)
        phi[0] = volt(t)
        phi[1:-1] = U_ref * z[: n - 1]
        phi[-1] = 0.0
        return phi

    def g(t, y, z, u):
        phi = potential(t, z)
        E = cell_field(phi, geometry)
        k = conductivity(u["T"], E * V_PER_M_TO_KV_PER_MM, law)
        return np.concatenate([
            _balance_residual(phi, k, geometry, U_ref),
            z[n - 1:] - k * E**2 / Q_ref,
        ])

    def f(t, y, z, u):
        return np.zeros(0)

    def output(t, y, z):
        return {"Q_E": Q_ref * z[n - 1:]}

    return SemiExplicitSystem(
        name=name,
        ny=0,
        nz=2 * n - 1,
        f=f,
        g=g,
        y0=np.zeros(0),
        z0=z0,
        input_ports=[in_port("T", PortKind.MATERIAL_PARAMETER, n)],
        output_ports=[out_port("Q_E", PortKind.SOURCE_TERM, n)],
        output=output,
        meta={"geometry": geometry, "law": law, "U_ref": U_ref, "Q_ref": Q_ref, "potential": potential},
    )


# --------------------------------------------------------------------------
# coupled scenario


@dataclass(frozen=True)
class CableConfig:
    law: MaterialLaw = MaterialLaw()
    geometry: CableGeometry = CableGeometry()
    U0: float = 150e3
    ramp_time: float = 0.0
    T_outer: float = 20.0
    T_init: float = 20.0
    conductor_loss: float = 60.0
    conductor_losses: bool = True
    insulation_losses: bool = True
    t_end: float = 3600.0
    output_times: tuple[float, ...] = ()

    def voltage(self) -> Callable[[float], float]:
        U0, tr = self.U0, self.ramp_time
        if tr <= 0:
            return lambda t: U0
        return lambda t: U0 * (0.5 - 0.5 * math.cos(math.pi * min(t, tr) / tr))

    @property
    def boundary(self) -> HeatBoundary:
        return HeatBoundary(self.T_outer, self.conductor_loss if self.conductor_losses else 0.0)


def cable_problem(config: CableConfig) -> CoupledProblem:
    heat = heat_subsystem(
        config.geometry, config.law, config.boundary, config.T_init, config.insulation_losses
    )
    field_ = field_subsystem(config.geometry, config.law, config.voltage(), config.T_init, U_ref=abs(config.U0))
    return CoupledProblem([field_, heat], ["heat.T -> field.T", "field.Q_E -> heat.Q_E"])


@dataclass
class CableResults:
    t: np.ndarray
    r_nodes: np.ndarray
    r_cells: np.ndarray
    T: np.ndarray  # (nt, n_cells) degC
    phi: np.ndarray  # (nt, n_cells + 1) V
    E: np.ndarray  # (nt, n_cells) kV/mm
    Q_E: np.ndarray  # (nt, n_cells) W/m^3
    coupling: CouplingResult

    def index_of(self, time: float) -> int:
        return int(np.argmin(np.abs(self.t - time)))

    def profile(self, time: float) -> dict[str, np.ndarray]:
        i = self.index_of(time)
        return {"t": self.t[i], "phi": self.phi[i], "E": self.E[i], "T": self.T[i], "Q_E": self.Q_E[i]}


def run_coupled_cable(
    config: CableConfig,
    mode=Monolithic(),
    cfg: IntegratorConfig = IntegratorConfig(h=60.0),
    order=("field", "heat"),
) -> CableResults:
    """Couple the field and heat subsystems under ``mode`` and collect profiles.

    For :class:`OneWay` the feedback of temperature into the conductivity is
    cut (the field is solved once at the initial temperature and its losses
    are frozen), which is the post-processing variant.
    """
    problem = cable_problem(config)
    if isinstance(mode, OneWay) and not mode.freeze_feedback:
        mode = OneWay(freeze_feedback=True)
    result = run(problem, mode, config.t_end, cfg, order=list(order))
    return cable_results(problem, result)


def cable_results(problem: CoupledProblem, result: CouplingResult) -> CableResults:
    field_ = problem.by_name["field"]
    geometry = field_.meta["geometry"]
    potential = field_.meta["potential"]
    trf, trh = result.trajectories["field"], result.trajectories["heat"]
    phi = np.array([potential(t, z) for t, z in zip(trf.t, trf.z)])
    E = cell_field(phi, geometry) * V_PER_M_TO_KV_PER_MM
    n = geometry.n_cells
    Q = field_.meta["Q_ref"] * trf.z[:, n - 1:]
    return CableResults(trh.t, geometry.edges, geometry.centers, trh.y, phi, E, Q, result)
