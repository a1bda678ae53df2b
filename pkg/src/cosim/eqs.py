"""Nonlinear electro-quasistatic model on a structured 2D grid.

Potentials live on the nodes of an ``nx`` x ``ny`` grid, materials on the
cells. The semi-discrete system is

    M_eps dPhi/dt + K(Phi) Phi = 0   (unknown rows, Dirichlet nodes lifted)

where both operators are 5-point div-grad stencils. The coefficient of an
edge is the sum of the contributions of its (one or two) adjacent cells,
each cell adding half of its own material value, i.e. the arithmetic mean
for interior edges. Cell field magnitudes are taken from the four corner
potentials, and the conductivity follows a power law in the field.

Node unknowns split into an interior part (nodes touching any non-air cell)
and an exterior part (air only). Since air does not conduct, the
conductivity blocks coupling to the exterior vanish identically.

A single node row (``ny == 1``) is the 1D chain limit: each cell is a
segment with the full edge weight.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import InvalidGrid, NonzeroK22
from .integrate import IntegratorConfig, integrate_linear_implicit


class MaterialKind(enum.Enum):
    NONLINEAR_GRADING = "nonlinear-grading"
    LINEAR_DIELECTRIC = "linear-dielectric"
    AIR_EXTERIOR = "air-exterior"


@dataclass(frozen=True)
class PowerLaw:
    """``sigma(|E|) = floor + sigma0 * (|E| / E0)^q``; ``q = 0`` is a constant."""

    sigma0: float = 1.0
    E0: float = 1.0
    q: float = 0.0
    floor: float = 0.0

    def __post_init__(self):
        if self.sigma0 < 0 or self.floor < 0 or self.E0 <= 0 or self.q < 0:
            raise ValueError("invalid grading law parameters")

    def __call__(self, E):
        E = np.asarray(E, dtype=float)
        if self.q == 0:
            return np.full_like(E, self.floor + self.sigma0)
        return self.floor + self.sigma0 * (E / self.E0) ** self.q

    def derivative(self, E):
        E = np.asarray(E, dtype=float)
        if self.q == 0:
            return np.zeros_like(E)
        return self.sigma0 * self.q * (E / self.E0) ** (self.q - 1) / self.E0

    @property
    def linear(self) -> bool:
        return self.q == 0


@dataclass(frozen=True)
class Material:
    kind: MaterialKind
    eps: float = 1.0
    sigma: PowerLaw = PowerLaw(0.0)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("permittivity must be positive")

    @property
    def conductive(self) -> bool:
        return self.sigma.sigma0 > 0 or self.sigma.floor > 0


AIR = Material(MaterialKind.AIR_EXTERIOR, 1.0)


@dataclass(frozen=True)
class StructuredGrid2D:
    """Node grid with per-cell material labels and Dirichlet nodes.

    Nodes are numbered row by row, ``node = j * nx + i`` with ``i`` along x.
    ``cells[j, i]`` indexes into ``materials``. Dirichlet potentials are
    ``profile * excitation(t)``.
    """

    nx: int
    ny: int
    hx: float
    hy: float
    cells: np.ndarray
    materials: tuple
    dirichlet_nodes: np.ndarray
    dirichlet_profile: np.ndarray
    region: np.ndarray | None = None  # True = interior; derived when None

    def __post_init__(self):
        if self.nx < 2 or self.ny < 1:
            raise InvalidGrid("need nx >= 2 and ny >= 1")
        if not (self.hx > 0 and self.hy > 0):
            raise InvalidGrid("grid spacing must be positive")
        cells = np.asarray(self.cells, dtype=int)
        if cells.shape != self.cell_shape:
            raise InvalidGrid(f"cell array has shape {cells.shape}, expected {self.cell_shape}")
        if cells.size and (cells.min() < 0 or cells.max() >= len(self.materials)):
            raise InvalidGrid("cell material index out of range")
        nodes = np.asarray(self.dirichlet_nodes, dtype=int)
        prof = np.asarray(self.dirichlet_profile, dtype=float)
        if nodes.size == 0:
            raise InvalidGrid("at least one Dirichlet node is required")
        if nodes.shape != prof.shape:
            raise InvalidGrid("dirichlet_nodes and dirichlet_profile differ in length")
        if nodes.min() < 0 or nodes.max() >= self.n_nodes or np.unique(nodes).size != nodes.size:
            raise InvalidGrid("invalid Dirichlet node indices")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "dirichlet_nodes", nodes)
        object.__setattr__(self, "dirichlet_profile", prof)
        if self.region is None:
            object.__setattr__(self, "region", self._touches(lambda m: m.kind != MaterialKind.AIR_EXTERIOR))
        else:
            region = np.asarray(self.region, dtype=bool)
            if region.shape != (self.n_nodes,):
                raise InvalidGrid("region flag must be given per node")
            object.__setattr__(self, "region", region)

    @property
    def cell_shape(self) -> tuple[int, int]:
        return (max(self.ny - 1, 1), self.nx - 1)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def node(self, i: int, j: int) -> int:
        return j * self.nx + i

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        jj, ii = np.divmod(np.arange(self.n_nodes), self.nx)
        return ii * self.hx, jj * self.hy

    def corners(self) -> np.ndarray:
        """Node indices of every cell, shape ``(n_cells, 4)`` (2 for a chain)."""
        cj, ci = np.divmod(np.arange(self.cells.size), self.nx - 1)
        n00 = cj * self.nx + ci
        if self.ny == 1:
            return np.stack([n00, n00 + 1], axis=1)
        return np.stack([n00, n00 + 1, n00 + self.nx, n00 + self.nx + 1], axis=1)

    def _touches(self, pred) -> np.ndarray:
        flag = np.array([pred(m) for m in self.materials], dtype=bool)[self.cells.ravel()]
        out = np.zeros(self.n_nodes, dtype=bool)
        for col in self.corners().T:
            np.logical_or.at(out, col, flag)
        return out

    def touches_conductive(self) -> np.ndarray:
        return self._touches(lambda m: m.conductive)


def _local_stiffness(grid: StructuredGrid2D) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit-coefficient cell stiffness and field-gradient rows."""
    hx, hy = grid.hx, grid.hy
    if grid.ny == 1:
        w = 1.0 / hx**2
        S = np.array([[w, -w], [-w, w]])
        return S, np.array([-1.0, 1.0]) / hx, np.zeros(2)
    S = np.zeros((4, 4))
    for a, b, w in ((0, 1, 0.5 / hx**2), (2, 3, 0.5 / hx**2), (0, 2, 0.5 / hy**2), (1, 3, 0.5 / hy**2)):
        S[a, a] += w
        S[b, b] += w
        S[a, b] -= w
        S[b, a] -= w
    gx = np.array([-1.0, 1.0, -1.0, 1.0]) / (2 * hx)
    gy = np.array([-1.0, -1.0, 1.0, 1.0]) / (2 * hy)
    return S, gx, gy


def _smooth_ramp(t_rise: float) -> Callable[[float], float]:
    if t_rise <= 0:
        return lambda t: 1.0

    def ramp(t):
        if t >= t_rise:
            return 1.0
        if t <= 0:
            return 0.0
        return 0.5 - 0.5 * math.cos(math.pi * t / t_rise)

    return ramp


def excitation(kind: str = "ramp", t_rise: float = 1.0, amplitude: float = 1.0, frequency: float = 1.0):
    """Scalar excitation waveforms: ``ramp`` (smooth, to constant), ``step``, ``sine``, ``zero``."""
    if kind == "ramp":
        r = _smooth_ramp(t_rise)
        return lambda t: amplitude * r(t)
    if kind == "step":
        return lambda t: amplitude
    if kind == "sine":
        return lambda t: amplitude * math.sin(2 * math.pi * frequency * t)
    if kind == "zero":
        return lambda t: 0.0
    raise ValueError(f"unknown excitation kind {kind!r}")


@dataclass
class EQSSystem:
    """Assembled operators and index bookkeeping.

    ``M_eps`` is the full node permittivity matrix; ``flux`` and
    ``flux_jacobian`` evaluate ``K(Phi) Phi`` and its derivative on full
    node vectors. ``unknowns`` lists non-Dirichlet nodes, interior first.
    """

    grid: StructuredGrid2D
    M_eps: scipy.sparse.csr_matrix
    unknowns: np.ndarray
    interior: np.ndarray
    exterior: np.ndarray
    excitation: Callable[[float], float]
    _cells: np.ndarray = field(repr=False, default=None)
    _corners: np.ndarray = field(repr=False, default=None)
    _laws: list = field(repr=False, default_factory=list)

    @property
    def n(self) -> int:
        return self.unknowns.size

    @property
    def n_interior(self) -> int:
        return self.interior.size

    @property
    def n_exterior(self) -> int:
        return self.exterior.size

    def boundary(self, t: float) -> np.ndarray:
        return self.grid.dirichlet_profile * self.excitation(t)

    def full(self, t: float, x) -> np.ndarray:
        """Full node vector from unknowns ``x`` (ordered as ``unknowns``)."""
        phi = np.empty(self.grid.n_nodes)
        phi[self.unknowns] = x
        phi[self.grid.dirichlet_nodes] = self.boundary(t)
        return phi

    def cell_fields(self, phi) -> np.ndarray:
        """Field magnitude on each conductive cell."""
        S, gx, gy = _local_stiffness(self.grid)
        pc = np.asarray(phi)[self._corners]
        return np.hypot(pc @ gx, pc @ gy)

    def _sigma(self, E, derivative=False):
        out = np.empty_like(E)
        for law, sel in self._laws:
            out[sel] = law.derivative(E[sel]) if derivative else law(E[sel])
        return out

    def flux(self, phi) -> np.ndarray:
        """``K(Phi) Phi`` on the full node vector."""
        S, gx, gy = _local_stiffness(self.grid)
        out = np.zeros(self.grid.n_nodes)
        if self._corners.size == 0:
            return out
        pc = np.asarray(phi)[self._corners]
        sig = self._sigma(np.hypot(pc @ gx, pc @ gy))
        np.add.at(out, self._corners, sig[:, None] * (pc @ S))
        return out

    def conductivity_matrix(self, phi) -> scipy.sparse.csr_matrix:
        """``K(Phi)`` with the conductivities frozen at ``phi``."""
        S, gx, gy = _local_stiffness(self.grid)
        if self._corners.size == 0:
            return scipy.sparse.csr_matrix((self.grid.n_nodes,) * 2)
        pc = np.asarray(phi)[self._corners]
        sig = self._sigma(np.hypot(pc @ gx, pc @ gy))
        return self._scatter(sig[:, None, None] * S[None])

    def flux_jacobian(self, phi) -> scipy.sparse.csr_matrix:
        S, gx, gy = _local_stiffness(self.grid)
        if self._corners.size == 0:
            return scipy.sparse.csr_matrix((self.grid.n_nodes,) * 2)
        pc = np.asarray(phi)[self._corners]
        ex, ey = pc @ gx, pc @ gy
        E = np.hypot(ex, ey)
        sig = self._sigma(E)
        dsig = self._sigma(E, derivative=True)
        safe = np.where(E > 0, E, 1.0)
        dE = np.where(E[:, None] > 0, (ex[:, None] * gx + ey[:, None] * gy) / safe[:, None], 0.0)
        local = sig[:, None, None] * S[None] + (dsig[:, None] * (pc @ S))[:, :, None] * dE[:, None, :]
        return self._scatter(local)

    def _scatter(self, local) -> scipy.sparse.csr_matrix:
        c = self._corners
        k = c.shape[1]
        rows = np.repeat(c, k, axis=1).ravel()
        cols = np.tile(c, (1, k)).ravel()
        n = self.grid.n_nodes
        return scipy.sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))

    # restrictions to unknowns ------------------------------------------------

    def mass_uu(self):
        u = self.unknowns
        return self.M_eps[u][:, u].tocsc()

    def mass_uD(self):
        return self.M_eps[self.unknowns][:, self.grid.dirichlet_nodes].tocsr()


def assemble(grid: StructuredGrid2D, excitation_fn: Callable[[float], float] | None = None) -> EQSSystem:
    """Assemble permittivity and conductivity operators for ``grid``.

    Raises
    ------
    InvalidGrid
        When the permittivity matrix is singular on the unknowns (a node
        set without any path to a Dirichlet node).
    """
    S, _, _ = _local_stiffness(grid)
    corners = grid.corners()
    mats = grid.materials
    cell_ids = grid.cells.ravel()
    eps = np.array([m.eps for m in mats])[cell_ids]
    n = grid.n_nodes
    k = corners.shape[1]
    rows = np.repeat(corners, k, axis=1).ravel()
    cols = np.tile(corners, (1, k)).ravel()
    M = scipy.sparse.csr_matrix(((eps[:, None, None] * S[None]).ravel(), (rows, cols)), shape=(n, n))

    conductive = np.array([m.conductive for m in mats])[cell_ids]
    cond_cells = np.flatnonzero(conductive)
    laws = []
    sub_ids = cell_ids[cond_cells]
    for mid in np.unique(sub_ids):
        laws.append((mats[mid].sigma, np.flatnonzero(sub_ids == mid)))

    dirichlet = np.zeros(n, dtype=bool)
    dirichlet[grid.dirichlet_nodes] = True
    interior = np.flatnonzero(grid.region & ~dirichlet)
    exterior = np.flatnonzero(~grid.region & ~dirichlet)
    unknowns = np.concatenate([interior, exterior])
    sys = EQSSystem(
        grid,
        M,
        unknowns,
        interior,
        exterior,
        excitation_fn or (lambda t: 1.0),
        cond_cells,
        corners[cond_cells],
        laws,
    )
    if unknowns.size:
        try:
            scipy.sparse.linalg.splu(sys.mass_uu())
        except RuntimeError as exc:
            raise InvalidGrid(f"permittivity operator singular on the unknowns: {exc}") from exc
    return sys


# --------------------------------------------------------------------------
# partition


@dataclass
class PartitionedEQS:
    """Block operators over (interior, exterior) unknowns.

    ``K11(Phi)`` is an evaluator; the remaining conductivity blocks are
    constant (zero for a valid partition). ``M1D``/``M2D`` couple to the
    Dirichlet nodes and supply the lifted right-hand side.
    """

    sys: EQSSystem
    M11: scipy.sparse.csr_matrix
    M12: scipy.sparse.csr_matrix
    M21: scipy.sparse.csr_matrix
    M22: scipy.sparse.csr_matrix
    K12: scipy.sparse.csr_matrix
    K21: scipy.sparse.csr_matrix
    K22: scipy.sparse.csr_matrix
    M1D: scipy.sparse.csr_matrix
    M2D: scipy.sparse.csr_matrix
    interior: np.ndarray
    exterior: np.ndarray

    def K11(self, phi) -> scipy.sparse.csr_matrix:
        i = self.interior
        return self.sys.conductivity_matrix(phi)[i][:, i]

    def b(self, t0: float, t1: float) -> tuple[np.ndarray, np.ndarray]:
        """Mass-weighted Dirichlet increments for a step ``t0 -> t1``."""
        d = self.sys.boundary(t1) - self.sys.boundary(t0)
        return -(self.M1D @ d), -(self.M2D @ d)


def partition(sys: EQSSystem, probe=None) -> PartitionedEQS:
    """Extract the interior/exterior blocks.

    The conductivity blocks are taken at ``probe`` (default: a fixed
    deterministic pseudo-random potential) to expose the sparsity pattern.

    Raises
    ------
    NonzeroK22
        If any exterior node touches a conductive cell.
    """
    g = sys.grid
    bad = np.intersect1d(sys.exterior, np.flatnonzero(g.touches_conductive()))
    if bad.size:
        raise NonzeroK22(f"exterior nodes {bad[:5].tolist()} touch conductive cells")
    if probe is None:
        probe = np.sin(1.0 + np.arange(g.n_nodes) * 0.7)
    K = sys.conductivity_matrix(probe)
    M = sys.M_eps
    i, e, D = sys.interior, sys.exterior, g.dirichlet_nodes

    def blk(A, r, c):
        return A[r][:, c].tocsr()

    K22 = blk(K, e, e)
    if K22.nnz and np.max(np.abs(K22.data)) > 0:
        raise NonzeroK22("conductivity block of the exterior is not zero")
    return PartitionedEQS(
        sys,
        blk(M, i, i),
        blk(M, i, e),
        blk(M, e, i),
        blk(M, e, e),
        blk(K, i, e),
        blk(K, e, i),
        K22,
        blk(M, i, D),
        blk(M, e, D),
        i,
        e,
    )


# --------------------------------------------------------------------------
# time domain


@dataclass
class EQSTrajectory:
    """Full node potentials ``phi[k]`` at ``t[k]`` and exterior snapshots."""

    t: np.ndarray
    phi: np.ndarray
    snapshots: np.ndarray  # (n_exterior, len(t))
    newton_iterations: int = 0

    def unknown_values(self, sys: EQSSystem) -> np.ndarray:
        return self.phi[:, sys.unknowns]


def initial_potential(sys: EQSSystem, t0: float = 0.0) -> np.ndarray:
    """Electrostatic solve ``M_uu Phi_u = -M_uD Phi_D(t0)`` (unknowns)."""
    if sys.n == 0:
        return np.zeros(0)
    rhs = -(sys.mass_uD() @ sys.boundary(t0))
    return scipy.sparse.linalg.splu(sys.mass_uu()).solve(rhs)


def solve_full(sys: EQSSystem, times, cfg: IntegratorConfig = IntegratorConfig(), x0=None) -> EQSTrajectory:
    """Time-step the full system on ``times`` (Newton with analytic Jacobian)."""
    times = np.asarray(times, dtype=float)
    u = sys.unknowns
    M = sys.mass_uu()
    MuD = sys.mass_uD()
    x0 = initial_potential(sys, times[0]) if x0 is None else np.asarray(x0, dtype=float)

    def flux(t, x):
        return sys.flux(sys.full(t, x))[u]

    def jac(t, x):
        return sys.flux_jacobian(sys.full(t, x))[u][:, u]

    def source(t0, t1):
        return MuD @ (sys.boundary(t1) - sys.boundary(t0))

    stats = {"iterations": 0}
    X = integrate_linear_implicit(M, flux, jac, x0, times, cfg, source, stats)
    phi = np.empty((times.size, sys.grid.n_nodes))
    for k, t in enumerate(times):
        phi[k] = sys.full(t, X[k])
    return EQSTrajectory(times, phi, phi[:, sys.exterior].T.copy(), stats["iterations"])


def steady_state(sys: EQSSystem, level: float = 1.0) -> np.ndarray:
    """Resistive steady state for the constant excitation ``level``, as a full node vector.

    Interior nodes satisfy the conductive balance ``K Phi = 0`` (only valid
    for linear conductivities); exterior nodes are the permittivity-harmonic
    extension, which conserves the (zero) initial exterior charge.
    """
    g = sys.grid
    phi = np.zeros(g.n_nodes)
    phi[g.dirichlet_nodes] = g.dirichlet_profile * level
    K = sys.conductivity_matrix(phi)
    i, e, D = sys.interior, sys.exterior, g.dirichlet_nodes
    if i.size:
        phi[i] = scipy.sparse.linalg.spsolve(K[i][:, i].tocsc(), -(K[i][:, D] @ phi[D]))
    if e.size:
        M = sys.M_eps
        rhs = -(M[e][:, i] @ phi[i]) - (M[e][:, D] @ phi[D])
        phi[e] = scipy.sparse.linalg.spsolve(M[e][:, e].tocsc(), rhs)
    return phi


# --------------------------------------------------------------------------
# desk-scale arrester analog


@dataclass(frozen=True)
class Arr2DConfig:
    """Parameters of the ARR2D arrester analog (nondimensional units).

    A vertical column of width ``column_width`` cells stands on the grounded
    bottom edge; its central ``varistor_width`` cells are nonlinear grading
    material, the rest a weakly conducting housing. The top of the column is
    the high-voltage electrode. Everything else is air.
    """

    nx: int = 40
    ny: int = 40
    column_width: int = 11
    varistor_width: int = 5
    column_height: int = 30
    h: float = 1.0
    eps_air: float = 1.0
    eps_housing: float = 4.0
    eps_varistor: float = 20.0
    sigma_housing: float = 0.05
    sigma0: float = 1.0
    q: float = 3.0
    sigma_floor: float = 0.01
    voltage: float = 1.0

    def __post_init__(self):
        if not (0 < self.varistor_width <= self.column_width < self.nx - 1):
            raise InvalidGrid("column must fit into the grid")
        if not 0 < self.column_height < self.ny:
            raise InvalidGrid("column height must be inside the grid")
        if (self.column_width - self.varistor_width) % 2:
            raise InvalidGrid("housing must be symmetric around the varistor")


def arr2d_grid(cfg: Arr2DConfig = Arr2DConfig()) -> StructuredGrid2D:
    E0 = cfg.voltage / (cfg.column_height * cfg.h)
    materials = (
        Material(MaterialKind.AIR_EXTERIOR, cfg.eps_air),
        Material(MaterialKind.LINEAR_DIELECTRIC, cfg.eps_housing, PowerLaw(cfg.sigma_housing)),
        Material(MaterialKind.NONLINEAR_GRADING, cfg.eps_varistor, PowerLaw(cfg.sigma0, E0, cfg.q, cfg.sigma_floor)),
    )
    ncx, ncy = cfg.nx - 1, cfg.ny - 1
    cells = np.zeros((ncy, ncx), dtype=int)
    c0 = (ncx - cfg.column_width) // 2
    v0 = c0 + (cfg.column_width - cfg.varistor_width) // 2
    cells[: cfg.column_height, c0: c0 + cfg.column_width] = 1
    cells[: cfg.column_height, v0: v0 + cfg.varistor_width] = 2
    ground = np.arange(cfg.nx)
    top = cfg.column_height * cfg.nx + np.arange(c0, c0 + cfg.column_width + 1)
    nodes = np.concatenate([ground, top])
    profile = np.concatenate([np.zeros(ground.size), np.full(top.size, cfg.voltage)])
    return StructuredGrid2D(cfg.nx, cfg.ny, cfg.h, cfg.h, cells, materials, nodes, profile)


def arr2d(cfg: Arr2DConfig = Arr2DConfig(), excitation_fn=None) -> EQSSystem:
    return assemble(arr2d_grid(cfg), excitation_fn or excitation("ramp", t_rise=10.0))
