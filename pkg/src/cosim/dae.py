"""Semi-explicit index-1 DAE systems and conversions into that form.

A system is ``y' = f(t, y, z, u)``, ``0 = g(t, y, z, u)`` where ``u`` is a
mapping from input-port names to the current input values. Outputs are
functions of the subsystem's own state only, ``output(t, y, z) -> dict``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .errors import MixedRow, SingularAlgebraicPart, SingularMass, SingularMatrix
from .linalg import LUFactorization, operator_norm

Evaluator = Callable[[float, np.ndarray, np.ndarray, Mapping[str, np.ndarray]], np.ndarray]

CONSISTENCY_TOL = 1e-10


class PortKind(enum.Enum):
    BOUNDARY_CONDITION = "boundary-condition"
    SOURCE_TERM = "source-term"
    MATERIAL_PARAMETER = "material-parameter"
    # Listed so the taxonomy is complete; moving subdomains are not supported.
    DOMAIN_DEFORMATION = "domain-deformation"


class Direction(enum.Enum):
    IN = "in"
    OUT = "out"


@dataclass(frozen=True)
class CouplingPort:
    name: str
    kind: PortKind
    direction: Direction
    dimension: int

    def __post_init__(self):
        if not isinstance(self.kind, PortKind):
            object.__setattr__(self, "kind", PortKind(self.kind))
        if not isinstance(self.direction, Direction):
            object.__setattr__(self, "direction", Direction(self.direction))
        if self.kind is PortKind.DOMAIN_DEFORMATION:
            raise NotImplementedError("domain-deformation coupling is not supported")
        if self.dimension < 1:
            raise ValueError(f"port {self.name!r}: dimension must be >= 1")


def in_port(name, kind, dimension=1) -> CouplingPort:
    return CouplingPort(name, kind, Direction.IN, dimension)


def out_port(name, kind, dimension=1) -> CouplingPort:
    return CouplingPort(name, kind, Direction.OUT, dimension)


def _no_outputs(t, y, z):
    return {}


@dataclass(frozen=True)
class SemiExplicitSystem:
    """A semi-explicit index-1 DAE with declared coupling ports.

    ``x_index`` is optional bookkeeping for systems converted from an implicit
    form: a pair ``(iy, iz)`` of index arrays placing ``y`` and ``z`` back into
    the original unknown vector.
    """

    name: str
    ny: int
    nz: int
    f: Evaluator
    g: Evaluator
    y0: np.ndarray
    z0: np.ndarray
    input_ports: tuple[CouplingPort, ...] = ()
    output_ports: tuple[CouplingPort, ...] = ()
    output: Callable = _no_outputs
    x_index: tuple[np.ndarray, np.ndarray] | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        y0 = np.array(self.y0, dtype=float).reshape(-1)
        z0 = np.array(self.z0, dtype=float).reshape(-1)
        y0.setflags(write=False)
        z0.setflags(write=False)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "input_ports", tuple(self.input_ports))
        object.__setattr__(self, "output_ports", tuple(self.output_ports))
        if y0.size != self.ny or z0.size != self.nz:
            raise ValueError(
                f"{self.name}: initial values have sizes ({y0.size}, {z0.size}), "
                f"declared ({self.ny}, {self.nz})"
            )
        names = [p.name for p in self.input_ports] + [p.name for p in self.output_ports]
        if len(set(p.name for p in self.input_ports)) != len(self.input_ports) or len(
            set(p.name for p in self.output_ports)
        ) != len(self.output_ports):
            raise ValueError(f"{self.name}: duplicate port names in {names}")
        for p in self.input_ports:
            if p.direction is not Direction.IN:
                raise ValueError(f"{self.name}: port {p.name!r} listed as input but declared out")
        for p in self.output_ports:
            if p.direction is not Direction.OUT:
                raise ValueError(f"{self.name}: port {p.name!r} listed as output but declared in")

    def port(self, name: str) -> CouplingPort:
        for p in self.input_ports + self.output_ports:
            if p.name == name:
                return p
        raise KeyError(f"{self.name} has no port {name!r}")

    def with_initial(self, y0=None, z0=None) -> "SemiExplicitSystem":
        return replace(
            self,
            y0=self.y0 if y0 is None else y0,
            z0=self.z0 if z0 is None else z0,
        )

    def assemble_state(self, y, z) -> np.ndarray:
        """Map ``(y, z)`` back onto the original unknown ordering."""
        if self.x_index is None:
            return np.concatenate([np.asarray(y), np.asarray(z)], axis=-1)
        iy, iz = self.x_index
        y = np.asarray(y)
        z = np.asarray(z)
        x = np.empty(y.shape[:-1] + (iy.size + iz.size,))
        x[..., iy] = y
        x[..., iz] = z
        return x


Subsystem = SemiExplicitSystem


def fd_jacobian(fun, x, rel_step=1e-7, f0=None) -> np.ndarray:
    """Forward-difference Jacobian with step ``rel_step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    if f0 is None:
        f0 = np.asarray(fun(x), dtype=float)
    J = np.empty((f0.size, x.size))
    xp = x.copy()
    for i in range(x.size):
        dx = rel_step * (1.0 + abs(x[i]))
        xp[i] = x[i] + dx
        J[:, i] = (np.asarray(fun(xp), dtype=float) - f0) / dx
        xp[i] = x[i]
    return J


@dataclass(frozen=True)
class RegularityReport:
    regular: bool
    condition: float
    jacobian: np.ndarray


def algebraic_jacobian(sys: SemiExplicitSystem, t, y, z, inputs=None, rel_step=1e-6):
    inputs = {} if inputs is None else inputs
    y = np.asarray(y, dtype=float)
    return fd_jacobian(lambda zz: sys.g(t, y, zz, inputs), np.asarray(z, dtype=float), rel_step)


def verify_index1(sys: SemiExplicitSystem, t, y, z, inputs=None) -> RegularityReport:
    """Check that dg/dz is regular at the given point.

    The Jacobian is assembled by forward differences with step
    ``1e-6 * (1 + |z_i|)``; the condition estimate is ``||J|| ||J^-1||`` in
    the spectral norm.

    Raises
    ------
    SingularAlgebraicPart
        If the LU factorization of dg/dz fails.
    """
    if sys.nz == 0:
        return RegularityReport(True, 1.0, np.zeros((0, 0)))
    J = algebraic_jacobian(sys, t, y, z, inputs)
    try:
        lu = LUFactorization(J)
    except SingularMatrix as exc:
        raise SingularAlgebraicPart(
            f"{sys.name}: dg/dz is singular ({exc}); not index-1 in this formulation"
        ) from exc
    Jinv = lu.solve(np.eye(sys.nz))
    cond = operator_norm(J) * operator_norm(Jinv)
    return RegularityReport(True, cond, J)


def consistent_algebraic(sys: SemiExplicitSystem, t, y, z_guess, inputs=None, cfg=None):
    """Solve ``g(t, y, z, u) = 0`` for ``z`` starting from ``z_guess``."""
    from .integrate import IntegratorConfig, newton_solve

    if sys.nz == 0:
        return np.zeros(0)
    inputs = {} if inputs is None else inputs
    cfg = cfg or IntegratorConfig(newton_tol=CONSISTENCY_TOL)
    y = np.asarray(y, dtype=float)
    return newton_solve(lambda zz: sys.g(t, y, zz, inputs), z_guess, cfg)


def make_consistent(sys: SemiExplicitSystem, inputs=None, t0=0.0) -> SemiExplicitSystem:
    z0 = consistent_algebraic(sys, t0, sys.y0, sys.z0, inputs)
    return sys.with_initial(z0=z0)


def from_linear_implicit(M, F, x0, split=None, name="implicit") -> SemiExplicitSystem:
    """Convert ``M x' = F(t, x)`` into semi-explicit form.

    Unknowns whose mass columns vanish become algebraic ``z``; the remaining
    ones become ``y`` with ``f = M_dd^{-1} F_d`` and ``g = F_a``. A row or
    column is negligible when its largest entry is below ``1e-14 * ||M||``.

    Parameters
    ----------
    M : (n, n) array_like
    F : callable ``F(t, x) -> (n,)``
    x0 : (n,) initial state
    split : optional ``(diff_rows, diff_cols)`` index arrays overriding the
        automatic detection.

    Raises
    ------
    MixedRow
        When the automatic split does not produce an invertible differential
        block with empty coupling to the algebraic unknowns.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("mass matrix must be square")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    scale = np.max(np.abs(M)) if M.size else 0.0
    thresh = 1e-14 * scale
    if split is None:
        dr = np.nonzero(np.max(np.abs(M), axis=1) >= thresh)[0] if scale > 0 else np.zeros(0, int)
        dc = np.nonzero(np.max(np.abs(M), axis=0) >= thresh)[0] if scale > 0 else np.zeros(0, int)
    else:
        dr, dc = (np.asarray(s, dtype=int) for s in split)
    ar = np.setdiff1d(np.arange(n), dr)
    ac = np.setdiff1d(np.arange(n), dc)
    if dr.size != dc.size:
        raise MixedRow(
            f"{dr.size} differential rows but {dc.size} differential unknowns; "
            "supply an explicit split"
        )
    if ar.size and np.max(np.abs(M[np.ix_(ar, np.arange(n))]), initial=0.0) >= thresh:
        raise MixedRow("rows declared algebraic carry mass entries")
    if dr.size and ac.size and np.max(np.abs(M[np.ix_(dr, ac)])) >= thresh:
        raise MixedRow("differential rows couple to the time derivative of algebraic unknowns")
    try:
        lu = LUFactorization(M[np.ix_(dr, dc)]) if dr.size else None
    except SingularMatrix as exc:
        raise MixedRow(f"differential mass block is singular: {exc}") from exc

    def full(y, z):
        x = np.empty(n)
        x[dc] = y
        x[ac] = z
        return x

    def f(t, y, z, u):
        return lu.solve(np.asarray(F(t, full(y, z)))[dr])

    def g(t, y, z, u):
        return np.asarray(F(t, full(y, z)))[ar]

    return SemiExplicitSystem(
        name=name,
        ny=dc.size,
        nz=ac.size,
        f=f,
        g=g,
        y0=x0[dc],
        z0=x0[ac],
        x_index=(dc, ac),
    )


def lower_second_order(M, f, x0, v0, name="second-order") -> SemiExplicitSystem:
    """Rewrite ``M x'' = f(t, x)`` as ``x' = w``, ``w' = M^{-1} f(t, x)``.

    The state is ``y = (x, w)`` and there are no algebraic unknowns.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    n = x0.size
    try:
        lu = LUFactorization(M)
    except SingularMatrix as exc:
        raise SingularMass(f"mass matrix is singular: {exc}") from exc

    def rhs(t, y, z, u):
        x, w = y[:n], y[n:]
        return np.concatenate([w, lu.solve(np.atleast_1d(f(t, x)))])

    def g(t, y, z, u):
        return np.zeros(0)

    return SemiExplicitSystem(
        name=name, ny=2 * n, nz=0, f=rhs, g=g, y0=np.concatenate([x0, v0]), z0=np.zeros(0)
    )
