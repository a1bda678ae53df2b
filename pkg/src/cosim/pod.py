"""POD reduction of the linear exterior block of a partitioned EQS system.

The exterior potentials are approximated as ``Phi2 = P z2`` with an
orthonormal basis ``P`` from the snapshot SVD, and the exterior rows are
Galerkin-projected; the nonlinear interior stays full order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .eqs import EQSTrajectory, PartitionedEQS
from .errors import DimensionMismatch
from .integrate import IntegratorConfig, integrate_linear_implicit
from .linalg import LUFactorization, thin_svd

RANK_WARNING_RATIO = 1e-14


class RankDeficient(UserWarning):
    """The basis contains directions with negligible singular value."""


def _fix_signs(P: np.ndarray) -> np.ndarray:
    if P.size == 0:
        return P
    idx = np.argmax(np.abs(P), axis=0)
    s = np.sign(P[idx, np.arange(P.shape[1])])
    s[s == 0] = 1.0
    return P * s


@dataclass(frozen=True)
class PODBasis:
    """Orthonormal projector ``P`` (n x p) with the snapshot spectrum.

    ``sigma`` holds all singular values of the snapshot matrix;
    ``rank_deficient`` flags ``sigma_p / sigma_1 < 1e-14``.
    """

    P: np.ndarray
    sigma: np.ndarray
    rank_deficient: bool = False

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def p(self) -> int:
        return self.P.shape[1]

    @property
    def energy_captured(self) -> float:
        total = float(np.sum(self.sigma**2))
        if total == 0.0:
            return 1.0
        return float(np.sum(self.sigma[: self.p] ** 2) / total)

    def project(self, x) -> np.ndarray:
        return self.P.T @ x

    def lift(self, z) -> np.ndarray:
        return self.P @ z

    @classmethod
    def identity(cls, n: int) -> "PODBasis":
        return cls(np.eye(n), np.ones(n))


def energy_rank(sigma, eps: float) -> int:
    """Smallest ``p`` with ``sum(sigma[:p]^2) >= (1 - eps) * sum(sigma^2)``."""
    e = np.asarray(sigma, dtype=float) ** 2
    total = e.sum()
    if total == 0.0:
        return 1
    tail = total - np.cumsum(e)  # energy left out when keeping p = 1, 2, ...
    return int(np.argmax(tail <= eps * total)) + 1


def build_basis(snapshots, p: int | None = None, energy: float | None = None, complete: bool = False) -> PODBasis:
    """POD basis of an ``n x m`` snapshot matrix.

    Exactly one of ``p`` (fixed size) and ``energy`` (keep the smallest
    basis capturing at least ``energy`` of the squared singular values, e.g.
    ``1 - 1e-6``) must be given. Each column is signed so that its
    largest-magnitude component is positive. Snapshots are not centred.

    With ``complete=True`` a request ``p > m`` is served by extending the
    POD vectors to an orthonormal set with the (deterministic) complement of
    the snapshot span; otherwise ``p`` must not exceed ``min(n, m)``.
    """
    S = np.asarray(snapshots, dtype=float)
    if S.ndim != 2 or S.shape[1] < 1:
        raise ValueError("snapshot matrix must be n x m with m >= 1")
    n, m = S.shape
    if (p is None) == (energy is None):
        raise ValueError("give exactly one of p and energy")
    if m > n:
        # more snapshots than rows: the leading vectors of S S^T equal those
        # of the left singular vectors, so factor the transpose problem
        V, sig = thin_svd(S.T)
        U = S @ V
        nz = sig > 0
        U[:, nz] /= sig[nz]
        U = U[:, :n]
        sig = sig[:n]
        U, _ = np.linalg.qr(U) if U.size else (U, None)
    else:
        U, sig = thin_svd(S)
    if energy is not None:
        if not 0.0 < energy <= 1.0:
            raise ValueError("energy must lie in (0, 1]")
        p = energy_rank(sig, 1.0 - energy)
    if p < 1 or p > n:
        raise ValueError(f"basis size {p} outside [1, {n}]")
    if p > sig.size and not complete:
        raise ValueError(f"basis size {p} exceeds the snapshot count {sig.size}")
    P = U[:, : min(p, U.shape[1])]
    if p > P.shape[1]:
        Q, _ = np.linalg.qr(np.hstack([P, np.eye(n)]))
        P = np.hstack([P, Q[:, P.shape[1]: p]])
    P = _fix_signs(P)
    sigma = np.concatenate([sig, np.zeros(max(0, p - sig.size))])
    deficient = bool(sig[0] == 0.0 or sigma[p - 1] / sig[0] < RANK_WARNING_RATIO)
    if deficient:
        warnings.warn(f"POD basis of size {p} includes singular values below {RANK_WARNING_RATIO:g} sigma_1", RankDeficient, stacklevel=2)
    return PODBasis(P, sigma, deficient)


@dataclass
class ReducedSystem:
    """Galerkin-reduced partitioned system over ``(Phi1, z2)``."""

    part: PartitionedEQS
    basis: PODBasis
    mass: scipy.sparse.csc_matrix
    M12P: np.ndarray
    PtM21: np.ndarray
    PtM22P: np.ndarray
    K12P: np.ndarray
    PtK21: np.ndarray
    PtM2D: np.ndarray

    @property
    def n_unknowns(self) -> int:
        return self.part.interior.size + self.basis.p

    def b(self, t0: float, t1: float) -> tuple[np.ndarray, np.ndarray]:
        b1, b2 = self.part.b(t0, t1)
        return b1, self.basis.P.T @ b2


def reduce(part: PartitionedEQS, basis: PODBasis) -> ReducedSystem:
    """Project the exterior rows and columns onto ``basis``.

    Raises
    ------
    DimensionMismatch
        If the basis row count differs from the exterior size.
    """
    n2 = part.exterior.size
    if basis.n != n2:
        raise DimensionMismatch(f"basis has {basis.n} rows but the exterior has {n2} unknowns")
    P = basis.P
    M12P = np.asarray(part.M12 @ P)
    PtM21 = np.asarray((part.M21.T @ P).T)
    PtM22P = P.T @ np.asarray(part.M22 @ P)
    K12P = np.asarray(part.K12 @ P)
    PtK21 = np.asarray((part.K21.T @ P).T)
    PtM2D = np.asarray((part.M2D.T @ P).T)
    mass = scipy.sparse.bmat(
        [[part.M11, scipy.sparse.csr_matrix(M12P)], [scipy.sparse.csr_matrix(PtM21), scipy.sparse.csr_matrix(PtM22P)]],
        format="csc",
    )
    return ReducedSystem(part, basis, mass, M12P, PtM21, PtM22P, K12P, PtK21, PtM2D)


@dataclass
class ReducedTrajectory:
    t: np.ndarray
    phi1: np.ndarray  # (nt, n1)
    z2: np.ndarray  # (nt, p)
    phi2: np.ndarray  # (nt, n2) reconstructed P z2
    phi: np.ndarray  # (nt, n_nodes) full node vector
    newton_iterations: int = 0


def solve_reduced(red: ReducedSystem, times, cfg: IntegratorConfig = IntegratorConfig(), phi0=None) -> ReducedTrajectory:
    """Integrate the reduced system; the initial state is ``(Phi1(0), P^T Phi2(0))``.

    ``phi0`` is a full node vector (default: the electrostatic initial
    potential of the full system).
    """
    from .eqs import initial_potential

    part = red.part
    sys = part.sys
    P = red.basis.P
    i, e = part.interior, part.exterior
    n1 = i.size
    times = np.asarray(times, dtype=float)
    if phi0 is None:
        phi0 = sys.full(times[0], initial_potential(sys, times[0]))
    x0 = np.concatenate([phi0[i], P.T @ phi0[e]])
    M1D = part.M1D

    def nodes(t, x):
        phi = np.empty(sys.grid.n_nodes)
        phi[i] = x[:n1]
        phi[e] = P @ x[n1:]
        phi[sys.grid.dirichlet_nodes] = sys.boundary(t)
        return phi

    def flux(t, x):
        phi = nodes(t, x)
        out = np.empty(x.size)
        out[:n1] = sys.flux(phi)[i]
        # K21 and K22 vanish for a valid partition; keep the general form
        out[n1:] = red.PtK21 @ x[:n1] if red.PtK21.size else 0.0
        return out

    def source(t0, t1):
        d = sys.boundary(t1) - sys.boundary(t0)
        return np.concatenate([M1D @ d, red.PtM2D @ d])

    theta = cfg.theta
    cache: dict[float, tuple] = {}

    def exterior_factors(h):
        # the exterior rows and columns of the Newton matrix do not depend on
        # the state (the partition guarantees K12 = 0), so eliminate them once
        # per step size
        if h not in cache:
            A12 = red.M12P / h
            A21 = red.PtM21 / h + theta * red.PtK21
            lu22 = LUFactorization(red.PtM22P / h)
            W = lu22.solve(A21)
            cache[h] = (lu22, A12, W, A12 @ W)
        return cache[h]

    def factorize(t, h, x):
        lu22, A12, W, C = exterior_factors(h)
        J11 = sys.flux_jacobian(nodes(t, x))[i][:, i]
        lu_s = LUFactorization((part.M11 / h + theta * J11).toarray() - C)

        def solve(r):
            y2 = lu22.solve(r[n1:])
            x1 = lu_s.solve(r[:n1] - A12 @ y2)
            return np.concatenate([x1, y2 - W @ x1])

        return solve

    stats = {"iterations": 0}
    X = integrate_linear_implicit(red.mass, flux, None, x0, times, cfg, source, stats, factorize)
    phi = np.array([nodes(t, x) for t, x in zip(times, X)])
    return ReducedTrajectory(times, X[:, :n1], X[:, n1:], phi[:, e], phi, stats["iterations"])


@dataclass
class MORReport:
    per_time: np.ndarray  # relative L2 error at each time
    relative_l2: float  # over the whole trajectory
    max_node_error: float
    reduction_factor: float
    n: int
    p: int
    extra: dict = field(default_factory=dict)


def reduction_factor(n: int, p: int) -> float:
    return n / p


def mor_report(full: EQSTrajectory, reduced: ReducedTrajectory, unknowns, n_exterior: int, p: int) -> MORReport:
    """Error metrics of a reduced run against the full solve on the same grid.

    Errors are measured over the unknown nodes (interior and exterior). A
    time with a zero full solution contributes its absolute error.
    """
    if full.t.shape != reduced.t.shape or np.any(full.t != reduced.t):
        raise DimensionMismatch("full and reduced runs use different time grids")
    A = full.phi[:, unknowns]
    B = reduced.phi[:, unknowns]
    err = np.linalg.norm(A - B, axis=1)
    ref = np.linalg.norm(A, axis=1)
    per_time = np.where(ref > 0, err / np.where(ref > 0, ref, 1.0), err)
    total = math.sqrt(float(np.sum(ref**2)))
    rel = math.sqrt(float(np.sum(err**2))) / total if total > 0 else math.sqrt(float(np.sum(err**2)))
    max_node = float(np.max(np.abs(A - B))) if A.size else 0.0
    return MORReport(per_time, rel, max_node, reduction_factor(n_exterior, p), n_exterior, p)
