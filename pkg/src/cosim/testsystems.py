"""Small coupled DAEs with closed-form structure, used in tests and scenarios.

LIN2 is the smallest problem with algebraic coupling between subsystems::

    S1:  y1' = -y1 + z1 + c1*y2      0 = z1 + a*z2 - y1
    S2:  y2' = -y2 + z2 + c2*y1      0 = z2 + b*z1 - y2

Gauss-Seidel in the order (S1, S2) contracts the algebraic error by |a*b|
per sweep; the monolithic solution has z1 = (y1 - a*y2) / (1 - a*b).
"""

from __future__ import annotations

import numpy as np

from .coupler import CoupledProblem
from .dae import PortKind, SemiExplicitSystem, in_port, out_port

BC = PortKind.BOUNDARY_CONDITION
SRC = PortKind.SOURCE_TERM


def _yz_outputs(t, y, z):
    return {"y": y, "z": z}


def _lin_subsystem(name, partner, coupling_z, coupling_y, y0, freeze_y=False):
    inputs = []
    if coupling_z:
        inputs.append(in_port("z_in", BC))
    if coupling_y:
        inputs.append(in_port("y_in", SRC))

    def f(t, y, z, u):
        if freeze_y:
            return np.zeros(1)
        dy = -y + z
        if coupling_y:
            dy = dy + coupling_y * u["y_in"]
        return dy

    def g(t, y, z, u):
        r = z - y
        if coupling_z:
            r = r + coupling_z * u["z_in"]
        return r

    return SemiExplicitSystem(
        name=name,
        ny=1,
        nz=1,
        f=f,
        g=g,
        y0=[y0],
        z0=[0.0],
        input_ports=inputs,
        output_ports=[out_port("y", SRC), out_port("z", BC)],
        output=_yz_outputs,
        meta={"partner": partner},
    )


def lin2(a=0.5, b=1.0, y0=(1.0, 1.0), c1=0.0, c2=0.0, freeze_y=False) -> CoupledProblem:
    """Build LIN2. ``freeze_y`` sets ``y' = 0`` (frozen differential states)."""
    s1 = _lin_subsystem("S1", "S2", a, c1, y0[0], freeze_y)
    s2 = _lin_subsystem("S2", "S1", b, c2, y0[1], freeze_y)
    conns = []
    if a:
        conns.append("S2.z -> S1.z_in")
    if c1:
        conns.append("S2.y -> S1.y_in")
    if b:
        conns.append("S1.z -> S2.z_in")
    if c2:
        conns.append("S1.y -> S2.y_in")
    return CoupledProblem([s1, s2], conns)


def lin2_monolithic_z(y1, y2, a, b):
    """Closed-form elimination of the LIN2 constraints."""
    det = 1.0 - a * b
    return (y1 - a * y2) / det, (y2 - b * y1) / det


def triangular3(c21=0.5, c31=0.4, c32=0.3, y0=(1.0, 0.5, -0.5)) -> CoupledProblem:
    """Three subsystems whose constraints form a lower-triangular chain.

    ``S1`` reads nothing foreign, ``S2`` reads ``z1``, ``S3`` reads ``z1``
    and ``z2``. The order (S1, S2, S3) has zero contraction.
    """
    def make(name, reads, coeffs, yi):
        ports = [in_port(f"z_{r}", BC) for r in reads]

        def f(t, y, z, u):
            return -y + z

        def g(t, y, z, u):
            r = z - y
            for src, c in zip(reads, coeffs):
                r = r + c * u[f"z_{src}"]
            return r

        return SemiExplicitSystem(
            name, 1, 1, f, g, [yi], [0.0],
            input_ports=ports, output_ports=[out_port("y", SRC), out_port("z", BC)], output=_yz_outputs,
        )

    s1 = make("S1", [], [], y0[0])
    s2 = make("S2", ["S1"], [c21], y0[1])
    s3 = make("S3", ["S1", "S2"], [c31, c32], y0[2])
    conns = ["S1.z -> S2.z_S1", "S1.z -> S3.z_S1", "S2.z -> S3.z_S2"]
    return CoupledProblem([s1, s2, s3], conns)


def decoupled_pair(y0=(1.0, 2.0)) -> CoupledProblem:
    """Two independent copies of ``y' = -y + z, 0 = z - y``."""
    return lin2(a=0.0, b=0.0, y0=y0)
