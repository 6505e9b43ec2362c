"""Weak (Nitsche-type) enforcement of conditions on embedded interfaces.

Two assemblers are provided. ``assemble_fs_coupling`` ties the velocity of
the cut background fluid to the interface velocity of a boundary-fitted
solid: traction consistency, an adjoint term with a switchable sign, and
viscous plus directional penalties, integrated over the interface segments
of a cut configuration. ``assemble_ff_coupling`` couples two overlapping
fluid meshes along the boundary of the embedded one with weighted-average
fluxes, jump penalties, and interface transport terms.

Interface geometry (segment positions, normals, integration weights) is
treated as data: the derivative blocks returned by the assemblers are taken
at fixed geometry, so interface motion enters Newton updates in a
fixed-point fashion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cutting import CutConfiguration, ElemStatus, GeometryError
from .fluid import FluidParams, basis_tables
from .linalg import TripletAccumulator
from .meshes import StructuredGrid

__all__ = [
    "NitscheParams",
    "assemble_fs_coupling",
    "assemble_ff_coupling",
    "interface_jump_norms",
]

# Two-point Gauss rule on the unit interval.
_G2_PTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_G2_WTS = np.array([0.5, 0.5])

_I2 = np.eye(2)


@dataclass(frozen=True)
class NitscheParams:
    """Penalty and weighting constants for the interface operators.

    ``adjoint_sign`` +1 selects the adjoint-inconsistent (skew) variant, -1
    the symmetric one; the choice changes only the adjoint rows.
    ``flux_weight_first`` is the share of the averaged interface fluxes taken
    from the first (cut background) mesh in the two-mesh coupling; the
    remainder comes from the second, uncut mesh. ``trace_constant`` is C in
    the per-element trace bound (f_k)^2 = C / h_k that scales the viscous
    jump penalty of the two-mesh coupling.
    """

    gamma: float = 35.0
    adjoint_sign: float = 1.0
    flux_weight_first: float = 0.0
    trace_constant: float = 12.0

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError("penalty constant gamma must be positive")
        if self.adjoint_sign not in (1.0, -1.0):
            raise ValueError("adjoint_sign must be +1 or -1")
        if not 0.0 <= self.flux_weight_first <= 1.0:
            raise ValueError("flux_weight_first must lie in [0, 1]")


def _segment_quadrature(seg, grid):
    """Gauss points of a segment with basis data on its owner element.

    Returns (points, weights, N, g, conn) where ``g[q, b]`` is the gradient
    of basis function ``b`` at point ``q`` and ``conn`` the owner's nodes.
    """
    conn = grid.elem_nodes(seg.elem)
    x0, y0, _, _ = grid.elem_bbox(seg.elem)
    hx, hy = grid.spacing
    pts = seg.p0 + _G2_PTS[:, None] * (seg.p1 - seg.p0)
    wq = _G2_WTS * seg.length
    s = (pts[:, 0] - x0) / hx
    t = (pts[:, 1] - y0) / hy
    N, Dx, Dy, _ = basis_tables(hx, hy, s, t)
    g = np.stack([Dx, Dy], axis=-1)
    return pts, wq, N, g, conn


def _traction_derivative(mu, g, gn, nvec):
    """d(2 mu eps(u) n)_i / d u_{b,k} as an (i, b, k) array."""
    return mu * (np.einsum("ik,b->ibk", _I2, gn) + np.einsum("bi,k->ibk", g, nvec))


def _adjoint_rows(mu, g, gn, nvec):
    """d(2 mu eps(v) n . j)/d j for v = N_a e_i, as an (a, i, k) array."""
    return mu * (np.einsum("ak,i->aik", g, nvec) + np.einsum("a,ik->aik", gn, _I2))


def assemble_fs_coupling(
    grid: StructuredGrid,
    cfg: CutConfiguration,
    params: FluidParams,
    nitsche: NitscheParams,
    U: np.ndarray,
    P: np.ndarray,
    C_frozen: np.ndarray,
    loop_nodes: np.ndarray,
    solid_velocity: np.ndarray,
    theta_iface: float,
    dt: float,
    sigma: float,
    tangent: bool = True,
):
    """Interface operator between the cut fluid and a fitted solid boundary.

    ``loop_nodes`` lists the solid mesh nodes whose (deformed) positions
    built the interface polygon of ``cfg``, in the same order; segment trace
    parameters refer to edges of that polygon. ``solid_velocity`` holds the
    solid interface velocity, flat with two entries per solid node; its
    derivative with respect to the solid displacement is
    ``1 / (theta_iface * dt)``, which scales every displacement column.
    ``sigma`` is the reactive scale of the flow time discretization and
    enters the directional penalty ``gamma * (rho sigma h + rho |c| + mu/h)``.

    Returns ``(residuals, jacobians)``: residuals keyed ``'u'``, ``'p'``,
    ``'d'`` in full-grid / solid numbering, derivative blocks keyed by
    (row, column) key pairs, or None when ``tangent`` is false.
    """
    n = grid.n_nodes
    nd = solid_velocity.size
    if nd % 2:
        raise ValueError("solid_velocity must have two entries per node")
    mu, rho = params.viscosity, params.density
    gamma, sign = nitsche.gamma, nitsche.adjoint_sign
    h = grid.elem_diameter()
    pen_v = gamma * mu / h
    vel_scale = 1.0 / (theta_iface * dt)
    L = len(loop_nodes)

    Uv = U.reshape(n, 2)
    Cv = C_frozen.reshape(n, 2)
    Sv = solid_velocity.reshape(-1, 2)

    ru = np.zeros(2 * n)
    rp = np.zeros(n)
    rd = np.zeros(nd)
    acc = None
    if tangent:
        acc = {
            ("u", "u"): TripletAccumulator(2 * n, 2 * n),
            ("u", "p"): TripletAccumulator(2 * n, n),
            ("u", "d"): TripletAccumulator(2 * n, nd),
            ("p", "u"): TripletAccumulator(n, 2 * n),
            ("p", "d"): TripletAccumulator(n, nd),
            ("d", "u"): TripletAccumulator(nd, 2 * n),
            ("d", "p"): TripletAccumulator(nd, n),
            ("d", "d"): TripletAccumulator(nd, nd),
        }

    for seg in cfg.segments:
        if cfg.status[seg.elem] == ElemStatus.COVERED:
            raise GeometryError(
                f"interface segment owned by element {seg.elem} which has no fluid"
            )
        pts, wq, N, g, conn = _segment_quadrature(seg, grid)
        nvec = seg.normal
        gn = g @ nvec

        ue = Uv[conn]
        pe = P[conn]
        uf = N @ ue
        pf = N @ pe
        cmag = np.linalg.norm(N @ Cv[conn], axis=1)

        edge = np.array(
            [loop_nodes[seg.loop_index], loop_nodes[(seg.loop_index + 1) % L]]
        )
        tpar = seg.t0 + _G2_PTS * (seg.t1 - seg.t0)
        phi = np.column_stack([1.0 - tpar, tpar])
        us = phi @ Sv[edge]

        tr = mu * (gn @ ue + np.einsum("qbi,b->qi", g, ue @ nvec))
        jmp = uf - us
        jn = jmp @ nvec
        pen_n = gamma * (rho * sigma * h + rho * cmag + mu / h)

        ru_loc = np.zeros((4, 2))
        rp_loc = np.zeros(4)
        rd_loc = np.zeros((2, 2))
        if tangent:
            juu = np.zeros((4, 2, 4, 2))
            jup = np.zeros((4, 2, 4))
            jud = np.zeros((4, 2, 2, 2))
            jpu = np.zeros((4, 4, 2))
            jpd = np.zeros((4, 2, 2))
            jdu = np.zeros((2, 2, 4, 2))
            jdp = np.zeros((2, 2, 4))
            jdd = np.zeros((2, 2, 2, 2))

        for q in range(len(wq)):
            w = float(wq[q])
            Nq, gq, gnq, phq = N[q], g[q], gn[q], phi[q]
            j, tq, pq, jnq, pn = jmp[q], tr[q], float(pf[q]), float(jn[q]), pen_n[q]

            # Traction and pressure consistency, tested with the jump v - w.
            ru_loc += w * (-np.outer(Nq, tq) + pq * np.outer(Nq, nvec))
            rd_loc += w * (np.outer(phq, tq) - pq * np.outer(phq, nvec))
            # Adjoint terms carry fluid test functions only.
            adj = mu * (np.outer(gq @ j, nvec) + np.outer(gnq, j))
            ru_loc += sign * w * adj
            rp_loc += -w * jnq * Nq
            # Viscous and directional penalties, tested with the jump.
            ru_loc += w * (pen_v * np.outer(Nq, j) + pn * jnq * np.outer(Nq, nvec))
            rd_loc -= w * (pen_v * np.outer(phq, j) + pn * jnq * np.outer(phq, nvec))

            if not tangent:
                continue
            dtr = _traction_derivative(mu, gq, gnq, nvec)
            B = _adjoint_rows(mu, gq, gnq, nvec)
            nn = np.outer(nvec, nvec)
            juu += w * (
                -np.einsum("a,ibk->aibk", Nq, dtr)
                + sign * np.einsum("aik,b->aibk", B, Nq)
                + pen_v * np.einsum("a,b,ik->aibk", Nq, Nq, _I2)
                + pn * np.einsum("a,b,ik->aibk", Nq, Nq, nn)
            )
            jud += -w * vel_scale * (
                sign * np.einsum("aik,c->aick", B, phq)
                + pen_v * np.einsum("a,c,ik->aick", Nq, phq, _I2)
                + pn * np.einsum("a,c,ik->aick", Nq, phq, nn)
            )
            jup += w * np.einsum("a,i,b->aib", Nq, nvec, Nq)
            jpu += -w * np.einsum("a,b,k->abk", Nq, Nq, nvec)
            jpd += w * vel_scale * np.einsum("a,c,k->ack", Nq, phq, nvec)
            jdu += w * (
                np.einsum("c,ibk->cibk", phq, dtr)
                - pen_v * np.einsum("c,b,ik->cibk", phq, Nq, _I2)
                - pn * np.einsum("c,b,ik->cibk", phq, Nq, nn)
            )
            jdp += -w * np.einsum("c,i,b->cib", phq, nvec, Nq)
            jdd += w * vel_scale * (
                pen_v * np.einsum("c,e,ik->ciek", phq, phq, _I2)
                + pn * np.einsum("c,e,ik->ciek", phq, phq, nn)
            )

        udofs = (2 * conn[:, None] + np.arange(2)).ravel()
        ddofs = (2 * edge[:, None] + np.arange(2)).ravel()
        np.add.at(ru, udofs, ru_loc.ravel())
        np.add.at(rp, conn, rp_loc)
        np.add.at(rd, ddofs, rd_loc.ravel())
        if tangent:
            acc[("u", "u")].add_block(udofs, udofs, juu.reshape(8, 8))
            acc[("u", "p")].add_block(udofs, conn, jup.reshape(8, 4))
            acc[("u", "d")].add_block(udofs, ddofs, jud.reshape(8, 4))
            acc[("p", "u")].add_block(conn, udofs, jpu.reshape(4, 8))
            acc[("p", "d")].add_block(conn, ddofs, jpd.reshape(4, 4))
            acc[("d", "u")].add_block(ddofs, udofs, jdu.reshape(4, 8))
            acc[("d", "p")].add_block(ddofs, conn, jdp.reshape(4, 4))
            acc[("d", "d")].add_block(ddofs, ddofs, jdd.reshape(4, 4))

    res = {"u": ru, "p": rp, "d": rd}
    if not tangent:
        return res, None
    return res, {key: a.tocsr() for key, a in acc.items()}


def _embedded_pieces(seg, grid2: StructuredGrid):
    """Split a segment at the embedded grid's lines; returns (a0, a1) pairs."""
    d = seg.p1 - seg.p0
    ts = {0.0, 1.0}
    for axis in (0, 1):
        if d[axis] == 0.0:
            continue
        o = grid2.origin[axis]
        h = grid2.spacing[axis]
        f0 = (seg.p0[axis] - o) / h
        f1 = (seg.p1[axis] - o) / h
        lo, hi = min(f0, f1), max(f0, f1)
        for line in range(int(np.ceil(lo - 1e-12)), int(np.floor(hi + 1e-12)) + 1):
            t = (line - f0) / (f1 - f0)
            if 1e-12 < t < 1.0 - 1e-12:
                ts.add(float(t))
    params = sorted(ts)
    return [(a0, a1) for a0, a1 in zip(params[:-1], params[1:]) if a1 - a0 > 1e-14]


def _embedded_element(grid2: StructuredGrid, seg, a0, a1):
    """Embedded-mesh element containing the segment piece (a0, a1)."""
    mid = seg.p0 + 0.5 * (a0 + a1) * (seg.p1 - seg.p0)
    eps = 1e-6 * min(grid2.spacing)
    try:
        return grid2.locate(mid + eps * seg.normal)
    except ValueError:
        raise GeometryError(
            "interface quadrature point lies outside the embedded mesh"
        ) from None


def assemble_ff_coupling(
    grid1: StructuredGrid,
    cfg1: CutConfiguration,
    grid2: StructuredGrid,
    params: FluidParams,
    nitsche: NitscheParams,
    U1: np.ndarray,
    P1: np.ndarray,
    U2: np.ndarray,
    P2: np.ndarray,
    C1_frozen: np.ndarray,
    C2_frozen: np.ndarray,
    sigma: float,
    tangent: bool = True,
):
    """Interface operator between a cut background mesh and an embedded mesh.

    ``cfg1`` must be the cut configuration of ``grid1`` against the boundary
    of ``grid2``'s rectangle, so segment normals point from the background
    fluid into the embedded mesh and the jump is (background - embedded).
    Averaged fluxes use the weights from ``nitsche``; the transport and
    upwind terms always use the plain mean and are differentiated exactly.
    Penalty scalings are frozen at the advection fields ``C*_frozen``.

    Returns ``(residuals, jacobians)`` keyed ``'u1'``, ``'p1'``, ``'u2'``,
    ``'p2'`` and by (row, column) pairs thereof.
    """
    n1, n2 = grid1.n_nodes, grid2.n_nodes
    mu, rho = params.viscosity, params.density
    nu = params.kinematic_viscosity
    gamma, sign = nitsche.gamma, nitsche.adjoint_sign
    w1 = nitsche.flux_weight_first
    w2 = 1.0 - w1
    h1 = grid1.elem_diameter()
    h2 = grid2.elem_diameter()
    pen_v = gamma * 0.5 * (
        w1 * mu * nitsche.trace_constant / h1 + w2 * mu * nitsche.trace_constant / h2
    )

    U1v, C1v = U1.reshape(n1, 2), C1_frozen.reshape(n1, 2)
    U2v, C2v = U2.reshape(n2, 2), C2_frozen.reshape(n2, 2)

    res = {
        "u1": np.zeros(2 * n1),
        "p1": np.zeros(n1),
        "u2": np.zeros(2 * n2),
        "p2": np.zeros(n2),
    }
    acc = None
    if tangent:
        sizes = {"u1": 2 * n1, "p1": n1, "u2": 2 * n2, "p2": n2}
        pairs = [
            ("u1", "u1"), ("u1", "p1"), ("u1", "u2"), ("u1", "p2"),
            ("u2", "u1"), ("u2", "p1"), ("u2", "u2"), ("u2", "p2"),
            ("p1", "u1"), ("p1", "u2"), ("p2", "u1"), ("p2", "u2"),
        ]
        acc = {(r, c): TripletAccumulator(sizes[r], sizes[c]) for r, c in pairs}

    hx2, hy2 = grid2.spacing

    for seg in cfg1.segments:
        if cfg1.status[seg.elem] == ElemStatus.COVERED:
            raise GeometryError(
                f"interface segment owned by element {seg.elem} which has no fluid"
            )
        nvec = seg.normal
        d = seg.p1 - seg.p0
        conn1 = grid1.elem_nodes(seg.elem)
        bb1 = grid1.elem_bbox(seg.elem)
        cmax1 = float(np.max(np.abs(C1v[conn1])))
        phi1 = nu + params.c_conv * cmax1 * h1 + params.c_react * sigma * h1 * h1

        for a0, a1 in _embedded_pieces(seg, grid2):
            e2 = _embedded_element(grid2, seg, a0, a1)
            conn2 = grid2.elem_nodes(e2)
            bb2 = grid2.elem_bbox(e2)
            cmax2 = float(np.max(np.abs(C2v[conn2])))
            phi2 = nu + params.c_conv * cmax2 * h2 + params.c_react * sigma * h2 * h2
            pen_n = gamma * 0.5 * (w1 * rho * phi1 / h1 + w2 * rho * phi2 / h2)

            pts = seg.p0 + (a0 + _G2_PTS * (a1 - a0))[:, None] * d
            wq = _G2_WTS * (a1 - a0) * seg.length

            s1 = (pts[:, 0] - bb1[0]) / grid1.spacing[0]
            t1 = (pts[:, 1] - bb1[1]) / grid1.spacing[1]
            N1, Dx1, Dy1, _ = basis_tables(grid1.spacing[0], grid1.spacing[1], s1, t1)
            g1 = np.stack([Dx1, Dy1], axis=-1)
            s2 = np.clip((pts[:, 0] - bb2[0]) / hx2, 0.0, 1.0)
            t2 = np.clip((pts[:, 1] - bb2[1]) / hy2, 0.0, 1.0)
            N2, Dx2, Dy2, _ = basis_tables(hx2, hy2, s2, t2)
            g2 = np.stack([Dx2, Dy2], axis=-1)

            ue1, pe1 = U1v[conn1], P1[conn1]
            ue2, pe2 = U2v[conn2], P2[conn2]
            gn1 = g1 @ nvec
            gn2 = g2 @ nvec
            tr1 = mu * (gn1 @ ue1 + np.einsum("qbi,b->qi", g1, ue1 @ nvec))
            tr2 = mu * (gn2 @ ue2 + np.einsum("qbi,b->qi", g2, ue2 @ nvec))
            uf1, uf2 = N1 @ ue1, N2 @ ue2
            p1q, p2q = N1 @ pe1, N2 @ pe2

            r1 = np.zeros((4, 2))
            r2 = np.zeros((4, 2))
            q1 = np.zeros(4)
            q2 = np.zeros(4)
            if tangent:
                j11 = np.zeros((4, 2, 4, 2))
                j12 = np.zeros((4, 2, 4, 2))
                j21 = np.zeros((4, 2, 4, 2))
                j22 = np.zeros((4, 2, 4, 2))
                ju1p1 = np.zeros((4, 2, 4))
                ju1p2 = np.zeros((4, 2, 4))
                ju2p1 = np.zeros((4, 2, 4))
                ju2p2 = np.zeros((4, 2, 4))
                jp1u1 = np.zeros((4, 4, 2))
                jp1u2 = np.zeros((4, 4, 2))
                jp2u1 = np.zeros((4, 4, 2))
                jp2u2 = np.zeros((4, 4, 2))

            for q in range(len(wq)):
                w = float(wq[q])
                N1q, g1q, gn1q = N1[q], g1[q], gn1[q]
                N2q, g2q, gn2q = N2[q], g2[q], gn2[q]
                flux = w1 * tr1[q] + w2 * tr2[q]
                pavg = w1 * float(p1q[q]) + w2 * float(p2q[q])
                j = uf1[q] - uf2[q]
                jn = float(j @ nvec)
                m = rho * 0.5 * float((uf1[q] + uf2[q]) @ nvec)
                am, sm = abs(m), np.sign(m)

                # (1) weighted flux and pressure consistency, tested with the jump.
                r1 += w * (-np.outer(N1q, flux) + pavg * np.outer(N1q, nvec))
                r2 += w * (np.outer(N2q, flux) - pavg * np.outer(N2q, nvec))
                # (2) adjoint terms, tested with the weighted-average fluxes.
                adj1 = mu * (np.outer(g1q @ j, nvec) + np.outer(gn1q, j))
                adj2 = mu * (np.outer(g2q @ j, nvec) + np.outer(gn2q, j))
                r1 += sign * w * w1 * adj1
                r2 += sign * w * w2 * adj2
                q1 += -w * w1 * jn * N1q
                q2 += -w * w2 * jn * N2q
                # (3, 4) viscous and directional jump penalties.
                pen = pen_v * j + pen_n * jn * nvec
                r1 += w * np.outer(N1q, pen)
                r2 -= w * np.outer(N2q, pen)
                # (5) interface transport against the mean test function and
                # (6) its upwind companion against the jump.
                r1 += w * 0.5 * (m + am) * np.outer(N1q, j)
                r2 += w * 0.5 * (m - am) * np.outer(N2q, j)

                if not tangent:
                    continue
                dtr1 = _traction_derivative(mu, g1q, gn1q, nvec)
                dtr2 = _traction_derivative(mu, g2q, gn2q, nvec)
                B1 = _adjoint_rows(mu, g1q, gn1q, nvec)
                B2 = _adjoint_rows(mu, g2q, gn2q, nvec)
                nn = np.outer(nvec, nvec)
                # Jump derivative: +N1 on mesh-1 columns, -N2 on mesh-2 ones;
                # mean-flux derivative d m / d u_{b,k} is one half on both.
                dm1 = 0.5 * rho * np.outer(N1q, nvec)
                dm2 = 0.5 * rho * np.outer(N2q, nvec)
                cj1 = pen_v + 0.5 * (m + am)
                cj2 = -pen_v + 0.5 * (m - am)
                cm = 0.5 * (1.0 + sm)

                j11 += w * (
                    -w1 * np.einsum("a,ibk->aibk", N1q, dtr1)
                    + sign * w1 * np.einsum("aik,b->aibk", B1, N1q)
                    + cj1 * np.einsum("a,b,ik->aibk", N1q, N1q, _I2)
                    + pen_n * np.einsum("a,b,ik->aibk", N1q, N1q, nn)
                    + cm * np.einsum("a,bk,i->aibk", N1q, dm1, j)
                )
                j12 += w * (
                    -w2 * np.einsum("a,ibk->aibk", N1q, dtr2)
                    - sign * w1 * np.einsum("aik,b->aibk", B1, N2q)
                    - cj1 * np.einsum("a,b,ik->aibk", N1q, N2q, _I2)
                    - pen_n * np.einsum("a,b,ik->aibk", N1q, N2q, nn)
                    + cm * np.einsum("a,bk,i->aibk", N1q, dm2, j)
                )
                j21 += w * (
                    w1 * np.einsum("a,ibk->aibk", N2q, dtr1)
                    + sign * w2 * np.einsum("aik,b->aibk", B2, N1q)
                    + cj2 * np.einsum("a,b,ik->aibk", N2q, N1q, _I2)
                    - pen_n * np.einsum("a,b,ik->aibk", N2q, N1q, nn)
                    + (1.0 - cm) * np.einsum("a,bk,i->aibk", N2q, dm1, j)
                )
                j22 += w * (
                    w2 * np.einsum("a,ibk->aibk", N2q, dtr2)
                    - sign * w2 * np.einsum("aik,b->aibk", B2, N2q)
                    - cj2 * np.einsum("a,b,ik->aibk", N2q, N2q, _I2)
                    + pen_n * np.einsum("a,b,ik->aibk", N2q, N2q, nn)
                    + (1.0 - cm) * np.einsum("a,bk,i->aibk", N2q, dm2, j)
                )
                ju1p1 += w * w1 * np.einsum("a,i,b->aib", N1q, nvec, N1q)
                ju1p2 += w * w2 * np.einsum("a,i,b->aib", N1q, nvec, N2q)
                ju2p1 += -w * w1 * np.einsum("a,i,b->aib", N2q, nvec, N1q)
                ju2p2 += -w * w2 * np.einsum("a,i,b->aib", N2q, nvec, N2q)
                jp1u1 += -w * w1 * np.einsum("a,b,k->abk", N1q, N1q, nvec)
                jp1u2 += w * w1 * np.einsum("a,b,k->abk", N1q, N2q, nvec)
                jp2u1 += -w * w2 * np.einsum("a,b,k->abk", N2q, N1q, nvec)
                jp2u2 += w * w2 * np.einsum("a,b,k->abk", N2q, N2q, nvec)

            u1d = (2 * conn1[:, None] + np.arange(2)).ravel()
            u2d = (2 * conn2[:, None] + np.arange(2)).ravel()
            res["u1"][u1d] += r1.ravel()
            res["u2"][u2d] += r2.ravel()
            res["p1"][conn1] += q1
            res["p2"][conn2] += q2
            if tangent:
                acc[("u1", "u1")].add_block(u1d, u1d, j11.reshape(8, 8))
                acc[("u1", "u2")].add_block(u1d, u2d, j12.reshape(8, 8))
                acc[("u2", "u1")].add_block(u2d, u1d, j21.reshape(8, 8))
                acc[("u2", "u2")].add_block(u2d, u2d, j22.reshape(8, 8))
                acc[("u1", "p1")].add_block(u1d, conn1, ju1p1.reshape(8, 4))
                acc[("u1", "p2")].add_block(u1d, conn2, ju1p2.reshape(8, 4))
                acc[("u2", "p1")].add_block(u2d, conn1, ju2p1.reshape(8, 4))
                acc[("u2", "p2")].add_block(u2d, conn2, ju2p2.reshape(8, 4))
                acc[("p1", "u1")].add_block(conn1, u1d, jp1u1.reshape(4, 8))
                acc[("p1", "u2")].add_block(conn1, u2d, jp1u2.reshape(4, 8))
                acc[("p2", "u1")].add_block(conn2, u1d, jp2u1.reshape(4, 8))
                acc[("p2", "u2")].add_block(conn2, u2d, jp2u2.reshape(4, 8))

    if not tangent:
        return res, None
    return res, {key: a.tocsr() for key, a in acc.items()}


def interface_jump_norms(
    grid1: StructuredGrid,
    cfg1: CutConfiguration,
    grid2: StructuredGrid,
    U1: np.ndarray,
    U2: np.ndarray,
):
    """Jump diagnostics along the two-mesh interface.

    Returns a dict with the interface length, the L2 norm of the velocity
    jump, and the signed mass defect (integral of the normal jump).
    """
    n1, n2 = grid1.n_nodes, grid2.n_nodes
    U1v, U2v = U1.reshape(n1, 2), U2.reshape(n2, 2)
    hx2, hy2 = grid2.spacing
    length = 0.0
    jump_sq = 0.0
    mass = 0.0
    for seg in cfg1.segments:
        nvec = seg.normal
        d = seg.p1 - seg.p0
        conn1 = grid1.elem_nodes(seg.elem)
        bb1 = grid1.elem_bbox(seg.elem)
        for a0, a1 in _embedded_pieces(seg, grid2):
            e2 = _embedded_element(grid2, seg, a0, a1)
            conn2 = grid2.elem_nodes(e2)
            bb2 = grid2.elem_bbox(e2)
            pts = seg.p0 + (a0 + _G2_PTS * (a1 - a0))[:, None] * d
            wq = _G2_WTS * (a1 - a0) * seg.length
            s1 = (pts[:, 0] - bb1[0]) / grid1.spacing[0]
            t1 = (pts[:, 1] - bb1[1]) / grid1.spacing[1]
            N1 = basis_tables(grid1.spacing[0], grid1.spacing[1], s1, t1)[0]
            s2 = np.clip((pts[:, 0] - bb2[0]) / hx2, 0.0, 1.0)
            t2 = np.clip((pts[:, 1] - bb2[1]) / hy2, 0.0, 1.0)
            N2 = basis_tables(hx2, hy2, s2, t2)[0]
            j = N1 @ U1v[conn1] - N2 @ U2v[conn2]
            length += float(np.sum(wq))
            jump_sq += float(np.sum(wq * np.sum(j * j, axis=1)))
            mass += float(np.sum(wq * (j @ nvec)))
    return {"length": length, "jump_l2": np.sqrt(jump_sq), "mass_defect": mass}
