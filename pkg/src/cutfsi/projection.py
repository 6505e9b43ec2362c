"""Carry fluid unknowns across a change of the active (cut) function space.

When the interface moves, background nodes enter or leave the active set.
Values at nodes active before and after the move are copied bitwise; values
at newly activated extension-zone (ghost) nodes are produced by minimizing
squared normal-derivative jumps across the interface-zone facets, with the
copied values acting as Dirichlet data. A node that enters the in-domain
(standard) set without having been active before means the interface moved
further than one element support in a single step; this violates the
step-size restriction the mover must obey and is reported as a hard error.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cutting import CutConfiguration, NodeRole
from .fluid import basis_tables
from .linalg import TripletAccumulator

__all__ = [
    "ProjectionError",
    "DofStatus",
    "DofCorrespondence",
    "transfer_copy",
    "extension_solve",
    "SpaceProjector",
]

CFL_MESSAGE = "the CFL-like condition is not satisfied!"


class ProjectionError(RuntimeError):
    """Raised when values cannot be carried into the new function space."""

    def __init__(self, message, correspondence=None):
        super().__init__(message)
        self.correspondence = correspondence


class DofStatus(IntEnum):
    INACTIVE = 0
    COPIED = 1
    NEEDS_EXTENSION = 2
    VIOLATION = 3


@dataclass(frozen=True)
class DofCorrespondence:
    """Node-wise transfer plan between two active spaces on one grid.

    ``source[i]`` is the node copied from (the same index, since both spaces
    share the background grid) or -1 when nothing is copied.
    """

    status: np.ndarray
    source: np.ndarray

    @property
    def copied_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.status == DofStatus.COPIED)

    @property
    def extension_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.status == DofStatus.NEEDS_EXTENSION)

    @property
    def violation_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.status == DofStatus.VIOLATION)


def _build_correspondence(cfg_prev: CutConfiguration, cfg_curr: CutConfiguration):
    if cfg_prev.grid is not cfg_curr.grid:
        raise ValueError("both configurations must live on the same grid")
    n = cfg_curr.grid.n_nodes
    status = np.full(n, DofStatus.INACTIVE, dtype=np.int8)
    source = np.full(n, -1, dtype=np.int64)
    prev_active = cfg_prev.node_role != NodeRole.INACTIVE
    for node in cfg_curr.active_nodes:
        if prev_active[node]:
            status[node] = DofStatus.COPIED
            source[node] = node
        elif cfg_curr.node_role[node] == NodeRole.GHOST:
            status[node] = DofStatus.NEEDS_EXTENSION
        else:
            # A node inside the new domain with no value to inherit.
            status[node] = DofStatus.VIOLATION
    return DofCorrespondence(status=status, source=source)


def transfer_copy(
    cfg_prev: CutConfiguration,
    cfg_curr: CutConfiguration,
    values_prev: np.ndarray,
):
    """Copy node values shared by two active spaces.

    ``values_prev`` is indexed by node in its leading dimension; entries at
    nodes active in both configurations are copied unchanged, all others are
    zeroed. Returns ``(values_partial, correspondence)``. Raises
    ``ProjectionError`` when a standard node of the current space was
    inactive before (interface moved too far in one step).
    """
    corr = _build_correspondence(cfg_prev, cfg_curr)
    bad = corr.violation_nodes
    if bad.size:
        raise ProjectionError(CFL_MESSAGE, correspondence=corr)
    values_prev = np.asarray(values_prev)
    out = np.zeros_like(values_prev)
    copied = corr.copied_nodes
    out[copied] = values_prev[corr.source[copied]]
    return out, corr


def _extension_matrix(cfg: CutConfiguration, widened: bool) -> sp.csr_matrix:
    """Bilinear form of squared facet jumps of the normal derivative.

    Value jumps (derivative order zero) vanish identically for the
    continuous bilinear basis, so only the first-order term contributes;
    it is scaled by the cube of the facet length.
    """
    grid = cfg.grid
    n = grid.n_nodes
    hx, hy = grid.spacing
    acc = TripletAccumulator(n, n)
    gp2, gw2 = np.polynomial.legendre.leggauss(2)
    conn_all = grid.all_elem_nodes()
    xy = grid.node_coords()

    for el, er, na, nb in cfg.ghost_facets(widened=widened):
        pa, pb = xy[na], xy[nb]
        length = float(np.hypot(*(pb - pa)))
        qp_t = 0.5 * (gp2 + 1.0)
        pts = pa[None, :] + qp_t[:, None] * (pb - pa)[None, :]
        wq = 0.5 * gw2 * length
        normal_axis = 0 if abs(pa[0] - pb[0]) < abs(pa[1] - pb[1]) else 1

        nodes: list[int] = []
        for e in (el, er):
            for nd in conn_all[e]:
                if int(nd) not in nodes:
                    nodes.append(int(nd))
        idx = {nd: i for i, nd in enumerate(nodes)}
        jump_dn = np.zeros((len(wq), len(nodes)))
        for sign, e in ((1.0, el), (-1.0, er)):
            x0, y0, _, _ = grid.elem_bbox(e)
            s = (pts[:, 0] - x0) / hx
            t = (pts[:, 1] - y0) / hy
            _, Dx, Dy, _ = basis_tables(hx, hy, s, t)
            Dn = Dx if normal_axis == 0 else Dy
            for a_loc, nd in enumerate(conn_all[e]):
                jump_dn[:, idx[int(nd)]] += sign * Dn[:, a_loc]

        M = length**3 * np.einsum("q,qa,qb->ab", wq, jump_dn, jump_dn)
        node_arr = np.array(nodes, dtype=int)
        acc.add_block(node_arr, node_arr, M)
    return acc.tocsr()


def extension_solve(
    cfg_curr: CutConfiguration,
    values_partial: np.ndarray,
    correspondence: DofCorrespondence,
    widened: bool = False,
):
    """Fill extension-zone values by jump minimization.

    Copied entries act as Dirichlet data; the free values solve the
    symmetric positive definite facet-jump system restricted to them.
    ``values_partial`` may carry extra trailing dimensions (components),
    which are solved together.
    """
    free = correspondence.extension_nodes
    values_partial = np.asarray(values_partial, dtype=float)
    if free.size == 0:
        return values_partial.copy()
    A = _extension_matrix(cfg_curr, widened)
    reach = np.flatnonzero(np.diff(A.indptr))
    unreached = np.setdiff1d(free, reach)
    if unreached.size:
        raise ProjectionError(
            f"extension cannot reach node(s) {unreached.tolist()}: no "
            "interface-zone facet couples them to known values",
            correspondence=correspondence,
        )
    fixed = correspondence.copied_nodes
    flat = values_partial.reshape(len(values_partial), -1)
    A_ff = A[np.ix_(free, free)].tocsc()
    A_fc = A[np.ix_(free, fixed)]
    rhs = -A_fc @ flat[fixed]
    solve = spla.factorized(A_ff)
    out = values_partial.copy()
    filled = np.column_stack([solve(rhs[:, c]) for c in range(rhs.shape[1])])
    out.reshape(len(out), -1)[free] = filled
    return out


class SpaceProjector:
    """Reusable projector between two cut configurations.

    Builds the transfer plan and factorizes the extension system once, so
    several vectors (velocity, pressure, acceleration) can be mapped with
    one geometric setup. Vectors are flat with one or two entries per node.
    """

    def __init__(
        self,
        cfg_prev: CutConfiguration,
        cfg_curr: CutConfiguration,
        widened: bool = False,
    ):
        self.cfg_curr = cfg_curr
        self.correspondence = _build_correspondence(cfg_prev, cfg_curr)
        bad = self.correspondence.violation_nodes
        if bad.size:
            raise ProjectionError(CFL_MESSAGE, correspondence=self.correspondence)
        self.n_nodes = cfg_curr.grid.n_nodes
        self._solve = None
        free = self.correspondence.extension_nodes
        if free.size:
            A = _extension_matrix(cfg_curr, widened)
            reach = np.flatnonzero(np.diff(A.indptr))
            unreached = np.setdiff1d(free, reach)
            if unreached.size:
                raise ProjectionError(
                    f"extension cannot reach node(s) {unreached.tolist()}: no "
                    "interface-zone facet couples them to known values",
                    correspondence=self.correspondence,
                )
            fixed = self.correspondence.copied_nodes
            self._A_fc = A[np.ix_(free, fixed)]
            self._solve = spla.factorized(A[np.ix_(free, free)].tocsc())

    def apply(self, vec: np.ndarray) -> np.ndarray:
        n = self.n_nodes
        vec = np.asarray(vec, dtype=float)
        if vec.size % n:
            raise ValueError("vector length is not a multiple of the node count")
        comps = vec.size // n
        nodal = vec.reshape(n, comps)
        out = np.zeros_like(nodal)
        copied = self.correspondence.copied_nodes
        out[copied] = nodal[self.correspondence.source[copied]]
        if self._solve is not None:
            free = self.correspondence.extension_nodes
            rhs = -self._A_fc @ out[self.correspondence.copied_nodes]
            out[free] = np.column_stack(
                [self._solve(rhs[:, c]) for c in range(comps)]
            )
        return out.reshape(vec.shape)
