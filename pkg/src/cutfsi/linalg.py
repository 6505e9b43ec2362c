"""Sparse assembly containers and direct linear solves.

Wraps scipy.sparse for triplet accumulation, block composition, LU solves with
a residual guard, a forward block Gauss-Seidel sweep, and matrix-market export
for offline inspection.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "TripletAccumulator",
    "BlockSystem",
    "factor_solve",
    "block_gauss_seidel",
    "export_matrix_market",
    "LinearSolveError",
]


class LinearSolveError(RuntimeError):
    """Raised when a direct solve fails or its residual is untrustworthy."""


class TripletAccumulator:
    """COO triplet buffer; duplicate entries sum on conversion."""

    def __init__(self, n_rows: int, n_cols: int):
        self.n_rows = n_rows
        self.n_cols = n_cols
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add(self, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        if not (rows.size == cols.size == vals.size):
            raise ValueError("triplet arrays must have identical lengths")
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(vals)

    def add_block(self, row_ids, col_ids, dense):
        """Scatter a dense (len(row_ids), len(col_ids)) block."""
        row_ids = np.asarray(row_ids, dtype=np.int64)
        col_ids = np.asarray(col_ids, dtype=np.int64)
        dense = np.asarray(dense, dtype=float)
        r = np.repeat(row_ids, col_ids.size)
        c = np.tile(col_ids, row_ids.size)
        self.add(r, c, dense.ravel())

    def tocsr(self) -> sp.csr_matrix:
        if not self._rows:
            return sp.csr_matrix((self.n_rows, self.n_cols))
        rows = np.concatenate(self._rows)
        cols = np.concatenate(self._cols)
        vals = np.concatenate(self._vals)
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(self.n_rows, self.n_cols))
        out = mat.tocsr()
        out.sum_duplicates()
        return out


class BlockSystem:
    """Square block matrix with named blocks and a matching residual vector."""

    def __init__(self, sizes: dict[str, int]):
        self.names = list(sizes)
        self.sizes = dict(sizes)
        self.offsets: dict[str, int] = {}
        off = 0
        for name in self.names:
            self.offsets[name] = off
            off += self.sizes[name]
        self.n = off
        self.blocks: dict[tuple[str, str], sp.spmatrix] = {}
        self.residual = np.zeros(self.n)

    def set_block(self, row: str, col: str, mat):
        mat = sp.csr_matrix(mat)
        if mat.shape != (self.sizes[row], self.sizes[col]):
            raise ValueError(
                f"block ({row},{col}) has shape {mat.shape}, "
                f"expected {(self.sizes[row], self.sizes[col])}"
            )
        self.blocks[(row, col)] = mat

    def add_to_block(self, row: str, col: str, mat):
        mat = sp.csr_matrix(mat)
        key = (row, col)
        if key in self.blocks:
            self.blocks[key] = (self.blocks[key] + mat).tocsr()
        else:
            self.set_block(row, col, mat)

    def set_residual(self, name: str, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.sizes[name],):
            raise ValueError(f"residual block {name} has wrong length")
        o = self.offsets[name]
        self.residual[o : o + self.sizes[name]] = vec

    def get_residual(self, name: str) -> np.ndarray:
        o = self.offsets[name]
        return self.residual[o : o + self.sizes[name]]

    def assemble(self) -> sp.csr_matrix:
        grid = [
            [
                self.blocks.get((r, c), sp.csr_matrix((self.sizes[r], self.sizes[c])))
                for c in self.names
            ]
            for r in self.names
        ]
        return sp.bmat(grid, format="csr")

    def split(self, vec: np.ndarray) -> dict[str, np.ndarray]:
        out = {}
        for name in self.names:
            o = self.offsets[name]
            out[name] = vec[o : o + self.sizes[name]]
        return out


def factor_solve(A, b, rel_tol: float = 1e-10):
    """Sparse LU solve with a residual guard.

    Raises LinearSolveError if the factorization fails or the backward
    residual exceeds rel_tol * (|A| |x| + |b|) entrywise norms.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError("factor_solve needs a square system")
    if A.shape[0] == 0:
        return np.zeros(0)
    try:
        lu = spla.splu(A)
        x = lu.solve(b)
    except RuntimeError as err:
        raise LinearSolveError(f"sparse LU failed: {err}") from None
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("sparse LU produced non-finite values")
    res = np.linalg.norm(A @ x - b)
    bound = rel_tol * (
        spla.norm(A) * np.linalg.norm(x) + np.linalg.norm(b)
    )
    if res > max(bound, 1e-300):
        raise LinearSolveError(
            f"direct solve residual {res:.3e} exceeds trust bound {bound:.3e}"
        )
    return x


def block_gauss_seidel(system: BlockSystem, order: list[str], sweeps: int = 1):
    """Forward block Gauss-Seidel on L dx = -R; returns the increment split
    by block name. Off-diagonal couplings use the latest available updates."""
    dx = {name: np.zeros(system.sizes[name]) for name in system.names}
    for _ in range(sweeps):
        for name in order:
            rhs = -system.get_residual(name).copy()
            for other in system.names:
                if other == name:
                    continue
                blk = system.blocks.get((name, other))
                if blk is not None:
                    rhs -= blk @ dx[other]
            diag = system.blocks.get((name, name))
            if diag is None:
                raise LinearSolveError(f"missing diagonal block for {name}")
            dx[name] = factor_solve(diag, rhs)
    return dx


def export_matrix_market(path, A, comment: str = ""):
    """Write a sparse matrix in MatrixMarket coordinate format."""
    import scipy.io as sio

    sio.mmwrite(str(path), sp.coo_matrix(A), comment=comment)
