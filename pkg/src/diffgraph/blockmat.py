"""Block-partitioned dense matrices and their block operators.

A matrix of side m*p is viewed as a p x p grid of m x m blocks; block (k, l)
occupies rows k*m..(k+1)*m and columns l*m..(l+1)*m (0-based node indices
throughout). This module provides the per-block Frobenius norm map, blockwise
vectorization, the Tracy-Singh product, symmetrization and edge extraction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DEFAULT_TRACY_SINGH_CAP = 4096


class TracySinghCapError(ValueError):
    """Raised when a Tracy-Singh product would exceed the materialization cap."""


@dataclass(frozen=True)
class BlockMatrix:
    """Dense square matrix of side m*p with a declared block size m.

    Treated as an immutable value; operations return fresh instances and never
    mutate ``data`` in place.
    """

    data: np.ndarray
    m: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", data)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {data.shape}")
        if self.m < 1:
            raise ValueError(f"block size m must be >= 1, got {self.m}")
        if data.shape[0] % self.m != 0:
            raise ValueError(
                f"matrix side {data.shape[0]} is not a multiple of m={self.m}"
            )

    @property
    def p(self) -> int:
        return self.data.shape[0] // self.m

    @property
    def side(self) -> int:
        return self.data.shape[0]

    def block(self, k: int, l: int) -> np.ndarray:
        """Return the m x m submatrix at block row k, block column l."""
        m = self.m
        if not (0 <= k < self.p and 0 <= l < self.p):
            raise IndexError(f"block index ({k}, {l}) out of range for p={self.p}")
        return self.data[k * m:(k + 1) * m, l * m:(l + 1) * m]

    def block_view(self) -> np.ndarray:
        """Reshape to axes (block row, within row, block col, within col)."""
        p, m = self.p, self.m
        return self.data.reshape(p, m, p, m)


@dataclass(frozen=True)
class EdgeSet:
    """Set of unordered node pairs, stored canonically as (min, max) tuples."""

    edges: frozenset

    @staticmethod
    def from_pairs(pairs, allow_self_loops: bool = False) -> "EdgeSet":
        canon = set()
        for k, l in pairs:
            k, l = int(k), int(l)
            if k == l and not allow_self_loops:
                raise ValueError(f"self-loop ({k}, {k}) not allowed")
            canon.add((min(k, l), max(k, l)))
        return EdgeSet(frozenset(canon))

    @staticmethod
    def empty() -> "EdgeSet":
        return EdgeSet(frozenset())

    def __len__(self) -> int:
        return len(self.edges)

    def __contains__(self, pair) -> bool:
        k, l = pair
        return (min(k, l), max(k, l)) in self.edges

    def __iter__(self):
        return iter(sorted(self.edges))

    def sorted_pairs(self) -> list:
        return sorted(self.edges)

    def ordered_pairs(self) -> list:
        """All ordered block positions covered by the edges.

        Each undirected edge {k, l} with k != l contributes both (k, l) and
        (l, k); a flagged self pair contributes (k, k) once.
        """
        out = []
        for k, l in sorted(self.edges):
            out.append((k, l))
            if k != l:
                out.append((l, k))
        return out


def _block_norms_arr(arr: np.ndarray, m: int) -> np.ndarray:
    p = arr.shape[0] // m
    bv = arr.reshape(p, m, p, m)
    return np.sqrt(np.einsum("irjs,irjs->ij", bv, bv))


def block_norms(A: BlockMatrix) -> np.ndarray:
    """p x p matrix whose (k, l) entry is the Frobenius norm of block (k, l)."""
    return _block_norms_arr(A.data, A.m)


def bvec(A: BlockMatrix) -> np.ndarray:
    """Stack vec() of every block, running down each block column in turn.

    Output index ((l*p + k)*m + s)*m + r holds block (k, l) entry (r, s),
    i.e. blocks are visited column-major over the block grid and each block is
    column-stacked, so the result has length m^2 p^2 and bvec is a linear
    bijection (see :func:`bvec_inverse`).
    """
    p, m = A.p, A.m
    return A.data.reshape(p, m, p, m).transpose(2, 0, 3, 1).ravel()


def bvec_inverse(v: np.ndarray, m: int, p: int) -> BlockMatrix:
    """Invert :func:`bvec`."""
    v = np.asarray(v, dtype=float)
    if v.size != m * m * p * p:
        raise ValueError(f"vector length {v.size} != m^2 p^2 = {m * m * p * p}")
    arr = v.reshape(p, p, m, m).transpose(1, 3, 0, 2).reshape(m * p, m * p)
    return BlockMatrix(arr, m)


def tracy_singh(A: BlockMatrix, B: BlockMatrix,
                cap: int = DEFAULT_TRACY_SINGH_CAP) -> np.ndarray:
    """Blockwise Kronecker (Tracy-Singh) product of two block matrices.

    The output is block partitioned with outer blocks following A's grid and,
    inside outer block (i, j), inner block (k, l) equal to
    ``np.kron(A.block(i, j), B.block(k, l))``. With m = 1 on both sides this
    reduces to the ordinary Kronecker product. Intended for small sides only;
    a side above ``cap`` raises :class:`TracySinghCapError`.
    """
    side = A.side * B.side
    if side > cap:
        raise TracySinghCapError(
            f"Tracy-Singh output side {side} exceeds cap {cap}"
        )
    a4 = A.block_view()
    b4 = B.block_view()
    out = np.einsum("irjs,kulv->ikrujlsv", a4, b4)
    return out.reshape(side, side)


def symmetrize(A: BlockMatrix) -> BlockMatrix:
    """(A + A^T) / 2."""
    return BlockMatrix((A.data + A.data.T) / 2.0, A.m)


def edges_from(A: BlockMatrix, threshold: float = 0.0) -> EdgeSet:
    """Off-diagonal block support of A as an edge set.

    Edge {k, l} is present iff the Frobenius norm of block (k, l) exceeds
    ``threshold``. The default 0 relies on the proximal step producing exact
    zeros; pass a small tolerance for matrices loaded from external files.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    norms = block_norms(A)
    p = A.p
    pairs = [(k, l) for k in range(p) for l in range(k + 1, p)
             if norms[k, l] > threshold]
    return EdgeSet.from_pairs(pairs)


def save_csv(A: BlockMatrix, path, header: bool = False) -> None:
    if header:
        cols = ",".join(f"c{j}" for j in range(A.side))
        np.savetxt(path, A.data, delimiter=",", header=cols, comments="", fmt="%.17g")
    else:
        np.savetxt(path, A.data, delimiter=",", fmt="%.17g")


def load_csv(path, m: int) -> BlockMatrix:
    """Load a dense matrix CSV; a non-numeric first row is treated as a header."""
    with open(path) as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(tok) for tok in first.strip().split(",") if tok != ""]
    except ValueError:
        skip = 1
    arr = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return BlockMatrix(arr, m)


def save_json(A: BlockMatrix, path) -> None:
    payload = {"m": A.m, "p": A.p, "data": A.data.ravel().tolist()}
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_json(path) -> BlockMatrix:
    with open(path) as fh:
        payload = json.load(fh)
    m, p = int(payload["m"]), int(payload["p"])
    arr = np.asarray(payload["data"], dtype=float).reshape(m * p, m * p)
    return BlockMatrix(arr, m)
