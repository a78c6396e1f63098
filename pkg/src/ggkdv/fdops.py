"""Finite-difference stencils on the uniform grid.

Derivative matrices are dense-banded in LIL/CSR form over the N + 2 grid
samples (endpoints included).  Interior rows use centered stencils; rows too
close to an endpoint fall back to one-sided stencils of the same (second)
order, computed with the Fornberg weight recursion.  The one-sided stencils
used for boundary rows are the same ones used to extract boundary traces, so
traces reproduce imposed boundary data exactly at the discrete level.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "fd_weights",
    "first_derivative_matrix",
    "second_derivative_matrix",
    "third_derivative_matrix",
    "boundary_stencils",
]


def fd_weights(x0: float, nodes: np.ndarray, m: int) -> np.ndarray:
    """Weights of the m-th derivative at ``x0`` from samples at ``nodes``.

    Fornberg's recursion; exact for polynomials of degree < len(nodes).
    """
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    if n < m + 1:
        raise ValueError("need at least m + 1 nodes")
    w = np.zeros((m + 1, n))
    w[0, 0] = 1.0
    c1 = 1.0
    c4 = nodes[0] - x0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    w[k, i] = c1 * (k * w[k - 1, i - 1] - c5 * w[k, i - 1]) / c2
                w[0, i] = -c1 * c5 * w[0, i - 1] / c2
            for k in range(mn, 0, -1):
                w[k, j] = (c4 * w[k, j] - k * w[k - 1, j]) / c3
            w[0, j] = c4 * w[0, j] / c3
        c1 = c2
    return w[m]


def _banded_matrix(nx: float, dx: float, m: int, width: int) -> sp.lil_matrix:
    """Derivative matrix with centered interior rows, one-sided near edges.

    ``width`` is the stencil half-width of the centered rows; one-sided rows
    use 2*width + 1 nodes anchored at the row, clipped to the grid.
    """
    D = sp.lil_matrix((nx, nx))
    x = np.arange(nx) * dx
    npts = 2 * width + 1
    for i in range(nx):
        lo = i - width
        hi = i + width
        if lo < 0:
            lo, hi = 0, npts - 1
        elif hi > nx - 1:
            lo, hi = nx - npts, nx - 1
        cols = np.arange(lo, hi + 1)
        D[i, cols] = fd_weights(x[i], x[cols], m)
    return D


def first_derivative_matrix(nx: int, dx: float) -> sp.csr_matrix:
    """Second-order d/dx (3-point stencils)."""
    return _banded_matrix(nx, dx, 1, 1).tocsr()


def second_derivative_matrix(nx: int, dx: float) -> sp.csr_matrix:
    """Second-order d2/dx2 (one-sided rows use 4 points)."""
    D = _banded_matrix(nx, dx, 2, 1).tolil()
    x = np.arange(nx) * dx
    # 3-point one-sided stencils are only first order; widen the edge rows.
    for i, cols in ((0, np.arange(4)), (nx - 1, np.arange(nx - 4, nx))):
        D[i, :] = 0.0
        D[i, cols] = fd_weights(x[i], x[cols], 2)
    return D.tocsr()


def third_derivative_matrix(nx: int, dx: float) -> sp.csr_matrix:
    """Second-order d3/dx3 (5-point stencils, one-sided within 2 of an edge)."""
    return _banded_matrix(nx, dx, 3, 2).tocsr()


def boundary_stencils(nx: int, dx: float) -> dict:
    """One-sided trace stencils at both endpoints.

    Returns ``(indices, weights)`` pairs keyed by ``(side, order)`` with
    side in {"left", "right"} and derivative order in {0, 1, 2}.  First
    derivatives use 3 nodes, second derivatives 4 nodes (second order).
    """
    x = np.arange(nx) * dx
    out = {}
    for side, anchor in (("left", 0), ("right", nx - 1)):
        for order, npts in ((0, 1), (1, 3), (2, 4)):
            if side == "left":
                cols = np.arange(npts)
            else:
                cols = np.arange(nx - npts, nx)
            out[(side, order)] = (cols, fd_weights(x[anchor], x[cols], order))
    return out
