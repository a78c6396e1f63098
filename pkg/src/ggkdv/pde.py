"""Semidiscrete solvers for the coupled KdV system.

Forward (nonhomogeneous boundary) system on (0,L) x (0,T):

    u_t + u_xxx + a v_xxx = p(t,x),
    c v_t + r v_x + a b u_xxx + v_xxx = q(t,x),

with boundary inputs u(t,0), u_x(t,L), u_xx(t,L) and the same pattern for v.
Backward adjoint system (final data at t = T):

    phi_t + phi_xxx + a psi_xxx = 0,
    c psi_t + a b phi_xxx + r psi_x + psi_xxx = 0,

with phi(t,0) = phi_x(t,0) = psi(t,0) = psi_x(t,0) = 0 and the coupled
second-derivative conditions at x = L, which combine into
(1 - a^2 b) psi_xx(t,L) + r psi(t,L) = 0.

Discretization: second-order centered stencils (one-sided next to the
boundary), boundary conditions imposed as algebraic rows replacing PDE rows,
and a theta-scheme in time (Crank-Nicolson by default) with one sparse LU
factorization reused across all steps.  Boundary rows for derivatives use
the same one-sided stencils as trace extraction, so traces of a solution
reproduce imposed boundary data identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import Grid, Parameters, StatePair, validate_params, x_norm
from .errors import ConstraintViolation, NonConvergence, NumericalError
from .fdops import (
    boundary_stencils,
    first_derivative_matrix,
    third_derivative_matrix,
)

__all__ = [
    "BoundarySignals",
    "SchemeConfig",
    "Trajectory",
    "TraceBundle",
    "Stepper",
    "solve_linear_forward",
    "solve_adjoint_backward",
    "solve_nonlinear",
    "nonlinear_forcing",
]

SIGNAL_ORDER = ("h0", "h1", "h2", "g0", "g1", "g2")


@dataclass
class BoundarySignals:
    """The six boundary input series, each sampled on the M+1 time levels.

    h0, g0 prescribe values at x = 0 (H^{1/3} class), h1, g1 first
    derivatives at x = L (L^2 class), h2, g2 second derivatives at x = L
    (H^{-1/3} class).
    """

    h0: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    g0: np.ndarray
    g1: np.ndarray
    g2: np.ndarray

    def __post_init__(self):
        n = None
        for name in SIGNAL_ORDER:
            arr = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, arr)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be a 1-d series")
            if n is None:
                n = len(arr)
            elif len(arr) != n:
                raise ValueError("all six series must share the time grid")
        if not all(np.all(np.isfinite(getattr(self, nm))) for nm in SIGNAL_ORDER):
            raise ConstraintViolation("boundary signals contain NaN or Inf")

    @classmethod
    def zeros(cls, g: Grid) -> "BoundarySignals":
        return cls(*(np.zeros(g.nt) for _ in range(6)))

    def as_array(self) -> np.ndarray:
        return np.stack([getattr(self, n) for n in SIGNAL_ORDER])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "BoundarySignals":
        return cls(*(arr[i] for i in range(6)))


@dataclass
class SchemeConfig:
    """Time-stepping and fixed-point iteration settings.

    theta >= 1/2 keeps the linear step unconditionally stable; 1/2 is
    Crank-Nicolson.  picard_tol is relative, measured in the sup-over-time
    weighted state norm.
    """

    theta: float = 0.5
    picard_tol: float = 1e-8
    picard_max: int = 40

    def __post_init__(self):
        if not (0.5 <= self.theta <= 1.0):
            raise ValueError("theta must lie in [1/2, 1]")
        if self.picard_tol <= 0 or self.picard_max < 1:
            raise ValueError("invalid Picard settings")


@dataclass
class Trajectory:
    """Solution samples: ``z[n]`` is the stacked (u, v) state at level n.

    ``picard_history`` carries the per-sweep relative updates when the
    trajectory came out of the nonlinear fixed-point solver.
    """

    z: np.ndarray
    grid: Grid
    picard_history: list = None

    def __post_init__(self):
        if self.z.shape != (self.grid.nt, 2 * self.grid.nx):
            raise ValueError("trajectory shape does not match the grid")

    @property
    def u(self) -> np.ndarray:
        return self.z[:, : self.grid.nx]

    @property
    def v(self) -> np.ndarray:
        return self.z[:, self.grid.nx :]

    def state(self, n: int) -> StatePair:
        nx = self.grid.nx
        return StatePair(self.z[n, :nx].copy(), self.z[n, nx:].copy())

    @property
    def final_state(self) -> StatePair:
        return self.state(self.grid.M)

    @property
    def initial_state(self) -> StatePair:
        return self.state(0)

    def sup_x_norm(self, p: Parameters) -> float:
        return max(x_norm(self.state(n), p, self.grid) for n in range(self.grid.nt))


# trace keys: (var, order, side); var 0 is u (or phi), var 1 is v (or psi)
TRACE_KEYS = [
    (var, order, side) for var in (0, 1) for side in ("0", "L") for order in (0, 1, 2)
]


@dataclass
class TraceBundle:
    """Boundary traces of a trajectory: value, first and second derivative
    at x = 0 and x = L, extracted by one-sided second-order stencils."""

    data: dict
    grid: Grid

    def series(self, var: int, order: int, side: str) -> np.ndarray:
        return self.data[(var, order, side)]

    def column_names(self, names=("u", "v")) -> list:
        cols = []
        for var, order, side in TRACE_KEYS:
            d = ("", "x", "xx")[order]
            cols.append(f"{names[var]}{d}_x{side}")
        return cols

    def columns(self) -> list:
        return [self.data[k] for k in TRACE_KEYS]


def extract_traces(z: np.ndarray, g: Grid) -> TraceBundle:
    """One-sided finite-difference traces of a stacked trajectory array."""
    st = boundary_stencils(g.nx, g.dx)
    data = {}
    for var, order, side in TRACE_KEYS:
        cols, wts = st[("left" if side == "0" else "right", order)]
        data[(var, order, side)] = z[:, var * g.nx + cols] @ wts
    return TraceBundle(data=data, grid=g)


class Stepper:
    """One theta-scheme step operator with its LU factorization.

    direction "forward" marches the nonhomogeneous system in t; "adjoint"
    marches the adjoint system in tau = T - t (so the same loop serves
    both, and the adjoint trajectory is reversed on output).  The exact
    transposes of the discrete input and readout maps are exposed for
    normal-equation solvers built on top.
    """

    def __init__(self, p: Parameters, g: Grid, direction: str, theta: float = 0.5):
        validate_params(p)
        if direction not in ("forward", "adjoint"):
            raise ValueError("direction must be 'forward' or 'adjoint'")
        self.p, self.g, self.direction, self.theta = p, g, direction, theta
        nx, dx, dt = g.nx, g.dx, g.dt
        a, b, c, r = p.a, p.b, p.c, p.r

        D3 = third_derivative_matrix(nx, dx)
        D1 = first_derivative_matrix(nx, dx)
        Lop = sp.vstack(
            [
                sp.hstack([-D3, -a * D3]),
                sp.hstack([-a * b * D3, -(D3 + r * D1)]),
            ]
        ).tocsr()
        if direction == "adjoint":
            Lop = -Lop
        Mdiag = sp.diags(np.concatenate([np.ones(nx), c * np.ones(nx)]))
        A = (Mdiag / dt - theta * Lop).tolil()
        B = (Mdiag / dt + (1.0 - theta) * Lop).tolil()

        st = boundary_stencils(nx, dx)
        rows = []
        if direction == "forward":
            cr1, wr1 = st[("right", 1)]
            cr2, wr2 = st[("right", 2)]
            for v0 in (0, nx):  # u block then v block: h0,h1,h2 then g0,g1,g2
                rows.append((v0, np.array([v0]), np.array([1.0])))
                rows.append((v0 + g.N, v0 + cr1, wr1))
                rows.append((v0 + g.N + 1, v0 + cr2, wr2))
        else:
            cl1, wl1 = st[("left", 1)]
            cr2, wr2 = st[("right", 2)]
            rows.append((0, np.array([0]), np.array([1.0])))
            rows.append((1, cl1, wl1))
            rows.append(
                (g.N + 1, np.concatenate([cr2, nx + cr2]), np.concatenate([wr2, a * wr2]))
            )
            rows.append((nx, np.array([nx]), np.array([1.0])))
            rows.append((nx + 1, nx + cl1, wl1))
            rows.append(
                (
                    nx + g.N + 1,
                    np.concatenate([cr2, nx + cr2, [2 * nx - 1]]),
                    np.concatenate([a * b * wr2, wr2, [r]]),
                )
            )
        for row, cols, wts in rows:
            A.rows[row] = list(np.asarray(cols, dtype=int))
            A.data[row] = list(np.asarray(wts, dtype=float))
            B.rows[row] = []
            B.data[row] = []
        try:
            self.lu = spla.splu(A.tocsc())
        except RuntimeError as exc:
            raise NumericalError(f"singular step matrix: {exc}", time_level=0)
        self.B = B.tocsr()
        self.BT = self.B.T.tocsr()
        self.bc_rows = [row for row, _, _ in rows]
        self.nx = nx

    # -- marching ---------------------------------------------------------

    def run(self, z0: np.ndarray, bc: np.ndarray = None, forcing: np.ndarray = None):
        """March M steps from ``z0``; returns states with ascending time.

        ``bc`` is a (6, M+1) array (forward only; level-0 entries are the
        initial data's own traces and are not read).  ``forcing`` is a
        (M+1, 2 nx) array of stacked (p, q) samples applied on PDE rows.
        """
        g = self.g
        theta = self.theta
        out = np.empty((g.nt, 2 * self.nx))
        z = np.asarray(z0, dtype=float).copy()
        if self.direction == "forward":
            out[0] = z
        else:
            out[g.M] = z
            if forcing is not None:
                raise ValueError("the adjoint system is marched homogeneously")
        if forcing is not None:
            forc = np.asarray(forcing, dtype=float).copy()
            forc[:, self.bc_rows] = 0.0
        for n in range(g.M):
            rhs = self.B @ z
            if forcing is not None:
                rhs += theta * forc[n + 1] + (1.0 - theta) * forc[n]
            if bc is not None:
                rhs[self.bc_rows] = bc[:, n + 1]
            else:
                rhs[self.bc_rows] = 0.0
            z = self.lu.solve(rhs)
            if not np.all(np.isfinite(z)):
                raise NumericalError("solution lost finiteness", time_level=n + 1)
            if self.direction == "forward":
                out[n + 1] = z
            else:
                out[g.M - 1 - n] = z
        return out

    # -- exact transposes for normal-equation control solvers --------------

    def input_transpose(self, w: np.ndarray) -> np.ndarray:
        """Transpose of the zero-init boundary-input map bc -> z(T).

        Returns q with q[i, n] = d(w . z(T)) / d(bc_i at level n).
        """
        if self.direction != "forward":
            raise ValueError("input_transpose applies to the forward stepper")
        g = self.g
        q = np.zeros((6, g.nt))
        lam = np.asarray(w, dtype=float).copy()
        for n in range(g.M, 0, -1):
            mu = self.lu.solve(lam, trans="T")
            q[:, n] = mu[self.bc_rows]
            lam = self.BT @ mu
        return q

    def readout_transpose(self, readvecs: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Transpose of the map final data -> (readvecs . state) sequences.

        ``readvecs`` is (k, 2 nx); ``d`` is (k, M+1) in ascending time.
        """
        if self.direction != "adjoint":
            raise ValueError("readout_transpose applies to the adjoint stepper")
        acc = readvecs.T @ d[:, 0]
        for n in range(1, self.g.nt):
            acc = self.BT @ self.lu.solve(acc, trans="T")
            acc += readvecs.T @ d[:, n]
        return acc


def _check_state(s: StatePair, g: Grid):
    s.check_grid(g)
    s.check_finite()


def _stack(s: StatePair) -> np.ndarray:
    return np.concatenate([s.u, s.v])


def _forcing_array(forcing, g: Grid) -> np.ndarray:
    """Normalize a (p_field, q_field) pair into a stacked (M+1, 2nx) array."""
    pf, qf = forcing
    pf = np.asarray(pf, dtype=float)
    qf = np.asarray(qf, dtype=float)
    if pf.shape != (g.nt, g.nx) or qf.shape != (g.nt, g.nx):
        raise ValueError("forcing fields must have shape (M+1, N+2)")
    if not (np.all(np.isfinite(pf)) and np.all(np.isfinite(qf))):
        raise ConstraintViolation("forcing contains NaN or Inf")
    return np.concatenate([pf, qf], axis=1)


def solve_linear_forward(
    p: Parameters,
    g: Grid,
    init: StatePair,
    bc: BoundarySignals,
    forcing=None,
    scheme: SchemeConfig = None,
    stepper: Stepper = None,
):
    """Solve the linearized forward system; returns (Trajectory, TraceBundle)."""
    validate_params(p)
    _check_state(init, g)
    if len(bc.h0) != g.nt:
        raise ValueError("boundary signals do not match the time grid")
    scheme = scheme or SchemeConfig()
    stp = stepper or Stepper(p, g, "forward", scheme.theta)
    forc = _forcing_array(forcing, g) if forcing is not None else None
    z = stp.run(_stack(init), bc=bc.as_array(), forcing=forc)
    traj = Trajectory(z=z, grid=g)
    return traj, extract_traces(z, g)


def solve_adjoint_backward(
    p: Parameters,
    g: Grid,
    final: StatePair,
    scheme: SchemeConfig = None,
    stepper: Stepper = None,
):
    """Solve the backward adjoint system from final data at t = T."""
    validate_params(p)
    _check_state(final, g)
    scheme = scheme or SchemeConfig()
    stp = stepper or Stepper(p, g, "adjoint", scheme.theta)
    z = stp.run(_stack(final))
    traj = Trajectory(z=z, grid=g)
    return traj, extract_traces(z, g)


def nonlinear_forcing(
    traj_z: np.ndarray, p: Parameters, g: Grid, self_terms: bool = True
) -> np.ndarray:
    """Stacked forcing -(nonlinear terms) evaluated along a trajectory.

    Includes the quadratic self terms u u_x (first equation) and v v_x
    (second equation) unless ``self_terms`` is False, plus the coupling
    terms weighted by a1, a2.
    """
    nx = g.nx
    D1T = first_derivative_matrix(nx, g.dx).T.tocsr()
    u = traj_z[:, :nx]
    v = traj_z[:, nx:]
    # overflow here only happens on diverging Picard iterates; the stepper's
    # finiteness check turns it into a clean error
    with np.errstate(over="ignore", invalid="ignore"):
        ux = u @ D1T
        vx = v @ D1T
        uvx = (u * v) @ D1T
        pf = -(p.a1 * v * vx + p.a2 * uvx)
        qf = -(p.a2 * p.b * u * ux + p.a1 * p.b * uvx)
        if self_terms:
            pf = pf - u * ux
            qf = qf - v * vx
    return np.concatenate([pf, qf], axis=1)


def solve_nonlinear(
    p: Parameters,
    g: Grid,
    init: StatePair,
    bc: BoundarySignals,
    scheme: SchemeConfig = None,
    self_terms: bool = True,
):
    """Solve the full nonlinear system by Picard iteration on the linear one.

    Each sweep re-solves the linear system with the nonlinear terms frozen
    at the previous iterate; convergence is measured in the sup-over-time
    weighted state norm, relative to the trajectory size.
    """
    validate_params(p)
    _check_state(init, g)
    scheme = scheme or SchemeConfig()
    stp = Stepper(p, g, "forward", scheme.theta)
    bc_arr = bc.as_array()
    z0 = _stack(init)

    z_prev = stp.run(z0, bc=bc_arr)
    history = []
    for it in range(scheme.picard_max):
        forc = nonlinear_forcing(z_prev, p, g, self_terms)
        forc[:, stp.bc_rows] = 0.0
        z_new = stp.run(z0, bc=bc_arr, forcing=forc)
        with np.errstate(over="ignore", invalid="ignore"):
            diff = np.max(np.sqrt(_xnorm_sq_rows(z_new - z_prev, p, g)))
            scale = max(np.max(np.sqrt(_xnorm_sq_rows(z_new, p, g))), 1e-30)
            update = diff / scale
        history.append(min(update, 1e300) if np.isfinite(update) else 1e300)
        z_prev = z_new
        if history[-1] <= scheme.picard_tol:
            traj = Trajectory(z=z_new, grid=g, picard_history=history)
            return traj, extract_traces(z_new, g)
    ratio = history[-1] / history[-2] if len(history) > 1 and history[-2] > 0 else float("nan")
    raise NonConvergence(
        f"Picard iteration did not reach {scheme.picard_tol:.1e} in "
        f"{scheme.picard_max} sweeps (last contraction ratio {ratio:.3g})",
        history=history,
    )


def _xnorm_sq_rows(z: np.ndarray, p: Parameters, g: Grid) -> np.ndarray:
    """Squared weighted state norm of each row of a stacked trajectory."""
    w = np.full(g.nx, g.dx)
    w[0] = w[-1] = g.dx / 2
    nx = g.nx
    return (p.b / p.c) * (z[:, :nx] ** 2 @ w) + z[:, nx:] ** 2 @ w
