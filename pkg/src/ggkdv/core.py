"""Domain types, parameter validation, and the weighted state norm.

The model is a pair of coupled KdV equations on (0, L),

    u_t + u u_x + u_xxx + a v_xxx + a1 v v_x + a2 (u v)_x = 0,
    c v_t + r v_x + v v_x + a b u_xxx + v_xxx + a2 b u u_x + a1 b (u v)_x = 0,

whose well-posed regime requires b > 0, c > 0 and 1 - a^2 b > 0.  States
(u, v) are measured in the weighted norm

    ||(u, v)||_X = sqrt( (b/c) int u^2 dx + int v^2 dx ),

which is the norm in which the linear spatial operator is dissipative.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolation

__all__ = [
    "Parameters",
    "Grid",
    "StatePair",
    "ControlKind",
    "ControlConfig",
    "DiagonalForm",
    "validate_params",
    "dispersion_matrix",
    "diagonalize",
    "x_norm",
    "x_inner",
]


@dataclass(frozen=True)
class Parameters:
    """Physical coefficients of the coupled system.

    ``a`` couples the dispersive terms, ``a1``/``a2`` the nonlinear ones,
    ``b`` and ``c`` are the (positive) modal weights and ``r`` is the
    transport coefficient of the second equation.  Construction does not
    validate; call :func:`validate_params` (every solver does so on entry).
    """

    a: float
    b: float
    c: float
    r: float
    a1: float = 0.0
    a2: float = 0.0


def validate_params(p: Parameters) -> Parameters:
    """Return ``p`` unchanged iff b > 0, c > 0 and 1 - a^2 b > 0.

    Raises ConstraintViolation naming the first failed inequality.
    """
    for name in ("a", "b", "c", "r", "a1", "a2"):
        value = getattr(p, name)
        if not np.isfinite(value):
            raise ConstraintViolation(f"{name} is not finite")
    if p.b <= 0:
        raise ConstraintViolation("b <= 0")
    if p.c <= 0:
        raise ConstraintViolation("c <= 0")
    if 1.0 - p.a**2 * p.b <= 0:
        raise ConstraintViolation("1 - a^2 b <= 0")
    return p


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid on (0, L) x (0, T).

    ``N`` counts interior spatial points; arrays carry N + 2 samples
    including both endpoints.  ``M`` counts time steps; time series carry
    M + 1 levels.
    """

    L: float
    N: int
    T: float
    M: int

    def __post_init__(self):
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ValueError("L must be positive and finite")
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ValueError("T must be positive and finite")
        if int(self.N) != self.N or self.N < 8:
            raise ValueError("N must be an integer >= 8")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError("M must be an integer >= 2")

    @property
    def dx(self) -> float:
        return self.L / (self.N + 1)

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def nx(self) -> int:
        """Number of spatial samples (N + 2, endpoints included)."""
        return self.N + 2

    @property
    def nt(self) -> int:
        """Number of time levels (M + 1)."""
        return self.M + 1

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.nx)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt)


@dataclass
class StatePair:
    """The pair (u, v) sampled on the spatial grid (endpoints included)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.ndim != 1 or self.v.ndim != 1 or self.u.shape != self.v.shape:
            raise ValueError("u and v must be 1-d arrays of identical length")

    @classmethod
    def zeros(cls, g: Grid) -> "StatePair":
        return cls(np.zeros(g.nx), np.zeros(g.nx))

    def copy(self) -> "StatePair":
        return StatePair(self.u.copy(), self.v.copy())

    def check_grid(self, g: Grid):
        if len(self.u) != g.nx:
            raise ValueError(
                f"state has {len(self.u)} spatial samples, grid expects {g.nx}"
            )

    def check_finite(self):
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ConstraintViolation("state contains NaN or Inf")


class ControlKind(enum.Enum):
    """The control configurations (i)-(vi), plus a free-form mask."""

    FOUR_I = "FOUR_I"
    FOUR_II = "FOUR_II"
    FOUR_III = "FOUR_III"
    FOUR_IV = "FOUR_IV"
    THREE_V = "THREE_V"
    THREE_VI = "THREE_VI"
    CUSTOM = "CUSTOM"


# Active signals per configuration, ordered (h0, h1, h2, g0, g1, g2).
_KIND_MASKS = {
    ControlKind.FOUR_I: (True, True, True, False, True, False),
    ControlKind.FOUR_II: (False, True, False, True, True, True),
    ControlKind.FOUR_III: (True, True, False, True, True, False),
    ControlKind.FOUR_IV: (False, True, True, False, True, True),
    ControlKind.THREE_V: (True, True, False, True, False, False),
    ControlKind.THREE_VI: (True, False, False, True, True, False),
}

SIGNAL_NAMES = ("h0", "h1", "h2", "g0", "g1", "g2")


@dataclass(frozen=True)
class ControlConfig:
    """Which of the six boundary signals are available as controls."""

    kind: ControlKind
    mask: tuple = field(default=None)

    def __post_init__(self):
        if self.kind is ControlKind.CUSTOM:
            if self.mask is None or len(self.mask) != 6:
                raise ValueError("CUSTOM config requires a 6-entry mask")
            object.__setattr__(self, "mask", tuple(bool(m) for m in self.mask))
        else:
            expected = _KIND_MASKS[self.kind]
            if self.mask is not None and tuple(self.mask) != expected:
                raise ValueError(
                    f"mask {self.mask} does not match the {self.kind.value} pattern"
                )
            object.__setattr__(self, "mask", expected)

    @classmethod
    def of(cls, kind) -> "ControlConfig":
        if isinstance(kind, str):
            kind = ControlKind(kind)
        return cls(kind=kind)

    @property
    def is_three_control(self) -> bool:
        return self.kind in (ControlKind.THREE_V, ControlKind.THREE_VI)

    def active_names(self):
        return tuple(n for n, m in zip(SIGNAL_NAMES, self.mask) if m)


def dispersion_matrix(p: Parameters) -> np.ndarray:
    """Matrix of the third-derivative coupling, [[1, a], [a b / c, 1 / c]]."""
    return np.array([[1.0, p.a], [p.a * p.b / p.c, 1.0 / p.c]])


@dataclass(frozen=True)
class DiagonalForm:
    """Eigen-decomposition of the dispersion coupling matrix.

    ``from_diagonal`` holds the (unit-norm) eigenvector columns, so that

        from_diagonal @ diag(lambda_plus, lambda_minus) @ to_diagonal

    reproduces the dispersion matrix and ``to_diagonal`` maps physical
    variables to the decoupled ones.

    A closed form for the decoupled speeds circulates as
    -1/2 ((1/c - 1) +- sqrt((1/c - 1)^2 + 4 a^2 b / c)); at a = 0, c = 2 it
    yields {0, 1/2} while the matrix itself has eigenvalues {1, 1/2}, so this
    module always diagonalizes the matrix directly and reports the closed
    form only here, as a caution.
    """

    lambda_plus: float
    lambda_minus: float
    to_diagonal: np.ndarray
    from_diagonal: np.ndarray


def diagonalize(p: Parameters) -> DiagonalForm:
    """Diagonalize the dispersion matrix of a valid parameter set.

    Both eigenvalues are real: the discriminant (1 - 1/c)^2 + 4 a^2 b / c is
    nonnegative whenever b, c > 0.  Eigenvalues are returned in descending
    order; eigenvector columns are normalized to unit Euclidean norm with
    their first nonzero component positive, so the output is deterministic.
    """
    validate_params(p)
    E = dispersion_matrix(p)
    lam, vec = np.linalg.eig(E)
    lam = lam.real
    vec = vec.real
    order = np.argsort(-lam)
    lam = lam[order]
    vec = vec[:, order]
    for j in range(2):
        col = vec[:, j]
        col /= np.linalg.norm(col)
        lead = col[0] if abs(col[0]) > 1e-14 else col[1]
        if lead < 0:
            col = -col
        vec[:, j] = col
    return DiagonalForm(
        lambda_plus=float(lam[0]),
        lambda_minus=float(lam[1]),
        to_diagonal=np.linalg.inv(vec),
        from_diagonal=vec,
    )


def x_inner(s1: StatePair, s2: StatePair, p: Parameters, g: Grid) -> float:
    """The weighted inner product (b/c) int u1 u2 + int v1 v2 (trapezoid)."""
    s1.check_grid(g)
    s2.check_grid(g)
    w = np.full(g.nx, g.dx)
    w[0] = w[-1] = 0.5 * g.dx
    return float(
        (p.b / p.c) * np.sum(w * s1.u * s2.u) + np.sum(w * s1.v * s2.v)
    )


def x_norm(s: StatePair, p: Parameters, g: Grid) -> float:
    """The weighted state norm sqrt((b/c) int u^2 + int v^2) (trapezoid)."""
    return float(np.sqrt(max(x_inner(s, s, p, g), 0.0)))
