"""Boundary control synthesis by duality (HUM) and observability estimation.

The control operator maps adjoint final data (phi_T, psi_T) to boundary
inputs read off the adjoint solution's traces:

    h1 = (c/b) (phi_x + a psi_x)(t, L)        g1 = c (a b phi_x + psi_x)(t, L)
    h0 = (c/b) R[ (phi_xx + a psi_xx)(t, 0) ]  g0 = c R[ (a b phi_xx + psi_xx)(t, 0) ]
    h2 = -(c/b) R[ (phi + a psi)(t, L) ]       g2 = -c R[ (a b phi + psi)(t, L) ]

where R is the Riesz multiplier of the trace's fractional class, so that
every active term of the duality identity becomes the squared class norm of
its trace combination.  The Gramian is the composition

    adjoint solve -> controls -> forward solve (zero init) -> state at T,

and the control problem Gramian(x) = target - free evolution is solved by
conjugate gradient on the normal equations (CGLS) in the weighted state
inner product, using exact transposes of the discrete solve recursions.
Plain CG on the Gramian itself is not usable here: the forward/adjoint
discretizations are only weak-sense adjoints of each other, and the
composite operator loses symmetry on unresolved mesh-scale data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    ControlConfig,
    Grid,
    Parameters,
    StatePair,
    validate_params,
    x_norm,
)
from .errors import (
    ConstraintViolation,
    FeasibilityError,
    NonConvergence,
    NumericalError,
)
from .fdops import boundary_stencils, first_derivative_matrix, second_derivative_matrix
from .pde import (
    BoundarySignals,
    SchemeConfig,
    Stepper,
    TraceBundle,
    Trajectory,
    nonlinear_forcing,
    solve_adjoint_backward,
    solve_linear_forward,
    solve_nonlinear,
)
from .tracenorm import riesz_map, sobolev_norms_batch, sobolev_trace_norm

__all__ = [
    "ControlBundle",
    "ObservabilityReport",
    "ControlResult",
    "NonlinearControlResult",
    "controls_from_adjoint",
    "gramian_apply",
    "solve_control",
    "estimate_observability",
    "solve_nonlinear_control",
    "random_final_state",
    "observability_quotient",
    "feasibility_constant_ok",
]

SIGNAL_ORDER = ("h0", "h1", "h2", "g0", "g1", "g2")

# fractional class of each control's paired trace combination
TRACE_CLASS = {"h0": -1 / 3, "h1": 0.0, "h2": 1 / 3,
               "g0": -1 / 3, "g1": 0.0, "g2": 1 / 3}
# class of the control signal itself (Dirichlet / Neumann / second derivative)
CONTROL_CLASS = {"h0": 1 / 3, "h1": 0.0, "h2": -1 / 3,
                 "g0": 1 / 3, "g1": 0.0, "g2": -1 / 3}


def _coefficients(p: Parameters) -> dict:
    cb = p.c / p.b
    return {"h0": cb, "h1": cb, "h2": -cb, "g0": p.c, "g1": p.c, "g2": -p.c}


@dataclass
class ControlBundle:
    """Boundary control signals with their configuration and class norms."""

    signals: BoundarySignals
    config: ControlConfig
    norms: dict

    def as_json_dict(self) -> dict:
        return {
            "config": self.config.kind.value,
            "mask": list(self.config.mask),
            "norms": {k: float(v) for k, v in self.norms.items()},
            "signals": {n: getattr(self.signals, n).tolist() for n in SIGNAL_ORDER},
        }


@dataclass
class ObservabilityReport:
    """Sampled observability quotients and hidden-regularity constants."""

    config: ControlConfig
    L: float
    T: float
    quotient_min: float
    sample_count: int
    c_hidden: np.ndarray
    quotients: np.ndarray = field(default=None)
    rejected: int = 0

    @property
    def c1_squared(self) -> float:
        return float(self.c_hidden[1] ** 2)

    def feasible_three_control(self, p: Parameters) -> bool:
        gap = 1.0 - p.a**2 * p.b
        return 0.0 < self.c1_squared * gap < p.c

    def as_json_dict(self) -> dict:
        return {
            "config": self.config.kind.value,
            "L": self.L,
            "T": self.T,
            "quotient_min": float(self.quotient_min),
            "sample_count": int(self.sample_count),
            "c_hidden": [float(v) for v in self.c_hidden],
            "c1_squared": self.c1_squared,
            "rejected": int(self.rejected),
        }


@dataclass
class ControlResult:
    controls: ControlBundle
    achieved: StatePair
    iterations: int
    residuals: list
    adjoint_final: StatePair


@dataclass
class NonlinearControlResult:
    controls: ControlBundle
    iterations: int
    history: list
    terminal_error: float
    achieved: StatePair
    trajectory: Trajectory


def combo_read_vectors(p: Parameters, g: Grid) -> np.ndarray:
    """Read-out vectors r with combo_s(t) = r_s . stacked state(t).

    Order h0..g2; combinations are the ones appearing in the observability
    inequalities: second derivatives at x = 0 for h0/g0, first derivatives
    at x = L for h1/g1, values at x = L for h2/g2.
    """
    st = boundary_stencils(g.nx, g.dx)
    nx = g.nx
    a, b = p.a, p.b

    def vec(key, w_u, w_v):
        cols, wts = st[key]
        out = np.zeros(2 * nx)
        out[cols] = w_u * wts
        out[nx + cols] = w_v * wts
        return out

    return np.stack(
        [
            vec(("left", 2), 1.0, a),        # h0 slot
            vec(("right", 1), 1.0, a),       # h1 slot
            vec(("right", 0), 1.0, a),       # h2 slot
            vec(("left", 2), a * b, 1.0),    # g0 slot
            vec(("right", 1), a * b, 1.0),   # g1 slot
            vec(("right", 0), a * b, 1.0),   # g2 slot
        ]
    )


def combos_from_traces(traces: TraceBundle, p: Parameters) -> np.ndarray:
    """The six trace combinations (6, M+1) from an adjoint trace bundle."""
    a, b = p.a, p.b
    t = traces
    return np.stack(
        [
            t.series(0, 2, "0") + a * t.series(1, 2, "0"),
            t.series(0, 1, "L") + a * t.series(1, 1, "L"),
            t.series(0, 0, "L") + a * t.series(1, 0, "L"),
            a * b * t.series(0, 2, "0") + t.series(1, 2, "0"),
            a * b * t.series(0, 1, "L") + t.series(1, 1, "L"),
            a * b * t.series(0, 0, "L") + t.series(1, 0, "L"),
        ]
    )


def _signals_from_combos(cb: np.ndarray, cfg: ControlConfig, p: Parameters, T: float):
    coef = _coefficients(p)
    sig = np.zeros_like(cb)
    for i, name in enumerate(SIGNAL_ORDER):
        if not cfg.mask[i]:
            continue
        s = TRACE_CLASS[name]
        sig[i] = coef[name] * (cb[i] if s == 0.0 else riesz_map(cb[i], s, T))
    return sig


def controls_from_adjoint(
    cfg: ControlConfig, traces: TraceBundle, p: Parameters
) -> ControlBundle:
    """Boundary controls read off adjoint traces, masked to the configuration.

    Inactive signals are identically zero.  Active ones are the scaled
    (Riesz-weighted, for the fractional classes) trace combinations, so the
    duality pairing against the adjoint solution becomes the sum of squared
    class norms of the active combinations.
    """
    validate_params(p)
    T = traces.grid.T
    cb = combos_from_traces(traces, p)
    sig = _signals_from_combos(cb, cfg, p, T)
    signals = BoundarySignals.from_array(sig)
    norms = {
        name: sobolev_trace_norm(sig[i], CONTROL_CLASS[name], T)
        for i, name in enumerate(SIGNAL_ORDER)
    }
    return ControlBundle(signals=signals, config=cfg, norms=norms)


class GramianOperator:
    """The HUM map with cached steppers and its exact discrete transpose."""

    def __init__(self, cfg: ControlConfig, p: Parameters, g: Grid,
                 scheme: SchemeConfig = None):
        validate_params(p)
        self.cfg, self.p, self.g = cfg, p, g
        self.scheme = scheme or SchemeConfig()
        self.fw = Stepper(p, g, "forward", self.scheme.theta)
        self.ad = Stepper(p, g, "adjoint", self.scheme.theta)
        self.read = combo_read_vectors(p, g)
        w = np.full(g.nx, g.dx)
        w[0] = w[-1] = g.dx / 2
        self.w_stacked = np.concatenate([(p.b / p.c) * w, w])
        self.coef = _coefficients(p)

    def xdot(self, z1: np.ndarray, z2: np.ndarray) -> float:
        return float(np.sum(self.w_stacked * z1 * z2))

    def signals_for(self, z_final: np.ndarray) -> np.ndarray:
        states = self.ad.run(z_final)
        cb = self.read @ states.T
        return _signals_from_combos(cb, self.cfg, self.p, self.g.T)

    def apply(self, z_final: np.ndarray) -> np.ndarray:
        sig = self.signals_for(z_final)
        states = self.fw.run(np.zeros(2 * self.g.nx), bc=sig)
        return states[-1]

    def apply_star(self, y: np.ndarray) -> np.ndarray:
        q = self.fw.input_transpose(self.w_stacked * y)
        T = self.g.T
        wt = np.full(self.g.nt, self.g.dt)
        wt[0] = wt[-1] = self.g.dt / 2
        d = np.zeros_like(q)
        for i, name in enumerate(SIGNAL_ORDER):
            if not self.cfg.mask[i]:
                continue
            s = TRACE_CLASS[name]
            if s == 0.0:
                d[i] = self.coef[name] * q[i]
            else:
                # Riesz multiplier is self-adjoint in the trapezoid weights
                d[i] = self.coef[name] * wt * riesz_map(q[i] / wt, s, T)
        return self.ad.readout_transpose(self.read, d) / self.w_stacked

    def free_evolution(self, init: StatePair) -> np.ndarray:
        z0 = np.concatenate([init.u, init.v])
        return self.fw.run(z0)[-1]


def gramian_apply(
    cfg: ControlConfig, final: StatePair, p: Parameters, g: Grid,
    scheme: SchemeConfig = None,
) -> StatePair:
    """Adjoint solve -> controls -> forward solve from rest; state at t = T."""
    op = GramianOperator(cfg, p, g, scheme)
    final.check_grid(g)
    final.check_finite()
    out = op.apply(np.concatenate([final.u, final.v]))
    return StatePair(out[: g.nx].copy(), out[g.nx :].copy())


def _cgls(op: GramianOperator, rhs: np.ndarray, tol: float, maxiter: int,
          x0: np.ndarray = None):
    """CG on the normal equations in the weighted state inner product.

    The normal residual directions are kept fully orthogonal (modified
    Gram-Schmidt against all previous ones); without this, roundoff stalls
    the iteration well above the target on ill-conditioned configurations.
    The stored basis is tiny next to the PDE solves each iteration costs.
    """
    nrhs = np.sqrt(op.xdot(rhs, rhs))
    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    res = rhs - op.apply(x) if x0 is not None else rhs.copy()
    s = op.apply_star(res)
    gam = op.xdot(s, s)
    hist = [np.sqrt(op.xdot(res, res)) / nrhs]
    if hist[0] <= tol:
        return x, 0, hist
    pdir = s.copy()
    basis = [s / np.sqrt(gam)] if gam > 0 else []
    best_x, best_res = x.copy(), hist[0]
    for it in range(1, maxiter + 1):
        if gam <= 0:
            break
        q = op.apply(pdir)
        qq = op.xdot(q, q)
        if qq <= 0:
            break
        alpha = gam / qq
        x = x + alpha * pdir
        res = res - alpha * q
        rel = np.sqrt(op.xdot(res, res)) / nrhs
        hist.append(rel)
        if rel < best_res:
            best_x, best_res = x.copy(), rel
        if rel <= tol:
            return x, it, hist
        s = op.apply_star(res)
        for u in basis:
            s = s - op.xdot(s, u) * u
        gam_new = op.xdot(s, s)
        if gam_new <= 0:
            break
        basis.append(s / np.sqrt(gam_new))
        pdir = s + (gam_new / gam) * pdir
        gam = gam_new
    if best_res <= 10 * tol:
        return best_x, len(hist) - 1, hist
    raise NonConvergence(
        f"control CG stalled at relative residual {best_res:.3e} "
        f"(target {tol:.1e}, {len(hist) - 1} iterations)",
        history=hist,
    )


def solve_control(
    cfg: ControlConfig,
    init: StatePair,
    target: StatePair,
    tol: float,
    p: Parameters,
    g: Grid,
    scheme: SchemeConfig = None,
    maxiter: int = 500,
    x0: StatePair = None,
    feasibility_samples: int = 8,
    check_feasibility: bool = True,
) -> ControlResult:
    """Steer ``init`` to ``target`` at time T with the masked boundary controls.

    Solves Gramian(x) = target - free evolution by CGLS until the relative
    residual (which equals the terminal error, by linearity) drops below
    ``tol``; the achieved state is re-verified with a plain forward solve
    using the returned controls.
    """
    validate_params(p)
    init.check_grid(g)
    target.check_grid(g)
    init.check_finite()
    target.check_finite()
    if cfg.is_three_control and check_feasibility:
        rep = estimate_observability(cfg, feasibility_samples, p, g, scheme=scheme)
        if not rep.feasible_three_control(p):
            gap = 1.0 - p.a**2 * p.b
            raise FeasibilityError(
                f"three-control condition failed: C1 (1 - a^2 b) = "
                f"{rep.c1_squared * gap:.4g} not inside (0, c = {p.c:.4g})"
            )
    op = GramianOperator(cfg, p, g, scheme)
    rhs = np.concatenate([target.u, target.v]) - op.free_evolution(init)
    if np.sqrt(op.xdot(rhs, rhs)) < 1e-14:
        bundle = ControlBundle(
            signals=BoundarySignals.zeros(g), config=cfg,
            norms={n: 0.0 for n in SIGNAL_ORDER},
        )
        traj, _ = solve_linear_forward(p, g, init, bundle.signals,
                                       scheme=scheme, stepper=op.fw)
        return ControlResult(bundle, traj.final_state, 0, [0.0],
                             StatePair.zeros(g))
    z0 = np.concatenate([x0.u, x0.v]) if x0 is not None else None
    xsol, iters, hist = _cgls(op, rhs, tol, maxiter, x0=z0)
    _, traces = solve_adjoint_backward(
        p, g, StatePair(xsol[: g.nx].copy(), xsol[g.nx :].copy()),
        scheme=scheme, stepper=op.ad,
    )
    bundle = controls_from_adjoint(cfg, traces, p)
    traj, _ = solve_linear_forward(p, g, init, bundle.signals,
                                   scheme=scheme, stepper=op.fw)
    return ControlResult(
        controls=bundle,
        achieved=traj.final_state,
        iterations=iters,
        residuals=hist,
        adjoint_final=StatePair(xsol[: g.nx].copy(), xsol[g.nx :].copy()),
    )


def _mollify(f: np.ndarray, passes: int = 3) -> np.ndarray:
    for _ in range(passes):
        out = f.copy()
        out[1:-1] = 0.25 * f[:-2] + 0.5 * f[1:-1] + 0.25 * f[2:]
        out[0] = 0.5 * (f[0] + f[1])
        out[-1] = 0.5 * (f[-1] + f[-2])
        f = out
    return f


def resolved_mode_count(g: Grid) -> int:
    """Largest cosine mode whose dispersive time scale the grid resolves.

    A spatial mode k pi / L oscillates at frequency ~ (k pi / L)^3; modes
    beyond the Nyquist-resolved band saturate the discrete trace norms at
    mesh-dependent values, so quotient and constant estimates sample only
    the resolved band (which widens under refinement).
    """
    k = int((np.pi / g.dt) ** (1.0 / 3.0) * g.L / np.pi)
    return max(2, k)


def random_final_state(rng: np.random.Generator, p: Parameters, g: Grid) -> StatePair:
    """Unit-norm random final data for observability sampling.

    Random trigonometric series over the time-resolved modal band, softened
    by three nearest-neighbor averaging passes; raw nodal noise would put
    most of its energy where the scheme cannot propagate it and inflate
    every trace-norm estimate with the mesh.
    """
    kres = resolved_mode_count(g)
    xh = g.x / g.L
    comps = []
    for _ in range(2):
        f = np.zeros(g.nx)
        for k in range(1, kres + 1):
            f += rng.standard_normal() * np.sin(k * np.pi * xh)
            f += rng.standard_normal() * np.cos(k * np.pi * xh)
        comps.append(_mollify(f))
    s = StatePair(*comps)
    nrm = x_norm(s, p, g)
    if nrm < 1e-14:
        return random_final_state(rng, p, g)
    s.u /= nrm
    s.v /= nrm
    return s


def observability_quotient(
    cfg: ControlConfig, final: StatePair, p: Parameters, g: Grid,
    scheme: SchemeConfig = None, adjoint_stepper: Stepper = None,
):
    """(sum of squared active combination norms) / ||final||_X^2.

    Returns None for zero final data (not a valid quotient sample).
    """
    nrm = x_norm(final, p, g)
    if nrm < 1e-14:
        return None
    _, traces = solve_adjoint_backward(p, g, final, scheme=scheme,
                                       stepper=adjoint_stepper)
    cb = combos_from_traces(traces, p)
    total = 0.0
    for i, name in enumerate(SIGNAL_ORDER):
        if cfg.mask[i]:
            total += sobolev_trace_norm(cb[i], TRACE_CLASS[name], g.T) ** 2
    return total / nrm**2


def estimate_observability(
    cfg: ControlConfig,
    nsamples: int,
    p: Parameters,
    g: Grid,
    seed: int = 0,
    scheme: SchemeConfig = None,
) -> ObservabilityReport:
    """Sample the observability quotient and hidden-regularity constants.

    For unit-norm random final data the report records the smallest observed
    quotient and, for each derivative order j, the largest H^{(1-j)/3}(0,T)
    norm of the adjoint traces over every grid abscissa (the discrete
    surrogate of the hidden-regularity constants C_j).
    """
    validate_params(p)
    if nsamples < 1:
        raise ValueError("nsamples must be >= 1")
    scheme = scheme or SchemeConfig()
    stp = Stepper(p, g, "adjoint", scheme.theta)
    rng = np.random.default_rng(seed)
    D1 = first_derivative_matrix(g.nx, g.dx).T.tocsr()
    D2 = second_derivative_matrix(g.nx, g.dx).T.tocsr()
    quots = []
    c_hidden = np.zeros(3)
    rejected = 0
    for _ in range(nsamples):
        final = random_final_state(rng, p, g)
        q = observability_quotient(cfg, final, p, g, scheme=scheme,
                                   adjoint_stepper=stp)
        if q is None:
            rejected += 1
            continue
        quots.append(q)
        states = stp.run(np.concatenate([final.u, final.v]))
        for var in (0, 1):
            blk = states[:, var * g.nx : (var + 1) * g.nx]
            for j, deriv in ((0, blk), (1, blk @ D1), (2, blk @ D2)):
                norms = sobolev_norms_batch(deriv, (1.0 - j) / 3.0, g.T)
                c_hidden[j] = max(c_hidden[j], float(np.max(norms)))
    quots = np.array(quots)
    return ObservabilityReport(
        config=cfg,
        L=g.L,
        T=g.T,
        quotient_min=float(np.min(quots)) if len(quots) else float("nan"),
        sample_count=len(quots),
        c_hidden=c_hidden,
        quotients=quots,
        rejected=rejected,
    )


def feasibility_constant_ok(report: ObservabilityReport, p: Parameters) -> bool:
    return report.feasible_three_control(p)


def solve_nonlinear_control(
    init: StatePair,
    target: StatePair,
    cfg: ControlConfig,
    delta: float,
    p: Parameters,
    g: Grid,
    scheme: SchemeConfig = None,
    tol: float = 1e-3,
    self_terms: bool = True,
    outer_max: int = None,
) -> NonlinearControlResult:
    """Fixed-point loop steering the full nonlinear system to ``target``.

    Each sweep solves the linear control problem toward the target adjusted
    by the endpoint Duhamel correction of the current nonlinear trajectory,
    then re-simulates the nonlinear system with the new controls.  Fails
    with NonConvergence when the data is too large for contraction.
    """
    validate_params(p)
    scheme = scheme or SchemeConfig(picard_tol=1e-6)
    sizes = x_norm(init, p, g) + x_norm(target, p, g)
    if sizes > delta:
        raise ConstraintViolation(
            f"data too large: ||init|| + ||target|| = {sizes:.3g} > delta = {delta:.3g}"
        )
    outer_max = outer_max or scheme.picard_max
    op = GramianOperator(cfg, p, g, scheme)
    adjusted = target.copy()
    warm = None
    history = []
    result = None
    traj = None
    tnorm = max(x_norm(target, p, g), 1e-30)
    converged = False
    for it in range(1, outer_max + 1):
        result = solve_control(cfg, init, adjusted, tol, p, g, scheme=scheme,
                               x0=warm, check_feasibility=(it == 1))
        warm = result.adjoint_final
        try:
            traj, _ = solve_nonlinear(p, g, init, result.controls.signals,
                                      scheme=scheme, self_terms=self_terms)
        except (NonConvergence, NumericalError) as exc:
            raise NonConvergence(
                "nonlinear resimulation diverged (delta too large); outer "
                f"history {history}",
                history=history,
            ) from exc
        # endpoint Duhamel correction of the nonlinear terms
        forc = -nonlinear_forcing(traj.z, p, g, self_terms)
        ups = op.fw.run(np.zeros(2 * g.nx), forcing=forc)[-1]
        adjusted_new = StatePair(target.u + ups[: g.nx], target.v + ups[g.nx :])
        change = x_norm(
            StatePair(adjusted_new.u - adjusted.u, adjusted_new.v - adjusted.v),
            p, g,
        )
        history.append(change / tnorm)
        adjusted = adjusted_new
        if history[-1] <= scheme.picard_tol:
            converged = True
            break
        if len(history) >= 3 and history[-1] > 4.0 * history[0]:
            raise NonConvergence(
                "outer fixed point diverging (delta too large); "
                f"contraction history {history}",
                history=history,
            )
    if not converged and history and history[-1] > 10 * scheme.picard_tol:
        raise NonConvergence(
            f"outer fixed point did not settle in {outer_max} sweeps; "
            f"history {history}",
            history=history,
        )
    terminal = StatePair(traj.z[-1, : g.nx].copy(), traj.z[-1, g.nx :].copy())
    err = x_norm(StatePair(terminal.u - target.u, terminal.v - target.v), p, g)
    return NonlinearControlResult(
        controls=result.controls,
        iterations=it,
        history=history,
        terminal_error=err / tnorm,
        achieved=terminal,
        trajectory=traj,
    )


