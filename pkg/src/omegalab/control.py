"""Optimal dividend barrier and value-function diagnostics.

The candidate barrier is the argmin of H' over [0, infty).  On (0, infty)
the solved H reduces to an exponential sum, so H' and H'' are available in
closed form at any level; the argmin is located by a grid scan plus golden
section refinement, which is valid because H' is convex there for the model
class handled here (log-convex jump tail).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import NumericError
from .levy import LevyModel
from .volterra import OmegaScaleTable, SolverConfig, convexity_report, solve_H

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_CONVEXITY_TOL = 1e-8
_FLAT_TOL = 1e-10


@dataclass(frozen=True)
class BarrierDiagnostics:
    convex_margin: float
    convex_scale: float
    logconvex_margin: float
    log_scale: float
    ultimately_increasing: bool
    smooth_fit_residual: float | None


@dataclass(frozen=True, eq=False)
class BarrierSolution:
    """Optimal barrier level with the pieces needed to evaluate the value
    function: v(x) = H(x)/H'(b*) at or below the barrier, affine with unit
    slope above it."""

    b_star: float
    H_at_b: float
    H1_at_b: float
    table: OmegaScaleTable
    diagnostics: BarrierDiagnostics


def _golden_min(f, lo, hi, tol):
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = f(d)
    return 0.5 * (lo + hi)


def find_barrier(table: OmegaScaleTable, refine_tol: float = 1e-8,
                 scan_step: float | None = None) -> BarrierSolution:
    """Locate b* = argmin of H' on [0, infty) and package the solution.

    The scan may run past the solved grid because H' continues in closed
    form beyond x_max; if the minimiser lands outside the table, the table
    is re-solved on an enlarged domain so downstream grid operations cover
    the barrier.
    """
    report = convexity_report(table)
    if (report.convex_margin < -_CONVEXITY_TOL * report.convex_scale
            or report.logconvex_margin < -_CONVEXITY_TOL * report.log_scale):
        raise NumericError("H' failed its convexity check; the barrier "
                           "characterisation does not apply")

    hp = table.H1_pos
    step = scan_step if scan_step is not None else max(table.meta.grid_step, 1e-4)
    hi = table.x_max
    cap = table.a + 60.0
    while True:
        xs = np.arange(0.0, hi + step, step)
        vals = np.asarray(hp(xs))
        i = int(np.argmin(vals))
        if i < xs.size - 1:
            break
        hi *= 2.0
        if hi > cap:
            raise NumericError("minimum of H' not bracketed before the scan cap")

    if i == 0:
        b = _golden_min(hp, 0.0, xs[1], refine_tol)
        if hp(0.0) <= hp(b):
            b = 0.0
    else:
        b = _golden_min(hp, xs[i - 1], xs[i + 1], refine_tol)

    # flat-minimum tie-break: prefer the smallest barrier with the same
    # objective (earlier dividends at equal value)
    fmin = hp(b)
    thresh = fmin + _FLAT_TOL * max(1.0, abs(fmin))
    if b > 0.0 and hp(0.0) <= thresh:
        b = 0.0
    elif b > 0.0:
        lo_b, hi_b = 0.0, b
        while hi_b - lo_b > refine_tol:
            mid = 0.5 * (lo_b + hi_b)
            if hp(mid) <= thresh:
                hi_b = mid
            else:
                lo_b = mid
        b = hi_b

    if b > table.x_max:
        cfg = SolverConfig(p=table.meta.p, grid_step=table.meta.grid_step,
                           x_max=b + 2.0, picard_tol=table.meta.picard_tol,
                           method=table.meta.method)
        table = solve_H(table.model, table.omega_q, cfg)

    smooth = None
    if b > 0.0:
        probe = np.linspace(max(b - 1.0, 0.5 * b), b + 1.0, 41)
        h2 = np.asarray(table.H2_pos(np.maximum(probe, 1e-12)))
        smooth = abs(table.H2_pos(b)) / max(float(np.max(np.abs(h2))), 1e-300)

    diag = BarrierDiagnostics(
        convex_margin=report.convex_margin,
        convex_scale=report.convex_scale,
        logconvex_margin=report.logconvex_margin,
        log_scale=report.log_scale,
        ultimately_increasing=report.ultimately_increasing,
        smooth_fit_residual=smooth,
    )
    return BarrierSolution(b_star=float(b), H_at_b=float(table.H_value(b)),
                           H1_at_b=float(hp(b)), table=table, diagnostics=diag)


def value_at(solution: BarrierSolution, x):
    """Optimal value function v*(x) of the dividend problem."""
    return barrier_value_at(solution.table, solution.b_star, x)


def barrier_value_at(table: OmegaScaleTable, b: float, x):
    """Value of the barrier strategy at an arbitrary level b >= 0:
    H(x)/H'(b) below the barrier, x - b + H(b)/H'(b) above it.  H'(0)
    means the right derivative."""
    if b < 0.0:
        raise ValueError("barrier level must be nonnegative")
    h1b = float(table.H1_pos(b))
    hb = float(table.H_value(b))
    xv = np.asarray(x, dtype=float)
    below = np.asarray(table.H_value(np.minimum(xv, b))) / h1b
    above = xv - b + hb / h1b
    out = np.where(xv <= b, below, above)
    return float(out) if np.isscalar(x) else out


def _exp_moment_pieces(table: OmegaScaleTable, b: float, h1b: float,
                       alpha: float, x: float) -> float:
    """E[v(x - Y)] for Y ~ Exp(alpha), for the barrier-b value function.

    Decomposed over the regions where v is (i) exponential below a,
    (ii) tabulated on [a, 0], (iii) an exponential sum on (0, b], and
    (iv) affine above b.  Everything except (ii) is exact; (ii) is one
    trapezoid over the solved grid.
    """
    a = table.a
    big_phi = table.big_phi
    # (i) y <= a: v(y) = e^{Phi (y-a)} / H'(b)
    part = alpha * np.exp(-alpha * (x - a)) / ((alpha + big_phi) * h1b)
    # (ii) a < y <= 0: tabulated H
    if table.zero_idx > 0:
        ys = table.grid[:table.zero_idx + 1]
        vals = alpha * np.exp(-alpha * (x - ys)) * table.H[:table.zero_idx + 1] / h1b
        part += float(np.trapezoid(vals, ys))
    # (iii) 0 < y <= min(x, b): exponential sum
    xc = min(x, b)
    if xc > 0.0:
        roots = np.asarray(table.basis_q.roots)
        coef = table.ext_coeffs / h1b
        term = alpha / (alpha + roots) * (
            np.exp(roots * xc - alpha * (x - xc)) - np.exp(-alpha * x))
        part += float(np.sum(coef * term))
    # (iv) b < y <= x: affine with unit slope
    if x > b:
        delta = x - b
        decay = np.exp(-alpha * delta)
        kappa = float(table.H_value(b)) / h1b
        part += (delta + kappa) * (1.0 - decay) \
            - (1.0 - decay * (1.0 + alpha * delta)) / alpha
    return part


def hjb_residual(solution: BarrierSolution, x: float) -> float:
    """Signed generator residual (Gamma - (q + omega)) v(x) of the barrier
    value function; zero inside (0, b*), nonpositive beyond, up to the
    discretisation error of the underlying table.  Refuses the kinks of the
    rate function (x = 0 included)."""
    t = solution.table
    x = float(x)
    if x <= 0.0:
        raise ValueError("residual is evaluated on (0, infty)")
    for kink in t.kinks:
        if abs(x - kink) <= 1e-9:
            raise ValueError(f"x = {x} is a kink of the rate function")
    b = solution.b_star
    h1b = solution.H1_at_b
    model = t.model
    if x < b:
        v = float(t.H_value(x)) / h1b
        v1 = float(t.H1_pos(x)) / h1b
        v2 = float(t.H2_pos(x)) / h1b
    else:
        v = x - b + solution.H_at_b / h1b
        v1 = 1.0
        v2 = 0.0
    jump = 0.0
    if model.lam > 0.0:
        for w, alpha in model.jump_mix:
            ev = _exp_moment_pieces(t, b, h1b, alpha, x)
            jump += model.lam * w * (ev - v)
    omega_x = float(t.omega_q.value(x)) - t.q
    return model.mu * v1 + 0.5 * model.sigma**2 * v2 + jump - (t.q + omega_x) * v


def generator_apply(model: LevyModel, x: float, v, v1: float, v2: float,
                    exp_tail: tuple[float, float, float] | None = None,
                    kinks: tuple[float, ...] = ()) -> float:
    """Quadrature-based generator Gamma v(x) for an arbitrary value-function
    callable; reference implementation used to cross-check hjb_residual.

    v is a callable; v1, v2 are its first two derivatives at x.  exp_tail =
    (y0, coef, rate) declares v(y) = coef * e^{rate (y - y0)} for y <= y0,
    which supplies the exact tail of the jump integral.
    """
    out = model.mu * v1 + 0.5 * model.sigma**2 * v2
    if model.lam == 0.0:
        return out
    vx = float(v(x))
    if exp_tail is not None:
        y0, coef, rate = exp_tail
        z_cut = x - y0
        if z_cut < 0.0:
            raise ValueError("exp_tail must start at or below x")
    else:
        z_cut = x + 60.0 / min(a for _, a in model.jump_mix)
    pts = sorted({x - k for k in kinks if 0.0 < x - k < z_cut})

    def integrand(z):
        dens = sum(w * a * np.exp(-a * z) for w, a in model.jump_mix)
        return (float(v(x - z)) - vx) * model.lam * dens

    val, _ = integrate.quad(integrand, 0.0, z_cut, points=pts or None,
                            limit=400, epsabs=1e-11, epsrel=1e-11)
    out += val
    if exp_tail is not None:
        y0, coef, rate = exp_tail
        for w, a in model.jump_mix:
            e = np.exp(-a * z_cut)
            out += model.lam * w * (coef * a * e / (a + rate) - vx * e)
    return out


__all__ = [
    "BarrierDiagnostics", "BarrierSolution", "find_barrier", "value_at",
    "barrier_value_at", "hjb_residual", "generator_apply",
]
