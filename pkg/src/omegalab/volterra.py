"""Level-dependent (Omega) scale functions via a Volterra equation.

For a discounting intensity w_q with terminal rate rho = q, the Omega scale
function H solves, for any p in [0, q],

    H(x) = Z_p(x - a; Phi(phi_q)) + int_a^x W_p(x - y) (w_q(y) - p) H(y) dy,

with phi_q the rate on (-infty, a).  The kernel vanishes on y >= 0 when
p = q, and the diagonal weight W_p(0+) is zero because sigma > 0, so a
forward march over a kink-aligned trapezoid grid yields H in one pass.  A
Picard sweep (successive substitution, the construction behind the solution
series) is kept as an independent iteration on the same discretisation.

Because W_p is an exponential sum, every row of the discrete system factors
through per-root running sums; both methods below exploit this and run in
O(n_nodes * n_roots) per pass instead of O(n_nodes^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .levy import LevyModel, phi as phi_inverse
from .omega import BankruptcyRate
from .scale import ScaleBasis, W, Z, Z_deriv, Z_second, scale_basis

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a hard dependency
    def _njit(*args, **kwargs):
        def deco(f):
            return f
        return deco


_KINK_TOL = 1e-9
_MONOTONE_TOL = 1e-14


@dataclass(frozen=True)
class SolverConfig:
    """Grid and iteration controls.

    p is the free level of the equation; None means p = rho = q, which makes
    the kernel vanish on [0, infty) and keeps the Picard iterates monotone.
    """

    p: float | None = None
    grid_step: float = 1e-3
    x_max: float | None = None
    picard_tol: float = 1e-12
    picard_max_iter: int = 500
    method: str = "marching"

    def __post_init__(self):
        if self.grid_step <= 0.0:
            raise ValueError("grid_step must be positive")
        if self.picard_tol <= 0.0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max_iter < 1:
            raise ValueError("picard_max_iter must be >= 1")
        if self.method not in ("marching", "picard"):
            raise ValueError("method must be 'marching' or 'picard'")


@dataclass(frozen=True)
class SolverMeta:
    p: float
    grid_step: float
    x_max: float
    method: str
    iterations: int
    increment: float
    picard_tol: float


@dataclass(frozen=True, eq=False)
class OmegaScaleTable:
    """Solved H on a grid covering [a, x_max], with derivative columns.

    H1 holds the first derivative (right-derivative convention at kinks,
    though with sigma > 0 both sides coincide); H2 holds the second
    derivative and is NaN at the kinks of the rate function, where it may
    fail to exist.  ext_coeffs are the coefficients of the exponential sum
    that H reduces to on (0, infty); they extend every evaluation beyond
    x_max in closed form.
    """

    grid: np.ndarray
    H: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    meta: SolverMeta
    model: LevyModel
    omega_q: BankruptcyRate
    q: float
    phi_q: float
    big_phi: float
    basis_q: ScaleBasis
    ext_coeffs: np.ndarray
    zero_idx: int

    @property
    def a(self) -> float:
        return self.omega_q.a

    @property
    def x_max(self) -> float:
        return float(self.grid[-1])

    def H_value(self, x):
        """H(x) anywhere: exponential below a, table interpolation on
        (a, 0], exponential sum on (0, infty)."""
        xv = np.asarray(x, dtype=float)
        roots = np.asarray(self.basis_q.roots)
        pos = np.exp(np.multiply.outer(np.maximum(xv, 0.0), roots)) @ self.ext_coeffs
        below = np.exp(self.big_phi * (np.minimum(xv, self.a) - self.a))
        if self.zero_idx > 0:
            mid = np.interp(np.clip(xv, self.a, 0.0),
                            self.grid[:self.zero_idx + 1],
                            self.H[:self.zero_idx + 1])
        else:
            mid = np.ones_like(xv)
        out = np.where(xv <= self.a, below, np.where(xv <= 0.0, mid, pos))
        return float(out) if np.isscalar(x) else out

    def H1_pos(self, x):
        """H'(x) for x >= 0 from the closed-form exponential sum."""
        xv = np.asarray(x, dtype=float)
        if np.any(xv < 0.0):
            raise ValueError("H1_pos is defined on [0, infty)")
        roots = np.asarray(self.basis_q.roots)
        out = np.exp(np.multiply.outer(xv, roots)) @ (self.ext_coeffs * roots)
        return float(out) if np.isscalar(x) else out

    def H2_pos(self, x):
        """H''(x) for x > 0 from the closed-form exponential sum."""
        xv = np.asarray(x, dtype=float)
        if np.any(xv < 0.0):
            raise ValueError("H2_pos is defined on (0, infty)")
        roots = np.asarray(self.basis_q.roots)
        out = np.exp(np.multiply.outer(xv, roots)) @ (self.ext_coeffs * roots**2)
        return float(out) if np.isscalar(x) else out

    @property
    def kinks(self) -> tuple[float, ...]:
        return self.omega_q.breaks


def build_grid(omega_q: BankruptcyRate, x_max: float, step: float) -> np.ndarray:
    """Grid on [a, x_max] with every breakpoint of the rate function, 0 and
    x_max as exact nodes; each stretch between marks is uniform with spacing
    <= step."""
    marks = sorted({omega_q.a, 0.0, float(x_max)} | set(omega_q.breaks))
    nodes = [marks[0]]
    for lo, hi in zip(marks[:-1], marks[1:]):
        n = max(1, int(np.ceil((hi - lo) / step - 1e-9)))
        seg = np.linspace(lo, hi, n + 1)
        nodes.extend(seg[1:].tolist())
    return np.asarray(nodes)


def _kernel_weights(grid: np.ndarray, omega_q: BankruptcyRate, p: float) -> np.ndarray:
    """Per-node trapezoid coefficients c_j combining the one-sided values of
    (w_q - p) on the two panels adjacent to node j.  Using the left limit at
    a panel's right end keeps each panel's trapezoid consistent with the
    half-open convention for the integral, which is what preserves O(h^2)
    refinement across the jumps of w_q."""
    hseg = np.diff(grid)
    wplus = np.asarray(omega_q.value(grid), dtype=float) - p
    wminus = np.asarray(omega_q.left_value(grid), dtype=float) - p
    c = np.zeros_like(grid)
    c[:-1] += 0.5 * hseg * wplus[:-1]
    c[1:] += 0.5 * hseg * wminus[1:]
    if np.min(c) < -1e-15:
        raise NumericError("negative kernel weight: p exceeds the minimum of w_q")
    return np.maximum(c, 0.0)


@_njit(cache=True)
def _march_kernel(x, z, c, roots, coeffs):  # pragma: no cover - jitted
    n = x.shape[0]
    k = roots.shape[0]
    H = np.empty(n)
    S = np.zeros(k)
    H[0] = z[0]
    for i in range(1, n):
        h = x[i] - x[i - 1]
        add = c[i - 1] * H[i - 1]
        acc = z[i]
        for m in range(k):
            S[m] = np.exp(roots[m] * h) * (S[m] + add)
            acc += coeffs[m] * S[m]
        H[i] = acc
    return H


def _march(grid, z, c, roots, coeffs):
    return _march_kernel(grid, z, c,
                         np.ascontiguousarray(roots), np.ascontiguousarray(coeffs))


def _apply_kernel(grid, c, v, roots, coeffs):
    """One application of the discrete Volterra kernel: out_i =
    sum_{j<i} W(x_i - x_j) c_j v_j, evaluated through per-root prefix sums."""
    rel = grid - grid[0]
    t = c * v
    out = np.zeros_like(v)
    for r, d in zip(roots, coeffs):
        em = np.exp(-r * rel) * t
        cs = np.empty_like(v)
        cs[0] = 0.0
        np.cumsum(em[:-1], out=cs[1:])
        out += d * np.exp(r * rel) * cs
    return out


def _picard(grid, z, c, roots, coeffs, tol, max_iter):
    span = grid[-1] - grid[0]
    if np.max(np.abs(roots)) * span > 650.0:
        raise NumericError("grid span too large for the factorised Picard sweep")
    # Iterate on increments: d_m = K d_{m-1} reproduces the iterated-kernel
    # series term by term, so monotonicity of the iterates is the sign of d.
    H = z.copy()
    d = _apply_kernel(grid, c, z, roots, coeffs)
    inc = float(np.max(np.abs(d)))
    for it in range(1, max_iter + 1):
        scale = float(np.max(H)) + inc
        if float(np.min(d)) < -_MONOTONE_TOL * scale:
            raise NumericError(
                f"Picard iterates lost monotonicity ({float(np.min(d)):.3e})")
        H = H + d
        inc = float(np.max(np.abs(d)))
        if inc <= tol * float(np.max(H)):
            return H, it, inc
        d = _apply_kernel(grid, c, d, roots, coeffs)
    raise NumericError(
        f"Picard did not reach tol={tol} in {max_iter} iterations "
        f"(last increment {inc:.3e})")


def solve_H(model: LevyModel, omega_q: BankruptcyRate,
            cfg: SolverConfig | None = None) -> OmegaScaleTable:
    """Solve for the Omega scale function of the intensity w_q on a grid.

    omega_q must be a shifted intensity (rho = q > 0, typically built with
    BankruptcyRate.shifted).  Returns the solved table with derivative
    columns and the closed-form continuation coefficients.
    """
    cfg = cfg if cfg is not None else SolverConfig()
    q = omega_q.rho
    if not q > 0.0:
        raise ValueError("omega_q must have rho = q > 0 (use rate.shifted(q))")
    p = q if cfg.p is None else float(cfg.p)
    if not (0.0 <= p <= q * (1.0 + 1e-12)):
        raise ValueError("p must lie in [0, rho]")
    a = omega_q.a
    x_max = (a + 6.0) if cfg.x_max is None else float(cfg.x_max)
    if x_max <= 0.0:
        raise ValueError("x_max must be positive")

    grid = build_grid(omega_q, x_max, cfg.grid_step)
    phi_q = omega_q.phi
    big_phi = phi_inverse(model, phi_q)
    basis_p = scale_basis(model, p)
    roots_p = np.asarray(basis_p.roots)
    coeffs_p = np.asarray(basis_p.coeffs)
    z = np.asarray(Z(basis_p, grid - a, phi_q, big_phi), dtype=float)
    c = _kernel_weights(grid, omega_q, p)

    if cfg.method == "marching":
        H = _march(grid, z, c, roots_p, coeffs_p)
        iterations, increment = 1, 0.0
    else:
        H, iterations, increment = _picard(grid, z, c, roots_p, coeffs_p,
                                           cfg.picard_tol, cfg.picard_max_iter)

    scale = float(np.max(H))
    if not np.all(np.isfinite(H)):
        raise NumericError("solver produced non-finite values")
    if np.min(H) <= 0.0:
        raise NumericError("solved H is not strictly positive")
    if np.min(np.diff(H)) < -1e-10 * scale:
        raise NumericError("solved H is not nondecreasing")
    majorant = np.exp(big_phi * (grid - a))
    if np.max(H - majorant) > 1e-10 * scale:
        raise NumericError("solved H exceeds its exponential majorant")

    meta = SolverMeta(p=p, grid_step=cfg.grid_step, x_max=x_max,
                      method=cfg.method, iterations=iterations,
                      increment=increment, picard_tol=cfg.picard_tol)
    return _finish_table(model, omega_q, grid, H, meta, q, phi_q, big_phi)


def _finish_table(model, omega_q, grid, H, meta, q, phi_q, big_phi) -> OmegaScaleTable:
    a = omega_q.a
    basis_q = scale_basis(model, q)
    roots = np.asarray(basis_q.roots)
    D = np.asarray(basis_q.coeffs)
    zero_idx = int(np.searchsorted(grid, 0.0))
    if abs(grid[zero_idx]) > 1e-12:
        raise NumericError("grid does not contain 0 as a node")

    c_q = _kernel_weights(grid, omega_q, q)
    rel = grid - grid[0]
    t = c_q * H
    T = []
    for r in roots:
        em = np.exp(-r * rel) * t
        cs = np.empty_like(H)
        cs[0] = 0.0
        np.cumsum(em[:-1], out=cs[1:])
        T.append(np.exp(r * rel) * cs)

    wminus = np.asarray(omega_q.left_value(grid), dtype=float) - q
    wval = np.asarray(omega_q.value(grid), dtype=float) - q
    hprev = np.concatenate([[0.0], np.diff(grid)])
    w1_0 = float(np.sum(D * roots))        # W_q'(0+) = 2/sigma^2
    w2_0 = float(np.sum(D * roots**2))

    H1 = np.asarray(Z_deriv(basis_q, grid - a, phi_q, big_phi), dtype=float)
    H2 = np.asarray(Z_second(basis_q, grid - a, phi_q, big_phi), dtype=float)
    for r, d, Tk in zip(roots, D, T):
        H1 += d * r * Tk
        H2 += d * r * r * Tk
    H1 += 0.5 * hprev * w1_0 * wminus * H
    H2 += 0.5 * hprev * w2_0 * wminus * H
    H2 += w1_0 * wval * H

    for kink in omega_q.breaks:
        hit = np.abs(grid - kink) <= _KINK_TOL
        H2[hit] = np.nan

    # closed-form continuation on (0, infty): H(x) = sum_k E_k exp(th_k x),
    # E_k = D_k e^{-th_k a} [ (phi_q - q)/(Phi - th_k) + sum_j e^{-th_k (y_j - a)} c_j H_j ]
    gsum = np.array([float(np.sum(np.exp(-r * rel[:zero_idx + 1]) * t[:zero_idx + 1]))
                     for r in roots])
    ext = D * np.exp(-roots * a) * ((phi_q - q) / (big_phi - roots) + gsum)
    return OmegaScaleTable(grid=grid, H=H, H1=H1, H2=H2, meta=meta,
                           model=model, omega_q=omega_q, q=q, phi_q=phi_q,
                           big_phi=big_phi, basis_q=basis_q,
                           ext_coeffs=ext, zero_idx=zero_idx)


def _one_sided_trapezoid(table, x, deriv, upto):
    """int_a^{upto} W_q^(deriv)(x - y) (w_q(y) - q) H(y) dy with one-sided
    rate values at panel ends; 'upto' <= 0 need not be a grid node."""
    grid, H = table.grid, table.H
    omega_q, q = table.omega_q, table.q
    j = int(np.searchsorted(grid, upto + 1e-15)) - 1
    ys = grid[:j + 1]
    hs = H[:j + 1]
    if upto > grid[j] + 1e-13:
        ys = np.append(ys, upto)
        hs = np.append(hs, np.interp(upto, grid[:table.zero_idx + 1],
                                     H[:table.zero_idx + 1]))
    if ys.size < 2:
        return 0.0
    gplus = W(table.basis_q, x - ys, deriv=deriv) \
        * (np.asarray(omega_q.value(ys)) - q) * hs
    gminus = W(table.basis_q, x - ys, deriv=deriv) \
        * (np.asarray(omega_q.left_value(ys)) - q) * hs
    h = np.diff(ys)
    return float(np.sum(0.5 * h * (gplus[:-1] + gminus[1:])))


def H_prime(table: OmegaScaleTable, x: float) -> float:
    """First derivative of the solved H.

    Below a this is the exact exponential; at and beyond 0 it reduces to the
    closed-form sum; in between it is the derivative formula with the kernel
    differentiated in x (the diagonal term vanishes since sigma > 0).
    """
    x = float(x)
    if x > table.x_max + 1e-12:
        raise ValueError("x beyond the solved domain; re-solve with larger x_max")
    if x <= table.a:
        return table.big_phi * float(np.exp(table.big_phi * (x - table.a)))
    if x >= 0.0:
        return table.H1_pos(x)
    zd = float(Z_deriv(table.basis_q, x - table.a, table.phi_q, table.big_phi))
    return zd + _one_sided_trapezoid(table, x, 1, x)


def H_second(table: OmegaScaleTable, x: float) -> float:
    """Second derivative of the solved H; refuses the kinks of the rate
    function, where it may jump."""
    x = float(x)
    if x > table.x_max + 1e-12:
        raise ValueError("x beyond the solved domain; re-solve with larger x_max")
    for kink in table.kinks:
        if abs(x - kink) <= _KINK_TOL:
            raise ValueError(f"second derivative undefined at kink {kink}")
    if x < table.a:
        return table.big_phi**2 * float(np.exp(table.big_phi * (x - table.a)))
    if x > 0.0:
        return table.H2_pos(x)
    zs = float(Z_second(table.basis_q, x - table.a, table.phi_q, table.big_phi))
    w1_0 = float(np.sum(np.asarray(table.basis_q.coeffs)
                        * np.asarray(table.basis_q.roots)))
    local = w1_0 * (float(table.omega_q.value(x)) - table.q) * table.H_value(x)
    return zs + local + _one_sided_trapezoid(table, x, 2, x)


@dataclass(frozen=True)
class ConvexityReport:
    convex_margin: float
    convex_scale: float
    logconvex_margin: float
    log_scale: float
    ultimately_increasing: bool
    n_points: int


def second_difference_margins(values: np.ndarray) -> tuple[float, float]:
    """Min discrete convexity margin of a sampled function on a uniform grid
    and of its log (midpoint rule); both are >= 0 for (log-)convex data."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ValueError("need at least three samples")
    d2 = v[:-2] + v[2:] - 2.0 * v[1:-1]
    if np.min(v) <= 0.0:
        return float(np.min(d2)), -np.inf
    lg = np.log(v)
    l2 = lg[:-2] + lg[2:] - 2.0 * lg[1:-1]
    return float(np.min(d2)), float(np.min(l2))


def convexity_report(table: OmegaScaleTable, x_lo: float | None = None,
                     x_hi: float | None = None) -> ConvexityReport:
    """Discrete convexity and log-convexity diagnostics of H' on (0, x_max],
    plus whether H' has turned increasing by the right edge."""
    lo = 0.0 if x_lo is None else max(0.0, float(x_lo))
    hi = table.x_max if x_hi is None else float(x_hi)
    mask = (table.grid > lo + 1e-15) & (table.grid <= hi + 1e-15)
    xs = table.grid[mask]
    if xs.size < 8:
        raise ValueError("window contains too few grid nodes")
    steps = np.diff(xs)
    if np.max(steps) - np.min(steps) > 1e-9 * np.max(steps):
        # sample the closed form uniformly instead of relying on grid layout
        xs = np.linspace(xs[0], xs[-1], xs.size)
    h1 = np.asarray(table.H1_pos(xs))
    cmargin, lmargin = second_difference_margins(h1)
    tail = h1[-max(5, xs.size // 20):]
    increasing = bool(np.all(np.diff(tail) > 0.0))
    return ConvexityReport(
        convex_margin=cmargin,
        convex_scale=float(np.max(np.abs(h1))),
        logconvex_margin=lmargin,
        log_scale=max(1.0, float(np.max(np.abs(np.log(h1))))) if np.min(h1) > 0 else 1.0,
        ultimately_increasing=increasing,
        n_points=int(xs.size),
    )


@dataclass(frozen=True, eq=False)
class KernelTables:
    """Iterated kernels on a small uniform grid (test harness only)."""

    grid: np.ndarray
    K: list          # K_m matrices, m = 1..m_max
    K_rev: list      # same built with the reversed composition
    Kbar: list       # partial sums
    conv_bounds: list  # (phi-p)^m * m-fold self-convolution of W_p, by offset
    zeta: np.ndarray   # (phi-p) * W_phi(x_i - x_j)


def picard_kernels(model: LevyModel, omega_q: BankruptcyRate, p: float,
                   m_max: int, grid: np.ndarray) -> KernelTables:
    """Tabulate the iterated kernels K_m and their partial sums on a uniform
    grid, checking the convolution bound 0 <= K_m <= (phi-p)^m W_p^{*m} and
    the geometric majorant (phi-p) W_phi termwise."""
    if m_max < 1 or m_max > 10:
        raise ValueError("m_max must be in 1..10 (test-scale operation)")
    grid = np.asarray(grid, dtype=float)
    steps = np.diff(grid)
    if grid.size < 4 or np.max(steps) - np.min(steps) > 1e-9 * np.max(steps):
        raise ValueError("picard_kernels requires a uniform grid")
    h = float(np.mean(steps))
    q = omega_q.rho
    if not (0.0 <= p <= q * (1.0 + 1e-12)):
        raise ValueError("p must lie in [0, rho]")
    phi_q = omega_q.phi

    basis_p = scale_basis(model, p)
    basis_phi = scale_basis(model, phi_q)
    n = grid.size
    dif = grid[:, None] - grid[None, :]
    Wmat = np.where(dif >= 0.0, W(basis_p, np.maximum(dif, 0.0)), 0.0)
    np.fill_diagonal(Wmat, 0.0)      # W_p(0+) = 0 exactly in this regime
    om = np.asarray(omega_q.value(grid), dtype=float) - p
    K1 = Wmat * om[None, :]

    offsets = np.arange(n) * h
    V = [np.asarray(W(basis_p, offsets))]
    K = [K1]
    K_rev = [K1]
    for _ in range(1, m_max):
        prev = K[-1]
        diag_prev = np.diag(prev)
        diag_k1 = np.diag(K1)
        nxt = h * (K1 @ prev - 0.5 * K1 * diag_prev[None, :]
                   - 0.5 * diag_k1[:, None] * prev)
        nxt = np.tril(nxt)
        K.append(nxt)
        prev_r = K_rev[-1]
        nxt_r = h * (prev_r @ K1 - 0.5 * prev_r * diag_k1[None, :]
                     - 0.5 * np.diag(prev_r)[:, None] * K1)
        K_rev.append(np.tril(nxt_r))
        v_prev = V[-1]
        v_nxt = h * (np.convolve(V[0], v_prev)[:n]
                     - 0.5 * (V[0] * v_prev[0] + V[0][0] * v_prev))
        V.append(v_nxt)

    conv_bounds = [((phi_q - p) ** (m + 1)) * V[m] for m in range(m_max)]
    zeta = (phi_q - p) * np.where(dif >= 0.0, W(basis_phi, np.maximum(dif, 0.0)), 0.0)

    Kbar = []
    run = np.zeros_like(K1)
    for m in range(m_max):
        scale = max(np.max(np.abs(K[m])), 1e-300)
        if np.min(K[m]) < -1e-12 * scale:
            raise NumericError(f"iterated kernel K_{m + 1} went negative")
        bound = conv_bounds[m][np.maximum(
            np.arange(n)[:, None] - np.arange(n)[None, :], 0)]
        bound = np.tril(bound)
        if np.max(K[m] - bound) > 1e-10 * max(np.max(bound), 1e-300):
            raise NumericError(f"K_{m + 1} violates its convolution bound")
        run = run + K[m]
        Kbar.append(run.copy())
        if np.max(run - zeta * (1.0 + 1e-6)) > 1e-9 * max(1.0, float(np.max(zeta))):
            raise NumericError("partial kernel sum exceeds the geometric majorant")

    return KernelTables(grid=grid, K=K, K_rev=K_rev, Kbar=Kbar,
                        conv_bounds=conv_bounds, zeta=zeta)


__all__ = [
    "SolverConfig", "SolverMeta", "OmegaScaleTable", "ConvexityReport",
    "KernelTables", "build_grid", "solve_H", "H_prime", "H_second",
    "convexity_report", "second_difference_margins", "picard_kernels",
]
