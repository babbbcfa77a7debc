"""Spectrally negative Levy model with hyperexponential downward jumps.

The process is X_t = mu*t + sigma*B_t - sum of compound Poisson jumps, where
jump sizes follow the mixture density sum_j w_j * a_j * exp(-a_j z), z > 0.
Everything downstream (scale functions, Volterra solves, barrier search) is
driven by the Laplace exponent psi and the real roots of psi(s) = r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import NumericError

WEIGHT_SUM_TOL = 1e-12
ROOT_SEPARATION = 1e-9
ROOT_RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class LevyModel:
    """Parameters of the surplus process.

    mu      linear drift per unit time (uncompensated: the jump part is
            finite-activity, so no small-jump compensation enters the drift)
    sigma   Gaussian volatility, must be > 0 (unbounded-variation regime)
    lam     jump arrival rate, >= 0
    jump_mix  tuple of (weight, rate) pairs; weights sum to 1, rates are
            positive and pairwise distinct.  One component gives a log-convex
            jump density; several give a completely monotone (hence
            log-convex) tail, which is what the barrier optimality argument
            needs.
    """

    mu: float
    sigma: float
    lam: float
    jump_mix: tuple[tuple[float, float], ...] = ((1.0, 1.0),)

    def __post_init__(self):
        object.__setattr__(self, "jump_mix",
                           tuple((float(w), float(a)) for w, a in self.jump_mix))
        if not self.sigma > 0.0:
            raise ValueError("sigma must be strictly positive")
        if self.lam < 0.0:
            raise ValueError("jump rate lam must be nonnegative")
        if self.lam > 0.0:
            if not self.jump_mix:
                raise ValueError("jump_mix must be nonempty when lam > 0")
            weights = [w for w, _ in self.jump_mix]
            rates = [a for _, a in self.jump_mix]
            if any(w <= 0.0 or w > 1.0 for w in weights):
                raise ValueError("mixture weights must lie in (0, 1]")
            if abs(sum(weights) - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError("mixture weights must sum to 1")
            if any(a <= 0.0 for a in rates):
                raise ValueError("mixture rates must be strictly positive")
            for i in range(len(rates)):
                for j in range(i + 1, len(rates)):
                    if abs(rates[i] - rates[j]) <= ROOT_SEPARATION:
                        raise ValueError("mixture rates must be distinct")

    @property
    def mean_jump(self) -> float:
        """Mean downward jump size E[Y] = sum_j w_j / a_j."""
        if self.lam == 0.0:
            return 0.0
        return sum(w / a for w, a in self.jump_mix)


@dataclass(frozen=True)
class RootSet:
    """All real roots of psi(s) = q, sorted descending.

    The first root is the unique positive one, Phi(q); the remaining roots
    are strictly negative.
    """

    q: float
    roots: tuple[float, ...]
    phi_q: float


def laplace_exponent(model: LevyModel, theta):
    """psi(theta) = mu*theta + sigma^2/2 * theta^2 + lam * sum w_j (a_j/(a_j+theta) - 1)."""
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0.0):
        raise ValueError("theta must be nonnegative")
    out = model.mu * th + 0.5 * model.sigma**2 * th**2
    if model.lam > 0.0:
        for w, a in model.jump_mix:
            out = out + model.lam * w * (a / (a + th) - 1.0)
    return float(out) if np.isscalar(theta) else out


def laplace_exponent_deriv(model: LevyModel, theta, order: int = 1):
    """First or second derivative of the Laplace exponent."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0.0):
        raise ValueError("theta must be nonnegative")
    if order == 1:
        out = model.mu + model.sigma**2 * th
        if model.lam > 0.0:
            for w, a in model.jump_mix:
                out = out - model.lam * w * a / (a + th) ** 2
    else:
        out = model.sigma**2 * np.ones_like(th)
        if model.lam > 0.0:
            for w, a in model.jump_mix:
                out = out + 2.0 * model.lam * w * a / (a + th) ** 3
    return float(out) if np.isscalar(theta) else out


def _psi_deriv_anywhere(model: LevyModel, s: float) -> float:
    # psi' continued to the whole real line minus the poles -a_j
    out = model.mu + model.sigma**2 * s
    for w, a in model.jump_mix:
        if model.lam > 0.0:
            out -= model.lam * w * a / (a + s) ** 2
    return out


def _psi_anywhere(model: LevyModel, s: float) -> float:
    out = model.mu * s + 0.5 * model.sigma**2 * s * s
    if model.lam > 0.0:
        for w, a in model.jump_mix:
            out += model.lam * w * (a / (a + s) - 1.0)
    return out


def cleared_poly_coeffs(model: LevyModel, r: float) -> np.ndarray:
    """Coefficients (ascending) of (psi(s) - r) * prod_j (a_j + s).

    Clearing the denominators turns psi(s) = r into a polynomial equation of
    degree 2 + len(jump_mix); its real roots are the roots of psi(s) = r.
    """
    base = np.array([-r, model.mu, 0.5 * model.sigma**2])
    rates = [a for _, a in model.jump_mix] if model.lam > 0.0 else []
    prod_all = np.array([1.0])
    for a in rates:
        prod_all = npoly.polymul(prod_all, np.array([a, 1.0]))
    poly = npoly.polymul(base, prod_all)
    if model.lam > 0.0:
        # lam * sum_j w_j (a_j/(a_j+s) - 1) * prod(a+s) = -lam*s*sum_j w_j prod_{k!=j}(a_k+s)
        for j, (w, _) in enumerate(model.jump_mix):
            prod_other = np.array([1.0])
            for k, a in enumerate(rates):
                if k != j:
                    prod_other = npoly.polymul(prod_other, np.array([a, 1.0]))
            term = npoly.polymul(np.array([0.0, model.lam * w]), prod_other)
            poly = npoly.polysub(poly, term)
    return poly


def _newton_polish(model: LevyModel, r: float, s0: float) -> float:
    s = s0
    for _ in range(60):
        f = _psi_anywhere(model, s) - r
        if abs(f) <= 1e-15 * max(1.0, abs(r)):
            break
        d = _psi_deriv_anywhere(model, s)
        if d == 0.0:
            break
        step = f / d
        # keep the iterate away from the poles at -a_j
        for _, a in model.jump_mix:
            if model.lam > 0.0 and (s - step + a) * (s + a) <= 0.0:
                step *= 0.5
        s -= step
        if abs(step) <= 1e-16 * max(1.0, abs(s)):
            break
    return s


def all_real_roots(model: LevyModel, r: float) -> list[float]:
    """All real solutions of psi(s) = r via the companion matrix of the
    cleared polynomial, each polished by Newton iteration."""
    coeffs = cleared_poly_coeffs(model, r)
    if r == 0.0:
        # constant term is exactly zero: deflate the known root s = 0
        if abs(coeffs[0]) > 1e-300:
            raise NumericError("expected exact zero constant term at r=0")
        raw = npoly.polyroots(coeffs[1:])
        raw = np.concatenate([raw, [0.0 + 0.0j]])
    else:
        raw = npoly.polyroots(coeffs)
    scale = 1.0 + np.max(np.abs(raw.real))
    roots = []
    for z in raw:
        if abs(z.imag) > 1e-7 * scale:
            raise NumericError(
                f"complex root {z} of the cleared polynomial; the "
                "hyperexponential model should only produce real roots")
        s = float(z.real)
        if s != 0.0 or r != 0.0:
            s = _newton_polish(model, r, s)
        roots.append(s)
    roots.sort(reverse=True)
    for i in range(len(roots) - 1):
        if abs(roots[i] - roots[i + 1]) <= ROOT_SEPARATION:
            raise NumericError("degenerate root configuration: roots "
                               f"{roots[i]} and {roots[i + 1]} coincide")
    for s in roots:
        if abs(_psi_anywhere(model, s) - r) > ROOT_RESIDUAL_TOL * max(1.0, abs(r)):
            raise NumericError(f"root {s} failed the residual check at level {r}")
    return roots


def psi_roots(model: LevyModel, r: float) -> RootSet:
    """Root set of psi(s) = r for r > 0: exactly one positive root Phi(r),
    all others strictly negative."""
    if not r > 0.0:
        raise ValueError("psi_roots requires r > 0")
    roots = all_real_roots(model, r)
    positives = [s for s in roots if s > 0.0]
    if len(positives) != 1:
        raise NumericError(f"expected exactly one positive root, got {positives}")
    if any(s >= 0.0 for s in roots[1:]):
        raise NumericError("non-leading roots must be strictly negative")
    return RootSet(q=float(r), roots=tuple(roots), phi_q=roots[0])


def phi(model: LevyModel, r: float) -> float:
    """Largest nonnegative root of psi = r (the right inverse of psi)."""
    if r < 0.0:
        raise ValueError("r must be nonnegative")
    if r == 0.0 and laplace_exponent_deriv(model, 0.0, 1) >= 0.0:
        return 0.0
    # psi is convex on [0, inf) with psi(0) = 0, so {psi <= r} is an interval
    # [0, Phi(r)]; bisection onto its right endpoint always converges.
    hi = 1.0
    for _ in range(200):
        if laplace_exponent(model, hi) > r:
            break
        hi *= 2.0
    else:
        raise NumericError(f"could not bracket Phi({r}): psi({hi}) <= {r}")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if laplace_exponent(model, mid) > r:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    s = _newton_polish(model, r, 0.5 * (lo + hi))
    if s < 0.0:
        s = 0.0
    if abs(laplace_exponent(model, s) - r) > ROOT_RESIDUAL_TOL * max(1.0, abs(r)):
        raise NumericError(
            f"Phi({r}) did not converge: bracket [{lo}, {hi}], residual "
            f"{laplace_exponent(model, s) - r}")
    return s


def reference_model() -> LevyModel:
    """The parameter set used by the bundled experiment presets:
    mu=0.075, sigma=0.25, lam=0.5, single exponential jump with rate 9."""
    return LevyModel(mu=0.075, sigma=0.25, lam=0.5, jump_mix=((1.0, 9.0),))


__all__ = [
    "LevyModel", "RootSet", "laplace_exponent", "laplace_exponent_deriv",
    "phi", "psi_roots", "all_real_roots", "cleared_poly_coeffs",
    "reference_model",
]
