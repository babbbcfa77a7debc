"""Monte Carlo oracle for barrier dividend values under the Omega clock.

Simulates the controlled surplus under a barrier strategy with exact
Gaussian increments per Euler step and jumps placed at their exact
exponential event times inside each step.  Two estimators of the same
expectation are provided:

* discounted -- accumulates e^{-int (q + omega(U)) ds} dL pathwise (the
  exponential clock integrated out; lower variance), and
* killed -- draws the unit-mean exponential clock explicitly, terminates the
  path when the accumulated omega-integral exceeds it and discounts by
  e^{-q t} only.

Per-path streams are counter-based (seed, path index), so results are
bit-identical regardless of thread scheduling.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

# the coarse per-path loop needs no nested threading; workqueue is always
# built and avoids probing optional TBB/OMP layers
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from numba import njit, prange

from .levy import LevyModel
from .omega import BankruptcyRate

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO53 = 9007199254740992.0


@dataclass(frozen=True)
class McConfig:
    dt: float = 1e-3
    n_paths: int = 200_000
    weight_floor: float = 1e-7
    seed: int = 0
    estimator: str = "discounted"

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not 0.0 < self.weight_floor < 1.0:
            raise ValueError("weight_floor must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.estimator not in ("discounted", "killed"):
            raise ValueError("estimator must be 'discounted' or 'killed'")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths_used: int
    truncation_bias_bound: float


@njit(inline="always", cache=True)
def _finalize(z):  # pragma: no cover - jitted
    z = ((z ^ (z >> np.uint64(30))) * _MIX1) & _MASK
    z = ((z ^ (z >> np.uint64(27))) * _MIX2) & _MASK
    return z ^ (z >> np.uint64(31))


@njit(inline="always", cache=True)
def _next_u64(state):  # pragma: no cover - jitted
    state = (state + _GOLD) & _MASK
    return state, _finalize(state)


@njit(inline="always", cache=True)
def _path_state(seed, idx):  # pragma: no cover - jitted
    # scatter the start state through the finalizer so per-path streams are
    # far apart on the counter lattice instead of shifted copies of each
    # other (the split trick of splittable generators)
    return _finalize((seed + (np.uint64(idx) + np.uint64(1)) * _GOLD) & _MASK)


@njit(inline="always", cache=True)
def _uniform(state):  # pragma: no cover - jitted
    state, z = _next_u64(state)
    return state, (float(z >> np.uint64(11)) + 0.5) / _TWO53


@njit(inline="always", cache=True)
def _rate_index(u, a, breaks):  # pragma: no cover - jitted
    # region code: -1 below a, n_pieces for [0, inf), else piece index
    if u >= 0.0:
        return breaks.shape[0] - 1
    if u < a:
        return -1
    for k in range(breaks.shape[0] - 1):
        if u < breaks[k + 1]:
            return k
    return breaks.shape[0] - 1


@njit(inline="always", cache=True)
def _normal_pair(state):  # pragma: no cover - jitted
    # polar (Marsaglia) method: no trig calls
    while True:
        state, u1 = _uniform(state)
        state, u2 = _uniform(state)
        v1 = 2.0 * u1 - 1.0
        v2 = 2.0 * u2 - 1.0
        ss = v1 * v1 + v2 * v2
        if 0.0 < ss < 1.0:
            f = math.sqrt(-2.0 * math.log(ss) / ss)
            return state, v1 * f, v2 * f


@njit(cache=True, fastmath=True)
def _path_discounted(state, mu, sigma, lam, cumw, alphas, a, breaks, vals,
                     slopes, phi, q, b, x0, dt, floor, decays,
                     decay_lo, decay_hi):  # pragma: no cover - jitted
    u = x0
    payout = 0.0
    w = 1.0
    if u > b:
        payout += u - b
        u = b
    if lam > 0.0:
        state, uu = _uniform(state)
        jt = -math.log(uu) / lam
    else:
        jt = 1e300
    have_norm = False
    cache = 0.0
    mu_dt = mu * dt
    sig_dt = sigma * math.sqrt(dt)
    while w >= floor:
        rem = dt
        while rem > 0.0:
            is_jump = jt < rem
            s = jt if is_jump else rem
            # left-point hazard rate at the post-control position
            idx = _rate_index(u, a, breaks)
            if idx < 0:
                rate = phi + q
                dec = decay_lo
            elif idx == breaks.shape[0] - 1:
                rate = q
                dec = decay_hi
            else:
                rate = vals[idx] + slopes[idx] * (u - breaks[idx]) + q
                dec = decays[idx]
            if have_norm:
                n = cache
                have_norm = False
            else:
                state, n, cache = _normal_pair(state)
                have_norm = True
            if s == dt:
                u += mu_dt + sig_dt * n
                w *= dec if dec > 0.0 else math.exp(-rate * dt)
            else:
                u += mu * s + sigma * math.sqrt(s) * n
                w *= math.exp(-rate * s)
            if u > b:
                payout += w * (u - b)
                u = b
            rem -= s
            if is_jump:
                state, uu = _uniform(state)
                j = 0
                while uu > cumw[j]:
                    j += 1
                state, uu = _uniform(state)
                u -= -math.log(uu) / alphas[j]
                state, uu = _uniform(state)
                jt = -math.log(uu) / lam
            else:
                jt -= s
    return payout


@njit(cache=True, fastmath=True)
def _path_killed(state, mu, sigma, lam, cumw, alphas, a, breaks, vals,
                 slopes, phi, q, b, x0, dt, floor):  # pragma: no cover - jitted
    u = x0
    payout = 0.0
    disc = 1.0
    acc = 0.0
    if u > b:
        payout += u - b
        u = b
    state, uu = _uniform(state)
    clock = -math.log(uu)
    if lam > 0.0:
        state, uu = _uniform(state)
        jt = -math.log(uu) / lam
    else:
        jt = 1e300
    have_norm = False
    cache = 0.0
    mu_dt = mu * dt
    sig_dt = sigma * math.sqrt(dt)
    q_dec = math.exp(-q * dt)
    while disc >= floor:
        rem = dt
        while rem > 0.0:
            is_jump = jt < rem
            s = jt if is_jump else rem
            idx = _rate_index(u, a, breaks)
            if idx < 0:
                rate = phi
            elif idx == breaks.shape[0] - 1:
                rate = 0.0
            else:
                rate = vals[idx] + slopes[idx] * (u - breaks[idx])
            if rate > 0.0 and acc + rate * s >= clock:
                return payout
            acc += rate * s
            if have_norm:
                n = cache
                have_norm = False
            else:
                state, n, cache = _normal_pair(state)
                have_norm = True
            if s == dt:
                u += mu_dt + sig_dt * n
                disc *= q_dec
            else:
                u += mu * s + sigma * math.sqrt(s) * n
                disc *= math.exp(-q * s)
            if u > b:
                payout += disc * (u - b)
                u = b
            rem -= s
            if is_jump:
                state, uu = _uniform(state)
                j = 0
                while uu > cumw[j]:
                    j += 1
                state, uu = _uniform(state)
                u -= -math.log(uu) / alphas[j]
                state, uu = _uniform(state)
                jt = -math.log(uu) / lam
            else:
                jt -= s
    return payout


@njit(cache=True, parallel=True)
def _batch(kind, seed, n_paths, mu, sigma, lam, cumw, alphas, a, breaks,
           vals, slopes, phi, q, b, x0, dt, floor, decays, decay_lo,
           decay_hi, out):  # pragma: no cover - jitted
    for i in prange(n_paths):
        st = _path_state(seed, i)
        if kind == 0:
            out[i] = _path_discounted(st, mu, sigma, lam, cumw, alphas, a,
                                      breaks, vals, slopes, phi, q, b, x0,
                                      dt, floor, decays, decay_lo, decay_hi)
        else:
            out[i] = _path_killed(st, mu, sigma, lam, cumw, alphas, a,
                                  breaks, vals, slopes, phi, q, b, x0,
                                  dt, floor)


def _pack_rate(omega: BankruptcyRate):
    breaks = np.asarray(omega.breaks, dtype=float)
    if omega.pieces:
        vals = np.array([p.value for p in omega.pieces], dtype=float)
        slopes = np.array([p.slope for p in omega.pieces], dtype=float)
    else:
        vals = np.zeros(0)
        slopes = np.zeros(0)
    return breaks, vals, slopes


def simulate_value(model: LevyModel, omega: BankruptcyRate, q: float,
                   b: float, x0: float, cfg: McConfig | None = None) -> McEstimate:
    """Estimate the barrier-strategy value v_b(x0) by simulation.

    omega is the unshifted bankruptcy rate function (rho = 0); q the
    discount rate.  Paths are truncated once the remaining discount weight
    falls below cfg.weight_floor; the returned bound covers the bias of
    that truncation.
    """
    cfg = cfg if cfg is not None else McConfig()
    if b < 0.0:
        raise ValueError("barrier level must be nonnegative")
    if omega.rho != 0.0:
        raise ValueError("omega must be a bankruptcy rate function (rho = 0)")
    if not q > 0.0:
        raise ValueError("q must be positive")

    breaks, vals, slopes = _pack_rate(omega)
    if model.lam > 0.0:
        cumw = np.cumsum([w for w, _ in model.jump_mix])
        cumw[-1] = 1.0 + 1e-12
        alphas = np.array([al for _, al in model.jump_mix], dtype=float)
    else:
        cumw = np.array([1.0 + 1e-12])
        alphas = np.array([1.0])
    decays = np.array([
        math.exp(-(v + q) * cfg.dt) if s == 0.0 else -1.0
        for v, s in zip(vals, slopes)
    ]) if vals.size else np.zeros(0)
    decay_lo = math.exp(-(omega.phi + q) * cfg.dt)
    decay_hi = math.exp(-q * cfg.dt)

    out = np.empty(cfg.n_paths)
    kind = 0 if cfg.estimator == "discounted" else 1
    _batch(kind, np.uint64(cfg.seed), cfg.n_paths, model.mu, model.sigma,
           model.lam, cumw, alphas, omega.a, breaks, vals, slopes,
           omega.phi, q, float(b), float(x0), cfg.dt, cfg.weight_floor,
           decays, decay_lo, decay_hi, out)

    mean = float(np.mean(out))
    stderr = float(np.std(out, ddof=1) / math.sqrt(cfg.n_paths)) \
        if cfg.n_paths > 1 else 0.0
    # once the weight is at the floor, remaining expected dividends per unit
    # time are bounded by E|dX|/dt discounted at rate >= q
    payout_rate = (abs(model.mu) + model.sigma * math.sqrt(2.0 / (math.pi * cfg.dt))
                   + model.lam * model.mean_jump)
    bias = cfg.weight_floor * payout_rate / q
    return McEstimate(mean=mean, stderr=stderr, n_paths_used=cfg.n_paths,
                      truncation_bias_bound=bias)


__all__ = ["McConfig", "McEstimate", "simulate_value"]
