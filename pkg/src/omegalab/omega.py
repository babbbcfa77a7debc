"""Bankruptcy rate functions and discounting intensities.

A discounting intensity is a nonnegative, non-increasing, ultimately constant
rate: equal to phi on (-infty, a), piecewise constant/affine on [a, 0), and
equal to rho on [0, infty).  A bankruptcy rate function is the rho = 0 case.
Pieces are restricted to constants and affine segments so every kink is known
exactly; quadrature grids downstream align nodes with these kinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class RatePiece:
    """One segment [left, right) with value(x) = value + slope*(x - left)."""

    left: float
    right: float
    value: float
    slope: float = 0.0

    def at(self, x):
        return self.value + self.slope * (np.asarray(x, dtype=float) - self.left)

    @property
    def end_value(self) -> float:
        """Left limit of the rate at the right edge of the segment."""
        return self.value + self.slope * (self.right - self.left)


@dataclass(frozen=True)
class BankruptcyRate:
    """Piecewise rate function: phi on (-infty, a), pieces on [a, 0), rho on
    [0, infty).  Right-continuous at every breakpoint."""

    a: float
    pieces: tuple[RatePiece, ...]
    phi: float
    rho: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        _validate(self)

    # -- lookups ----------------------------------------------------------

    @property
    def breaks(self) -> tuple[float, ...]:
        """All breakpoints a = a_1 < ... < 0 (just (0,) when a == 0)."""
        if not self.pieces:
            return (0.0,)
        return tuple(p.left for p in self.pieces) + (0.0,)

    def value(self, x) -> float | np.ndarray:
        """omega(x), right-continuous."""
        xv = np.asarray(x, dtype=float)
        out = np.full(xv.shape, self.rho)
        out = np.where(xv < self.a, self.phi, out)
        for p in self.pieces:
            mask = (xv >= p.left) & (xv < p.right)
            if np.any(mask):
                out = np.where(mask, p.at(xv), out)
        return float(out) if np.isscalar(x) else out

    def left_value(self, x) -> float | np.ndarray:
        """Left limit omega(x-)."""
        xv = np.asarray(x, dtype=float)
        out = np.where(xv > 0.0, self.rho, np.full(xv.shape, self.phi))
        for p in self.pieces:
            mask = (xv > p.left) & (xv <= p.right)
            if np.any(mask):
                out = np.where(mask, p.at(xv), out)
        return float(out) if np.isscalar(x) else out

    def value_at_zero_minus(self) -> float:
        return float(self.left_value(0.0))

    # -- constructions ----------------------------------------------------

    def shifted(self, q: float) -> "BankruptcyRate":
        """The discounting intensity q + omega; requires rho = 0."""
        if self.rho != 0.0:
            raise ValueError("shift is defined for bankruptcy rate functions (rho = 0)")
        if not q > 0.0:
            raise ValueError("q must be positive")
        pieces = tuple(RatePiece(p.left, p.right, p.value + q, p.slope)
                       for p in self.pieces)
        return BankruptcyRate(a=self.a, pieces=pieces, phi=self.phi + q, rho=q)


def _validate(rate: BankruptcyRate) -> None:
    if not rate.phi > 0.0:
        raise ValueError("phi must be strictly positive")
    if rate.rho < 0.0:
        raise ValueError("rho must be nonnegative")
    if rate.a > 0.0:
        raise ValueError("a must be <= 0")
    if not rate.pieces:
        if rate.a != 0.0:
            raise ValueError("a < 0 requires at least one piece on [a, 0)")
    else:
        if abs(rate.pieces[0].left - rate.a) > _EDGE_TOL:
            raise ValueError("first piece must start at a")
        if abs(rate.pieces[-1].right) > _EDGE_TOL:
            raise ValueError("last piece must end at 0")
        prev = None
        for p in rate.pieces:
            if not p.right > p.left:
                raise ValueError("pieces must have positive width")
            if p.slope > 0.0:
                raise ValueError("pieces must be non-increasing")
            if p.value < 0.0 or p.end_value < -_EDGE_TOL:
                raise ValueError("rate values must be nonnegative")
            if prev is not None:
                if abs(prev.right - p.left) > _EDGE_TOL:
                    raise ValueError("pieces must tile [a, 0) without gaps")
                if p.value > prev.end_value + _EDGE_TOL:
                    raise ValueError("rate must not jump upward at a breakpoint")
            prev = p
        if rate.pieces[0].value > rate.phi + _EDGE_TOL:
            raise ValueError("rate must not jump upward at a")
        if rate.rho > rate.pieces[-1].end_value + _EDGE_TOL:
            raise ValueError("rho must not exceed the left limit at 0")
    if rate.rho > rate.phi:
        raise ValueError("rho must not exceed phi")


def _merged(a: float, pieces: list[RatePiece], phi: float) -> tuple[float, list[RatePiece]]:
    """Normalisation: absorb a leading constant piece equal to phi into the
    (-infty, a) region, and fuse neighbours that continue each other with the
    same slope.  Distinct-slope continuous junctions are genuine kinks and
    are kept."""
    out: list[RatePiece] = []
    for p in pieces:
        if not out:
            out.append(p)
            continue
        prev = out[-1]
        if (abs(prev.end_value - p.value) <= _EDGE_TOL
                and abs(prev.slope - p.slope) <= _EDGE_TOL):
            out[-1] = RatePiece(prev.left, p.right, prev.value, prev.slope)
        else:
            out.append(p)
    while out and out[0].slope == 0.0 and abs(out[0].value - phi) <= _EDGE_TOL:
        a = out[0].right
        out = out[1:]
    return a, out


def from_pieces(a: float, pieces, phi: float, rho: float = 0.0) -> BankruptcyRate:
    """Build and normalise a rate function from explicit piece descriptors.

    Each descriptor is (left, right, value) for a constant piece or
    (left, right, value, slope) for an affine one.
    """
    built = []
    for d in pieces:
        if len(d) == 3:
            built.append(RatePiece(float(d[0]), float(d[1]), float(d[2])))
        elif len(d) == 4:
            built.append(RatePiece(float(d[0]), float(d[1]), float(d[2]), float(d[3])))
        else:
            raise ValueError(f"bad piece descriptor {d!r}")
    a2, merged = _merged(float(a), built, float(phi))
    return BankruptcyRate(a=a2, pieces=tuple(merged), phi=float(phi), rho=float(rho))


def parisian(phi: float) -> BankruptcyRate:
    """Constant rate phi on the whole negative half-line (exponential
    Parisian ruin at rate phi)."""
    return BankruptcyRate(a=0.0, pieces=(), phi=float(phi), rho=0.0)


def step_family(n: int, a: float, phi: float) -> BankruptcyRate:
    """Step rates with breakpoints a/i and values phi/(i+1) on [a/i, a/(i+1)),
    the last interval being [a/n, 0)."""
    if n < 1:
        raise ValueError("n must be >= 1 (use parisian() for the flat case)")
    if not a < 0.0:
        raise ValueError("a must be negative")
    if not phi > 0.0:
        raise ValueError("phi must be positive")
    pieces = []
    for i in range(1, n + 1):
        left = a / i
        right = a / (i + 1) if i < n else 0.0
        pieces.append(RatePiece(left, right, phi / (i + 1)))
    return BankruptcyRate(a=a, pieces=tuple(pieces), phi=phi, rho=0.0)


def affine_family(m: float, a: float, phi: float) -> BankruptcyRate:
    """Affine transition phi + m (x - a) on [a, 0); reduces to the Parisian
    rate for m = 0."""
    if m > 0.0:
        raise ValueError("slope m must be <= 0")
    if not a < 0.0:
        raise ValueError("a must be negative")
    end = phi + m * (0.0 - a)
    if end < -_EDGE_TOL:
        raise ValueError("rate would go negative before 0; decrease |m| or phi")
    if m == 0.0:
        return parisian(phi)
    return BankruptcyRate(a=a, pieces=(RatePiece(a, 0.0, phi, m),), phi=phi, rho=0.0)


__all__ = [
    "RatePiece", "BankruptcyRate", "from_pieces", "parisian",
    "step_family", "affine_family",
]
