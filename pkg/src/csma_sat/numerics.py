"""Special functions and bracketed root finding shared by the analytical modules."""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

INV_E = math.exp(-1.0)


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class NoSignChangeError(ValueError):
    """The supplied bracket does not enclose a sign change."""


class IterationLimitError(RuntimeError):
    """Root search ran out of iterations before meeting its tolerance."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    f_lo: float
    f_hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bracket requires lo < hi, got [{self.lo}, {self.hi}]")
        if self.f_lo * self.f_hi > 0:
            raise NoSignChangeError(
                f"f has the same sign at both ends of [{self.lo}, {self.hi}] "
                f"(f_lo={self.f_lo!r}, f_hi={self.f_hi!r})"
            )

    @classmethod
    def around(cls, f, lo, hi):
        """Evaluate ``f`` at both ends and build the bracket."""
        return cls(lo, hi, float(f(lo)), float(f(hi)))


@dataclass(frozen=True)
class RootConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def lambert_w0(z):
    """Principal branch of the Lambert W function for real ``z >= -1/e``.

    Halley iteration from a piecewise starting point: the branch-point series
    near -1/e, ``log1p`` on the mid range and ``ln z - ln ln z`` for large z.
    """
    z = float(z)
    if not math.isfinite(z):
        raise DomainError(f"lambert_w0 needs a finite argument, got {z}")
    if z < -INV_E:
        # allow round-off at the branch point itself
        if z < -INV_E * (1.0 + 4 * np.finfo(float).eps):
            raise DomainError(f"lambert_w0 is real only for z >= -1/e, got {z}")
        return -1.0
    if z == 0.0:
        return 0.0
    if z == -INV_E:
        return -1.0

    if z < -0.25:
        p = math.sqrt(max(2.0 * (math.e * z + 1.0), 0.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    elif z < 3.0:
        w = math.log1p(z) * (1.0 - math.log1p(math.log1p(z)) / (2.0 + math.log1p(z)))
    else:
        lz = math.log(z)
        w = lz - math.log(lz)

    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        step = f / denom
        w -= step
        if abs(step) <= 4 * np.finfo(float).eps * (1.0 + abs(w)):
            break
    return max(w, -1.0)


def find_root(f: Callable[[float], float], bracket: Bracket, cfg: RootConfig = RootConfig()) -> float:
    """Root of ``f`` inside ``bracket`` by Brent's method (never leaves [lo, hi])."""
    if bracket.f_lo == 0.0:
        return bracket.lo
    if bracket.f_hi == 0.0:
        return bracket.hi
    root, info = optimize.brentq(
        f,
        bracket.lo,
        bracket.hi,
        xtol=cfg.abs_tol,
        rtol=max(cfg.rel_tol, 4 * np.finfo(float).eps),
        maxiter=cfg.max_iter,
        full_output=True,
        disp=False,
    )
    if not info.converged:
        raise IterationLimitError(
            f"no convergence after {info.iterations} iterations ({info.flag})", best=root
        )
    return min(max(root, bracket.lo), bracket.hi)


def count_sign_changes(f, lo, hi, grid_points):
    """Number of adjacent grid pairs on [lo, hi] where ``f`` changes sign.

    ``f`` may be scalar or vectorised; exact zeros are attached to the
    preceding non-zero sign so a root landing on a node counts once.
    """
    if not lo < hi:
        raise ValueError("count_sign_changes needs lo < hi")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    xs = np.linspace(lo, hi, int(grid_points))
    return count_sign_changes_on(f, xs)


def count_sign_changes_on(f, xs):
    """Same as :func:`count_sign_changes` but on an explicit, sorted grid."""
    xs = np.asarray(xs, dtype=float)
    try:
        vals = np.asarray(f(xs), dtype=float)
        if vals.shape != xs.shape:
            raise TypeError
    except (TypeError, ValueError):
        vals = np.array([f(float(v)) for v in xs], dtype=float)
    signs = np.sign(vals)
    signs = signs[signs != 0]
    if signs.size < 2:
        return 0
    return int(np.count_nonzero(signs[1:] != signs[:-1]))
