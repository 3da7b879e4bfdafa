"""Special functions and small numeric utilities.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .errors import BracketError, ConvergenceError, DomainError

# Anything further outside [0, 1] than this is a bug, not rounding.
_OVERSHOOT = 1e-9

# Above this argument I_k overflows a double; bessel_i returns the scaled
# value exp(-x) I_k(x) when asked, and raises otherwise.
BESSEL_OVERFLOW_X = 700.0


@dataclass(frozen=True)
class Tolerance:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_iter: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("tolerances must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")


DEFAULT_TOL = Tolerance()


def clamp_probability(p):
    """Clip rounding overshoot back into [0, 1]."""
    arr = np.asarray(p, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < -_OVERSHOOT) or np.any(arr > 1 + _OVERSHOOT):
        raise DomainError(f"probability out of range: {p!r}")
    out = np.clip(arr, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def gaussian_q(x):
    """Gaussian tail probability ``Q(x) = erfc(x / sqrt(2)) / 2``.

    Accepts scalars or arrays. Underflows to exactly 0 for x beyond ~38.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("gaussian_q needs finite input")
    out = 0.5 * special.erfc(arr / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def bessel_i(order: int, x: float, scaled: bool = False) -> float:
    """Modified Bessel function of the first kind, integer order.

    With ``scaled=True`` returns ``exp(-x) * I_order(x)``, which stays finite
    for all x. Unscaled evaluation raises for x > BESSEL_OVERFLOW_X.
    """
    if order < 0 or int(order) != order:
        raise DomainError("order must be a non-negative integer")
    if not (x >= 0) or not math.isfinite(x):
        raise DomainError("bessel_i needs finite x >= 0")
    if scaled:
        return float(special.ive(order, x))
    if x > BESSEL_OVERFLOW_X:
        raise DomainError(
            f"I_{order}({x}) overflows; use scaled=True above x={BESSEL_OVERFLOW_X}"
        )
    # iv returns nan for subnormal x; ive does not
    return float(special.ive(order, x) * math.exp(x))


def _marcum_series(order: int, a: float, b: float):
    """Return (Q, 1-Q) as Poisson mixtures of regularized gamma functions.

        Q_M(a,b)     = sum_j Pois(j; a^2/2) * Gamma_upper(M+j, b^2/2)
        1 - Q_M(a,b) = sum_j Pois(j; a^2/2) * Gamma_lower(M+j, b^2/2)

    Each tail is a sum of positive terms, so neither loses accuracy when the
    other is close to 1. The Poisson weights are truncated at +-40 standard
    deviations.
    """
    lam = 0.5 * a * a
    x = 0.5 * b * b
    spread = 40.0 * math.sqrt(lam + 1.0) + 60.0
    j = np.arange(max(0, int(lam - spread)), int(lam + spread) + 1)
    log_w = j * math.log(lam) - lam - special.gammaln(j + 1.0)
    w = np.exp(log_w)
    w /= w.sum()
    q = float(np.sum(w * special.gammaincc(order + j, x)))
    p = float(np.sum(w * special.gammainc(order + j, x)))
    return q, p


def _marcum_quadrature(order: int, a: float, b: float) -> float:
    """Q_M(a,b) by integrating the noncentral chi density above b."""
    if a == 0.0:
        return float(special.gammaincc(order, 0.5 * b * b))

    def integrand(x):
        # x (x/a)^{M-1} exp(-(x^2+a^2)/2) I_{M-1}(ax), written with ive
        return (
            x
            * (x / a) ** (order - 1)
            * math.exp(-0.5 * (x - a) ** 2)
            * special.ive(order - 1, a * x)
        )

    val, _ = integrate.quad(integrand, b, math.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
    return val


def _check_marcum_args(order, a, b):
    if order < 1 or int(order) != order:
        raise DomainError("Marcum Q order must be an integer >= 1")
    if not (a >= 0 and b >= 0) or not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError("Marcum Q arguments must be finite and non-negative")


def _marcum_pair(order: int, a: float, b: float):
    _check_marcum_args(order, a, b)
    a = float(a)
    b = float(b)
    if b == 0.0:
        return 1.0, 0.0
    if 0.5 * a * a == 0.0:
        # central chi-square (also when a*a underflows) with 2M degrees of freedom
        q = float(special.gammaincc(order, 0.5 * b * b))
        return q, float(special.gammainc(order, 0.5 * b * b))
    q, p = _marcum_series(order, a, b)
    if not (math.isfinite(q) and -1e-12 <= q <= 1 + 1e-12):
        q = _marcum_quadrature(order, a, b)
        p = 1.0 - q
    return clamp_probability(q), clamp_probability(p)


def marcum_q(order: int, a: float, b: float) -> float:
    """Generalized Marcum Q-function Q_order(a, b).

    The tail probability P(X > b) of a noncentral chi variable with
    ``2*order`` degrees of freedom and noncentrality ``a``.
    """
    return _marcum_pair(order, a, b)[0]


def marcum_q_complement(order: int, a: float, b: float) -> float:
    """``1 - Q_order(a, b)`` without cancellation when Q is close to 1."""
    return _marcum_pair(order, a, b)[1]


def find_root(f, lo: float, hi: float, tol: Tolerance = DEFAULT_TOL) -> float:
    """Bracketing root finder (Brent's method).

    Raises BracketError if f(lo) and f(hi) share a sign and
    ConvergenceError if ``tol.max_iter`` iterations do not suffice.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return float(lo)
    if fhi == 0:
        return float(hi)
    if flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo:.3g}, {fhi:.3g}")
    try:
        root, info = optimize.brentq(
            f,
            lo,
            hi,
            xtol=tol.abs_tol,
            rtol=max(tol.rel_tol, 4 * np.finfo(float).eps),
            maxiter=tol.max_iter,
            full_output=True,
            disp=False,
        )
    except RuntimeError as exc:  # pragma: no cover - brentq only raises with disp=True
        raise ConvergenceError(str(exc)) from exc
    if not info.converged:
        raise ConvergenceError(f"root not found in {tol.max_iter} iterations: {info.flag}")
    return float(root)


def quad(f, lo: float, hi: float, tol: Tolerance = DEFAULT_TOL) -> float:
    """Adaptive quadrature of a scalar function; thin wrapper around QUADPACK."""
    val, _ = integrate.quad(f, lo, hi, epsabs=tol.abs_tol, epsrel=tol.rel_tol, limit=max(50, tol.max_iter))
    return float(val)


def log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def binom_pmf(n: int, k: int, p: float) -> float:
    """Binomial probability C(n,k) p^k (1-p)^(n-k), exact for n <= 60.

    Larger n goes through log-space to stay finite.
    """
    if k < 0 or k > n:
        return 0.0
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == n else 0.0
    if n <= 60:
        return math.comb(n, k) * p**k * (1.0 - p) ** (n - k)
    return math.exp(log_binom(n, k) + k * math.log(p) + (n - k) * math.log1p(-p))
