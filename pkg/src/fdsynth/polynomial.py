"""Expolynomial objectives ``f(tau) = exp(-lam tau) p(tau)`` and real-root isolation.

Polynomials are kept in the scaled basis ``(lam tau)^i / i!`` so coefficients
stay on the scale of costs; the plain monomial form overflows long before
the degrees that appear in practice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
import numpy as np

from .embedded import EmbeddedKernel, _series, poisson_weights
from .errors import ModelError, NumericError

ZERO_COEFF = 1e-300
DEFAULT_MANTISSA = 256
MAX_DEPTH = 200
# keep splitting this many halvings past the target width before giving up on
# separating close roots (Descartes over-counts near roots just outside a box)
EXTRA_DEPTH = 24


@dataclass(frozen=True)
class ScaledPoly:
    """``p(tau) = sum_i coeffs[i] * (lam tau)^i / i!``."""

    coeffs: np.ndarray
    lam: float

    @property
    def is_zero(self) -> bool:
        return not np.any(np.abs(self.coeffs) >= ZERO_COEFF)

    @property
    def degree(self) -> int:
        nz = np.flatnonzero(np.abs(self.coeffs) >= ZERO_COEFF)
        return int(nz[-1]) if nz.size else -1

    def expo(self, tau) -> np.ndarray:
        """``exp(-lam tau) * p(tau)``, evaluated stably through Poisson weights."""
        W = poisson_weights(self.lam * np.asarray(tau, dtype=float), len(self.coeffs))
        out = W @ self.coeffs
        return out if np.ndim(tau) else float(out[0])

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.expo(tau) * np.exp(self.lam * tau)


@dataclass(frozen=True)
class RootSet:
    roots: tuple
    is_zero_poly: bool = False


def build_objective_poly(k: EmbeddedKernel, s: str, x: np.ndarray) -> ScaledPoly:
    """Polynomial part of ``tau -> T_s(tau).x + c_s(tau)``.

    The rate-cost term ``tau/(i+1) * w_i(tau)`` equals ``w_{i+1}(tau) / lam``,
    so it lands one degree higher; the result has degree at most I.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ModelError("value vector must be finite and non-negative")
    ser = _series(k, s)
    I = k.trunc_index
    a = np.zeros(I + 1)
    a[:I] = ser.VF @ x + ser.jp_cum + ser.jf
    a[1:] += ser.r_cum / k.lam
    if not np.all(np.isfinite(a)):
        raise NumericError("numeric overflow in coefficient assembly", code="coeff_overflow")
    return ScaledPoly(a, k.lam)


def derivative_poly(p: ScaledPoly) -> ScaledPoly:
    """``q = p' - lam p``, so that ``f'(tau) = exp(-lam tau) q(tau)``."""
    a = p.coeffs
    b = np.empty_like(a)
    b[:-1] = p.lam * (a[1:] - a[:-1])
    b[-1] = -p.lam * a[-1]
    return ScaledPoly(b, p.lam)


# ---------------------------------------------------------------- integers


def _variations(a) -> int:
    sgn = [1 if v > 0 else -1 for v in a if v != 0]
    return sum(1 for u, v in zip(sgn, sgn[1:]) if u != v)


def _shift1(a: np.ndarray) -> np.ndarray:
    """Coefficients of ``p(t + 1)``."""
    a = a.copy()
    for i in range(len(a) - 1):
        a[i:] = np.cumsum(a[i:][::-1])[::-1]
    return a


def _descartes(a: np.ndarray) -> int:
    """Upper bound on the number of roots in (0, 1), exact when 0 or 1."""
    return _variations(_shift1(a[::-1]))


def _left_half(a: np.ndarray) -> np.ndarray:
    d = len(a) - 1
    return np.array([int(v) << (d - i) for i, v in enumerate(a)], dtype=object)


def _eval_dyadic(a, m: int, j: int) -> int:
    """``2^(j d) * a(m / 2^j)`` exactly."""
    d = len(a) - 1
    acc = int(a[d])
    for i in range(d - 1, -1, -1):
        acc = acc * m + (int(a[i]) << (j * (d - i)))
    return acc


def _sign(v: int) -> int:
    return (v > 0) - (v < 0)


def _deflate_at_one(a: np.ndarray) -> np.ndarray:
    """Divide by ``(t - 1)``; caller guarantees ``a(1) == 0``."""
    d = len(a) - 1
    b = [0] * d
    b[d - 1] = int(a[d])
    for i in range(d - 1, 0, -1):
        b[i - 1] = int(a[i]) + b[i]
    return np.array(b, dtype=object)


def _refine(a: np.ndarray, width_ok) -> Fraction:
    """Bisect the single sign change of ``a`` on (0, 1); returns local position."""
    while a.size > 1 and sum(a) == 0:
        a = _deflate_at_one(a)
    s_lo = _sign(int(a[0]))
    lo, hi, j = 0, 1, 0  # interval [lo/2^j, hi/2^j]
    while not width_ok(Fraction(1, 2**j)):
        lo, hi, j = 2 * lo, 2 * hi, j + 1
        mid = lo + 1
        s_mid = _sign(_eval_dyadic(a, mid, j))
        if s_mid == 0:
            return Fraction(mid, 2**j)
        if s_mid == s_lo:
            lo = mid
        else:
            hi = mid
    return Fraction(lo + hi, 2 ** (j + 1))


def isolate_unit(a, accuracy: Fraction, lower: Fraction = Fraction(0)) -> list[Fraction]:
    """Real roots of integer polynomial ``a`` (low to high) in [lower, 1].

    Descartes' rule with bisection. Each returned point lies within
    ``accuracy`` of a root. Boxes that stay ambiguous far below that width
    (multiple roots) are reported once by their midpoint.
    """
    a = np.array([int(v) for v in a], dtype=object)
    while a.size > 1 and a[-1] == 0:
        a = a[:-1]
    if a.size <= 1:
        return []
    found: list[Fraction] = []
    if a[0] == 0:
        found.append(Fraction(0))
        while a[0] == 0:
            a = a[1:]
    if sum(a) == 0:
        found.append(Fraction(1))
    stack = [(a, 0, 0)]
    while stack:
        poly, c, k = stack.pop()
        width = Fraction(1, 2**k)
        lo = c * width
        if lo + width < lower - accuracy or poly.size <= 1:
            continue
        v = _descartes(poly)
        if v == 0:
            continue
        if v == 1:
            t = _refine(poly, lambda w: w * width <= accuracy)
            found.append(lo + t * width)
            continue
        if width <= accuracy / 2**EXTRA_DEPTH or k >= MAX_DEPTH:
            if width > accuracy:
                raise NumericError(
                    "root isolation did not converge", code="root_isolation_precision"
                )
            found.append(lo + width / 2)
            continue
        left = _left_half(poly)
        right = _shift1(left)
        if right[0] == 0:
            found.append(lo + width / 2)
            while right.size > 1 and right[0] == 0:
                right = right[1:]
        stack.append((right, 2 * c + 1, k + 1))
        stack.append((left, 2 * c, k + 1))
    return sorted(found)


def _mp(v):
    """Exact values (ints, Fractions) are converted without a detour through float."""
    if isinstance(v, (int, Fraction)):
        return gmpy2.mpfr(gmpy2.mpq(v))
    return gmpy2.mpfr(float(v))


def _to_unit_integer(b: np.ndarray, lam: float, beta: float, mantissa: int) -> list[int]:
    """Fixed-point integer coefficients of ``q(s * beta)`` in powers of ``s``.

    ``b`` may hold floats or exact rationals.

    Terms are normalised against the largest one. The polynomial behaves
    like ``exp(lam tau)`` times the objective slope, so values near the
    left end sit about ``lam*beta/ln 2`` bits below the largest term; the
    fixed-point window keeps ``mantissa`` bits beyond that.
    """
    extra = math.ceil(lam * beta / math.log(2)) + 8
    with gmpy2.context(gmpy2.get_context(), precision=mantissa + extra + 64):
        U = gmpy2.mpfr(lam) * gmpy2.mpfr(beta)
        t = gmpy2.mpfr(1)
        terms = []
        for i, bi in enumerate(b):
            terms.append(_mp(bi) * t)
            t = t * U / (i + 1)
        M = max(abs(v) for v in terms)
        if M == 0:
            return [0]
        scale = gmpy2.mpfr(2) ** (mantissa + extra) / M
        return [int(gmpy2.rint(v * scale)) for v in terms]


def isolate_roots(q: ScaledPoly, interval, accuracy: float, mantissa: int = DEFAULT_MANTISSA) -> RootSet:
    """Approximate every real root of ``q`` in ``[alpha, beta]`` to within ``accuracy`` seconds."""
    alpha, beta = map(float, interval)
    if not alpha < beta:
        raise ModelError("isolate_roots needs alpha < beta")
    if not accuracy > 0:
        raise ModelError("accuracy must be positive")
    if q.is_zero:
        return RootSet((), True)
    coeffs = _to_unit_integer(q.coeffs, q.lam, beta, mantissa)
    if not any(coeffs):
        raise NumericError(
            "polynomial vanished under fixed-point conversion", code="root_isolation_precision"
        )
    beta_f = Fraction(beta)
    acc_s = Fraction(accuracy) / beta_f
    lower = Fraction(alpha) / beta_f
    raw = isolate_unit(coeffs, acc_s, lower)
    roots: list[float] = []
    for r in raw:
        tau = float(r * beta_f)
        if tau < alpha - accuracy:
            continue
        tau = min(max(tau, alpha), beta)
        if roots and tau - roots[-1] <= 1e-12 * max(1.0, beta):
            continue
        roots.append(tau)
    return RootSet(tuple(roots), False)


def isolate_rational(coeffs, interval, accuracy) -> list[Fraction]:
    """Roots in ``[alpha, beta]`` of an exact polynomial (monomial coefficients in tau, low to high)."""
    alpha, beta = Fraction(interval[0]), Fraction(interval[1])
    if not alpha < beta:
        raise ModelError("isolate_rational needs alpha < beta")
    c = [Fraction(v) for v in coeffs]
    # c(beta s) scaled to integers
    scaled = [v * beta**i for i, v in enumerate(c)]
    den = math.lcm(*(v.denominator for v in scaled))
    ints = [int(v * den) for v in scaled]
    raw = isolate_unit(ints, Fraction(accuracy) / beta, alpha / beta)
    return [r * beta for r in raw if alpha - Fraction(accuracy) <= r * beta <= beta]


# ------------------------------------------------------------ cross-checks


def sturm_count(q: ScaledPoly, interval) -> int:
    """Number of distinct real roots in (alpha, beta] via an exact Sturm sequence.

    Exact rational arithmetic: meant for low degrees in tests.
    """
    lam = Fraction(q.lam)
    # monomial coefficients in tau
    c = [Fraction(float(b)) * lam**i / math.factorial(i) for i, b in enumerate(q.coeffs)]
    while c and c[-1] == 0:
        c.pop()
    if len(c) <= 1:
        return 0

    def rem(num, den):
        num = num[:]
        while len(num) >= len(den) and any(num):
            f = num[-1] / den[-1]
            off = len(num) - len(den)
            for i, v in enumerate(den):
                num[off + i] -= f * v
            num.pop()
        while num and num[-1] == 0:
            num.pop()
        return num

    deriv = [i * v for i, v in enumerate(c)][1:]
    seq = [c, deriv]
    while True:
        r = rem(seq[-2], seq[-1])
        if not r:
            break
        seq.append([-v for v in r])

    def ev(p, t):
        acc = Fraction(0)
        for v in reversed(p):
            acc = acc * t + v
        return acc

    def var_at(t):
        return _variations([ev(p, t) for p in seq])

    a, b = Fraction(interval[0]), Fraction(interval[1])
    return var_at(a) - var_at(b)
