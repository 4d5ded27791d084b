"""Scalar kernel: the power/rate function family, Lambert W0 and offloading priorities.

Every function accepts a float or a numpy array and returns the same shape
(a plain ``float`` for scalar input).  Rates are in bits/s, powers in W,
channel gains are power gains ``h2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

LN2 = math.log(2.0)
INV_E = math.exp(-1.0)

# slack below -1/e absorbed as float noise
BRANCH_CLAMP = 1e-12
HALLEY_STEP_TOL = 1e-14
HALLEY_MAX_ITER = 50


@dataclass(frozen=True)
class RadioConstants:
    """Channel bandwidth ``B`` (Hz) and noise power ``N0`` (W)."""

    B: float
    N0: float

    def __post_init__(self):
        for name in ("B", "N0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive and finite, got {v!r}")

    @property
    def slope0(self) -> float:
        """f'(0) = N0 ln2 / B, the marginal power of the first bit/s."""
        return self.N0 * LN2 / self.B


def _prep(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _ret(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


# ---------------------------------------------------------------------------
# f, f', f'^-1, g
# ---------------------------------------------------------------------------

def f(x, rc: RadioConstants):
    """Transmit power N0 (2^(x/B) - 1) needed for rate ``x`` on a unit-gain channel."""
    x = _prep(x, "rate")
    if np.any(x < 0):
        raise DomainError("rate must be nonnegative")
    return _ret(rc.N0 * np.expm1(x * LN2 / rc.B))


def f_prime(x, rc: RadioConstants):
    x = _prep(x, "rate")
    if np.any(x < 0):
        raise DomainError("rate must be nonnegative")
    return _ret(rc.slope0 * np.exp(x * LN2 / rc.B))


def f_prime_inv(y, rc: RadioConstants):
    """Rate at which the marginal power f'(x) equals ``y``."""
    y = _prep(y, "marginal power")
    ratio = y / rc.slope0
    if np.any(ratio < 1.0 - 1e-12):
        raise DomainError("marginal power below f'(0) gives a negative rate")
    return _ret(rc.B * np.log2(np.maximum(ratio, 1.0)))


# (n-1)/n! for n = 15 down to 0, highest power first for polyval
_EXCESS_COEF = np.array([(n - 1) / math.factorial(n) if n >= 2 else 0.0 for n in range(15, -1, -1)])


def _excess_series(a):
    """(a-1) e^a + 1 = sum_{n>=2} (n-1) a^n / n!, accurate for small ``a``."""
    return np.polyval(_EXCESS_COEF, a)


def _excess(a):
    """(a-1) e^a + 1 without cancellation near a = 0."""
    a = np.asarray(a, dtype=float)
    small = a < 0.1
    with np.errstate(over="ignore", invalid="ignore"):
        direct = (a - 1.0) * np.exp(a) + 1.0
    if np.any(small):
        direct = np.where(small, _excess_series(np.where(small, a, 0.0)), direct)
    return direct


def g(x, rc: RadioConstants):
    """g(x) = f(x) - x f'(x); nonpositive and strictly decreasing for x > 0."""
    x = _prep(x, "rate")
    if np.any(x < 0):
        raise DomainError("rate must be nonnegative")
    return _ret(-rc.N0 * _excess(x * LN2 / rc.B))


# ---------------------------------------------------------------------------
# Lambert W0
# ---------------------------------------------------------------------------

def _w0_plus_one(q):
    """Return u = W0((q - 1)/e) + 1 for q >= 0.

    ``q = e z + 1`` is the distance from the branch point, so callers that
    know it directly (g^-1, time per bit) keep full relative accuracy of
    ``u`` even when z sits right on -1/e.  Halley iteration on
    G(u) = (u - 1) e^u + 1 - q, which is the defining equation w e^w = z
    multiplied by e and shifted by w = u - 1.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    u = np.zeros_like(q)
    live = q > 0
    if not np.any(live):
        return u
    qa = q[live]
    z = (qa - 1.0) * INV_E
    p = np.sqrt(2.0 * np.minimum(qa, 1.0))
    near = p - p * p / 3.0 + 11.0 / 72.0 * p**3 - 43.0 / 540.0 * p**4
    far = 1.0 + np.log1p(np.maximum(z, 0.0))
    ua = np.where(z >= 0, far, np.clip(near, 1e-300, 1.0))
    for _ in range(HALLEY_MAX_ITER):
        with np.errstate(over="ignore", under="ignore"):
            small = ua < 0.5
            r_small = (_excess(np.where(small, ua, 0.0)) - qa) / (ua * np.exp(np.where(small, ua, 0.0)))
            r_big = ((ua - 1.0) + (1.0 - qa) * np.exp(-ua)) / ua
        r = np.where(small, r_small, r_big)
        du = r / (1.0 - r * (ua + 1.0) / (2.0 * ua))
        new = ua - du
        # stay on the principal branch (u > 0)
        new = np.where(new > 0, new, ua / 2.0)
        step = np.abs(new - ua)
        ua = new
        if np.all(step <= HALLEY_STEP_TOL * np.maximum(1.0, ua)):
            break
    u[live] = ua
    return u


def lambert_w0(z):
    """Principal branch of the Lambert W function, w e^w = z, z >= -1/e."""
    z = _prep(z, "z")
    if np.any(z < -INV_E - BRANCH_CLAMP):
        raise DomainError("lambert_w0 is undefined below -1/e")
    zf = np.atleast_1d(z).ravel()
    w = _w0_plus_one(np.maximum(math.e * zf + 1.0, 0.0)) - 1.0
    # u - 1 loses relative accuracy for tiny |z|; the Taylor series does not
    tiny = np.abs(zf) < 1e-4
    if np.any(tiny):
        zt = zf[tiny]
        w[tiny] = zt * (1.0 - zt * (1.0 - zt * (1.5 - zt * 8.0 / 3.0)))
    return _ret(w.reshape(z.shape))


def w0_plus_one(q):
    """W0((q - 1)/e) + 1 evaluated from the branch offset ``q >= 0``."""
    q = _prep(q, "branch offset")
    if np.any(q < -math.e * BRANCH_CLAMP):
        raise DomainError("branch offset must be nonnegative")
    return _ret(_w0_plus_one(np.maximum(q, 0.0)).reshape(q.shape))


def g_inv(y, rc: RadioConstants):
    """Rate x >= 0 with g(x) = y, for y <= 0 (closed form through W0)."""
    y = _prep(y, "y")
    if np.any(y > 0):
        raise DomainError("g_inv is defined for y <= 0 only")
    # (y + N0)/(-N0 e) = (q - 1)/e with q = -y/N0
    u = _w0_plus_one(np.atleast_1d(-y / rc.N0)).reshape(y.shape)
    return _ret(rc.B * u / LN2)


# ---------------------------------------------------------------------------
# priorities
# ---------------------------------------------------------------------------

def upsilon(C, P, h2, rc: RadioConstants):
    """Ratio of local computing energy per bit to the cheapest transmit energy per bit."""
    C, P, h2 = _prep(C, "C"), _prep(P, "P"), _prep(h2, "h2")
    if np.any(C <= 0) or np.any(h2 <= 0):
        raise DomainError("C and h2 must be positive")
    if np.any(P < 0):
        raise DomainError("P must be nonnegative")
    return _ret(C * P * h2 / rc.slope0)


def _priority_from_upsilon(beta, h2, ups, rc):
    d = np.maximum(ups - 1.0, 0.0)
    # v ln v - v + 1 written in d = v - 1 to limit cancellation near v = 1
    shape = (1.0 + d) * np.log1p(d) - d
    return np.where(ups > 1.0, beta * rc.N0 / h2 * shape, 0.0)


def priority(beta, C, P, h2, rc: RadioConstants):
    """Offloading priority: beta N0/h2 (v ln v - v + 1) when v >= 1, else 0."""
    beta = _prep(beta, "beta")
    if np.any(beta <= 0):
        raise DomainError("beta must be positive")
    ups = np.asarray(upsilon(C, P, h2, rc))
    return _ret(_priority_from_upsilon(beta, np.asarray(h2, float), ups, rc))


def effective_priority(beta, C, P, h2, mu, rc: RadioConstants):
    """Priority with the computing energy per cycle discounted by the capacity price ``mu``."""
    mu = _prep(mu, "mu")
    if np.any(mu < 0):
        raise DomainError("mu must be nonnegative")
    P_eff = np.maximum(np.asarray(P, dtype=float) - mu, 0.0)
    return priority(beta, C, P_eff, h2, rc)


def upsilon_for_priority(x):
    """Inverse of v -> v ln v - v + 1 on v >= 1 (``x`` is priority * h2 / (beta N0))."""
    x = _prep(x, "x")
    if np.any(x < 0):
        raise DomainError("x must be nonnegative")
    # v ln v - v + 1 = x  <=>  v = exp(W0((x - 1)/e) + 1)
    return _ret(np.exp(_w0_plus_one(np.atleast_1d(x)).reshape(x.shape)))
