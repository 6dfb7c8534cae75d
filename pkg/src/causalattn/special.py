"""Modified Bessel functions of the first kind by ascending power series.

All evaluations sum ``sum_k (z/2)**(2k+nu) / (k! (k+nu)!)`` with positive terms,
so there is no cancellation and relative accuracy is limited only by rounding.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import RangeError

_REL_TOL = 1e-17
_MAX_TERMS = 500

#: Largest argument accepted by :func:`bessel_I`.
Z_MAX = 50.0


def iv_series(nu: int, z: float) -> float:
    """Return ``I_nu(z)`` for integer ``nu`` (sign ignored) and real ``z >= 0``."""
    nu = abs(int(nu))
    if z < 0:
        raise RangeError(f"z must be nonnegative, got {z}")
    if z == 0.0:
        return 1.0 if nu == 0 else 0.0
    half = 0.5 * z
    # leading term in log space so that large orders underflow gracefully
    log_lead = nu * math.log(half) - math.lgamma(nu + 1)
    if log_lead < -745.0:
        return 0.0
    term = math.exp(log_lead)
    q = half * half
    total = term
    for k in range(1, _MAX_TERMS):
        term *= q / (k * (k + nu))
        total += term
        if term <= _REL_TOL * total:
            break
    return total


def bessel_I(nu: int, z: float) -> float:
    """Modified Bessel function ``I_0`` or ``I_1`` on the validated range ``[0, 50]``.

    Raises
    ------
    RangeError
        If ``nu`` is not 0 or 1, or ``z`` lies outside ``[0, Z_MAX]``.
    """
    if nu not in (0, 1):
        raise RangeError(f"only orders 0 and 1 are supported, got {nu}")
    if not 0.0 <= z <= Z_MAX:
        raise RangeError(f"z={z} outside validated range [0, {Z_MAX}]")
    return iv_series(nu, z)


def psi_series(c, y):
    """Evaluate ``sum_k c**(k+1) y**k / (k! (k+1)!)`` elementwise.

    This equals ``sqrt(c/y) I_1(2 sqrt(c y))`` for ``y > 0`` and is regular at
    ``y = 0`` where it takes the value ``c``.
    """
    c = np.asarray(c, dtype=float)
    y = np.asarray(y, dtype=float)
    c, y = np.broadcast_arrays(c, y)
    term = c.copy()
    total = term.copy()
    x = c * y
    for k in range(1, _MAX_TERMS):
        term = term * x / (k * (k + 1))
        total = total + term
        if np.all(term <= _REL_TOL * total):
            break
    return total if total.ndim else float(total)


def i0_sqrt_series(x):
    """Evaluate ``I_0(2 sqrt(x)) = sum_k x**k / (k!)**2`` elementwise for ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    term = np.ones_like(x)
    total = term.copy()
    for k in range(1, _MAX_TERMS):
        term = term * x / (k * k)
        total = total + term
        if np.all(term <= _REL_TOL * total):
            break
    return total if total.ndim else float(total)
