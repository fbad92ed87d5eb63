"""Special functions for closed-form time integration of the heat kernel.

Everything here reduces to the exponential integral E1 and e^{-z} at
z = a/tau with a = r^2/4.  Two evaluation lanes exist:

* exact scalar routines (power series / continued fraction), used by the
  public kernel API and the reference assembly lane;
* precomputed cubic-Hermite tables in the variable s = ln z, used by the
  compiled assembly lane where millions of evaluations per second are
  needed.  Both lanes agree to ~5e-12 absolute.

The table variable s = ln z is chosen because E1(e^s) and exp(-e^s) have
uniformly bounded derivatives in s (d/ds E1(e^s) = -exp(-e^s)), so a
uniform knot spacing gives uniform accuracy over 30 decades of z.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np

EULER_GAMMA = 0.5772156649015329

# E1(z) underflows past double precision here; exact lanes return 0.
E1_UNDERFLOW = 700.0

# table lane only: e^{-z} and E1(z) are below 1e-26 here, truncated to 0
# (absolute error invisible next to the 1e-12 interpolation error)
Z_CUTOFF = 60.0

# below this z the two-term small-z expansions are exact to ~1e-28
Z_TINY = 1e-14

_LENTZ_TINY = 1e-300
_LENTZ_EPS = 1e-16


def exp_integral_e1(z: float) -> float:
    """Exponential integral E1(z) = int_z^inf e^{-s}/s ds for z > 0.

    Power series for z <= 1, modified Lentz continued fraction for
    z > 1, zero above the underflow cutoff.  Relative error <= 1e-13.

    Parameters
    ----------
    z : float
        Argument, must be positive.

    Returns
    -------
    float
        E1(z).
    """
    if z <= 0.0:
        raise ValueError("exp_integral_e1 requires z > 0")
    if z >= E1_UNDERFLOW:
        return 0.0
    if z <= 1.0:
        total = -EULER_GAMMA - math.log(z)
        term = 1.0
        for k in range(1, 40):
            term *= -z / k
            inc = -term / k
            total += inc
            if abs(inc) <= 1e-18 * abs(total):
                break
        return total
    # Lentz continued fraction: E1 = e^{-z} / (z + 1/(1 + 1/(z + 2/(1 + ...))))
    b = z + 1.0
    c = 1.0 / _LENTZ_TINY
    d = 1.0 / b
    h = d
    for i in range(1, 200):
        an = -float(i) * float(i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) <= _LENTZ_EPS:
            break
    return h * math.exp(-z)


def slp_psi(a: float, tau: float) -> float:
    """Second time-antiderivative of the heat kernel in tau at fixed a.

    Psi(a, tau) = (1/4pi) [ (tau + a) E1(a/tau) - tau e^{-a/tau} ],
    with Psi(a, tau) = 0 for tau <= 0.  Entries of the piecewise-constant
    Galerkin time integration are second differences of Psi over the
    uniform time grid.
    """
    if tau <= 0.0:
        return 0.0
    z = a / tau
    if z >= E1_UNDERFLOW:
        return 0.0
    e1 = exp_integral_e1(z)
    return ((tau + a) * e1 - tau * math.exp(-z)) * 0.07957747154594767


class KernelTables(NamedTuple):
    """Cubic-Hermite tables for E1(e^s) and exp(-e^s) on a uniform s-grid."""

    s_lo: float
    s_hi: float
    inv_ds: float
    ds: float
    e1_val: np.ndarray
    e1_der: np.ndarray
    ex_val: np.ndarray
    ex_der: np.ndarray


@lru_cache(maxsize=1)
def kernel_tables(ds: float = 0.004) -> KernelTables:
    """Build the Hermite tables once; absolute accuracy ~ds^4/384 * |f''''|."""
    from scipy.special import exp1

    s_lo = math.log(Z_TINY)
    s_hi = math.log(Z_CUTOFF)
    n = int(math.ceil((s_hi - s_lo) / ds))
    s = s_lo + ds * np.arange(n + 1)
    z = np.exp(s)
    ez = np.exp(-z)
    e1 = exp1(z)
    # d/ds E1(e^s) = -exp(-e^s);  d/ds exp(-e^s) = -e^s exp(-e^s)
    return KernelTables(s_lo, s_lo + n * ds, 1.0 / ds, ds, e1, -ez, ez, -z * ez)


def e1_exp_at(
    s: float,
    s_lo: float,
    inv_ds: float,
    ds: float,
    e1_val: np.ndarray,
    e1_der: np.ndarray,
    ex_val: np.ndarray,
    ex_der: np.ndarray,
) -> tuple[float, float]:
    """Interpolated (E1(z), e^{-z}) at s = ln z.

    Out-of-range behaviour: above the table both functions underflow to
    0; below it the small-z expansions E1 = -gamma - s + z and
    e^{-z} = 1 - z are exact at working precision.  Plain scalar code so
    the compiled assembly lane can reuse this exact source.
    """
    n = e1_val.shape[0] - 1
    u = (s - s_lo) * inv_ds
    if u >= n:
        return 0.0, 0.0
    if u <= 0.0:
        z = math.exp(s)
        return -EULER_GAMMA - s + z, 1.0 - z
    k = int(u)
    t = u - k
    omt = 1.0 - t
    h00 = (1.0 + 2.0 * t) * omt * omt
    h10 = t * omt * omt * ds
    h01 = t * t * (3.0 - 2.0 * t)
    h11 = t * t * (t - 1.0) * ds
    e1 = h00 * e1_val[k] + h10 * e1_der[k] + h01 * e1_val[k + 1] + h11 * e1_der[k + 1]
    ex = h00 * ex_val[k] + h10 * ex_der[k] + h01 * ex_val[k + 1] + h11 * ex_der[k + 1]
    return e1, ex
