"""Independent reference computations used to derive expected test values.

Everything here deliberately avoids the library's own closed forms and
custom quadrature: exponential integrals come from an extended-precision
alternating series, time integrals from scipy's adaptive quadrature of the
raw heat kernel, Galerkin entries from nested adaptive quadrature, and the
disk flux from numerically integrated Fourier-Bessel coefficients and ODEs.
Frozen constants in the test files record which oracle produced them.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import j1, jn_zeros, jv


def e1_series_mp(z, terms: int = 200, dps: int = 50) -> float:
    """E1(z) from the alternating power series in extended precision.

    Valid for any z > 0 given enough terms/precision; 200 terms at 50 digits
    covers z up to ~40 comfortably (terms decay after k ~ z).
    """
    with mpmath.workdps(dps):
        zz = mpmath.mpf(repr(float(z)) if not isinstance(z, str) else z)
        s = -mpmath.euler - mpmath.log(zz)
        term = mpmath.mpf(1)
        for k in range(1, terms + 1):
            term *= -zz / k
            s -= term / k
        return float(s)


def heat_kernel_raw(r2: float, tau: float) -> float:
    """The 2D heat kernel as a function of squared distance and time lag."""
    if tau <= 0.0:
        return 0.0
    return math.exp(-r2 / (4.0 * tau)) / (4.0 * math.pi * tau)


def slp_time_quad(r2: float, s_a: float, s_b: float, t: float,
                  tol: float = 1e-13) -> float:
    """Adaptive time quadrature of the single-layer kernel over [s_a, s_b]."""
    hi = min(s_b, t)
    if hi <= s_a:
        return 0.0
    val, _ = integrate.quad(
        lambda s: heat_kernel_raw(r2, t - s), s_a, hi,
        epsabs=1e-300, epsrel=tol, limit=400,
    )
    return val


def dlp_time_quad(x, y, n_y, s_a: float, s_b: float, t: float,
                  tol: float = 1e-13) -> float:
    """Adaptive time quadrature of the double-layer kernel."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n_y = np.asarray(n_y, float)
    r2 = float(np.sum((x - y) ** 2))
    b = float(np.dot(n_y, x - y))
    hi = min(s_b, t)
    if hi <= s_a:
        return 0.0

    def f(s):
        tau = t - s
        return b / (2.0 * tau) * heat_kernel_raw(r2, tau)

    val, _ = integrate.quad(f, s_a, hi, epsabs=1e-300, epsrel=tol, limit=400)
    return val


def galerkin_entry_quad(curve, panel_i, panel_j, hx, cell_i, cell_j, ht,
                        tol: float = 1e-9) -> float:
    """4D Galerkin entry for piecewise constants by nested adaptive quadrature.

    The two time integrals are reduced to one by correlating the two cell
    indicators (a triangular weight in the lag tau); the spatial double
    integral uses nested scipy.quad with the parameter difference as the
    inner variable so the logarithmic line singularity sits at a fixed
    endpoint.  None of the library's closed forms or graded rules are used.
    """
    k = cell_i - cell_j
    if k < 0:
        return 0.0

    def time_factor(r2):
        # int (ht - |tau - k*ht|)+ * g(r2, tau) dtau over [(k-1)ht, (k+1)ht]
        lo = max((k - 1) * ht, 0.0)
        mid = k * ht
        hi = (k + 1) * ht
        total = 0.0
        if mid > lo:
            v, _ = integrate.quad(
                lambda tau: (ht - (mid - tau)) * heat_kernel_raw(r2, tau),
                lo, mid, epsabs=1e-300, epsrel=tol, limit=400,
            )
            total += v
        v, _ = integrate.quad(
            lambda tau: (ht - (tau - mid)) * heat_kernel_raw(r2, tau),
            mid, hi, epsabs=1e-300, epsrel=tol, limit=400,
        )
        return total + v

    u0 = panel_i * hx
    v0 = panel_j * hx

    def inner(u):
        pu = curve.point(u)
        ju = float(curve.jacobian(u))

        def f(v):
            pv = curve.point(v)
            r2 = float(np.sum((pu - pv) ** 2))
            return time_factor(r2) * ju * float(curve.jacobian(v))

        val, _ = integrate.quad(
            lambda w: f(v0 + w), 0.0, hx,
            points=[min(max(u - v0, 0.0), hx)],
            epsabs=1e-300, epsrel=tol, limit=200,
        )
        return val

    val, _ = integrate.quad(inner, u0, u0 + hx, epsabs=1e-300, epsrel=tol,
                            limit=200)
    return val


def _legendre01(mode: int, xi):
    """Orthonormal Legendre on [0,1]: P_0 = 1, P_1 = sqrt(3)(2 xi - 1)."""
    if mode == 0:
        return np.ones_like(np.asarray(xi, dtype=float))
    return math.sqrt(3.0) * (2.0 * np.asarray(xi, dtype=float) - 1.0)


_CORR_GAUSS = np.polynomial.legendre.leggauss(8)


def galerkin_entry_quad_basis(curve, panel_i, panel_j, hx, cell_i, cell_j, ht,
                              tmode_i=0, tmode_j=0, xmode_i=0, xmode_j=0,
                              tol: float = 1e-8,
                              abs_floor: float = 1e-13) -> float:
    """4D Galerkin entry with per-cell Legendre basis factors.

    Like galerkin_entry_quad but the basis on each cell/panel is the
    orthonormal Legendre polynomial of the requested degree.  The two time
    integrals are reduced to a single lag integral through a numerically
    computed cross-correlation of the two time basis functions (a fixed
    Gauss rule, exact for the polynomial product; none of the library's
    closed-form correlation polynomials).
    """
    k = cell_i - cell_j
    if k < -1:
        return 0.0
    ta_i, ta_j = cell_i * ht, cell_j * ht
    xg, wg = _CORR_GAUSS

    def corr(tau):
        lo = max(ta_j, ta_i - tau)
        hi = min(ta_j + ht, ta_i + ht - tau)
        if hi <= lo:
            return 0.0
        s = 0.5 * (hi + lo) + 0.5 * (hi - lo) * xg
        vals = (_legendre01(tmode_i, (s + tau - ta_i) / ht)
                * _legendre01(tmode_j, (s - ta_j) / ht))
        return 0.5 * (hi - lo) * float(np.dot(wg, vals))

    def time_factor(r2):
        total = 0.0
        for plo, phi in (((k - 1) * ht, k * ht), (k * ht, (k + 1) * ht)):
            plo = max(plo, 0.0)
            if phi <= plo:
                continue
            v, _ = integrate.quad(
                lambda tau: corr(tau) * heat_kernel_raw(r2, tau),
                plo, phi, epsabs=abs_floor, epsrel=tol, limit=200,
            )
            total += v
        return total

    u0 = panel_i * hx
    v0 = panel_j * hx

    def inner(u):
        pu = curve.point(u)
        ju = float(curve.jacobian(u))
        fu = float(_legendre01(xmode_i, (u - u0) / hx))

        def f(v):
            pv = curve.point(v)
            r2 = float(np.sum((pu - pv) ** 2))
            return (time_factor(r2) * ju * float(curve.jacobian(v))
                    * fu * float(_legendre01(xmode_j, (v - v0) / hx)))

        val, _ = integrate.quad(
            lambda w: f(v0 + w), 0.0, hx,
            points=[min(max(u - v0, 0.0), hx)],
            epsabs=abs_floor, epsrel=tol, limit=100,
        )
        return val

    val, _ = integrate.quad(inner, u0, u0 + hx, epsabs=abs_floor, epsrel=tol,
                            limit=100)
    return val


def rhs_entry_quad(curve, data, panel, hx, cell, ht, tol=1e-12) -> float:
    """<g, indicator> by adaptive quadrature in parameter and time."""
    u0 = panel * hx

    def f(u, t):
        return data(u, t) * float(curve.jacobian(u))

    val, _ = integrate.dblquad(
        lambda t, u: f(u, t), u0, u0 + hx, cell * ht, (cell + 1) * ht,
        epsabs=1e-300, epsrel=tol,
    )
    return val


def dlp_applied_to_data_quad(curve, terms, u: float, t: float,
                             source_panels, hx: float,
                             tol: float = 1e-10) -> float:
    """(K g)(x(u), t) with y restricted to the given panels, by quadrature.

    g(v, s) = sum of amp * s^tpow * cos(2 pi mode v); the s-integral uses
    adaptive quadrature of the raw kernel (no closed forms), then v runs
    over each listed panel.
    """
    x = curve.point(u)

    def integrand(v):
        y = curve.point(v)
        ny = curve.normal(v)
        jv_ = float(curve.jacobian(v))
        r2 = float(np.sum((x - y) ** 2))
        b = float(np.dot(ny, x - y))
        total = 0.0
        for mode, tpow, amp in terms:
            sval, _ = integrate.quad(
                lambda s: s**tpow * b / (2.0 * (t - s))
                * heat_kernel_raw(r2, t - s),
                0.0, t, epsabs=1e-300, epsrel=tol, limit=200,
            )
            total += amp * math.cos(2.0 * math.pi * mode * v) * sval
        return total * jv_

    out = 0.0
    for p in source_panels:
        v, _ = integrate.quad(integrand, p * hx, (p + 1) * hx,
                              epsabs=1e-300, epsrel=tol, limit=100)
        out += v
    return out


def kpart_rhs_entry_quad(curve, terms, panel, hx, cell, ht, source_panels,
                         tol: float = 1e-8) -> float:
    """<K g, indicator> entry with the source integral restricted to the
    listed panels; nested adaptive quadrature in test parameter and time."""
    u0 = panel * hx

    def f(t, u):
        return (dlp_applied_to_data_quad(curve, terms, u, t, source_panels,
                                         hx, tol=1e-10)
                * float(curve.jacobian(u)))

    val, _ = integrate.dblquad(
        f, u0, u0 + hx, cell * ht, (cell + 1) * ht,
        epsabs=1e-300, epsrel=tol,
    )
    return val


# ---------------------------------------------------------------------------
# disk oracle cross-checks


def disk_flux_coefficient_quad(k: int) -> float:
    """Fourier-Bessel coefficient of -2r on the unit disk, computed by
    quadrature instead of the closed form -4/(j*J2(j))."""
    j = jn_zeros(1, k)[-1]
    num, _ = integrate.quad(lambda r: -2.0 * r * j1(j * r) * r, 0.0, 1.0,
                            epsrel=1e-12, epsabs=1e-300)
    den, _ = integrate.quad(lambda r: j1(j * r) ** 2 * r, 0.0, 1.0,
                            epsrel=1e-12, epsabs=1e-300)
    return num / den


def disk_mode_amplitude_ode(k: int, t: float) -> float:
    """Time amplitude a_k(t) by numerical ODE integration (RK45)."""
    from scipy.integrate import solve_ivp

    j = jn_zeros(1, k)[-1]
    c = disk_flux_coefficient_quad(k)
    sol = solve_ivp(
        lambda s, y: [-j * j * y[0] + c * s], (0.0, t), [0.0],
        rtol=1e-11, atol=1e-14, dense_output=True,
    )
    return float(sol.y[0][-1])


def disk_flux_series_raw(t: float, n_terms: int) -> float:
    """Flux amplitude F(t) from the raw (unresummed) series with closed-form
    a_k; slowly convergent tail, good enough to cross-check resummation."""
    zeros = jn_zeros(1, n_terms)
    total = t * t
    for j in zeros:
        ak = -4.0 / (j * jv(2, j)) * (t / j**2 - (1.0 - math.exp(-j * j * t)) / j**4)
        total += ak * j * (jv(0, j))  # J1'(j) = J0(j) at a zero of J1
    return total


def disk_temperature_series(r: float, phi: float, t: float,
                            n_terms: int = 200) -> float:
    """Interior temperature u(r, phi, t) on the unit disk for boundary
    data t^2 cos(phi) and zero initial data.

    Separation of variables: u = t^2 r cos(phi) + sum_k a_k(t)
    J1(j_k r) cos(phi) with closed-form mode amplitudes (checked against
    disk_mode_amplitude_ode).  Uses scipy Bessel values throughout.
    """
    j = jn_zeros(1, n_terms)
    c = 4.0 / (j * jv(0, j))
    a = c * (t / j**2 - (1.0 - np.exp(-j * j * t)) / j**4)
    return (t * t * r + float(np.dot(a, jv(1, j * r)))) * math.cos(phi)
