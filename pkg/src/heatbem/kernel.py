"""Heat-equation fundamental solution, closed-form time integrals, and
layer potentials for interior field evaluation.

All time integration is exact: with tau = t - s and a = r^2/4 the kernel
integrals reduce to the family

    K_m(a, t) = int_0^t tau^m e^{-a/tau} dtau

with K_{-2} = e^{-a/t}/a, K_{-1} = E1(a/t) and the upward recurrence
K_m = (t^{m+1} e^{-a/t} - a K_{m-1})/(m+1).  Only the two spatial
variables are ever quadratured numerically.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import exp1

from .geometry import BoundaryCurve
from .indexsets import Density
from .quadrature import gauss_on_interval
from .special import E1_UNDERFLOW, exp_integral_e1  # noqa: F401  (re-export)

INV_4PI = 0.07957747154594767
INV_8PI = 0.039788735772973836

_POTENTIAL_GAUSS_N = 8


def heat_kernel(x, t):
    """Fundamental solution of the heat equation in two dimensions.

    Parameters
    ----------
    x : array_like, shape (..., 2)
        Spatial offset(s).
    t : float or array_like
        Time offset(s), broadcastable against the leading shape of x.

    Returns
    -------
    ndarray or float
        (4 pi t)^{-1} exp(-|x|^2 / 4t) where t > 0, exactly 0 elsewhere.
    """
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    t = np.asarray(t, dtype=float)
    r2, t = np.broadcast_arrays(r2, t)
    out = np.zeros(t.shape)
    pos = t > 0.0
    tp = t[pos]
    out[pos] = np.exp(-r2[pos] / (4.0 * tp)) / (4.0 * math.pi * tp)
    if out.ndim == 0:
        return float(out)
    return out


def _e1(z):
    """Vectorised E1 with the underflow cutoff; z entries must be > 0."""
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape)
    small = z < E1_UNDERFLOW
    out[small] = exp1(z[small])
    return out


def _exp_neg(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape)
    small = z < E1_UNDERFLOW
    out[small] = np.exp(-z[small])
    return out


def _as_r2(r2):
    r2 = np.asarray(r2, dtype=float)
    if np.any(r2 <= 0.0):
        raise ValueError("squared distance must be positive")
    return r2


def _scalar_like(out, *inputs) -> bool:
    return all(np.ndim(v) == 0 for v in inputs)


def time_integrated_slp(r2, s_a: float, s_b: float, t: float):
    """int_{s_a}^{s_b} G(x, t - s) ds with |x|^2 = r2, in closed form.

    Substituting tau = t - s gives (1/4pi)[E1(a/tau)] between
    tau = max(t - s_b, 0) and tau = t - s_a.  Returns 0 for t <= s_a
    (causality).  Vectorised over r2.
    """
    if s_a >= s_b:
        raise ValueError("need s_a < s_b")
    r2a = _as_r2(r2)
    if t <= s_a:
        return 0.0 if np.ndim(r2) == 0 else np.zeros(r2a.shape)
    a = 0.25 * r2a
    tau_hi = t - s_a
    tau_lo = max(t - s_b, 0.0)
    val = _e1(a / tau_hi)
    if tau_lo > 0.0:
        val = val - _e1(a / tau_lo)
    val = val * INV_4PI
    return float(val) if np.ndim(r2) == 0 else val


def time_integrated_slp_moment(r2, s_a: float, s_b: float, t: float):
    """int_{s_a}^{s_b} s G(x, t - s) ds in closed form.

    Equals t * time_integrated_slp - (1/4pi)[M(tau)] with
    M(tau) = tau e^{-a/tau} - a E1(a/tau), the antiderivative of
    e^{-a/tau}.  Needed by the piecewise-linear-in-time basis.
    """
    if s_a >= s_b:
        raise ValueError("need s_a < s_b")
    r2a = _as_r2(r2)
    if t <= s_a:
        return 0.0 if np.ndim(r2) == 0 else np.zeros(r2a.shape)
    a = 0.25 * r2a
    tau_hi = t - s_a
    tau_lo = max(t - s_b, 0.0)

    def m_of(tau):
        z = a / tau
        return tau * _exp_neg(z) - a * _e1(z)

    e1_part = _e1(a / tau_hi)
    m_part = m_of(tau_hi)
    if tau_lo > 0.0:
        e1_part = e1_part - _e1(a / tau_lo)
        m_part = m_part - m_of(tau_lo)
    val = (t * e1_part - m_part) * INV_4PI
    return float(val) if np.ndim(r2) == 0 else val


def time_integrated_dlp(x, y, n_y, s_a: float, s_b: float, t: float):
    """int_{s_a}^{s_b} d/dn_y G(x - y, t - s) ds in closed form.

    The normal derivative is (n_y . (x - y)) / (2 tau) * G, whose
    tau-antiderivative is (b / 8 pi a) e^{-a/tau} with b = n_y . (x - y).
    Returns 0 for t <= s_a.  Vectorised over leading axes of x, y, n_y.
    """
    if s_a >= s_b:
        raise ValueError("need s_a < s_b")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n_y = np.asarray(n_y, dtype=float)
    diff = x - y
    r2 = np.sum(diff * diff, axis=-1)
    if np.any(r2 <= 0.0):
        raise ValueError("field and source points must be distinct")
    scalar = np.ndim(r2) == 0
    if t <= s_a:
        return 0.0 if scalar else np.zeros(r2.shape)
    b = np.sum(n_y * diff, axis=-1)
    a = 0.25 * r2
    tau_hi = t - s_a
    tau_lo = max(t - s_b, 0.0)
    val = _exp_neg(a / tau_hi)
    if tau_lo > 0.0:
        val = val - _exp_neg(a / tau_lo)
    val = val * (b / a) * INV_8PI
    return float(val) if scalar else val


def _k_family(a, t: float, m_max: int) -> list:
    """[K_{-2}, K_{-1}, ..., K_{m_max}] with K_m = int_0^t tau^m e^{-a/tau} dtau."""
    z = a / t
    ez = _exp_neg(z)
    e1 = _e1(z)
    fam = [ez / a, e1]
    km = e1
    tp = t
    for m in range(0, m_max + 1):
        tp = tp * t if m else t
        km = (tp * ez - a * km) / (m + 1)
        fam.append(km)
    return fam


def slp_data_integral(r2, t: float, tpow: int):
    """int_0^t s^tpow G(x, t - s) ds in closed form (tpow >= 0).

    Binomially expands s^tpow = (t - tau)^tpow; each term is a K_m.
    Used for right-hand sides and potentials with polynomial-in-time
    boundary data.
    """
    r2a = _as_r2(r2)
    if t <= 0.0:
        return 0.0 if np.ndim(r2) == 0 else np.zeros(r2a.shape)
    a = 0.25 * r2a
    fam = _k_family(a, t, tpow - 1)
    val = 0.0
    for r in range(tpow + 1):
        val = val + math.comb(tpow, r) * (-1.0) ** r * t ** (tpow - r) * fam[r + 1]
    val = val * INV_4PI
    return float(val) if np.ndim(r2) == 0 else val


def dlp_data_integral(r2, b, t: float, tpow: int):
    """int_0^t s^tpow d/dn_y G(x - y, t - s) ds with b = n_y . (x - y).

    The kernel is (b / 8 pi) e^{-a/tau} / tau^2, so the expansion runs
    over K_{r-2}; the leading K_{-2} term carries the bounded ratio b/a.
    """
    r2a = _as_r2(r2)
    if t <= 0.0:
        return 0.0 if np.ndim(r2) == 0 else np.zeros(r2a.shape)
    a = 0.25 * r2a
    fam = _k_family(a, t, tpow - 2)
    val = 0.0
    for r in range(tpow + 1):
        val = val + math.comb(tpow, r) * (-1.0) ** r * t ** (tpow - r) * fam[r]
    val = val * np.asarray(b, dtype=float) * INV_8PI
    return float(val) if np.ndim(r2) == 0 else val


def _require_interior(curve: BoundaryCurve, x) -> None:
    x = np.asarray(x, dtype=float)
    if not curve.contains(x) or curve.distance(x) <= 1e-10:
        raise ValueError("field point must lie strictly inside the domain")


def _panel_quadrature(space):
    """Gauss nodes, weights (incl. jacobian), points and normals per panel."""
    curve = space.curve
    n = space.n_panels
    xg, wg = gauss_on_interval(0.0, 1.0, _POTENTIAL_GAUSS_N)
    du = 1.0 / n
    u = (np.arange(n)[:, None] + xg[None, :]) * du
    pts = curve.point(u)
    jac = curve.jacobian(u)
    w = wg[None, :] * du * jac
    return u, pts, w


def eval_single_layer_potential(psi: Density, x, t: float) -> float:
    """Single-layer heat potential of a boundary density at an interior point.

    Parameters
    ----------
    psi : Density
        Nodal density on a full-tensor space.
    x : array_like, shape (2,)
        Field point, strictly inside the domain.
    t : float
        Field time.

    Returns
    -------
    float
        Value of the potential; 0 for t <= 0.
    """
    space = psi.space
    if psi.representation != "nodal":
        raise ValueError("potential evaluation needs a nodal density")
    _require_interior(space.curve, x)
    if t <= 0.0:
        return 0.0
    x = np.asarray(x, dtype=float)
    u, pts, w = _panel_quadrature(space)
    r2 = np.sum((pts - x[None, None, :]) ** 2, axis=-1)
    ht = space.ht
    nx_dofs = space.spatial_dofs
    coeff = psi.coefficients.reshape(space.n_cells, space.block_size)
    # spatial basis factor at the quadrature nodes, per panel dof
    if space.px == 0:
        phi_x = w[:, :, None]
    else:
        xg, _ = gauss_on_interval(0.0, 1.0, _POTENTIAL_GAUSS_N)
        leg1 = math.sqrt(3.0) * (2.0 * xg - 1.0)
        phi_x = np.stack([w, w * leg1[None, :]], axis=-1)
    total = 0.0
    for j in range(space.n_cells):
        ta, tb = j * ht, (j + 1) * ht
        if t <= ta:
            break
        f0 = time_integrated_slp(r2, ta, tb, t)
        factors = [f0]
        if space.pt == 1:
            m1 = time_integrated_slp_moment(r2, ta, tb, t)
            factors.append(math.sqrt(3.0) * ((2.0 / ht) * (m1 - ta * f0) - f0))
        for tmode, ftm in enumerate(factors):
            block = coeff[j, tmode * nx_dofs : (tmode + 1) * nx_dofs]
            block = block.reshape(space.n_panels, space.px + 1)
            total += np.sum(ftm[:, :, None] * phi_x * block[:, None, :])
    return float(total)


def eval_double_layer_potential(
    curve: BoundaryCurve, terms, x, t: float, n_panels: int = 256
) -> float:
    """Double-layer heat potential of polynomial-in-time Fourier data.

    Parameters
    ----------
    curve : BoundaryCurve
    terms : sequence of (mode, tpow, amp)
        Boundary data g(u, s) = sum amp * s^tpow * cos(2 pi mode u) in
        the curve parameter u.
    x : array_like, shape (2,)
        Interior field point.
    t : float
        Field time.
    """
    _require_interior(curve, x)
    if t <= 0.0:
        return 0.0
    x = np.asarray(x, dtype=float)
    xg, wg = gauss_on_interval(0.0, 1.0, _POTENTIAL_GAUSS_N)
    du = 1.0 / n_panels
    u = ((np.arange(n_panels)[:, None] + xg[None, :]) * du).ravel()
    w = np.tile(wg * du, n_panels) * curve.jacobian(u)
    pts = curve.point(u)
    nrm = curve.normal(u)
    diff = x[None, :] - pts
    r2 = np.sum(diff * diff, axis=-1)
    b = np.sum(nrm * diff, axis=-1)
    total = 0.0
    for mode, tpow, amp in terms:
        g_space = amp * np.cos(2.0 * math.pi * mode * u)
        total += np.sum(w * g_space * dlp_data_integral(r2, b, t, tpow))
    return float(total)
