"""Vectorised pure-numpy assembly lane.

Reference implementation of the panel-pair Galerkin assembly.  The
exponential integrals come from scipy (machine precision), so this lane
doubles as the accuracy baseline for the compiled lane, and it is the
only lane implementing the piecewise-linear (p = 1) bases.

Time integration is exact throughout.  For p = 0 the time factor at lag
k is a second difference of the kernel's second time-antiderivative over
the uniform grid.  For p = 1 the product of the two shifted Legendre
basis polynomials is cross-correlated into a piecewise cubic in the time
lag, and each power of the lag integrates against the kernel in closed
form through the K_m antiderivative family.  Only the two spatial
parameters are ever quadratured.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import exp1

from .special import E1_UNDERFLOW

INV_4PI = 0.07957747154594767
INV_8PI = 0.039788735772973836
SQRT3 = math.sqrt(3.0)


def _e1_exp(z):
    """Vectorised (E1(z), e^{-z}) with the deep-underflow cutoff."""
    z = np.asarray(z, dtype=float)
    e1 = np.zeros(z.shape)
    ex = np.zeros(z.shape)
    m = z < E1_UNDERFLOW
    zm = z[m]
    e1[m] = exp1(zm)
    ex[m] = np.exp(-zm)
    return e1, ex


def psi_values(a, tau: float):
    """Second time-antiderivative of the kernel, vectorised over a."""
    a = np.asarray(a, dtype=float)
    if tau <= 0.0:
        return np.zeros(a.shape)
    e1, ex = _e1_exp(a / tau)
    return ((tau + a) * e1 - tau * ex) * INV_4PI


def lag_factors_p0(a, nt: int, ht: float):
    """Piecewise-constant time factors for every lag.

    Returns shape (*a.shape, nt); entry k equals the correlation integral
    int (ht - |tau - k ht|)+ g(a, tau) dtau, computed as a second
    difference of psi over the uniform time grid.
    """
    a = np.asarray(a, dtype=float)
    psi = np.empty(a.shape + (nt + 2,))
    psi[..., 0] = 0.0  # virtual node at tau = -ht
    psi[..., 1] = 0.0  # psi(a, 0)
    for m in range(1, nt + 1):
        psi[..., m + 1] = psi_values(a, m * ht)
    return np.diff(psi, n=2, axis=-1)


def moment_tables(a, nt: int, ht: float, m_max: int):
    """A[m, ..., j] = int_0^{j ht} tau^m g(a, tau) dtau for m = 0..m_max.

    Uses the upward recurrence K_m = (tau^{m+1} e^{-z} - a K_{m-1})/(m+1)
    on the antiderivative family, with A_m = K_{m-1} / 4 pi.
    """
    a = np.asarray(a, dtype=float)
    taus = ht * np.arange(1, nt + 1)
    e1, ex = _e1_exp(a[..., None] / taus)
    out = np.zeros((m_max + 1,) + a.shape + (nt + 1,))
    km = e1
    out[0][..., 1:] = km
    for m in range(1, m_max + 1):
        km = (taus**m * ex - a[..., None] * km) / m
        out[m][..., 1:] = km
    return out * INV_4PI


def time_entry_table(a, nt: int, ht: float, pt: int):
    """Galerkin time factors T[u, v, ..., k] for the Legendre cell basis.

    Shape (pt+1, pt+1, *a.shape, nt).  T[u, v, ..., k] is the double time
    integral over a test cell and the trial cell k steps earlier of
    P_u(test) P_v(trial) g(a, t - s).
    """
    if pt == 0:
        return lag_factors_p0(a, nt, ht)[None, None]
    shape = np.shape(a)
    h = ht
    mom = moment_tables(a, nt, ht, 3)
    d = np.diff(mom, axis=-1)  # (4, *a, nt): per-cell moments of tau^m
    c = ht * np.arange(nt, dtype=float)

    def lam_moments(d0, d1, d2, d3):
        # moments of lambda = (tau - k ht)/ht over one cell
        m0 = d0
        m1 = (d1 - c * d0) / h
        m2 = (d2 - c * (2.0 * d1 - c * d0)) / h**2
        m3 = (d3 - c * (3.0 * d2 - c * (3.0 * d1 - c * d0))) / h**3
        return m0, m1, m2, m3

    # leading piece: tau in [k ht, (k+1) ht]  ->  cell index k
    p0, p1, p2, p3 = lam_moments(d[0], d[1], d[2], d[3])
    # trailing piece: tau in [(k-1) ht, k ht]  ->  cell index k-1 (k >= 1)
    z = np.zeros(shape + (1,))
    dm = [np.concatenate([z, d[m][..., :-1]], axis=-1) for m in range(4)]
    q0, q1, q2, q3 = lam_moments(*dm)

    t00 = h * ((p0 - p1) + (q0 + q1))
    t10 = SQRT3 * h * ((p1 - p2) + (q1 + q2))
    t11 = h * ((p0 - 3.0 * p1 + 2.0 * p3) + (q0 + 3.0 * q1 - 2.0 * q3))
    out = np.empty((2, 2) + shape + (nt,))
    out[0, 0] = t00
    out[1, 0] = t10
    out[0, 1] = -t10
    out[1, 1] = t11
    return out


def legendre_factors(ref, p: int):
    """Orthonormal Legendre values P_0..P_p at reference coords in [0, 1]."""
    ref = np.asarray(ref, dtype=float)
    rows = [np.ones_like(ref)]
    if p == 1:
        rows.append(SQRT3 * (2.0 * ref - 1.0))
    return np.stack(rows)


# ---------------------------------------------------------------------------
# panel-pair traversal


def _tensor_nodes(xa, wa, ra, xb, wb, rb):
    """Flatten a tensor product of two line rules into explicit node arrays."""
    d = xa[:, None, :] - xb[None, :, :]
    a = 0.25 * np.sum(d * d, axis=-1).ravel()
    w = (wa[:, None] * wb[None, :]).ravel()
    alpha = np.repeat(ra, rb.size)
    beta = np.tile(rb, ra.size)
    return a, w, alpha, beta


def pair_nodes(t, i: int, j: int, cls: str):
    """Node arrays (a, w, alpha_ref, beta_ref) for one panel pair.

    cls is "coincident" (i == j), "next" (j follows i on the curve) or
    "separated".  alpha/beta are reference coordinates on the test/trial
    panel for evaluating spatial basis factors.
    """
    if cls == "coincident":
        d = t.coin_x[i] - t.coin_y[i]
        return (0.25 * np.sum(d * d, axis=-1), t.coin_w[i],
                t.coin_alpha, t.coin_beta)
    if cls == "next":
        return _tensor_nodes(t.line_r_pts[i], t.line_r_w[i], t.line_r_ref,
                             t.line_l_pts[j], t.line_l_w[j], t.line_l_ref)
    return _tensor_nodes(t.sep_pts[i], t.sep_w[i], t.sep_ref,
                         t.sep_pts[j], t.sep_w[j], t.sep_ref)


def iter_unordered_pairs(n: int):
    """(i, j, cls) covering every unordered panel pair exactly once."""
    for i in range(n):
        yield i, i, "coincident"
        yield i, (i + 1) % n, "next"
        for j in range(i - 1):
            if i == n - 1 and j == 0:
                continue  # wrap-around neighbours, covered as "next"
            yield i, j, "separated"


def assemble_blocks(t, space) -> np.ndarray:
    """Assemble the lag blocks (nt, B, B) for the single-layer operator."""
    n, nt, ht = space.n_panels, space.n_cells, space.ht
    px, pt = space.px, space.pt
    nxd = n * (px + 1)
    b = nxd * (pt + 1)
    blocks = np.zeros((nt, b, b))

    for i, j, cls in iter_unordered_pairs(n):
        a, w, al, be = pair_nodes(t, i, j, cls)
        tt = time_entry_table(a, nt, ht, pt)
        pha = legendre_factors(al, px)
        phb = legendre_factors(be, px)
        ent = np.einsum("uvqk,aq,bq,q->kuavb", tt, pha, phb, w, optimize=True)
        for u in range(pt + 1):
            for v in range(pt + 1):
                blk = ent[:, u, :, v, :]
                r0 = u * nxd + i * (px + 1)
                c0 = v * nxd + j * (px + 1)
                blocks[:, r0:r0 + px + 1, c0:c0 + px + 1] = blk
                if i != j:
                    # same nodes with the panel roles exchanged
                    r1 = u * nxd + j * (px + 1)
                    c1 = v * nxd + i * (px + 1)
                    blocks[:, r1:r1 + px + 1, c1:c1 + px + 1] = (
                        blk.transpose(0, 2, 1))
    return blocks


def assemble_dense_slow(t, space) -> np.ndarray:
    """Assemble every cell pair independently (no lag sharing), p = 0.

    Validation path: O(nt^2) cell-pair integrations instead of nt+1 lags,
    each evaluated from scratch at its own time offsets.  Returns the full
    dense matrix.
    """
    if space.px or space.pt:
        raise ValueError("the redundant-path assembly supports p = 0 only")
    n, nt, ht = space.n_panels, space.n_cells, space.ht
    dense = np.zeros((nt * n, nt * n))
    for i, j, cls in iter_unordered_pairs(n):
        a, w, _, _ = pair_nodes(t, i, j, cls)
        for ci in range(nt):
            for cj in range(ci + 1):
                tau = (ci - cj) * ht
                val = w @ (psi_values(a, tau + ht) - 2.0 * psi_values(a, tau)
                           + psi_values(a, tau - ht))
                dense[ci * n + i, cj * n + j] = val
                if i != j:
                    dense[ci * n + j, cj * n + i] = val
    return dense


# ---------------------------------------------------------------------------
# double-layer data operator (K-part of the direct right-hand side)


def _gather_ordered_nodes(t, i: int, n: int, classes):
    """Concatenated node data for test panel i against source panels.

    Returns (x, w, alpha, y, y_normal, y_param) flat arrays covering the
    requested pair classes ("coincident", "adjacent", "separated").
    """
    xs, ws, als, ys, nys, uys = [], [], [], [], [], []

    def tensor(pa, wa, ra, pb, wb, nb, ub):
        qa, qb = pa.shape[0], pb.shape[0]
        xs.append(np.repeat(pa, qb, axis=0))
        ws.append((wa[:, None] * wb[None, :]).ravel())
        als.append(np.repeat(ra, qb))
        ys.append(np.tile(pb, (qa, 1)))
        nys.append(np.tile(nb, (qa, 1)))
        uys.append(np.tile(ub, qa))

    if "coincident" in classes:
        xs.append(t.coin_x[i])
        ws.append(t.coin_w[i])
        als.append(t.coin_alpha)
        ys.append(t.coin_y[i])
        nys.append(t.coin_ny[i])
        uys.append(t.coin_uy[i])
    if "adjacent" in classes:
        ip1, im1 = (i + 1) % n, (i - 1) % n
        tensor(t.line_r_pts[i], t.line_r_w[i], t.line_r_ref,
               t.line_l_pts[ip1], t.line_l_w[ip1], t.line_l_nrm[ip1],
               t.line_l_u[ip1])
        tensor(t.line_l_pts[i], t.line_l_w[i], t.line_l_ref,
               t.line_r_pts[im1], t.line_r_w[im1], t.line_r_nrm[im1],
               t.line_r_u[im1])
    if "separated" in classes:
        for j in range(n):
            d = min((i - j) % n, (j - i) % n)
            if d < 2:
                continue
            tensor(t.sep_pts[i], t.sep_w[i], t.sep_ref,
                   t.sep_pts[j], t.sep_w[j], t.sep_nrm[j], t.sep_u[j])
    return (np.concatenate(xs), np.concatenate(ws), np.concatenate(als),
            np.concatenate(ys), np.concatenate(nys), np.concatenate(uys))


def data_moment(a, b, tflat, tpow: int):
    """int_0^t s^tpow (b / 2 tau) g(a, tau) dtau for each t, vectorised.

    a, b have shape (Q,); tflat has shape (M,).  Returns (Q, M).  Closed
    form through the K_m family; supports tpow <= 3.
    """
    e1, ex = _e1_exp(a[:, None] / tflat[None, :])
    km2 = ex / a[:, None]
    km1 = e1
    if tpow == 0:
        m = km2
    elif tpow == 1:
        m = tflat * km2 - km1
    else:
        k0 = tflat * ex - a[:, None] * km1
        if tpow == 2:
            m = tflat**2 * km2 - 2.0 * tflat * km1 + k0
        elif tpow == 3:
            k1 = 0.5 * (tflat**2 * ex - a[:, None] * k0)
            m = (tflat**3 * km2 - 3.0 * tflat**2 * km1 + 3.0 * tflat * k0
                 - k1)
        else:
            raise ValueError("data time power must be 0..3")
    return b[:, None] * INV_8PI * m


def rhs_kpart(t, space, terms, t_flat, w_flat, t_phi, cell_of,
              classes=("coincident", "adjacent", "separated")) -> np.ndarray:
    """Galerkin vector of the time-integrated double-layer kernel applied
    to polynomial-in-time Fourier data.

    t_flat/w_flat: flat test-time rule over all cells (per-cell node
    counts may differ); t_phi: (pt+1, Q) temporal test basis at the
    nodes; cell_of: owning cell per node, nondecreasing.  Returns array
    (nt, pt+1, n, px+1).
    """
    n, nt = space.n_panels, space.n_cells
    px, pt = space.px, space.pt
    starts = np.searchsorted(cell_of, np.arange(nt))
    tphi_w = t_phi * w_flat
    out = np.zeros((nt, pt + 1, n, px + 1))
    for i in range(n):
        x, w, al, y, ny, uy = _gather_ordered_nodes(t, i, n, classes)
        d = x - y
        a = 0.25 * np.sum(d * d, axis=-1)
        bdot = np.sum(ny * d, axis=-1)
        phix = legendre_factors(al, px)
        for mode, tpow, amp in terms:
            g = amp * np.cos(2.0 * math.pi * mode * uy) * w
            mom = data_moment(a, bdot, t_flat, tpow)  # (Q, Qt)
            contrib = (phix * g) @ mom  # (px+1, Qt)
            weighted = contrib[None] * tphi_w[:, None, :]
            out[:, :, i, :] += np.add.reduceat(
                weighted, starts, axis=-1).transpose(2, 0, 1)
    return out
