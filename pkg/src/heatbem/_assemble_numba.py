"""Compiled assembly lane for the piecewise-constant basis.

Hot panel-pair loops jitted with numba.  The (E1, e^{-z}) pair comes
from the shared cubic-Hermite tables in ``special`` (compiled from the
same source the pure-python lane uses); the tables are passed in as
plain arrays so the compiled functions stay cacheable across processes.

Both drivers are maps over test panels: every output element is written
by exactly one loop iteration, so results are deterministic and
independent of the worker count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .special import e1_exp_at

INV_4PI = 0.07957747154594767
INV_8PI = 0.039788735772973836

_e1_exp = njit(cache=True)(e1_exp_at)


@njit(cache=True)
def _accum_psi_tensor(psum, pts_a, w_a, ia, pts_b, w_b, ib, taus, lntau,
                      m_lo_scale, s_lo, inv_ds, ds, e1v, e1d, exv, exd):
    """Add the tensor rule's psi table contributions for one panel pair.

    psum[m] accumulates sum_q w_q psi*(a_q, m ht) with psi* the second
    antiderivative of the kernel before the 1/4pi factor.
    """
    nt = taus.shape[0] - 1
    for qa in range(pts_a.shape[1]):
        ax = pts_a[ia, qa, 0]
        ay = pts_a[ia, qa, 1]
        wa = w_a[ia, qa]
        for qb in range(pts_b.shape[1]):
            dx = ax - pts_b[ib, qb, 0]
            dy = ay - pts_b[ib, qb, 1]
            a = 0.25 * (dx * dx + dy * dy)
            w = wa * w_b[ib, qb]
            la = math.log(a)
            m = int(a * m_lo_scale) + 1  # below this, z is past the cutoff
            while m <= nt:
                e1, ex = _e1_exp(la - lntau[m], s_lo, inv_ds, ds,
                                 e1v, e1d, exv, exd)
                tau = taus[m]
                psum[m] += w * ((tau + a) * e1 - tau * ex)
                m += 1


@njit(cache=True)
def _accum_psi_explicit(psum, xs, ys, ws, taus, lntau, m_lo_scale,
                        s_lo, inv_ds, ds, e1v, e1d, exv, exd):
    """Same as _accum_psi_tensor for an explicit node-pair list."""
    nt = taus.shape[0] - 1
    for q in range(xs.shape[0]):
        dx = xs[q, 0] - ys[q, 0]
        dy = xs[q, 1] - ys[q, 1]
        a = 0.25 * (dx * dx + dy * dy)
        w = ws[q]
        la = math.log(a)
        m = int(a * m_lo_scale) + 1
        while m <= nt:
            e1, ex = _e1_exp(la - lntau[m], s_lo, inv_ds, ds,
                             e1v, e1d, exv, exd)
            tau = taus[m]
            psum[m] += w * ((tau + a) * e1 - tau * ex)
            m += 1


@njit(cache=True)
def _write_second_diff(blocks, i, j, psum, nt):
    """Convert a psi table to lag entries; valid to mirror because the
    kernel depends on the points only through their distance."""
    for k in range(nt):
        v = psum[k + 1] - 2.0 * psum[k]
        if k > 0:
            v += psum[k - 1]
        v *= INV_4PI
        blocks[k, i, j] = v
        blocks[k, j, i] = v


@njit(cache=True, parallel=True)
def assemble_blocks_p0(sep_pts, sep_w, line_r_pts, line_r_w, line_l_pts,
                       line_l_w, coin_x, coin_y, coin_w, taus, lntau,
                       m_lo_scale, s_lo, inv_ds, ds, e1v, e1d, exv, exd,
                       blocks):
    """Fill blocks (nt, n, n) for the piecewise-constant single layer.

    Map over test panels i; iteration i owns the coincident pair (i,i),
    the neighbour pair (i, i+1) and all separated pairs (i, j), j < i-1,
    each written (with its mirror) by no other iteration.
    """
    n = sep_pts.shape[0]
    nt = taus.shape[0] - 1
    for i in prange(n):
        psum = np.zeros(nt + 1)
        _accum_psi_explicit(psum, coin_x[i], coin_y[i], coin_w[i], taus,
                            lntau, m_lo_scale, s_lo, inv_ds, ds,
                            e1v, e1d, exv, exd)
        _write_second_diff(blocks, i, i, psum, nt)

        ip1 = (i + 1) % n
        psum = np.zeros(nt + 1)
        _accum_psi_tensor(psum, line_r_pts, line_r_w, i, line_l_pts,
                          line_l_w, ip1, taus, lntau, m_lo_scale,
                          s_lo, inv_ds, ds, e1v, e1d, exv, exd)
        _write_second_diff(blocks, i, ip1, psum, nt)

        for j in range(i - 1):
            if i == n - 1 and j == 0:
                continue  # wrap-around neighbours, handled as (n-1, 0)
            psum = np.zeros(nt + 1)
            _accum_psi_tensor(psum, sep_pts, sep_w, i, sep_pts, sep_w, j,
                              taus, lntau, m_lo_scale, s_lo, inv_ds, ds,
                              e1v, e1d, exv, exd)
            _write_second_diff(blocks, i, j, psum, nt)


@njit(cache=True)
def _kpart_explicit(acc, xs, ys, ns, us, ws, tflat, lnt, wt, cell_of,
                    modes, tpows, amps, facs, s_lo, inv_ds, ds,
                    e1v, e1d, exv, exd):
    """Accumulate the double-layer data operator over explicit node pairs.

    acc[c] collects the test integral for time cell c of the given test
    panel; the s-integral of s^p against the kernel's normal derivative
    is in closed form via the K_m family at each test time node.
    """
    nq = tflat.shape[0]
    ntr = modes.shape[0]
    two_pi = 2.0 * math.pi
    for q in range(xs.shape[0]):
        dx = xs[q, 0] - ys[q, 0]
        dy = xs[q, 1] - ys[q, 1]
        a = 0.25 * (dx * dx + dy * dy)
        bdot = ns[q, 0] * dx + ns[q, 1] * dy
        la = math.log(a)
        base = ws[q] * bdot * INV_8PI
        for it in range(ntr):
            facs[it] = amps[it] * math.cos(two_pi * modes[it] * us[q])
        for tq in range(nq):
            t = tflat[tq]
            if a >= t * 60.0:
                continue  # kernel below table resolution
            e1, ex = _e1_exp(la - lnt[tq], s_lo, inv_ds, ds,
                             e1v, e1d, exv, exd)
            km2 = ex / a
            km1 = e1
            k0 = t * ex - a * km1
            k1 = 0.5 * (t * t * ex - a * k0)
            val = 0.0
            for it in range(ntr):
                p = tpows[it]
                if p == 1:
                    m = t * km2 - km1
                elif p == 2:
                    m = t * (t * km2 - 2.0 * km1) + k0
                else:
                    m = t * (t * (t * km2 - 3.0 * km1) + 3.0 * k0) - k1
                val += facs[it] * m
            acc[cell_of[tq]] += wt[tq] * base * val


@njit(cache=True)
def _tensor_to_explicit(pts_a, w_a, ia, pts_b, w_b, ub, nb, ib,
                        xs, ys, ns, us, ws):
    qa = pts_a.shape[1]
    qb = pts_b.shape[1]
    q = 0
    for i in range(qa):
        for j in range(qb):
            xs[q, 0] = pts_a[ia, i, 0]
            xs[q, 1] = pts_a[ia, i, 1]
            ys[q, 0] = pts_b[ib, j, 0]
            ys[q, 1] = pts_b[ib, j, 1]
            ns[q, 0] = nb[ib, j, 0]
            ns[q, 1] = nb[ib, j, 1]
            us[q] = ub[ib, j]
            ws[q] = w_a[ia, i] * w_b[ib, j]
            q += 1


@njit(cache=True, parallel=True)
def rhs_kpart_p0(sep_pts, sep_w, sep_u, sep_nrm,
                 line_r_pts, line_r_w, line_r_u, line_r_nrm,
                 line_l_pts, line_l_w, line_l_u, line_l_nrm,
                 coin_x, coin_y, coin_w, coin_uy, coin_ny,
                 tflat, lnt, wt, cell_of, modes, tpows, amps,
                 s_lo, inv_ds, ds, e1v, e1d, exv, exd, out):
    """Fill out (nt, n) with the double-layer data-operator vector.

    Map over test panels; iteration i is the only writer of out[:, i].
    """
    n = sep_pts.shape[0]
    nt = out.shape[0]
    q_sep = sep_pts.shape[1]
    q_adj = line_r_pts.shape[1] * line_l_pts.shape[1]
    ntr = modes.shape[0]
    for i in prange(n):
        acc = np.zeros(nt)
        facs = np.empty(ntr)
        xs = np.empty((q_adj, 2))
        ys = np.empty((q_adj, 2))
        ns = np.empty((q_adj, 2))
        us = np.empty(q_adj)
        ws = np.empty(q_adj)

        _kpart_explicit(acc, coin_x[i], coin_y[i], coin_ny[i], coin_uy[i],
                        coin_w[i], tflat, lnt, wt, cell_of, modes, tpows,
                        amps, facs, s_lo, inv_ds, ds, e1v, e1d, exv, exd)

        ip1 = (i + 1) % n
        _tensor_to_explicit(line_r_pts, line_r_w, i, line_l_pts, line_l_w,
                            line_l_u, line_l_nrm, ip1, xs, ys, ns, us, ws)
        _kpart_explicit(acc, xs, ys, ns, us, ws, tflat, lnt, wt, cell_of,
                        modes, tpows, amps, facs, s_lo, inv_ds, ds,
                        e1v, e1d, exv, exd)
        im1 = (i - 1) % n
        _tensor_to_explicit(line_l_pts, line_l_w, i, line_r_pts, line_r_w,
                            line_r_u, line_r_nrm, im1, xs, ys, ns, us, ws)
        _kpart_explicit(acc, xs, ys, ns, us, ws, tflat, lnt, wt, cell_of,
                        modes, tpows, amps, facs, s_lo, inv_ds, ds,
                        e1v, e1d, exv, exd)

        qq = q_sep * q_sep
        for j in range(n):
            d = i - j
            if d < 0:
                d = -d
            dw = n - d
            if d < 2 or dw < 2:
                continue
            _tensor_to_explicit(sep_pts, sep_w, i, sep_pts, sep_w,
                                sep_u, sep_nrm, j, xs[:qq], ys[:qq],
                                ns[:qq], us[:qq], ws[:qq])
            _kpart_explicit(acc, xs[:qq], ys[:qq], ns[:qq], us[:qq],
                            ws[:qq], tflat, lnt, wt, cell_of, modes,
                            tpows, amps, facs, s_lo, inv_ds, ds,
                            e1v, e1d, exv, exd)
        for c in range(nt):
            out[c, i] = acc[c]
