"""Galerkin assembly of the single-layer operator and right-hand sides.

The matrix of the single-layer operator on a full tensor-product space
is block lower triangular in time (causality) and block Toeplitz on the
uniform time grid, so only the nt lag blocks A^(k) are assembled and
stored.  Spatial integration classifies each panel pair as coincident,
adjacent or separated and applies the corresponding rule from
``quadrature``; the time integrals are closed forms from ``special`` /
``kernel``, so no singular dimension is ever quadratured.

Two execution lanes produce identical blocks up to roundoff: a compiled
numba lane for the piecewise-constant hot path and a vectorised numpy
lane (the reference, and the only lane for p = 1).  Selection lives in
``backend``.  Assembly is organised as a map over test panels in which
every matrix entry is written by exactly one work item, so results are
deterministic and independent of the worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _assemble_numpy as _np_lane
from . import backend
from .indexsets import DiscreteSpace
from .quadrature import (GAUSS_N_CORNER, GAUSS_N_SEPARATED, gauss_on_interval,
                         graded_rule, pair_rules)
from .special import Z_CUTOFF, kernel_tables

# Gauss nodes per time cell when integrating data operators in time, and
# per panel for plain boundary-data inner products.
T_GAUSS_N = 8
DATA_GAUSS_N = 12

_HEADER_DTYPE = np.dtype("<i8")


@dataclass(frozen=True)
class CausalBlockMatrix:
    """Lag blocks of a causal, time-stationary Galerkin matrix.

    blocks[k] couples time cell j to time cell j + k; blocks with
    negative lag are identically zero and never stored.  The dense
    matrix it represents is block lower triangular with nt block rows.
    """

    blocks: np.ndarray  # (nt, B, B)
    px: int
    pt: int
    levels: tuple[int, int]
    m0: int

    @property
    def nt(self) -> int:
        return self.blocks.shape[0]

    @property
    def block_size(self) -> int:
        return self.blocks.shape[1]

    @property
    def n_panels(self) -> int:
        return self.block_size // ((self.px + 1) * (self.pt + 1))

    @property
    def shape(self) -> tuple[int, int]:
        n = self.nt * self.block_size
        return (n, n)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Causal block convolution y_i = sum_{k <= i} A^(k) x_{i-k}."""
        nt, b = self.nt, self.block_size
        xm = np.asarray(x, dtype=float).reshape(nt, b)
        out = np.zeros_like(xm)
        for k in range(nt):
            out[k:] += xm[: nt - k] @ self.blocks[k].T
        return out.reshape(np.shape(x))

    def dense(self) -> np.ndarray:
        """Expand to the full (nt B, nt B) dense matrix."""
        nt, b = self.nt, self.block_size
        out = np.zeros((nt * b, nt * b))
        for i in range(nt):
            for j in range(i + 1):
                out[i * b:(i + 1) * b, j * b:(j + 1) * b] = \
                    self.blocks[i - j]
        return out

    def save_binary(self, path) -> None:
        """Dump as a flat header (n_panels, nt, px, pt, lx, lt) of
        little-endian int64 followed by the lag-major '<f8' blocks."""
        header = np.array(
            [self.n_panels, self.nt, self.px, self.pt, *self.levels],
            dtype=_HEADER_DTYPE)
        with open(path, "wb") as f:
            f.write(header.tobytes())
            f.write(np.ascontiguousarray(self.blocks, dtype="<f8").tobytes())

    @classmethod
    def load_binary(cls, path) -> "CausalBlockMatrix":
        with open(path, "rb") as f:
            raw = f.read()
        header = np.frombuffer(raw[:48], dtype=_HEADER_DTYPE)
        n_panels, nt, px, pt, lx, lt = (int(v) for v in header)
        b = n_panels * (px + 1) * (pt + 1)
        blocks = np.frombuffer(raw[48:], dtype="<f8").reshape(nt, b, b)
        return cls(blocks.copy(), px, pt, (lx, lt), n_panels >> lx)


class PanelTables(NamedTuple):
    """Per-panel quadrature node data shared by all assembly entry points.

    Three node families exist per panel: the separated Gauss line, and
    two graded lines clustering toward the left/right endpoint (tensor
    factors of the adjacent-pair rule).  The coincident rule is stored
    as explicit node pairs.  Weights include the rule weight, the
    parameter measure and the curve jacobian.
    """

    sep_ref: np.ndarray      # (q,) reference coords in [0, 1]
    sep_u: np.ndarray        # (n, q) curve parameters
    sep_pts: np.ndarray      # (n, q, 2)
    sep_nrm: np.ndarray      # (n, q, 2)
    sep_w: np.ndarray        # (n, q)
    line_l_ref: np.ndarray
    line_l_u: np.ndarray
    line_l_pts: np.ndarray
    line_l_nrm: np.ndarray
    line_l_w: np.ndarray
    line_r_ref: np.ndarray
    line_r_u: np.ndarray
    line_r_pts: np.ndarray
    line_r_nrm: np.ndarray
    line_r_w: np.ndarray
    coin_alpha: np.ndarray   # (qc,) test-side reference coords
    coin_beta: np.ndarray    # (qc,) trial-side reference coords
    coin_x: np.ndarray       # (n, qc, 2)
    coin_y: np.ndarray       # (n, qc, 2)
    coin_uy: np.ndarray      # (n, qc)
    coin_ny: np.ndarray      # (n, qc, 2)
    coin_w: np.ndarray       # (n, qc) combined pair weight


def panel_tables(space: DiscreteSpace) -> PanelTables:
    """Evaluate curve geometry at every quadrature node family."""
    curve = space.curve
    n = space.n_panels
    du = space.hx
    offs = np.arange(n)[:, None]

    def line_family(ref, wref):
        u = (offs + ref[None, :]) * du
        jac = curve.jacobian(u)
        return u, curve.point(u), curve.normal(u), wref[None, :] * du * jac

    xg, wg = gauss_on_interval(0.0, 1.0, GAUSS_N_SEPARATED)
    sep = line_family(xg, wg)
    gl, glw = graded_rule(GAUSS_N_CORNER)
    lin_l = line_family(gl, glw)
    lin_r = line_family(1.0 - gl, glw)

    rule = pair_rules()["coincident"]
    ux = (offs + rule.alpha[None, :]) * du
    uy = (offs + rule.beta[None, :]) * du
    coin_w = (rule.weight[None, :] * du * du
              * curve.jacobian(ux) * curve.jacobian(uy))
    return PanelTables(
        xg, *sep, gl, *lin_l, 1.0 - gl, *lin_r,
        rule.alpha, rule.beta, curve.point(ux), curve.point(uy),
        uy, curve.normal(uy), coin_w)


def _check_assembly_space(space: DiscreteSpace) -> None:
    if not space.index_set.is_rectangle():
        raise ValueError(
            "assembly requires a full tensor-product space; assemble on "
            "space.bounding_space() and restrict afterwards")
    if space.n_panels < 3:
        raise ValueError(
            "panel-pair classification needs at least 3 panels per level")


def _time_grid(space: DiscreteSpace):
    nt, ht = space.n_cells, space.ht
    taus = ht * np.arange(nt + 1)
    lntau = np.zeros(nt + 1)
    lntau[1:] = np.log(taus[1:])
    return taus, lntau


def assemble_single_layer(space: DiscreteSpace, exploit_toeplitz: bool = True):
    """Galerkin matrix of the single-layer heat operator.

    Parameters
    ----------
    space : DiscreteSpace
        Full tensor-product space (use ``bounding_space()`` for a
        general downset).
    exploit_toeplitz : bool
        When True (default), assemble the nt lag blocks once and return
        a :class:`CausalBlockMatrix`.  When False, integrate every one
        of the nt(nt+1)/2 cell pairs independently at its own time
        offsets and return the resulting full dense matrix; this is a
        validation path for the lag-stationarity property (p = 0 only).

    Returns
    -------
    CausalBlockMatrix or ndarray
    """
    _check_assembly_space(space)
    tables = panel_tables(space)
    if not exploit_toeplitz:
        return _np_lane.assemble_dense_slow(tables, space)
    if backend.USE_NUMBA and space.px == 0 and space.pt == 0:
        from . import _assemble_numba as _nb_lane

        nt, n = space.n_cells, space.n_panels
        taus, lntau = _time_grid(space)
        blocks = np.zeros((nt, n, n))
        tab = kernel_tables()
        _nb_lane.assemble_blocks_p0(
            tables.sep_pts, tables.sep_w,
            tables.line_r_pts, tables.line_r_w,
            tables.line_l_pts, tables.line_l_w,
            tables.coin_x, tables.coin_y, tables.coin_w,
            taus, lntau, 1.0 / (Z_CUTOFF * space.ht),
            tab.s_lo, tab.inv_ds, tab.ds,
            tab.e1_val, tab.e1_der, tab.ex_val, tab.ex_der,
            blocks)
    else:
        blocks = _np_lane.assemble_blocks(tables, space)
    return CausalBlockMatrix(blocks, space.px, space.pt, space.levels,
                             space.m0)


def _check_terms(terms) -> list:
    out = []
    for mode, tpow, amp in terms:
        tpow = int(tpow)
        if tpow < 1 or tpow > 3:
            raise ValueError(
                "data time powers must lie in 1..3 (zero initial trace)")
        out.append((float(mode), tpow, float(amp)))
    return out


def poly_time_integrals(nt: int, ht: float, tpow: int, pt: int) -> np.ndarray:
    """Per-cell integrals of s^tpow against the temporal test basis."""
    ta = ht * np.arange(nt)
    tb = ta + ht
    ip = (tb ** (tpow + 1) - ta ** (tpow + 1)) / (tpow + 1)
    cols = [ip]
    if pt == 1:
        ip1 = (tb ** (tpow + 2) - ta ** (tpow + 2)) / (tpow + 2)
        cols.append(math.sqrt(3.0) * ((2.0 / ht) * (ip1 - ta * ip) - ip))
    return np.stack(cols, axis=1)


def assemble_rhs_indirect(space: DiscreteSpace, terms) -> np.ndarray:
    """Inner products <g, basis> of polynomial-in-time Fourier data.

    terms is a sequence of (mode, tpow, amp) describing
    g(u, s) = sum amp * s^tpow * cos(2 pi mode u).  Time integration is
    exact; space uses a fixed Gauss rule per panel.  Returns the flat
    right-hand-side vector in the nodal layout.
    """
    _check_assembly_space(space)
    terms = _check_terms(terms)
    curve = space.curve
    n, nt, ht = space.n_panels, space.n_cells, space.ht
    px, pt = space.px, space.pt
    xg, wg = gauss_on_interval(0.0, 1.0, DATA_GAUSS_N)
    u = (np.arange(n)[:, None] + xg[None, :]) * space.hx
    w = wg[None, :] * space.hx * curve.jacobian(u)
    phi = _np_lane.legendre_factors(xg, px)
    out = np.zeros((nt, pt + 1, n, px + 1))
    for mode, tpow, amp in terms:
        s_int = np.einsum("nq,nq,xq->nx", w,
                          amp * np.cos(2.0 * math.pi * mode * u), phi)
        t_int = poly_time_integrals(nt, ht, tpow, pt)
        out += t_int[:, :, None, None] * s_int[None, None, :, :]
    return out.ravel()


def _time_test_rule(space: DiscreteSpace):
    """Flat test-time rule: nodes, weights, basis values, owning cell.

    The first cell gets a rule graded toward t = 0 because the
    time-integrated data kernel switches on exponentially sharply there
    for separated panels; a plain Gauss rule on that cell loses several
    digits.  All later cells see an analytic integrand.
    """
    nt, ht = space.n_cells, space.ht
    xg, wg = gauss_on_interval(0.0, 1.0, T_GAUSS_N)
    x0, w0 = graded_rule(T_GAUSS_N)
    ref = [x0] + [xg] * (nt - 1)
    wts = [w0] + [wg] * (nt - 1)
    t_flat = np.concatenate([(k + r) * ht for k, r in enumerate(ref)])
    w_flat = np.concatenate(wts) * ht
    phi = np.concatenate(
        [_np_lane.legendre_factors(r, space.pt) for r in ref], axis=1)
    cell_of = np.concatenate(
        [np.full(r.size, k, dtype=np.int64) for k, r in enumerate(ref)])
    return t_flat, w_flat, phi, cell_of


def assemble_rhs_direct(space: DiscreteSpace, terms) -> np.ndarray:
    """Right-hand side (1/2 + K) g tested against the basis.

    The double-layer part applies the kernel's normal derivative to the
    data in closed form in time (the data is polynomial in s), then
    quadratures the two spatial parameters with the panel-pair rules and
    the test time variable with a per-cell Gauss rule.
    """
    _check_assembly_space(space)
    terms = _check_terms(terms)
    half = 0.5 * assemble_rhs_indirect(space, terms)
    t_flat, w_flat, t_phi, cell_of = _time_test_rule(space)
    tables = panel_tables(space)
    if backend.USE_NUMBA and space.px == 0 and space.pt == 0:
        from . import _assemble_numba as _nb_lane

        nt, n = space.n_cells, space.n_panels
        tab = kernel_tables()
        out = np.zeros((nt, n))
        _nb_lane.rhs_kpart_p0(
            tables.sep_pts, tables.sep_w, tables.sep_u, tables.sep_nrm,
            tables.line_r_pts, tables.line_r_w, tables.line_r_u,
            tables.line_r_nrm,
            tables.line_l_pts, tables.line_l_w, tables.line_l_u,
            tables.line_l_nrm,
            tables.coin_x, tables.coin_y, tables.coin_w,
            tables.coin_uy, tables.coin_ny,
            t_flat, np.log(t_flat), w_flat, cell_of,
            np.array([m for m, _, _ in terms]),
            np.array([p for _, p, _ in terms], dtype=np.int64),
            np.array([a for _, _, a in terms]),
            tab.s_lo, tab.inv_ds, tab.ds,
            tab.e1_val, tab.e1_der, tab.ex_val, tab.ex_der,
            out)
        kpart = out[:, None, :, None]
    else:
        kpart = _np_lane.rhs_kpart(tables, space, terms,
                                   t_flat, w_flat, t_phi, cell_of)
    return half + kpart.ravel()
