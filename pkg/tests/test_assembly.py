"""Galerkin assembly against adaptive-quadrature oracles and invariants.

Frozen constants below were produced by the oracles in ``oracles.py``
(adaptive quadrature only, no shared code with the library); a couple of
cheap entries are also recomputed live to guard the oracles themselves.
"""

import os
import tempfile

import numpy as np
import pytest

from heatbem import backend
from heatbem.assembly import (
    CausalBlockMatrix,
    assemble_rhs_direct,
    assemble_rhs_indirect,
    assemble_single_layer,
    panel_tables,
    _time_test_rule,
)
from heatbem import _assemble_numpy as np_lane
from heatbem.geometry import BoundaryCurve
from heatbem.indexsets import DiscreteSpace, sparse_set
from oracles import galerkin_entry_quad, kpart_rhs_entry_quad

# Operator entries on the unit circle, 4 panels x 1 cell, T = 4,
# piecewise constant: one representative per pair class, computed by 4D
# adaptive quadrature.  The matrix is circulant, columns keyed by
# (col - row) mod 4.
ENTRY_DIAG = 2.6981839925842848e+00
ENTRY_ADJ = 9.3496120698157292e-01
ENTRY_OPP = 4.6008188223596197e-01

# Double-layer data term <K g, indicator> restricted to separated source
# panels, unit circle, 8 panels x 2 cells, data g = s^2 cos(2 pi u):
# keys (test panel, test cell).
KPART_SEPARATED = {
    (0, 0): 4.4719181899425087e-02,
    (0, 1): 6.8217296824383555e-01,
    (3, 1): -6.8217296824383544e-01,
}

TERMS_T2C1 = ((1.0, 2, 1.0),)


@pytest.fixture(scope="module")
def circle():
    return BoundaryCurve.circle(1.0)


@pytest.fixture(scope="module")
def space00(circle):
    return DiscreteSpace.full_tensor(circle, 0, 0)


@pytest.fixture(scope="module")
def space22(circle):
    return DiscreteSpace.full_tensor(circle, 2, 2)


@pytest.fixture(scope="module")
def op22(space22):
    return assemble_single_layer(space22)


def test_operator_entries_match_adaptive_quadrature(space00):
    A = assemble_single_layer(space00)
    assert A.blocks.shape == (1, 4, 4)
    expected = [ENTRY_DIAG, ENTRY_ADJ, ENTRY_OPP, ENTRY_ADJ]
    for i in range(4):
        for j in range(4):
            want = expected[(j - i) % 4]
            assert A.blocks[0, i, j] == pytest.approx(want, rel=1e-8)


def test_separated_entry_matches_live_quadrature(circle, space00):
    A = assemble_single_layer(space00)
    live = galerkin_entry_quad(circle, 0, 2, space00.hx, 0, 0, space00.ht)
    assert live == pytest.approx(ENTRY_OPP, rel=1e-9)
    assert A.blocks[0, 0, 2] == pytest.approx(live, rel=1e-8)


def test_block_storage_is_lag_major(space22, op22):
    nt, b = space22.n_cells, space22.block_size
    assert op22.blocks.shape == (nt, b, b)
    assert op22.shape == (nt * b, nt * b)
    dense = op22.dense().reshape(nt, b, nt, b)
    for i in range(nt):
        for j in range(nt):
            blk = dense[i, :, j, :]
            if j > i:
                assert np.all(blk == 0.0)
            else:
                assert np.array_equal(blk, op22.blocks[i - j])


def test_redundant_dense_assembly_matches_block_path(space22, op22):
    dense_slow = assemble_single_layer(space22, exploit_toeplitz=False)
    assert np.max(np.abs(dense_slow - op22.dense())) < 1e-12


@pytest.mark.skipif(not backend.HAVE_NUMBA, reason="numba not installed")
def test_lane_equivalence(space22):
    prev = backend.active_backend()
    try:
        backend.set_backend("numpy")
        ref = assemble_single_layer(space22).blocks
        backend.set_backend("numba")
        hot = assemble_single_layer(space22).blocks
    finally:
        backend.set_backend(prev)
    np.testing.assert_allclose(hot, ref, rtol=1e-7, atol=1e-11)


def test_assembly_is_deterministic(space22, op22):
    again = assemble_single_layer(space22)
    assert np.array_equal(op22.blocks, again.blocks)


@pytest.mark.parametrize("levels,px,pt", [((4, 4), 0, 0), ((2, 2), 1, 1)])
def test_symmetric_part_positive_definite(circle, levels, px, pt):
    space = DiscreteSpace.full_tensor(circle, *levels, px=px, pt=pt)
    dense = assemble_single_layer(space).dense()
    assert dense.shape[0] <= 4096
    sym = 0.5 * (dense + dense.T)
    np.linalg.cholesky(sym)  # raises if not positive definite


def test_two_scale_consistency_in_time(circle, space22, op22):
    fine = DiscreteSpace.full_tensor(circle, 2, 3)
    nf, ntf = fine.n_panels, fine.n_cells
    nt = space22.n_cells
    df = assemble_single_layer(fine).dense().reshape(ntf, nf, ntf, nf)
    agg = df.reshape(nt, 2, nf, nt, 2, nf).sum(axis=(1, 4))
    dc = op22.dense().reshape(nt, nf, nt, nf)
    assert np.max(np.abs(agg - dc)) < 1e-10


def test_two_scale_consistency_in_space(circle, space22, op22):
    fine = DiscreteSpace.full_tensor(circle, 3, 2)
    nf, nt = fine.n_panels, fine.n_cells
    nc = space22.n_panels
    df = assemble_single_layer(fine).dense().reshape(nt, nf, nt, nf)
    agg = df.reshape(nt, nc, 2, nt, nc, 2).sum(axis=(2, 5))
    dc = op22.dense().reshape(nt, nc, nt, nc)
    assert np.max(np.abs(agg - dc)) < 1e-10


def test_matvec_matches_dense_and_is_linear(op22):
    rng = np.random.default_rng(20260817)
    dense = op22.dense()
    x = rng.standard_normal(op22.shape[1])
    y = rng.standard_normal(op22.shape[1])
    np.testing.assert_allclose(op22.matvec(x), dense @ x,
                               rtol=1e-12, atol=1e-14)
    lhs = op22.matvec(2.5 * x - 3.0 * y)
    rhs = 2.5 * op22.matvec(x) - 3.0 * op22.matvec(y)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-13)


def test_binary_roundtrip_and_header(space22, op22, tmp_path):
    path = tmp_path / "operator.bin"
    op22.save_binary(path)
    raw = np.fromfile(path, dtype="<i8", count=6)
    assert list(raw) == [space22.n_panels, space22.n_cells,
                         space22.px, space22.pt, 2, 2]
    back = CausalBlockMatrix.load_binary(path)
    assert np.array_equal(back.blocks, op22.blocks)
    assert (back.px, back.pt, back.levels) == (op22.px, op22.pt, op22.levels)


def test_higher_degree_contains_low_degree_entries(circle):
    space0 = DiscreteSpace.full_tensor(circle, 1, 1)
    space1 = DiscreteSpace.full_tensor(circle, 1, 1, px=1, pt=1)
    a0 = assemble_single_layer(space0)
    a1 = assemble_single_layer(space1)
    n = space0.n_panels
    # mode-(0,0) rows/cols of the degree-1 blocks are the degree-0 blocks
    sub = a1.blocks[:, : n * 2 : 2, : n * 2 : 2]
    np.testing.assert_allclose(sub, a0.blocks, rtol=1e-12, atol=1e-15)


def test_indirect_rhs_exact_values(space00):
    b = assemble_rhs_indirect(space00, TERMS_T2C1)
    want = (64.0 / 3.0) * np.array([1.0, -1.0, -1.0, 1.0])
    np.testing.assert_allclose(b, want, rtol=1e-10)


def test_indirect_rhs_antipodal_symmetry(circle):
    space = DiscreteSpace.full_tensor(circle, 2, 2)
    n, nt = space.n_panels, space.n_cells
    odd = assemble_rhs_indirect(space, ((1.0, 2, 1.0),)).reshape(nt, n)
    even = assemble_rhs_indirect(space, ((2.0, 3, 0.7),)).reshape(nt, n)
    half = n // 2
    np.testing.assert_allclose(odd, -np.roll(odd, half, axis=1),
                               rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(even, np.roll(even, half, axis=1),
                               rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("assemble", [assemble_rhs_indirect,
                                      assemble_rhs_direct])
def test_rhs_linearity(circle, assemble):
    space = DiscreteSpace.full_tensor(circle, 1, 1)
    t1 = ((1.0, 2, 1.0),)
    t2 = ((2.0, 1, -0.6),)
    combined = t1 + t2
    b1 = assemble(space, t1)
    b2 = assemble(space, t2)
    b12 = assemble(space, combined)
    np.testing.assert_allclose(b12, b1 + b2, rtol=1e-12, atol=1e-12)
    scaled = assemble(space, ((1.0, 2, 2.5),))
    np.testing.assert_allclose(scaled, 2.5 * b1, rtol=1e-12, atol=1e-12)


def test_kpart_separated_matches_quadrature(circle):
    space = DiscreteSpace.full_tensor(circle, 1, 1)
    tables = panel_tables(space)
    t_flat, w_flat, t_phi, cell_of = _time_test_rule(space)
    out = np_lane.rhs_kpart(tables, space, list(TERMS_T2C1), t_flat, w_flat,
                            t_phi, cell_of, classes=("separated",))
    for (panel, cell), want in KPART_SEPARATED.items():
        assert out[cell, 0, panel, 0] == pytest.approx(want, rel=1e-9)


def test_kpart_separated_matches_live_quadrature(circle):
    space = DiscreteSpace.full_tensor(circle, 1, 1)
    n = space.n_panels
    tables = panel_tables(space)
    t_flat, w_flat, t_phi, cell_of = _time_test_rule(space)
    out = np_lane.rhs_kpart(tables, space, list(TERMS_T2C1), t_flat, w_flat,
                            t_phi, cell_of, classes=("separated",))
    seps = [j for j in range(n) if min((0 - j) % n, (j - 0) % n) >= 2]
    live = kpart_rhs_entry_quad(circle, TERMS_T2C1, 0, space.hx, 1, space.ht,
                                seps, tol=1e-9)
    assert live == pytest.approx(KPART_SEPARATED[(0, 1)], rel=1e-9)
    assert out[1, 0, 0, 0] == pytest.approx(live, rel=1e-9)


@pytest.mark.skipif(not backend.HAVE_NUMBA, reason="numba not installed")
def test_direct_rhs_lane_equivalence(circle):
    space = DiscreteSpace.full_tensor(circle, 1, 1)
    prev = backend.active_backend()
    try:
        backend.set_backend("numpy")
        ref = assemble_rhs_direct(space, TERMS_T2C1)
        backend.set_backend("numba")
        hot = assemble_rhs_direct(space, TERMS_T2C1)
    finally:
        backend.set_backend(prev)
    np.testing.assert_allclose(hot, ref, rtol=1e-7, atol=1e-11)


def test_direct_rhs_is_half_identity_plus_data_term(circle):
    space = DiscreteSpace.full_tensor(circle, 1, 1)
    prev = backend.active_backend()
    try:
        backend.set_backend("numpy")
        direct = assemble_rhs_direct(space, TERMS_T2C1)
    finally:
        backend.set_backend(prev)
    tables = panel_tables(space)
    t_flat, w_flat, t_phi, cell_of = _time_test_rule(space)
    kpart = np_lane.rhs_kpart(tables, space, list(TERMS_T2C1),
                              t_flat, w_flat, t_phi, cell_of)
    want = 0.5 * assemble_rhs_indirect(space, TERMS_T2C1) + kpart.ravel()
    np.testing.assert_allclose(direct, want, rtol=1e-13, atol=1e-14)


def test_zero_amplitude_gives_zero_rhs(circle):
    space = DiscreteSpace.full_tensor(circle, 1, 1)
    assert not np.any(assemble_rhs_indirect(space, ((1.0, 2, 0.0),)))


@pytest.mark.parametrize("tpow", [0, 4, -1])
def test_data_time_power_is_restricted(circle, tpow):
    space = DiscreteSpace.full_tensor(circle, 1, 1)
    with pytest.raises(ValueError):
        assemble_rhs_indirect(space, ((1.0, tpow, 1.0),))


def test_too_few_panels_rejected(circle):
    space = DiscreteSpace.full_tensor(circle, 0, 0, m0=2)
    with pytest.raises(ValueError):
        assemble_single_layer(space)


def test_non_rectangular_space_rejected(circle):
    sparse = DiscreteSpace(curve=circle, index_set=sparse_set(2, 1))
    with pytest.raises(ValueError):
        assemble_single_layer(sparse)


# Lag-0 entries of the bilinear-in-space-and-time operator on the disk at
# levels (0, 0), checked against adaptive-quadrature values computed once
# with scipy.integrate (worst observed oracle agreement 2.2e-9).  Rows and
# columns run time-mode major, panel next, space-mode fastest.
_P1_LAG0_ENTRIES = [
    # (pi, pj, tmi, tmj, xmi, xmj, value)
    (0, 2, 1, 1, 1, 1, -1.8915873329376189e-02),
    (0, 2, 1, 0, 0, 0, +2.8167674207447646e-01),
    (0, 2, 0, 1, 0, 0, -2.8167674207447646e-01),
    (0, 2, 0, 0, 1, 0, +3.1875795285640567e-17),
    (0, 2, 0, 0, 0, 1, -2.7672460119368006e-17),
    (0, 1, 1, 0, 1, 0, +6.9998293797475547e-02),
    (0, 1, 1, 1, 0, 1, -2.5269596159325081e-01),
    (0, 0, 1, 0, 0, 0, +5.9313656252000824e-01),
    (0, 0, 1, 1, 0, 0, +1.7672946519753472e+00),
    (0, 0, 0, 0, 1, 1, +1.0806574210499853e+00),
    (0, 0, 1, 1, 1, 1, +9.9177504961612128e-01),
]


def test_bilinear_degree_lag0_frozen_entries(circle):
    space = DiscreteSpace.full_tensor(circle, 0, 0, px=1, pt=1)
    block = assemble_single_layer(space).blocks[0]
    nx = space.n_panels
    for pi, pj, tmi, tmj, xmi, xmj, want in _P1_LAG0_ENTRIES:
        got = block[tmi * 2 * nx + pi * 2 + xmi, tmj * 2 * nx + pj * 2 + xmj]
        scale = max(abs(want), 1e-3)
        assert abs(got - want) <= 5e-9 * scale, (pi, pj, tmi, tmj, xmi, xmj)
