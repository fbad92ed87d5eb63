"""Causal solver, combination technique, sparse Galerkin solve, and
adaptive index-set growth.

The full-tensor system is block lower triangular with identical diagonal
blocks (block Toeplitz), so one LU factorisation of the lag-0 block
drives a block forward substitution.  Sparse-grid solutions come in two
flavours: the combination technique (signed sum of small full-grid
solves) and the direct Galerkin solve on the hierarchical sparse space
(transform-restrict of the bounding tensor system; desk-scale only).
The adaptive loop grows a downset index set by accepting the frontier
index with the best benefit/cost ratio, where benefit is the surrogate
energy norm of the 2x2 surplus and cost is the grid cardinality.
"""

from __future__ import annotations

import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .assembly import (CausalBlockMatrix, assemble_rhs_direct,
                       assemble_rhs_indirect, assemble_single_layer)
from .geometry import BoundaryCurve
from .indexsets import (Density, DiscreteSpace, IndexSet, as_sigma2,
                        ceil_sigma_L, embed_nodal, haar_block_slices,
                        haar_matrix, hier_block_slices, sparse_set,
                        to_hierarchical, to_nodal)

RESIDUAL_TOL = 1e-10


def parallel_map(fn, items, max_workers=None):
    """Order-preserving parallel map for independent solve/assembly jobs.

    Results are collected in input order, so output never depends on the
    worker count.
    """
    items = list(items)
    if max_workers is None:
        env = os.environ.get("HEATBEM_WORKERS")
        max_workers = int(env) if env else min(4, os.cpu_count() or 1)
    if max_workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ProblemSpec:
    """A boundary-value problem instance: geometry, Dirichlet data, and
    the integral-equation formulation used to solve it.

    ``terms`` describes g(u, s) = sum amp * s^tpow * cos(2 pi mode u).
    ``method`` is "direct" (solve for the flux with rhs (1/2 + K)g) or
    "indirect" (single-layer ansatz with rhs <g, basis>).
    """

    curve: BoundaryCurve
    terms: tuple
    method: str = "direct"
    px: int = 0
    pt: int = 0
    T: float = 4.0
    m0: int = 4

    def __post_init__(self):
        if self.method not in ("direct", "indirect"):
            raise ValueError("method must be 'direct' or 'indirect'")
        object.__setattr__(self, "terms",
                           tuple((float(m), int(p), float(a))
                                 for m, p, a in self.terms))

    def space(self, lx: int, lt: int) -> DiscreteSpace:
        return DiscreteSpace.full_tensor(self.curve, lx, lt, self.px,
                                         self.pt, self.T, self.m0)

    def assemble_rhs(self, space: DiscreteSpace) -> np.ndarray:
        if self.method == "direct":
            return assemble_rhs_direct(space, self.terms)
        return assemble_rhs_indirect(space, self.terms)


def solve_full_grid(A: CausalBlockMatrix, rhs: np.ndarray,
                    space: DiscreteSpace | None = None):
    """Block forward substitution for the causal block-Toeplitz system.

    Factors the lag-0 block once (LU with partial pivoting) and reuses
    it for every time block.  Verifies the residual against
    ``RESIDUAL_TOL`` before returning.  Returns a Density when ``space``
    is given, otherwise the raw coefficient vector.
    """
    nt, bs = A.nt, A.block_size
    b = np.asarray(rhs, dtype=float).reshape(nt, bs)
    try:
        lu = lu_factor(A.blocks[0])
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guard
        raise RuntimeError("singular diagonal block") from exc
    x = np.empty_like(b)
    for i in range(nt):
        acc = b[i].copy()
        if i:
            # accumulated history: sum_k A^(k) x_{i-k}, k = 1..i
            acc -= np.einsum("kab,kb->a", A.blocks[1 : i + 1],
                             x[i - 1 :: -1], optimize=True)
        x[i] = lu_solve(lu, acc)
    flat = x.ravel()
    scale = np.max(np.abs(b))
    if scale > 0.0:
        resid = np.max(np.abs(A.matvec(flat) - rhs.ravel())) / scale
        if not resid <= RESIDUAL_TOL:
            raise RuntimeError(
                f"forward substitution residual {resid:.3e} exceeds "
                f"{RESIDUAL_TOL:.1e}")
    if space is None:
        return flat
    return Density(space, flat, "nodal")


def full_grid_solution(problem: ProblemSpec, lx: int, lt: int):
    """Assemble and solve one full-tensor grid.

    Returns (Density, assemble_seconds, solve_seconds).
    """
    space = problem.space(lx, lt)
    t0 = time.perf_counter()
    A = assemble_single_layer(space)
    rhs = problem.assemble_rhs(space)
    t1 = time.perf_counter()
    psi = solve_full_grid(A, rhs, space)
    t2 = time.perf_counter()
    return psi, t1 - t0, t2 - t1


# ---------------------------------------------------------------------------
# combination technique


@dataclass(frozen=True)
class CombinationPlan:
    """Signed full-grid terms of the combination-technique solution."""

    L: int
    sigma2: Fraction
    terms: tuple  # ((lx, lt), sign) pairs

    @property
    def plus_terms(self):
        return tuple(p for p, s in self.terms if s > 0)

    @property
    def minus_terms(self):
        return tuple(p for p, s in self.terms if s < 0)


def combination_plan(L: int, sigma2) -> CombinationPlan:
    """Signed level pairs of the combination formula.

    Plus terms satisfy ceil(sigma^2 lx) + lt = ceil(sigma L), minus
    terms the same with the right side reduced by one; terms whose time
    level would be negative are dropped.  For sigma = 1 this reduces to
    the classical pair of diagonals lx + lt = L and L - 1.
    """
    if L < 0:
        raise ValueError("L must be nonnegative")
    s2 = as_sigma2(sigma2)
    top = ceil_sigma_L(L, s2)
    terms = []
    for ell, sign in ((0, 1), (1, -1)):
        target = top - ell
        lx = 0
        while True:
            shift = math.ceil(s2 * lx)
            if shift > target:
                break
            terms.append(((lx, target - shift), sign))
            lx += 1
    return CombinationPlan(L, s2, tuple(terms))


def downset_combination_weights(index_set: IndexSet) -> dict:
    """Inclusion-exclusion weights making the signed sum of full-grid
    projections telescope to the sparse projection over the downset.

    weight(i, j) = sum over e in {0,1}^2 of (-1)^|e| [ (i,j)+e in set ];
    zero weights are omitted.
    """
    pairs = index_set.pairs
    out = {}
    for (i, j) in pairs:
        w = 0
        for di in (0, 1):
            for dj in (0, 1):
                if (i + di, j + dj) in pairs:
                    w += -1 if (di + dj) % 2 else 1
        if w:
            out[(i, j)] = w
    return out


@dataclass(frozen=True)
class CombinedSolution:
    """Signed collection of full-grid densities.

    Evaluation and error functionals of the combination are the signed
    sums of the per-term functionals.
    """

    parts: tuple  # (Density, sign) pairs
    assemble_seconds: float = 0.0
    solve_seconds: float = 0.0

    def dof_count(self) -> int:
        return sum(p.space.full_dof_count() for p, _ in self.parts)


def embed_combination(sol: CombinedSolution,
                      target: DiscreteSpace) -> np.ndarray:
    """Signed sum of the parts prolonged into one common space."""
    acc = np.zeros(target.full_dof_count())
    for part, sign in sol.parts:
        nodal = part if part.representation == "nodal" else to_nodal(part)
        acc += sign * embed_nodal(nodal, target).coefficients
    return acc


def solve_combination(plan: CombinationPlan,
                      problem: ProblemSpec) -> CombinedSolution:
    """Independent full-grid assemble+solve per plan term."""

    def job(term):
        pair, sign = term
        try:
            psi, ta, ts = full_grid_solution(problem, *pair)
        except Exception as exc:
            raise RuntimeError(
                f"combination term at levels {pair} failed: {exc}") from exc
        return psi, sign, ta, ts

    results = parallel_map(job, plan.terms)
    parts = tuple((psi, sign) for psi, sign, _, _ in results)
    ta = sum(r[2] for r in results)
    ts = sum(r[3] for r in results)
    return CombinedSolution(parts, ta, ts)


def solve_downset_combination(index_set: IndexSet,
                              problem: ProblemSpec,
                              cache: "SolveCache | None" = None
                              ) -> CombinedSolution:
    """Combination solution over a general downset (adaptive sets).

    With a ``cache``, parts solved during adaptive growth are reused;
    cached parts contribute no wall time to the totals.
    """
    weights = downset_combination_weights(index_set)

    def job(item):
        pair, w = item
        if cache is not None:
            return cache.solution(pair), w, 0.0, 0.0
        psi, ta, ts = full_grid_solution(problem, *pair)
        return psi, w, ta, ts

    results = parallel_map(job, sorted(weights.items()))
    parts = tuple((psi, w) for psi, w, _, _ in results)
    ta = sum(r[2] for r in results)
    ts = sum(r[3] for r in results)
    return CombinedSolution(parts, ta, ts)


# ---------------------------------------------------------------------------
# sparse Galerkin solve


def _hier_transform_dense(dense: np.ndarray, box: DiscreteSpace):
    """Conjugate the nodal dense matrix by the tensor Haar transform.

    Returns the matrix in the orthonormal hierarchical basis of the
    bounding space, as a (nt*nx, nt*nx) array whose flat index runs
    row-major over (time band, space band).
    """
    nt, nx = box.n_cells, box.n_panels
    htm = haar_matrix(1, box.levels[1])
    hxm = haar_matrix(box.m0, box.levels[0])
    a4 = dense.reshape(nt, nx, nt, nx)
    a4 = np.tensordot(htm.T, a4, axes=([1], [0]))
    a4 = np.tensordot(hxm.T, a4, axes=([1], [1])).transpose(1, 0, 2, 3)
    a4 = np.tensordot(a4, htm, axes=([2], [0])).transpose(0, 1, 3, 2)
    a4 = np.tensordot(a4, hxm, axes=([3], [0]))
    return a4.reshape(nt * nx, nt * nx)


def _hier_indices(index_set: IndexSet, box: DiscreteSpace) -> np.ndarray:
    """Flat indices of the retained hierarchical coefficients inside the
    bounding space's (time band, space band) layout, in canonical
    hierarchical block order."""
    nx = box.n_panels
    xsl = dict(haar_block_slices(box.m0, box.levels[0]))
    tsl = dict(haar_block_slices(1, box.levels[1]))
    rows = np.arange(box.n_cells)
    cols = np.arange(nx)
    idx = []
    for (blx, blt), _ in hier_block_slices(index_set, box.m0):
        r = rows[tsl[blt]]
        c = cols[xsl[blx]]
        idx.append((r[:, None] * nx + c[None, :]).ravel())
    return np.concatenate(idx)


def solve_sparse_galerkin(L: int, sigma2, problem: ProblemSpec) -> Density:
    """Galerkin solve on the hierarchical sparse space.

    Assembles the bounding full-tensor system, conjugates it by the
    orthonormal tensor Haar transform, restricts rows and columns to the
    hierarchical blocks of sparse_set(L, sigma2), and dense-solves the
    restricted system.  Piecewise-constant only, and desk scale only
    (the bounding dense matrix is materialised).
    """
    if problem.px or problem.pt:
        raise ValueError("sparse Galerkin solve requires p = 0")
    s2 = as_sigma2(sigma2)
    iset = sparse_set(L, s2)
    sparse_space = DiscreteSpace(problem.curve, iset, 0, 0, problem.T,
                                 problem.m0)
    box = sparse_space.bounding_space()
    A = assemble_single_layer(box)
    rhs = problem.assemble_rhs(box)
    cell = box.hx * (box.T / box.n_cells)
    ah = _hier_transform_dense(A.dense(), box) / cell
    nt, nx = box.n_cells, box.n_panels
    htm = haar_matrix(1, box.levels[1])
    hxm = haar_matrix(box.m0, box.levels[0])
    bh = (htm.T @ rhs.reshape(nt, nx) @ hxm).ravel() / math.sqrt(cell)
    keep = _hier_indices(iset, box)
    mat = ah[np.ix_(keep, keep)]
    coeffs = np.linalg.solve(mat, bh[keep])
    return Density(sparse_space, coeffs, "hier")


def hier_residual(psi: Density, problem: ProblemSpec) -> np.ndarray:
    """Residual of the full-space functional tested against each
    retained hierarchical basis function (Galerkin orthogonality check).
    """
    box = psi.space.bounding_space()
    nodal = to_nodal(psi)
    A = assemble_single_layer(box)
    rhs = problem.assemble_rhs(box)
    r = A.matvec(nodal.coefficients) - rhs
    nt, nx = box.n_cells, box.n_panels
    htm = haar_matrix(1, box.levels[1])
    hxm = haar_matrix(box.m0, box.levels[0])
    cell = box.hx * (box.T / box.n_cells)
    rh = (htm.T @ r.reshape(nt, nx) @ hxm).ravel() / math.sqrt(cell)
    return rh[_hier_indices(psi.space.index_set, box)]


# ---------------------------------------------------------------------------
# adaptive index-set growth


class SolveCache:
    """Cache of full-grid solutions, safe for concurrent reads with
    exclusive writes."""

    def __init__(self, problem: ProblemSpec):
        self.problem = problem
        self._store = {}
        self._lock = threading.Lock()

    def solution(self, pair) -> Density:
        pair = tuple(pair)
        with self._lock:
            hit = self._store.get(pair)
        if hit is not None:
            return hit
        psi, _, _ = full_grid_solution(self.problem, *pair)
        with self._lock:
            self._store.setdefault(pair, psi)
            return self._store[pair]


def adaptive_cost(idx, d: int = 2) -> float:
    """Grid cardinality 2^(lt + lx (d-1)) of the candidate index."""
    if d != 2:
        raise ValueError("only the planar boundary case d = 2 is supported")
    lx, lt = idx
    return float(2 ** (lt + lx * (d - 1)))


def surplus_density(idx, cache: SolveCache) -> Density:
    """2x2 signed combination of full-grid solutions around ``idx``,
    embedded in the grid of ``idx`` (missing levels count as zero)."""
    lx, lt = idx
    target = cache.problem.space(lx, lt)
    acc = np.zeros(target.full_dof_count())
    for di, dj, sign in ((0, 0, 1.0), (1, 0, -1.0), (0, 1, -1.0),
                         (1, 1, 1.0)):
        jx, jt = lx - di, lt - dj
        if jx < 0 or jt < 0:
            continue
        part = cache.solution((jx, jt))
        acc += sign * embed_nodal(part, target).coefficients
    return Density(target, acc, "nodal")


def adaptive_benefit(idx, problem: ProblemSpec,
                     cache: SolveCache | None = None) -> float:
    """Surrogate energy norm of the surplus at ``idx``.

    The surplus is measured by the wavelet estimator with weights
    (r, s) = (-1/2, -1/4); full-grid solves are cached.
    """
    from .analysis import energy_norm_sq_wavelet

    if cache is None:
        cache = SolveCache(problem)
    w = surplus_density(idx, cache)
    return math.sqrt(energy_norm_sq_wavelet(to_hierarchical(w), -0.5, -0.25))


@dataclass(frozen=True)
class AdaptiveState:
    """Accepted downset, admissible frontier, and growth history."""

    accepted: IndexSet
    frontier: frozenset
    measured_benefit: tuple = ()  # ((lx, lt), benefit) pairs
    budget: int | None = None
    history: tuple = ()  # (step, lx, lt, cost, benefit, ratio)

    @classmethod
    def initial(cls, budget: int | None = None) -> "AdaptiveState":
        return cls(IndexSet.from_pairs({(0, 0)}),
                   frozenset({(1, 0), (0, 1)}), (), budget, ())

    def benefit_map(self) -> dict:
        return dict(self.measured_benefit)


def _admissible(pair, accepted) -> bool:
    lx, lt = pair
    if lx and (lx - 1, lt) not in accepted:
        return False
    if lt and (lx, lt - 1) not in accepted:
        return False
    return True


def adaptive_grow(state: AdaptiveState, steps: int, problem: ProblemSpec,
                  cache: SolveCache | None = None,
                  prefer_cheap: bool = False) -> AdaptiveState:
    """Grow the accepted set by ``steps`` best benefit/cost acceptances.

    Each step measures the benefit of every frontier index (cached
    solves make repeats cheap), accepts the maximiser of benefit/cost,
    and extends the frontier with the newly admissible neighbours.  Ties
    break toward the lexicographically smallest (lx, lt).  Setting
    ``prefer_cheap`` flips the objective to cost/benefit.  Stops early,
    with a notice, if the frontier empties or the budget is reached.
    """
    if cache is None:
        cache = SolveCache(problem)
    accepted = set(state.accepted.pairs)
    frontier = set(state.frontier)
    benefits = state.benefit_map()
    history = list(state.history)
    step0 = len(history)
    for step in range(step0 + 1, step0 + steps + 1):
        if not frontier:
            print("adaptive growth stopped early: empty frontier")
            break
        if state.budget is not None and len(accepted) >= state.budget:
            print("adaptive growth stopped early: budget reached")
            break
        pairs = sorted(frontier)
        vals = parallel_map(
            lambda p: benefits.get(p) if p in benefits
            else adaptive_benefit(p, problem, cache), pairs)
        best = None
        for pair, benefit in zip(pairs, vals):
            benefits[pair] = benefit
            cost = adaptive_cost(pair)
            ratio = (cost / benefit if prefer_cheap and benefit > 0.0
                     else benefit / cost)
            # strict > on lexicographically sorted pairs: ties go to the
            # smallest (lx, lt)
            if best is None or ratio > best[0]:
                best = (ratio, pair, cost, benefit)
        _, pair, cost, benefit = best
        accepted.add(pair)
        frontier.discard(pair)
        for nb in ((pair[0] + 1, pair[1]), (pair[0], pair[1] + 1)):
            if nb not in accepted and _admissible(nb, accepted):
                frontier.add(nb)
        history.append((step, pair[0], pair[1], cost, benefit,
                        benefit / cost))
    return replace(state,
                   accepted=IndexSet.from_pairs(accepted),
                   frontier=frozenset(frontier),
                   measured_benefit=tuple(sorted(benefits.items())),
                   history=tuple(history))


def adaptive_history_csv(state: AdaptiveState) -> str:
    lines = ["step,lx,lt,cost,benefit,ratio"]
    for step, lx, lt, cost, benefit, ratio in state.history:
        lines.append(f"{step},{lx},{lt},{cost:.17g},{benefit:.17g},"
                     f"{ratio:.17g}")
    return "\n".join(lines) + "\n"
