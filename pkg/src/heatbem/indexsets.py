"""Anisotropic level-index sets, discrete spaces, and the multilevel transform.

A level pair ``(lx, lt)`` selects a spatial mesh level and a temporal mesh
level.  The anisotropy parameter sigma enters all membership tests through
its square, which must be rational so that comparisons like
``sigma*lx + lt/sigma <= L`` can be decided exactly in integer arithmetic
(both sides are nonnegative, so they may be squared).

Wavelet block sizes for piecewise constants: the level-0 block carries the
``m0`` mesh cells (1 in time), level ``l >= 1`` carries the ``m0 * 2**(l-1)``
new Haar details.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Iterator

import numpy as np

from .geometry import BoundaryCurve

LevelPair = tuple[int, int]


# ---------------------------------------------------------------------------
# exact arithmetic with sigma = sqrt(num/den)


def as_sigma2(value) -> Fraction:
    """Validate/convert a sigma^2 value to an exact Fraction.

    Accepts Fraction, int, or a string like ``"6/5"``.  Floats are rejected:
    ``Fraction(1.2)`` is not 6/5, and exactness is the whole point.
    """
    if isinstance(value, float):
        raise TypeError(
            "sigma2 must be exact (Fraction, int, or 'num/den' string), not float"
        )
    s = Fraction(value)
    if s <= 0:
        raise ValueError("sigma2 must be positive")
    return s


def floor_L_over_sigma(L: int, sigma2: Fraction) -> int:
    """Exact floor(L / sigma) for sigma = sqrt(sigma2)."""
    num, den = sigma2.numerator, sigma2.denominator
    return math.isqrt(L * L * den * num) // num


def floor_sigma_L(L: int, sigma2: Fraction) -> int:
    """Exact floor(sigma * L)."""
    num, den = sigma2.numerator, sigma2.denominator
    return math.isqrt(L * L * num * den) // den


def ceil_sigma_L(L: int, sigma2: Fraction) -> int:
    """Exact ceil(sigma * L)."""
    num, den = sigma2.numerator, sigma2.denominator
    s = L * L * num * den
    r = math.isqrt(s)
    if r * r == s and r % den == 0:
        return r // den
    return r // den + 1


# ---------------------------------------------------------------------------
# index sets


@dataclass(frozen=True)
class IndexSet:
    """A finite set of level pairs, normally a downset (no holes)."""

    pairs: frozenset
    meta: tuple = ()

    def __contains__(self, pair) -> bool:
        return tuple(pair) in self.pairs

    def __iter__(self) -> Iterator[LevelPair]:
        return iter(sorted(self.pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def sorted_pairs(self) -> list:
        return sorted(self.pairs)

    def max_levels(self) -> LevelPair:
        """(max lx, max lt) — the bounding full-tensor level pair."""
        return (
            max(p[0] for p in self.pairs),
            max(p[1] for p in self.pairs),
        )

    def is_rectangle(self) -> bool:
        lx, lt = self.max_levels()
        return len(self.pairs) == (lx + 1) * (lt + 1)

    def to_text(self) -> str:
        """Serialise as one ``"lx lt"`` line per pair, sorted."""
        return "\n".join(f"{p[0]} {p[1]}" for p in self.sorted_pairs) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "IndexSet":
        pairs = set()
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            a, b = line.split()
            pairs.add((int(a), int(b)))
        return cls(frozenset(pairs))

    @classmethod
    def from_pairs(cls, pairs: Iterable) -> "IndexSet":
        return cls(frozenset(tuple(p) for p in pairs))


def is_downset(pairs: Iterable[LevelPair]) -> bool:
    """True if the set has no holes: every pair's lower neighbours are in."""
    s = {tuple(p) for p in pairs}
    for lx, lt in s:
        if lx < 0 or lt < 0:
            return False
        if lx > 0 and (lx - 1, lt) not in s:
            return False
        if lt > 0 and (lx, lt - 1) not in s:
            return False
    return True


def full_tensor_levels(L: int, sigma2) -> LevelPair:
    """Level pair (floor(L/sigma), floor(sigma*L)) of the full-tensor space."""
    s2 = as_sigma2(sigma2)
    return floor_L_over_sigma(L, s2), floor_sigma_L(L, s2)


def full_tensor_set(L: int, sigma2) -> IndexSet:
    """Rectangle ``lx <= floor(L/sigma), lt <= floor(sigma L)``."""
    if L < 0:
        raise ValueError("L must be >= 0")
    lx_max, lt_max = full_tensor_levels(L, sigma2)
    pairs = {(lx, lt) for lx in range(lx_max + 1) for lt in range(lt_max + 1)}
    return IndexSet(frozenset(pairs), ("full", L, str(as_sigma2(sigma2))))


def sparse_set(L: int, sigma2) -> IndexSet:
    """Anisotropic sparse triangle ``sigma*lx + lt/sigma <= L``.

    Membership is decided exactly: with sigma^2 = num/den the condition is
    ``(num*lx + den*lt)**2 <= L*L*num*den``.
    """
    if L < 0:
        raise ValueError("L must be >= 0")
    s2 = as_sigma2(sigma2)
    num, den = s2.numerator, s2.denominator
    rhs = L * L * num * den
    pairs = set()
    lx = 0
    while num * num * lx * lx <= rhs:  # i.e. sigma*lx <= L
        lt = 0
        while (num * lx + den * lt) ** 2 <= rhs:
            pairs.add((lx, lt))
            lt += 1
        lx += 1
    return IndexSet(frozenset(pairs), ("sparse", L, str(s2)))


def optimized_set(L: int, sigma2, t_param) -> IndexSet:
    """Interpolated family ``sigma*lx + lt/sigma - t*max(sigma*lx, lt/sigma)
    <= (1-t)*L`` for ``t < 1``; ``t_param=None`` is the t -> -inf limit,
    which is exactly the full-tensor rectangle.

    ``t = 0`` reproduces :func:`sparse_set`.
    """
    if L < 0:
        raise ValueError("L must be >= 0")
    s2 = as_sigma2(sigma2)
    if t_param is None:
        ft = full_tensor_set(L, s2)
        return IndexSet(ft.pairs, ("optimized", L, str(s2), "-inf"))
    if isinstance(t_param, float):
        raise TypeError("t_param must be exact (Fraction/int/str) or None")
    t = Fraction(t_param)
    if t >= 1:
        raise ValueError("t_param must be < 1")
    num, den = s2.numerator, s2.denominator
    # sigma*lx = s*lx/den and lt/sigma = s*lt/num with s = sqrt(num*den);
    # the condition  s*R <= (1-t)*L  with the rational
    # R = lx/den + lt/num - t*max(lx/den, lt/num) >= 0  squares exactly.
    rhs = ((1 - t) * L) ** 2
    pairs = set()
    lx = 0
    while True:
        # 0 in time: R = lx/den * (1 - t) is the smallest value in this column
        r0 = Fraction(lx, den) * (1 - t)
        if num * den * r0 * r0 > rhs:
            break
        lt = 0
        while True:
            r = (
                Fraction(lx, den)
                + Fraction(lt, num)
                - t * max(Fraction(lx, den), Fraction(lt, num))
            )
            if num * den * r * r <= rhs:
                pairs.add((lx, lt))
                lt += 1
            else:
                break
        lx += 1
    return IndexSet(frozenset(pairs), ("optimized", L, str(s2), str(t)))


# ---------------------------------------------------------------------------
# wavelet block bookkeeping (piecewise constants)


def space_block_size(lx: int, m0: int) -> int:
    return m0 if lx == 0 else m0 * 2 ** (lx - 1)


def time_block_size(lt: int) -> int:
    return 1 if lt == 0 else 2 ** (lt - 1)


def dof_count(index_set: IndexSet, m0: int, px: int = 0, pt: int = 0) -> int:
    """Degrees of freedom of the multilevel space over ``index_set``."""
    total = 0
    for lx, lt in index_set.pairs:
        total += space_block_size(lx, m0) * time_block_size(lt)
    return total * (px + 1) * (pt + 1)


def hier_block_slices(index_set: IndexSet, m0: int):
    """Canonical hierarchical layout: blocks sorted by (lx, lt).

    Returns a list of ``((lx, lt), slice)`` into the flat coefficient vector;
    within a block coefficients are (time index, space index) row-major.
    """
    out = []
    pos = 0
    for lx, lt in sorted(index_set.pairs):
        n = space_block_size(lx, m0) * time_block_size(lt)
        out.append(((lx, lt), slice(pos, pos + n)))
        pos += n
    return out


@lru_cache(maxsize=64)
def haar_matrix(m0: int, level: int) -> np.ndarray:
    """Orthonormal multilevel Haar matrix for ``m0 * 2**level`` cells.

    Columns are the hierarchical basis expressed in the *L2-orthonormalised*
    indicator basis of the fine mesh, ordered level-0 scaling functions first,
    then details per level.  Orthogonal: ``H.T @ H = I``.
    """
    n = m0 * 2**level
    cols = []
    # level-0 scaling functions: constant on each coarse cell
    width = 2**level
    for j in range(m0):
        c = np.zeros(n)
        c[j * width : (j + 1) * width] = 1.0 / math.sqrt(width)
        cols.append(c)
    # details: level l splits each level-(l-1) cell in two
    for l in range(1, level + 1):
        width = 2 ** (level - l + 1)  # fine cells per level-(l-1) cell
        half = width // 2
        scale = 1.0 / math.sqrt(width)
        for j in range(m0 * 2 ** (l - 1)):
            c = np.zeros(n)
            c[j * width : j * width + half] = scale
            c[j * width + half : (j + 1) * width] = -scale
            cols.append(c)
    return np.array(cols).T


def haar_block_slices(m0: int, level: int):
    """Column ranges of :func:`haar_matrix` per level block."""
    out = [(0, slice(0, m0))]
    pos = m0
    for l in range(1, level + 1):
        n = m0 * 2 ** (l - 1)
        out.append((l, slice(pos, pos + n)))
        pos += n
    return out


# ---------------------------------------------------------------------------
# discrete space and coefficient containers


@dataclass(frozen=True)
class DiscreteSpace:
    """Tensor-product space of discontinuous piecewise polynomials on
    (boundary curve) x (0, T).

    ``index_set`` must be a downset.  Rectangular sets are ordinary full
    tensor-product spaces with a nodal basis; general downsets (p = 0 only)
    use the hierarchical basis.
    """

    curve: BoundaryCurve
    index_set: IndexSet
    px: int = 0
    pt: int = 0
    T: float = 4.0
    m0: int = 4

    def __post_init__(self):
        if self.px not in (0, 1) or self.pt not in (0, 1):
            raise ValueError("polynomial degrees must be 0 or 1")
        if self.m0 < 2:
            raise ValueError("need at least 2 base panels")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if not is_downset(self.index_set.pairs):
            raise ValueError("index set must be a downset")
        if not self.index_set.is_rectangle() and (self.px or self.pt):
            raise ValueError("non-rectangular spaces require p = 0")

    @classmethod
    def full_tensor(cls, curve, lx, lt, px=0, pt=0, T=4.0, m0=4):
        pairs = {(i, j) for i in range(lx + 1) for j in range(lt + 1)}
        return cls(curve, IndexSet(frozenset(pairs), ("full-levels", lx, lt)),
                   px, pt, T, m0)

    # -- mesh quantities (rectangular bounding box)
    @property
    def levels(self) -> LevelPair:
        return self.index_set.max_levels()

    @property
    def n_panels(self) -> int:
        return self.m0 * 2 ** self.levels[0]

    @property
    def n_cells(self) -> int:
        return 2 ** self.levels[1]

    @property
    def hx(self) -> float:
        return 1.0 / self.n_panels

    @property
    def ht(self) -> float:
        return self.T / self.n_cells

    @property
    def spatial_dofs(self) -> int:
        return self.n_panels * (self.px + 1)

    @property
    def block_size(self) -> int:
        """Unknowns per time cell in the nodal layout."""
        return self.spatial_dofs * (self.pt + 1)

    def dof_count(self) -> int:
        return dof_count(self.index_set, self.m0, self.px, self.pt)

    def full_dof_count(self) -> int:
        """DOFs of the bounding full-tensor space."""
        return self.n_cells * self.block_size

    def bounding_space(self) -> "DiscreteSpace":
        if self.index_set.is_rectangle():
            return self
        lx, lt = self.levels
        return DiscreteSpace.full_tensor(
            self.curve, lx, lt, self.px, self.pt, self.T, self.m0
        )


@dataclass
class Density:
    """Coefficients of a space-time density.

    ``representation`` is ``"nodal"`` (full tensor only: coefficient of the
    plain indicator/Legendre basis, time-cell-major) or ``"hier"``
    (hierarchical blocks in canonical order, p = 0 only).
    """

    space: DiscreteSpace
    coefficients: np.ndarray
    representation: str = "nodal"

    def __post_init__(self):
        n_expected = (
            self.space.full_dof_count()
            if self.representation == "nodal"
            else self.space.dof_count()
        )
        if self.representation == "nodal" and not self.space.index_set.is_rectangle():
            raise ValueError("nodal representation requires a full tensor space")
        if self.representation == "hier" and (self.space.px or self.space.pt):
            raise ValueError("hierarchical representation requires p = 0")
        if self.coefficients.shape != (n_expected,):
            raise ValueError(
                f"coefficient vector has shape {self.coefficients.shape}, "
                f"expected ({n_expected},)"
            )


def _scaled_nodal_matrix(d: Density) -> np.ndarray:
    """Nodal coefficients as an (nt, nx) matrix in the L2-orthonormalised
    indicator basis (parameter x time measure)."""
    sp = d.space
    c = d.coefficients.reshape(sp.n_cells, sp.n_panels)
    cell_measure = (1.0 / sp.n_panels) * (sp.T / sp.n_cells)
    return c * math.sqrt(cell_measure)


def to_hierarchical(d: Density) -> Density:
    """Orthonormal change of basis nodal -> hierarchical (p = 0)."""
    sp = d.space
    if d.representation != "nodal":
        raise ValueError("expected a nodal density")
    if sp.px or sp.pt:
        raise ValueError("hierarchical transform requires p = 0")
    lx, lt = sp.levels
    hx = haar_matrix(sp.m0, lx)
    ht = haar_matrix(1, lt)
    w = ht.T @ _scaled_nodal_matrix(d) @ hx
    xsl = dict(haar_block_slices(sp.m0, lx))
    tsl = dict(haar_block_slices(1, lt))
    out = np.empty(sp.full_dof_count())
    for (blx, blt), sl in hier_block_slices(sp.index_set, sp.m0):
        out[sl] = w[tsl[blt], xsl[blx]].ravel()
    hier_space = sp if sp.index_set.is_rectangle() else sp.bounding_space()
    return Density(hier_space, out, "hier")


def to_nodal(d: Density) -> Density:
    """Inverse of :func:`to_hierarchical`.

    For non-rectangular spaces the missing blocks are zero-padded, so the
    result lives in the bounding full-tensor space.
    """
    sp = d.space
    if d.representation != "hier":
        raise ValueError("expected a hierarchical density")
    box = sp.bounding_space()
    lx, lt = box.levels
    hxm = haar_matrix(box.m0, lx)
    htm = haar_matrix(1, lt)
    xsl = dict(haar_block_slices(box.m0, lx))
    tsl = dict(haar_block_slices(1, lt))
    w = np.zeros((box.n_cells, box.n_panels))
    for (blx, blt), sl in hier_block_slices(sp.index_set, sp.m0):
        w[tsl[blt], xsl[blx]] = d.coefficients[sl].reshape(
            time_block_size(blt), space_block_size(blx, sp.m0)
        )
    c_scaled = htm @ w @ hxm.T
    cell_measure = (1.0 / box.n_panels) * (box.T / box.n_cells)
    return Density(box, (c_scaled / math.sqrt(cell_measure)).ravel(), "nodal")


def restrict_hier(d: Density, target: DiscreteSpace) -> Density:
    """Keep only the hierarchical blocks present in ``target.index_set``."""
    if d.representation != "hier":
        raise ValueError("expected a hierarchical density")
    src = dict(hier_block_slices(d.space.index_set, d.space.m0))
    out = np.zeros(target.dof_count())
    for pair, sl in hier_block_slices(target.index_set, target.m0):
        out[sl] = d.coefficients[src[pair]]
    return Density(target, out, "hier")


def embed_nodal(d: Density, target: DiscreteSpace) -> Density:
    """Prolong a nodal p = 0 density into a finer full-tensor space.

    Piecewise-constant nesting: values replicate onto child panels/cells.
    """
    sp = d.space
    if d.representation != "nodal" or sp.px or sp.pt:
        raise ValueError("embedding is defined for nodal p = 0 densities")
    if target.m0 != sp.m0 or abs(target.T - sp.T) > 1e-15 or target.curve != sp.curve:
        raise ValueError("incompatible spaces")
    (lx1, lt1), (lx2, lt2) = sp.levels, target.levels
    if lx2 < lx1 or lt2 < lt1:
        raise ValueError("target space must be finer")
    c = d.coefficients.reshape(sp.n_cells, sp.n_panels)
    c = np.repeat(c, 2 ** (lt2 - lt1), axis=0)
    c = np.repeat(c, 2 ** (lx2 - lx1), axis=1)
    return Density(target, c.ravel(), "nodal")
