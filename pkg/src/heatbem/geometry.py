"""Smooth closed boundary curves and their dyadic panel meshes.

Curves are parameterised over ``u in [0, 1)`` counterclockwise.  Meshes are
uniform in parameter: the base mesh has ``m0`` panels and level ``l`` bisects
each panel ``l`` times, so panel endpoints are nested across levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

CIRCLE = 0
ELLIPSE = 1


@dataclass(frozen=True)
class BoundaryCurve:
    """Closed parameterised curve: circle of radius r, or axis-aligned ellipse.

    ``kind`` is one of the module constants CIRCLE / ELLIPSE and ``params``
    the shape parameters ((r,) or (a, b)).  Scalar codes rather than
    subclasses so the jitted assembly kernels can branch on them.
    """

    kind: int
    params: tuple[float, ...]

    @classmethod
    def circle(cls, radius: float = 1.0) -> "BoundaryCurve":
        if radius <= 0:
            raise ValueError("radius must be positive")
        return cls(CIRCLE, (float(radius),))

    @classmethod
    def ellipse(cls, a: float, b: float) -> "BoundaryCurve":
        if a <= 0 or b <= 0:
            raise ValueError("semi-axes must be positive")
        return cls(ELLIPSE, (float(a), float(b)))

    # -- two shape parameters, (r, r) for the circle, used by jit kernels
    @property
    def p0(self) -> float:
        return self.params[0]

    @property
    def p1(self) -> float:
        return self.params[-1]

    def point(self, u):
        """Map parameters ``u`` to points, shape (..., 2)."""
        u = np.asarray(u, dtype=float)
        ang = TWO_PI * u
        return np.stack((self.p0 * np.cos(ang), self.p1 * np.sin(ang)), axis=-1)

    def tangent(self, u):
        """d(point)/du, shape (..., 2).  Counterclockwise orientation."""
        u = np.asarray(u, dtype=float)
        ang = TWO_PI * u
        return TWO_PI * np.stack(
            (-self.p0 * np.sin(ang), self.p1 * np.cos(ang)), axis=-1
        )

    def jacobian(self, u):
        """Arclength element |d(point)/du|."""
        t = self.tangent(u)
        return np.sqrt(np.sum(t * t, axis=-1))

    def normal(self, u):
        """Outward unit normal (tangent rotated by -90 degrees, normalised)."""
        t = self.tangent(u)
        n = np.stack((t[..., 1], -t[..., 0]), axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def length(self, n_quad: int = 64) -> float:
        """Curve length by composite Gauss quadrature of the Jacobian."""
        from .quadrature import gauss_legendre

        x, w = gauss_legendre(n_quad)
        # 16 subintervals are plenty for these analytic Jacobians
        total = 0.0
        for k in range(16):
            u = (k + 0.5 * (x + 1.0)) / 16.0
            total += np.sum(w * self.jacobian(u)) * 0.5 / 16.0
        return float(total)

    def distance(self, x) -> float:
        """Distance from point ``x`` to the curve (coarse scan + refinement)."""
        x = np.asarray(x, dtype=float)
        u = np.linspace(0.0, 1.0, 512, endpoint=False)
        d2 = np.sum((self.point(u) - x) ** 2, axis=-1)
        i = int(np.argmin(d2))
        lo, hi = u[i] - 1.0 / 512, u[i] + 1.0 / 512
        for _ in range(60):  # golden-section on the analytic distance
            m1 = lo + 0.381966011250105 * (hi - lo)
            m2 = hi - 0.381966011250105 * (hi - lo)
            f1 = float(np.sum((self.point(m1) - x) ** 2))
            f2 = float(np.sum((self.point(m2) - x) ** 2))
            if f1 < f2:
                hi = m2
            else:
                lo = m1
        um = 0.5 * (lo + hi)
        return float(np.sqrt(np.sum((self.point(um) - x) ** 2)))

    def contains(self, x):
        """True where ``x`` lies strictly inside the enclosed domain.

        Accepts a single point (shape ``(2,)``) or an array of points
        (shape ``(..., 2)``).
        """
        x = np.asarray(x, dtype=float)
        if self.kind == CIRCLE:
            inside = np.hypot(x[..., 0], x[..., 1]) < self.p0
        else:
            inside = (x[..., 0] / self.p0) ** 2 + (x[..., 1] / self.p1) ** 2 < 1.0
        return bool(inside) if inside.ndim == 0 else inside


def panel_breakpoints(m0: int, level: int) -> np.ndarray:
    """Parameter breakpoints of the level-``level`` mesh (m0 * 2**level panels)."""
    if m0 < 1 or level < 0:
        raise ValueError("need m0 >= 1 and level >= 0")
    n = m0 * 2**level
    return np.linspace(0.0, 1.0, n + 1)


def panel_count(m0: int, level: int) -> int:
    return m0 * 2**level
