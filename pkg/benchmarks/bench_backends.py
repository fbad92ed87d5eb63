"""Compare the two assembly backends on the single-layer operator.

The hot panel-pair quadrature loops exist twice: a numba ``@njit`` lane
(default) and a vectorised numpy fallback (forced by ``HEATBEM_NO_NUMBA``
or :func:`heatbem.backend.set_backend`).  This script assembles the
operator on the unit disk at a few grid levels with each backend, checks
the entries agree, and prints wall times plus the speedup.

Usage::

    python3 benchmarks/bench_backends.py [--quick]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from heatbem import backend
from heatbem.assembly import assemble_single_layer
from heatbem.geometry import BoundaryCurve
from heatbem.indexsets import DiscreteSpace

FULL_LEVELS = [(3, 4), (4, 5), (5, 6), (6, 6)]
QUICK_LEVELS = [(3, 4), (4, 5)]


def _time_assembly(space: DiscreteSpace, name: str, repeats: int):
    backend.set_backend(name)
    best = np.inf
    op = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        op = assemble_single_layer(space)
        best = min(best, time.perf_counter() - t0)
    return op, best


def _max_rel_diff(a, b) -> float:
    blocks_a = np.concatenate([blk.ravel() for blk in a.blocks])
    blocks_b = np.concatenate([blk.ravel() for blk in b.blocks])
    scale = np.abs(blocks_a).max()
    return float(np.abs(blocks_a - blocks_b).max() / scale)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true",
                        help="small grids, single repeat")
    args = parser.parse_args()

    if not backend.HAVE_NUMBA:
        print("numba is not importable; nothing to compare")
        return 1

    levels = QUICK_LEVELS if args.quick else FULL_LEVELS
    repeats = 1 if args.quick else 3
    curve = BoundaryCurve.circle(1.0)

    # trigger JIT compilation outside the timed region
    warm = DiscreteSpace.full_tensor(curve, 1, 1)
    _time_assembly(warm, "numba", 1)

    header = f"{'lx':>3} {'lt':>3} {'dof':>7} {'numba_s':>9} {'numpy_s':>9} {'speedup':>8} {'rel_diff':>9}"
    print(header)
    print("-" * len(header))
    for lx, lt in levels:
        space = DiscreteSpace.full_tensor(curve, lx, lt)
        op_nb, t_nb = _time_assembly(space, "numba", repeats)
        op_np, t_np = _time_assembly(space, "numpy", repeats)
        diff = _max_rel_diff(op_nb, op_np)
        print(f"{lx:>3} {lt:>3} {space.dof_count():>7} {t_nb:>9.3f} "
              f"{t_np:>9.3f} {t_np / t_nb:>8.2f} {diff:>9.2e}")
        if diff > 1e-10:
            print("backend mismatch exceeds 1e-10; investigate")
            return 1
    backend.set_backend("numba")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
