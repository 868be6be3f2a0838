"""Brute-force reference values.

The grid oracle evaluates the map at every point of a regular grid on a box
and takes the smallest value among the points meeting the constraint. It
uses nothing but vectorized evaluation, so it is independent of the support
oracles and of the bisection used by the dual engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import AtomTooLarge, EmptyFeasibleGrid, InputError, OrientationError, SpaceMismatch, TooManyAtoms
from .maps import QUASICONVEX, Coarsened, MapSpec
from .prob import Partition, PerAtom, as_density, as_rv, q_cond_weights

MAX_ATOM = 4
MAX_PARTITION_ATOMS = 6
# tolerance on the linear constraint, absorbing rounding in sum_i w_i xi_i
CONSTRAINT_SLACK = 1e-12


@dataclass(frozen=True)
class GridCfg:
    box_lo: float = -5.0
    box_hi: float = 5.0
    step: float = 0.05

    def __post_init__(self):
        if not self.box_lo < self.box_hi:
            raise InputError("grid box needs box_lo < box_hi")
        if not self.step > 0:
            raise InputError("grid step must be positive")

    def axis(self) -> np.ndarray:
        """Grid coordinates; exact decimals when 1/step is an integer."""
        inv = 1.0 / self.step
        if abs(inv - round(inv)) < 1e-9:
            inv = round(inv)
            lo = math.ceil(self.box_lo * inv - 1e-9)
            hi = math.floor(self.box_hi * inv + 1e-9)
            return np.arange(lo, hi + 1) / inv
        count = math.floor((self.box_hi - self.box_lo) / self.step + 1e-9)
        return self.box_lo + self.step * np.arange(count + 1)


def _check_map(m: MapSpec, g: Partition | None):
    if m.orientation != QUASICONVEX:
        raise OrientationError("the grid oracle needs a quasiconvex map")
    if isinstance(m, Coarsened):
        raise InputError("the grid oracle works on uncoarsened maps")
    if g is not None and g != m.g:
        raise SpaceMismatch("partition differs from the map's G")


@lru_cache(maxsize=4)
def _value_grid(m: MapSpec, k: int, cfg: GridCfg):
    size = len(m.g.blocks[k])
    if size > MAX_ATOM:
        raise AtomTooLarge(f"atom of size {size} exceeds the grid oracle limit {MAX_ATOM}")
    axis = cfg.axis()
    cols = [axis.reshape([-1 if d == i else 1 for d in range(size)]) for i in range(size)]
    values = np.broadcast_to(m.atom_array(k, cols), (len(axis),) * size)
    return axis, cols, values


def _grid_min(m: MapSpec, k: int, w, t: float, cfg: GridCfg, band: float | None) -> float:
    axis, cols, values = _value_grid(m, k, cfg)
    lin = 0.0
    for wi, c in zip(w, cols):
        lin = lin + wi * c
    lin = np.broadcast_to(lin, values.shape)
    slack = CONSTRAINT_SLACK * max(1.0, abs(t))
    mask = lin >= t - slack
    if band is not None:
        # one-sided band: the heaviest coordinate moves lin by step * max(w),
        # so [t, t + band] always holds a grid point inside the box
        mask &= lin <= t + band + slack
    if not mask.any():
        raise EmptyFeasibleGrid(
            f"no grid point on [{cfg.box_lo}, {cfg.box_hi}] meets the constraint with target {t!r}"
        )
    return float(values[mask].min())


def _per_atom(m: MapSpec, x, q, cfg: GridCfg, equality: bool) -> PerAtom:
    xs = as_rv(m.g.space, x)
    dens = as_density(m.g.space, q)
    values = []
    for k, block in enumerate(m.g.blocks):
        w = q_cond_weights(dens, m.g, block)
        if w is None:
            # the constraint is vacuous on a Q-null atom
            values.append(float(_value_grid(m, k, cfg)[2].min()))
            continue
        t = math.fsum(wi * float(xs[i]) for wi, i in zip(w, block))
        band = cfg.step * max(w) if equality else None
        values.append(_grid_min(m, k, w, t, cfg, band))
    return PerAtom(m.g, values)


def grid_k(m: MapSpec, x, q, g: Partition | None = None, cfg: GridCfg = GridCfg()) -> PerAtom:
    """Smallest grid value of the map subject to E_Q[xi | G] >= E_Q[X | G]."""
    _check_map(m, g)
    return _per_atom(m, x, q, cfg, equality=False)


def equality_k(m: MapSpec, x, q, g: Partition | None = None, cfg: GridCfg = GridCfg()) -> PerAtom:
    """Smallest grid value subject to 0 <= E_Q[xi | G] - E_Q[X | G] <= step * max(w)."""
    _check_map(m, g)
    return _per_atom(m, x, q, cfg, equality=True)


def grid_slope_bounds(m: MapSpec, cfg: GridCfg = GridCfg()) -> list[float]:
    """Per atom sup-norm Lipschitz constants on the grid box (the L in the error bounds)."""
    return [m.slope_bound(k, cfg.box_lo, cfg.box_hi) for k in range(len(m.g.blocks))]


def restricted_growth_strings(n: int):
    """All set partitions of range(n) as restricted growth strings, in lexicographic order."""
    if n == 0:
        yield ()
        return
    a = [0] * n

    def rec(i, top):
        if i == n:
            yield tuple(a)
            return
        for v in range(top + 2):
            a[i] = v
            yield from rec(i + 1, max(top, v))

    a[0] = 0
    yield from rec(1, 0)


def enumerate_partitions(g: Partition) -> list[Partition]:
    """Every partition of the atoms of g, as partitions of the sample points."""
    n = len(g.blocks)
    if n > MAX_PARTITION_ATOMS:
        raise TooManyAtoms(f"{n} atoms exceeds the enumeration limit {MAX_PARTITION_ATOMS}")
    out = []
    for code in restricted_growth_strings(n):
        groups: dict[int, list[int]] = {}
        for atom, label in zip(g.blocks, code):
            groups.setdefault(label, []).extend(atom)
        out.append(Partition(g.space, tuple(tuple(v) for v in groups.values())))
    return out
