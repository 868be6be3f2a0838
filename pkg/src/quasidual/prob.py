"""Finite probability spaces, partitions and conditional expectation.

A sub-sigma-algebra of the power set of a finite space is generated by a
partition, so ``Partition`` doubles as the model for G and for the finite
coarsenings used by the approximation machinery. The reference measure has
full support, which makes "almost surely" statements exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateLabel,
    EmptyAtom,
    EmptyBlock,
    NonPositiveProbability,
    NotMeasurable,
    OverlappingBlocks,
    ProbabilitySumMismatch,
    SpaceMismatch,
    UncoveredIndex,
)

PROB_SUM_TOL = 1e-12
DENSITY_NORM_TOL = 1e-10


class _QNull:
    """Marker for conditional quantities on atoms of zero Q-mass."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Q-NULL"

    def __reduce__(self):
        return (_QNull, ())


QNULL = _QNull()


@dataclass(frozen=True)
class FiniteSpace:
    labels: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.probs):
            raise DimensionMismatch(
                f"{len(self.labels)} labels but {len(self.probs)} probabilities"
            )
        if len(self.labels) == 0:
            raise EmptyBlock("a probability space needs at least one point")
        if len(set(self.labels)) != len(self.labels):
            seen = set()
            dup = next(l for l in self.labels if l in seen or seen.add(l))
            raise DuplicateLabel(f"duplicate sample-point label {dup!r}")
        for label, p in zip(self.labels, self.probs):
            if not (p > 0.0) or not math.isfinite(p):
                raise NonPositiveProbability(f"P({label!r}) = {p} is not positive")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ProbabilitySumMismatch(f"probabilities sum to {total!r}, not 1")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def p(self) -> np.ndarray:
        arr = np.array(self.probs, dtype=float)
        arr.flags.writeable = False
        return arr

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UncoveredIndex(f"unknown sample-point label {label!r}") from None

    def expectation(self, x) -> float:
        return math.fsum(pi * xi for pi, xi in zip(self.probs, as_rv(self, x)))


def build_space(labels: Sequence, probs: Sequence[float]) -> FiniteSpace:
    return FiniteSpace(tuple(str(l) for l in labels), tuple(float(p) for p in probs))


def uniform_space(n: int) -> FiniteSpace:
    return build_space([f"w{i}" for i in range(n)], [1.0 / n] * n)


@dataclass(frozen=True)
class Partition:
    """Partition of the sample points into blocks of indices.

    Blocks are stored sorted, and ordered by smallest index, so equal
    partitions compare equal.
    """

    space: FiniteSpace
    blocks: tuple[tuple[int, ...], ...]
    _atom_of: tuple[int, ...] = field(init=False, repr=False, compare=False)
    _weights: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.space.n
        owner = [-1] * n
        canon = []
        for block in self.blocks:
            if len(block) == 0:
                raise EmptyBlock("partition contains an empty block")
            canon.append(tuple(sorted(int(i) for i in block)))
        canon.sort(key=lambda b: b[0])
        for k, block in enumerate(canon):
            for i in block:
                if not 0 <= i < n:
                    raise UncoveredIndex(f"index {i} outside the space of size {n}")
                if owner[i] != -1:
                    raise OverlappingBlocks(f"index {i} appears in two blocks")
                owner[i] = k
        missing = [i for i, o in enumerate(owner) if o == -1]
        if missing:
            raise UncoveredIndex(f"indices {missing} are not covered by any block")
        object.__setattr__(self, "blocks", tuple(canon))
        object.__setattr__(self, "_atom_of", tuple(owner))
        probs = self.space.probs
        weights = {}
        for block in canon:
            mass = math.fsum(probs[i] for i in block)
            weights[block] = (mass, tuple(probs[i] / mass for i in block))
        object.__setattr__(self, "_weights", weights)

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def atom_of(self, i: int) -> int:
        return self._atom_of[i]

    def mass(self, block: tuple[int, ...]) -> float:
        """P(block) for a block of this partition."""
        return self._weights[block][0]

    def cond_weights(self, block: tuple[int, ...]) -> tuple[float, ...]:
        """Conditional reference weights p_i / P(block) on a block."""
        return self._weights[block][1]

    def refines(self, other: "Partition") -> bool:
        """True if every block of self lies inside a block of ``other``."""
        _check_same_space(self, other)
        return all(len({other.atom_of(i) for i in b}) == 1 for b in self.blocks)

    def is_union_of(self, fine: "Partition") -> bool:
        return fine.refines(self)

    def labelled(self) -> list[list[str]]:
        return [[self.space.labels[i] for i in b] for b in self.blocks]

    @classmethod
    def trivial(cls, space: FiniteSpace) -> "Partition":
        return cls(space, (tuple(range(space.n)),))

    @classmethod
    def discrete(cls, space: FiniteSpace) -> "Partition":
        return cls(space, tuple((i,) for i in range(space.n)))


def build_partition(space: FiniteSpace, blocks: Iterable[Iterable[int]]) -> Partition:
    return Partition(space, tuple(tuple(b) for b in blocks))


def _check_same_space(g1: Partition, g2: Partition):
    if g1.space != g2.space:
        raise SpaceMismatch("partitions live on different probability spaces")


def common_refinement(g1: Partition, g2: Partition) -> Partition:
    _check_same_space(g1, g2)
    cells: dict[tuple[int, int], list[int]] = {}
    for i in range(g1.space.n):
        cells.setdefault((g1.atom_of(i), g2.atom_of(i)), []).append(i)
    return Partition(g1.space, tuple(tuple(c) for c in cells.values()))


def common_coarsening(g1: Partition, g2: Partition) -> Partition:
    """Finest partition that both ``g1`` and ``g2`` refine."""
    _check_same_space(g1, g2)
    parent = list(range(g1.space.n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for g in (g1, g2):
        for block in g.blocks:
            root = find(block[0])
            for i in block[1:]:
                parent[find(i)] = root
    groups: dict[int, list[int]] = {}
    for i in range(g1.space.n):
        groups.setdefault(find(i), []).append(i)
    return Partition(g1.space, tuple(tuple(v) for v in groups.values()))


def as_rv(space: FiniteSpace, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (space.n,):
        raise DimensionMismatch(f"expected a vector of length {space.n}, got shape {arr.shape}")
    return arr


def is_measurable(x, g: Partition) -> bool:
    xs = as_rv(g.space, x)
    return all(all(xs[i] == xs[b[0]] for i in b) for b in g.blocks)


@dataclass(frozen=True)
class Density:
    """A nonnegative density dQ/dP (``normalized`` means E_P[q] = 1)."""

    q: tuple[float, ...]
    normalized: bool = False

    def __post_init__(self):
        if any(not (v >= 0.0) or not math.isfinite(v) for v in self.q):
            raise NonPositiveProbability("densities must be finite and nonnegative")

    @property
    def array(self) -> np.ndarray:
        return np.array(self.q, dtype=float)


def as_density(space: FiniteSpace, q) -> Density:
    if isinstance(q, Density):
        if len(q.q) != space.n:
            raise DimensionMismatch(f"density has {len(q.q)} entries, space has {space.n}")
        return q
    arr = as_rv(space, q)
    return Density(tuple(float(v) for v in arr))


def make_density(space: FiniteSpace, q) -> Density:
    """Validated, normalized density; raises if E_P[q] is not 1."""
    d = as_density(space, q)
    total = math.fsum(qi * pi for qi, pi in zip(d.q, space.probs))
    if abs(total - 1.0) > DENSITY_NORM_TOL:
        raise ProbabilitySumMismatch(f"E_P[q] = {total!r}, not 1")
    return Density(d.q, normalized=True)


def normalize_density(space: FiniteSpace, q) -> Density:
    d = as_density(space, q)
    total = math.fsum(qi * pi for qi, pi in zip(d.q, space.probs))
    if total <= 0.0:
        raise NonPositiveProbability("density has zero total mass")
    return Density(tuple(v / total for v in d.q), normalized=True)


def reference_density(space: FiniteSpace) -> Density:
    return Density((1.0,) * space.n, normalized=True)


def q_mass(q: Density, g: Partition, block: tuple[int, ...]) -> float:
    probs = g.space.probs
    return math.fsum(q.q[i] * probs[i] for i in block)


def q_cond_weights(q: Density, g: Partition, block: tuple[int, ...]):
    """Conditional Q-weights on a block, or None when Q(block) = 0."""
    # normalize q on the block first so the result is unchanged when q is rescaled
    total = math.fsum(q.q[i] for i in block)
    if total <= 0.0:
        return None
    probs = g.space.probs
    raw = [q.q[i] / total * probs[i] for i in block]
    mass = math.fsum(raw)
    return tuple(r / mass for r in raw)


def is_in_P_G(q, g: Partition, tol: float = DENSITY_NORM_TOL) -> bool:
    d = as_density(g.space, q)
    return all(abs(q_mass(d, g, b) - g.mass(b)) <= tol for b in g.blocks)


class PerAtom:
    """One extended-real value per block of a partition, with Q-NULL entries.

    Comparisons against a Q-NULL entry are vacuously true.
    """

    __slots__ = ("partition", "values", "null")

    def __init__(self, partition: Partition, values, null=None):
        vals = np.array(values, dtype=float)
        if vals.shape != (len(partition),):
            raise DimensionMismatch(
                f"expected {len(partition)} per-atom values, got shape {vals.shape}"
            )
        mask = np.zeros(len(partition), dtype=bool) if null is None else np.array(null, dtype=bool)
        vals[mask] = np.nan
        vals.flags.writeable = False
        mask.flags.writeable = False
        self.partition = partition
        self.values = vals
        self.null = mask

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k):
        return QNULL if self.null[k] else float(self.values[k])

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def __repr__(self):
        return f"PerAtom({list(self)})"

    def to_list(self):
        return list(self)

    def __neg__(self):
        return PerAtom(self.partition, -self.values, self.null)

    def ge(self, other, tol: float = 0.0) -> bool:
        """Q-a.s. comparison self >= other (atoms null in either are skipped)."""
        ov, on = _per_atom_parts(other, len(self))
        keep = ~(self.null | on)
        return bool(np.all(self.values[keep] >= ov[keep] - tol))

    def to_rv(self) -> np.ndarray:
        """Broadcast to sample points (Q-NULL atoms become NaN)."""
        out = np.empty(self.partition.space.n)
        for k, block in enumerate(self.partition.blocks):
            out[list(block)] = self.values[k]
        return out


def _per_atom_parts(other, n):
    if isinstance(other, PerAtom):
        return other.values, other.null
    vals = np.broadcast_to(np.asarray(other, dtype=float), (n,))
    return vals, np.zeros(n, dtype=bool)


def cond_expect(x, q, g: Partition) -> PerAtom:
    xs = as_rv(g.space, x)
    if not np.all(np.isfinite(xs)):
        raise DimensionMismatch("conditional expectation needs a finite random variable")
    d = as_density(g.space, q)
    values, null = [], []
    for block in g.blocks:
        w = q_cond_weights(d, g, block)
        if w is None:
            values.append(np.nan)
            null.append(True)
        else:
            values.append(math.fsum(wi * xs[i] for wi, i in zip(w, block)))
            null.append(False)
    return PerAtom(g, values, null)


def ess_sup_on(x, atom: Sequence[int]) -> float:
    if len(atom) == 0:
        raise EmptyAtom("essential supremum over an empty atom")
    xs = np.asarray(x, dtype=float)
    return float(max(xs[i] for i in atom))


def dyadic_cell(y: float, n: int) -> int:
    """Index j of the dyadic level cell of y at depth n (0 and the last index are tails)."""
    if y <= -n:
        return 0
    if y > n:
        return n * 2 ** (n + 1) + 1
    return math.ceil((y + n) * 2**n)


def dyadic_partition(y, g: Partition, n: int) -> Partition:
    """Group the atoms of ``g`` by the dyadic level cell their y-value falls in."""
    if n < 1:
        raise ValueError("dyadic depth must be a positive integer")
    ys = as_rv(g.space, y)
    if not is_measurable(ys, g):
        raise NotMeasurable("y must be constant on every atom of the partition")
    groups: dict[int, list[int]] = {}
    for block in g.blocks:
        groups.setdefault(dyadic_cell(float(ys[block[0]]), n), []).extend(block)
    return Partition(g.space, tuple(tuple(v) for v in groups.values()))


def indicator_mix(x, y, atoms: Iterable[tuple[int, ...]]) -> np.ndarray:
    """x on the union of ``atoms`` and y elsewhere."""
    out = np.array(y, dtype=float, copy=True)
    for block in atoms:
        idx = list(block)
        out[idx] = np.asarray(x, dtype=float)[idx]
    return out
