"""Dual functionals K, R, H and the conjugate, solved atom by atom.

K(X, Q) on a G-atom depends only on the conditional Q-weights w there and
on the target t = sum_i w_i x_i, and equals inf{c : S(c, w) >= t} for the
map's support oracle S. H(X) on an atom is the sup of that quantity over
the weight simplex of the atom, so the outer problem over densities splits
into independent low-dimensional searches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BracketExhausted,
    DimensionMismatch,
    DomainViolation,
    NotCashInvariant,
    NotMeasurable,
    OrientationError,
    QNullAtom,
    SolverDiverged,
    SpaceMismatch,
)
from .maps import (
    QUASICONVEX,
    CertaintyEquivalent,
    Coarsened,
    MapSpec,
    Mirrored,
)
from .prob import (
    Density,
    FiniteSpace,
    Partition,
    PerAtom,
    as_density,
    as_rv,
    is_measurable,
    q_cond_weights,
    q_mass,
)
from .rng import Xorshift64Star
from .solvers import DEFAULT_CFG, BisectStatus, SolverCfg, simplex_search, threshold

INF = math.inf


def _finite_payoff(m: MapSpec, x) -> np.ndarray:
    xs = as_rv(m.g.space, x)
    if not np.all(np.isfinite(xs)):
        raise DomainViolation("payoffs must be finite")
    return xs


def _quasiconvex(m: MapSpec) -> None:
    if m.orientation != QUASICONVEX:
        raise OrientationError(
            f"{m.family} is quasiconcave; use duality_gap, which dualizes its mirror image"
        )


def _base(m: MapSpec) -> MapSpec:
    return m.inner if isinstance(m, Coarsened) else m


def _bracket(m: MapSpec, k: int, lo_x: float, hi_x: float, cfg: SolverCfg):
    if cfg.bracket_init is not None:
        return cfg.bracket_init
    n = len(m.g.blocks[k])
    lo = m.atom_value(k, [lo_x] * n)
    hi = m.atom_value(k, [hi_x] * n)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        lo, hi = lo_x, hi_x
    return lo - 1.0, hi + 1.0


_LEVEL_CACHE: dict = {}
_LEVEL_CACHE_SIZE = 1 << 16


def solve_level(m: MapSpec, k: int, w: Sequence[float], t: float, bracket, cfg: SolverCfg):
    """inf{c : S_k(c, w) >= t} for a base (uncoarsened) map; returns (value, evaluations).

    Results are memoized: the value is a pure function of the arguments.
    """
    key = (m, k, tuple(w), t, tuple(bracket), cfg.bisect_tol)
    hit = _LEVEL_CACHE.get(key)
    if hit is not None:
        return hit
    if len(_LEVEL_CACHE) >= _LEVEL_CACHE_SIZE:
        _LEVEL_CACHE.clear()
    out = _solve_level(m, k, w, t, bracket, cfg)
    _LEVEL_CACHE[key] = out
    return out


def _solve_level(m: MapSpec, k: int, w: Sequence[float], t: float, bracket, cfg: SolverCfg):
    def gap(c):
        return m.atom_support(k, c, w) - t

    res = threshold(gap, bracket[0], bracket[1], cfg.bisect_tol)
    if res.status is BisectStatus.UNBOUNDED:
        return -INF, res.iterations
    if res.status is BisectStatus.BRACKET_EXHAUSTED:
        raise BracketExhausted(
            f"level search on atom {k} found no feasible level below 1e6", bracket=res.bracket_final
        )
    return res.root, res.iterations


def _atom_k(m: MapSpec, k: int, w, xs_atom: Sequence[float], cfg: SolverCfg) -> float:
    """K on atom k of a base map for conditional weights w (None means Q-null)."""
    if w is None:
        return m.atom_inf(k)
    t = math.fsum(wi * x for wi, x in zip(w, xs_atom))
    value, _ = solve_level(m, k, w, t, _bracket(m, k, min(xs_atom), max(xs_atom), cfg), cfg)
    return value


def _combine_coarsened(m: MapSpec, per_atom: list[float]) -> list[float]:
    """Per G-atom values of a coarsened map: the largest member value of each block."""
    if not isinstance(m, Coarsened):
        return per_atom
    out = list(per_atom)
    for j in range(len(m.gamma)):
        members = m.members(j)
        top = max(per_atom[a] for a in members)
        for a in members:
            out[a] = top
    return out


def k_value(m: MapSpec, x, q, cfg: SolverCfg = DEFAULT_CFG) -> PerAtom:
    """K(X, Q) per G-atom.

    On a Q-null atom the constraint is vacuous and the value is the
    unconstrained infimum of the map there. For a coarsened map the value on
    each coarsening block is the largest member-atom value, where every
    member keeps its own G-conditional constraint.
    """
    _quasiconvex(m)
    xs = _finite_payoff(m, x)
    dens = as_density(m.g.space, q)
    base = _base(m)
    values = []
    for k, block in enumerate(m.g.blocks):
        w = q_cond_weights(dens, m.g, block)
        values.append(_atom_k(base, k, w, [float(xs[i]) for i in block], cfg))
    return PerAtom(m.g, _combine_coarsened(m, values))


def r_value(m: MapSpec, y, xi, cfg: SolverCfg = DEFAULT_CFG) -> PerAtom:
    """R(Y, xi') per G-atom: inf of the map over payoffs with E_P[xi' payoff | G] >= Y.

    The weights are normalized inside each atom, so rescaling Y and xi' by the
    same factor leaves the result unchanged.
    """
    _quasiconvex(m)
    g = m.g
    ys = as_rv(g.space, y)
    if not np.all(np.isfinite(ys)):
        raise DomainViolation("the target must be finite")
    if not is_measurable(ys, g):
        raise NotMeasurable("the target must be constant on every G-atom")
    dens = as_density(g.space, xi)
    base = _base(m)
    probs = g.space.probs
    values = []
    for k, block in enumerate(g.blocks):
        w = q_cond_weights(dens, g, block)
        if w is None:
            values.append(base.atom_inf(k))
            continue
        total = math.fsum(dens.q[i] for i in block)
        scaled = math.fsum(dens.q[i] / total * probs[i] for i in block)
        t = (float(ys[block[0]]) / total) * (g.mass(block) / scaled)
        value, _ = solve_level(base, k, w, t, _bracket(base, k, t, t, cfg), cfg)
        values.append(value)
    return PerAtom(g, _combine_coarsened(m, values))


# ---------------------------------------------------------------------------
# H and reports


@dataclass(frozen=True)
class AtomReport:
    block: tuple[int, ...]
    label: str
    primal: float
    dual: float
    gap: float
    argmax_weights: tuple[float, ...]
    k_at_argmax: float
    restarts: int
    iterations: int
    spread: float
    evaluations: int
    certified: bool


@dataclass(frozen=True)
class DualReport:
    """One row per output block (G-atoms, or coarsening blocks for a coarsened map)."""

    partition: Partition
    rows: tuple[AtomReport, ...]
    orientation: str = QUASICONVEX

    @property
    def primal(self) -> list[float]:
        return [r.primal for r in self.rows]

    @property
    def dual(self) -> list[float]:
        return [r.dual for r in self.rows]

    @property
    def gaps(self) -> list[float]:
        return [r.gap for r in self.rows]

    @property
    def max_abs_gap(self) -> float:
        return max(abs(r.gap) for r in self.rows)

    def argmax_density(self) -> Density:
        """Glue the per-block argmax weights into one density."""
        return glue_density([r.argmax_weights for r in self.rows], self.partition)


def _gap(primal: float, dual: float) -> float:
    if primal == dual:
        return 0.0
    return primal - dual


def _label(space: FiniteSpace, block) -> str:
    return "+".join(space.labels[i] for i in block)


def _atom_search(m: MapSpec, k: int, xs_atom: list[float], primal: float, cfg: SolverCfg, rng):
    bracket = _bracket(m, k, min(xs_atom), max(xs_atom), cfg)

    def f(w):
        t = math.fsum(wi * x for wi, x in zip(w, xs_atom))
        return solve_level(m, k, w, t, bracket, cfg)[0]

    hint = m.atom_hint(k, xs_atom)
    extra = [hint] if hint is not None else []
    return simplex_search(f, len(xs_atom), cfg, extra_starts=extra, target=primal, rng=rng)


def _block_search(m: Coarsened, j: int, xs: np.ndarray, primal: float, cfg: SolverCfg, rng):
    base = m.inner
    block = m.gamma.blocks[j]
    pos = {i: n for n, i in enumerate(block)}
    members = m.members(j)
    parts = []
    for a in members:
        atom = m.g.blocks[a]
        xa = [float(xs[i]) for i in atom]
        parts.append((a, [pos[i] for i in atom], xa, _bracket(base, a, min(xa), max(xa), cfg)))
    cache: dict = {}

    def f(w):
        best = -INF
        for a, idx, xa, bracket in parts:
            wa = tuple(w[i] for i in idx)
            mass = sum(wa)
            if mass == 0.0:
                val = base.atom_inf(a)
            else:
                key = (a, wa)
                val = cache.get(key)
                if val is None:
                    t = math.fsum(wi * x for wi, x in zip(wa, xa))
                    val = solve_level(base, a, wa, t, bracket, cfg)[0]
                    cache[key] = val
            if val > best:
                best = val
        return best

    extra = []
    for a, idx, xa, _ in parts:
        hint = base.atom_hint(a, xa)
        if hint is not None:
            start = [0.0] * len(block)
            for i, h in zip(idx, hint):
                start[i] = h
            extra.append(start)
    return simplex_search(f, len(block), cfg, extra_starts=extra, target=primal, rng=rng)


def h_value(m: MapSpec, x, cfg: SolverCfg = DEFAULT_CFG) -> DualReport:
    """H(X) = sup over densities of K(X, Q), one simplex search per output block."""
    _quasiconvex(m)
    xs = _finite_payoff(m, x)
    out = m.out_partition
    primal = m.block_values(xs)
    root = Xorshift64Star(cfg.seed)
    rows = []
    for j, block in enumerate(out.blocks):
        rng = root.split(j)
        if isinstance(m, Coarsened):
            res = _block_search(m, j, xs, primal[j], cfg, rng)
        else:
            res = _atom_search(m, j, [float(xs[i]) for i in block], primal[j], cfg, rng)
        if res.value != res.value:
            raise SolverDiverged(f"search on block {j} produced NaN", best=res)
        rows.append(
            AtomReport(
                block=block,
                label=_label(out.space, block),
                primal=primal[j],
                dual=res.value,
                gap=_gap(primal[j], res.value),
                argmax_weights=res.weights,
                k_at_argmax=res.value,
                restarts=res.restarts_used,
                iterations=res.iterations,
                spread=res.spread,
                evaluations=res.evaluations,
                certified=res.certified,
            )
        )
    return DualReport(out, tuple(rows), QUASICONVEX)


def duality_gap(m: MapSpec, x, cfg: SolverCfg = DEFAULT_CFG) -> DualReport:
    """Primal value, dual value and their difference per output block.

    A quasiconcave map is handled through its mirror image: its dual value is
    -H_inner(-X), an inf-sup representation, and its gap has the opposite sign.
    """
    xs = _finite_payoff(m, x)
    if m.orientation == QUASICONVEX:
        return h_value(m, xs, cfg)
    if isinstance(m, CertaintyEquivalent):
        inner = m.dual_form().inner
    elif isinstance(m, Mirrored):
        inner = m.inner
    else:
        raise OrientationError(f"no dual representation for {m.family}")
    primal = m.block_values(xs)
    rep = h_value(inner, -xs, cfg)
    rows = []
    for r, p in zip(rep.rows, primal):
        dual = -r.dual
        rows.append(
            AtomReport(
                block=r.block,
                label=r.label,
                primal=p,
                dual=dual,
                gap=_gap(p, dual),
                argmax_weights=r.argmax_weights,
                k_at_argmax=-r.k_at_argmax,
                restarts=r.restarts,
                iterations=r.iterations,
                spread=r.spread,
                evaluations=r.evaluations,
                certified=r.certified,
            )
        )
    return DualReport(rep.partition, tuple(rows), m.orientation)


# ---------------------------------------------------------------------------
# conjugate and densities


def fenchel_conjugate(m: MapSpec, q, cfg: SolverCfg = DEFAULT_CFG) -> PerAtom:
    """pi*(Q) = -K(0, Q) per G-atom for a cash-invariant map (Q-NULL where Q(A) = 0)."""
    _quasiconvex(m)
    if not m.is_cash_invariant:
        raise NotCashInvariant(f"{m.family} is not cash invariant")
    dens = as_density(m.g.space, q)
    k = k_value(m, np.zeros(m.g.space.n), dens, cfg)
    null = [q_cond_weights(dens, m.g, b) is None for b in m.g.blocks]
    vals = [0.0 if nl else -v for v, nl in zip(k.values, null)]
    return PerAtom(m.g, vals, null)


def glue_density(per_atom_weights: Sequence[Sequence[float]], g: Partition, space: Optional[FiniteSpace] = None) -> Density:
    """Density whose conditional weights on each block are the given vectors and
    which agrees with P on every block."""
    space = g.space if space is None else space
    if space != g.space:
        raise SpaceMismatch("partition and space differ")
    if len(per_atom_weights) != len(g.blocks):
        raise DimensionMismatch(f"expected {len(g.blocks)} weight vectors, got {len(per_atom_weights)}")
    q = [0.0] * space.n
    for block, w in zip(g.blocks, per_atom_weights):
        if len(w) != len(block):
            raise DimensionMismatch(f"block {list(block)} needs {len(block)} weights, got {len(w)}")
        if any(not wi >= 0.0 for wi in w) or abs(math.fsum(w) - 1.0) > 1e-9:
            raise DomainViolation("conditional weights must be nonnegative and sum to 1")
        mass = g.mass(block)
        for i, wi in zip(block, w):
            q[i] = mass * wi / space.probs[i]
    return Density(tuple(q), normalized=True)


def split_density(q, g: Partition) -> list:
    """Conditional weights of q on every block (None on Q-null blocks)."""
    dens = as_density(g.space, q)
    return [q_cond_weights(dens, g, b) for b in g.blocks]


def restrict_to_P_G(q, g: Partition, space: Optional[FiniteSpace] = None) -> Density:
    """Rescale q inside each block so that the new measure agrees with P on G."""
    dens = as_density(g.space, q)
    out = list(dens.q)
    for block in g.blocks:
        qm = q_mass(dens, g, block)
        if qm <= 0.0:
            raise QNullAtom(f"Q vanishes on block {list(block)}")
        factor = g.mass(block) / qm
        if factor != 1.0:
            for i in block:
                out[i] = dens.q[i] * factor
    return Density(tuple(out), normalized=True)
