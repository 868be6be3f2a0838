"""Quasiconvex conditional maps on a finite space.

Every map acts atom by atom: its value on a G-atom depends only on the
payoff restricted to that atom. Besides evaluation each quasiconvex family
exposes a *support oracle*

    S(c, w) = sup { sum_i w_i xi_i : pi_atom(xi) <= c }

for nonnegative weights w on the atom. S is nondecreasing in c and
positively homogeneous in w, which is all the dual engine needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainViolation,
    InputError,
    NotGMeasurablePartition,
    OrientationError,
    WeightAllZero,
)
from .prob import Partition, as_rv, common_coarsening

QUASICONVEX = "quasiconvex"
QUASICONCAVE = "quasiconcave"
INF = math.inf


def _kl(w: Sequence[float], v: Sequence[float]) -> float:
    """KL(w || v) for a probability vector w, with 0 log 0 = 0."""
    return math.fsum(wi * math.log(wi / vi) for wi, vi in zip(w, v) if wi > 0.0)


def _check_weights(w: Sequence[float], size: int) -> float:
    if len(w) != size:
        raise DimensionMismatch(f"expected {size} weights, got {len(w)}")
    total = 0.0
    for wi in w:
        if not wi >= 0.0 or not math.isfinite(wi):
            raise DomainViolation("support weights must be finite and nonnegative")
        total += wi
    if total <= 0.0:
        raise WeightAllZero("support weights are all zero")
    return total


def _logmeanexp(vals: Sequence[float], v: Sequence[float], scale: float) -> float:
    """log sum_i v_i exp(scale * x_i), computed stably."""
    top = max(scale * x for x in vals)
    return top + math.log(math.fsum(vi * math.exp(scale * x - top) for x, vi in zip(vals, v)))


# ---------------------------------------------------------------------------
# building blocks


@dataclass(frozen=True)
class Loss:
    """Increasing convex loss: ``exp`` is e^{beta x}, ``softplus`` is log(1 + e^{beta x}) / beta."""

    kind: str = "softplus"
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("exp", "softplus"):
            raise InputError(f"unknown loss {self.kind!r}; expected 'exp' or 'softplus'")
        if not self.beta > 0:
            raise InputError("loss slope beta must be positive")

    def value(self, x: float) -> float:
        bx = self.beta * x
        if self.kind == "exp":
            return math.exp(bx)
        return (max(bx, 0.0) + math.log1p(math.exp(-abs(bx)))) / self.beta

    def deriv(self, x: float) -> float:
        bx = self.beta * x
        if self.kind == "exp":
            return self.beta * math.exp(bx)
        if bx >= 0:
            return 1.0 / (1.0 + math.exp(-bx))
        e = math.exp(bx)
        return e / (1.0 + e)

    def array(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "exp":
            return np.exp(self.beta * x)
        return np.logaddexp(0.0, self.beta * x) / self.beta


@dataclass(frozen=True)
class Outer:
    """Increasing continuous outer function on (0, inf)."""

    kind: str = "log"

    def __post_init__(self):
        if self.kind not in ("identity", "log", "sqrt"):
            raise InputError(f"unknown outer function {self.kind!r}; expected identity, log or sqrt")

    def value(self, s: float) -> float:
        if self.kind == "identity":
            return s
        if self.kind == "log":
            return math.log(s) if s > 0 else -INF
        return math.sqrt(s)

    def array(self, s: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return s
        if self.kind == "log":
            return np.log(s)
        return np.sqrt(s)

    def level(self, c: float) -> float:
        """Largest s with f(s) <= c (may be <= 0, meaning no admissible s)."""
        if self.kind == "identity":
            return c
        if self.kind == "log":
            return math.exp(c) if c < 709.0 else INF
        return c * c if c >= 0 else -1.0

    def at_zero(self) -> float:
        return -INF if self.kind == "log" else 0.0

    def deriv(self, s: float) -> float:
        if self.kind == "identity":
            return 1.0
        if self.kind == "log":
            return 1.0 / s
        return 0.5 / math.sqrt(s)


@dataclass(frozen=True)
class Transform:
    """Monotone real transform. All kinds are strictly increasing except ``negate``."""

    kind: str = "arctan"
    shift: float = 1.0

    KINDS = ("identity", "arctan", "cubic", "exp", "negate")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InputError(f"unknown transform {self.kind!r}; expected one of {', '.join(self.KINDS)}")

    @property
    def increasing(self) -> bool:
        return self.kind != "negate"

    def value(self, t: float) -> float:
        k = self.kind
        if k == "identity":
            return t
        if k == "arctan":
            return math.atan(t)
        if k == "cubic":
            return (t - self.shift) ** 3
        if k == "exp":
            if t == -INF:
                return 0.0
            return math.exp(t) if t < 709.0 else INF
        return -t

    def array(self, t: np.ndarray) -> np.ndarray:
        k = self.kind
        if k == "identity":
            return t
        if k == "arctan":
            return np.arctan(t)
        if k == "cubic":
            d = t - self.shift
            return d * d * d
        if k == "exp":
            return np.exp(t)
        return -t

    def inverse(self, c: float) -> float:
        """g^{-1}(c) for increasing g, clamped to -inf / +inf outside the range."""
        k = self.kind
        if k == "identity":
            return c
        if k == "arctan":
            if c <= -math.pi / 2:
                return -INF
            if c >= math.pi / 2:
                return INF
            return math.tan(c)
        if k == "cubic":
            return self.shift + math.copysign(abs(c) ** (1.0 / 3.0), c)
        if k == "exp":
            return math.log(c) if c > 0 else -INF
        raise OrientationError("a decreasing transform has no increasing inverse")

    def max_deriv(self, lo: float, hi: float) -> float:
        """sup of |g'| over [lo, hi]."""
        k = self.kind
        if k in ("identity", "negate"):
            return 1.0
        if k == "arctan":
            t = 0.0 if lo <= 0.0 <= hi else min(abs(lo), abs(hi))
            return 1.0 / (1.0 + t * t)
        if k == "cubic":
            return 3.0 * max((lo - self.shift) ** 2, (hi - self.shift) ** 2)
        return math.exp(hi)


@dataclass(frozen=True)
class Utility:
    """Strictly increasing concave utility: exponential(alpha), power(eta) or log."""

    kind: str = "exponential"
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ("exponential", "power", "log"):
            raise InputError(f"unknown utility {self.kind!r}; expected exponential, power or log")
        if self.kind == "exponential" and not self.param > 0:
            raise InputError("exponential utility needs alpha > 0")
        if self.kind == "power" and not 0 < self.param < 1:
            raise InputError("power utility needs eta in (0, 1)")

    @property
    def positive_domain(self) -> bool:
        return self.kind != "exponential"

    def u(self, x: float) -> float:
        if self.kind == "exponential":
            return 1.0 - math.exp(-self.param * x)
        if self.kind == "power":
            return x**self.param
        return math.log(x)

    def u_inv(self, s: float) -> float:
        if self.kind == "exponential":
            return -math.log1p(-s) / self.param
        if self.kind == "power":
            return s ** (1.0 / self.param)
        return math.exp(s)

    def certainty_equivalent(self, vals: Sequence[float], v: Sequence[float]) -> float:
        if self.positive_domain and min(vals) <= 0:
            raise DomainViolation(f"{self.kind} utility needs strictly positive payoffs, got {min(vals)!r}")
        if self.kind == "exponential":
            return -_logmeanexp(vals, v, -self.param) / self.param
        if self.kind == "log":
            return math.exp(math.fsum(vi * math.log(x) for x, vi in zip(vals, v)))
        return self.u_inv(math.fsum(vi * self.u(x) for x, vi in zip(vals, v)))


# ---------------------------------------------------------------------------
# map families


class MapSpec:
    """Common interface. Subclasses are frozen dataclasses with a ``g`` partition."""

    g: Partition
    orientation = QUASICONVEX
    is_cash_invariant = False

    @property
    def family(self) -> str:
        return type(self).__name__

    @property
    def out_partition(self) -> Partition:
        """Partition the map's output is measurable for."""
        return self.g

    def weights(self, k: int) -> tuple[float, ...]:
        return self.g.cond_weights(self.g.blocks[k])

    # per-atom interface (k indexes blocks of g)
    def atom_value(self, k: int, vals: Sequence[float]) -> float:
        raise NotImplementedError

    def atom_array(self, k: int, cols: Sequence[np.ndarray]) -> np.ndarray:
        """Vectorized atom_value over broadcastable coordinate arrays."""
        raise NotImplementedError(f"{self.family} has no vectorized evaluation")

    def atom_support(self, k: int, c: float, w: Sequence[float]) -> float:
        raise OrientationError(f"{self.family} has no support oracle")

    def atom_inf(self, k: int) -> float:
        """inf of pi over payoffs on atom k (the value of K on a Q-null atom)."""
        return -INF

    def atom_hint(self, k: int, vals: Sequence[float]) -> Optional[tuple[float, ...]]:
        """A candidate maximizer of w -> K for the dual search, if one is known."""
        return None

    def slope_bound(self, k: int, lo: float, hi: float) -> float:
        """Lipschitz constant of pi_atom in the sup-norm on the box [lo, hi]^A."""
        raise NotImplementedError

    def block_values(self, xs: np.ndarray) -> list[float]:
        out = []
        for k, block in enumerate(self.g.blocks):
            out.append(self.atom_value(k, [float(xs[i]) for i in block]))
        return out

    def evaluate(self, x) -> np.ndarray:
        xs = as_rv(self.g.space, x)
        if not np.all(np.isfinite(xs)):
            raise DomainViolation("payoffs must be finite")
        vals = self.block_values(xs)
        out = np.empty(self.g.space.n)
        for val, block in zip(vals, self.out_partition.blocks):
            out[list(block)] = val
        return out


@dataclass(frozen=True)
class Entropic(MapSpec):
    """(1/gamma) log E[exp(gamma X) | G]."""

    g: Partition
    gamma: float = 1.0
    is_cash_invariant = True

    def __post_init__(self):
        if not self.gamma > 0:
            raise InputError("entropic gamma must be positive")

    def atom_value(self, k, vals):
        return _logmeanexp(vals, self.weights(k), self.gamma) / self.gamma

    def atom_array(self, k, cols):
        g = self.gamma
        top = max(float(np.max(c)) for c in cols) * g
        acc = 0.0
        for c, vi in zip(cols, self.weights(k)):
            acc = acc + vi * np.exp(g * c - top)
        return (top + np.log(acc)) / g

    def atom_support(self, k, c, w):
        v = self.weights(k)
        s = _check_weights(w, len(v))
        return s * (c + _kl([wi / s for wi in w], v) / self.gamma)

    def atom_hint(self, k, vals):
        v = self.weights(k)
        top = max(vals)
        raw = [vi * math.exp(self.gamma * (x - top)) for x, vi in zip(vals, v)]
        s = math.fsum(raw)
        return tuple(r / s for r in raw)

    def slope_bound(self, k, lo, hi):
        return 1.0


@dataclass(frozen=True)
class WorstCase(MapSpec):
    """Largest payoff on each atom."""

    g: Partition
    is_cash_invariant = True

    def atom_value(self, k, vals):
        return max(vals)

    def atom_array(self, k, cols):
        out = cols[0]
        for c in cols[1:]:
            out = np.maximum(out, c)
        return out

    def atom_support(self, k, c, w):
        s = _check_weights(w, len(self.g.blocks[k]))
        return c * s

    def atom_hint(self, k, vals):
        top = max(range(len(vals)), key=lambda i: vals[i])
        return tuple(1.0 if i == top else 0.0 for i in range(len(vals)))

    def slope_bound(self, k, lo, hi):
        return 1.0


@dataclass(frozen=True)
class Composite(MapSpec):
    """f(E[l(X) | G]) for an increasing convex loss l and increasing outer f."""

    g: Partition
    loss: Loss = field(default_factory=Loss)
    outer: Outer = field(default_factory=Outer)

    def atom_value(self, k, vals):
        ell = self.loss.value
        return self.outer.value(math.fsum(vi * ell(x) for x, vi in zip(vals, self.weights(k))))

    def atom_array(self, k, cols):
        acc = 0.0
        for c, vi in zip(cols, self.weights(k)):
            acc = acc + vi * self.loss.array(c)
        return self.outer.array(acc)

    def atom_inf(self, k):
        return self.outer.at_zero()

    def atom_support(self, k, c, w):
        v = self.weights(k)
        s = _check_weights(w, len(v))
        b = self.outer.level(c)
        if b <= 0.0:
            return -INF
        if b == INF:
            return INF
        if self.loss.kind == "exp":
            return s * (math.log(b) + _kl([wi / s for wi in w], v)) / self.loss.beta
        return _softplus_support(b, w, v, self.loss.beta)

    def atom_hint(self, k, vals):
        raw = [vi * self.loss.deriv(x) for x, vi in zip(vals, self.weights(k))]
        s = math.fsum(raw)
        if not s > 0:
            return None
        return tuple(r / s for r in raw)

    def slope_bound(self, k, lo, hi):
        ell = self.loss
        if self.outer.kind == "identity":
            return ell.deriv(hi)
        if self.outer.kind == "log":
            # sum v l' / sum v l <= max l'/l, and l'/l is nonincreasing for both losses
            return ell.deriv(lo) / ell.value(lo)
        return ell.deriv(hi) / (2.0 * math.sqrt(ell.value(lo)))


def _softplus_support(b: float, w, v, beta: float) -> float:
    """sup { w.xi : sum v_i softplus(xi_i) <= b } by Newton on the log-multiplier.

    With y_i = w_i / (lam v_i) the inner maximizers satisfy sigmoid(beta xi_i) = y_i,
    and the constraint reads sum v_i (-log(1 - y_i)) / beta = b. The value is the
    dual function lam b + sum lam v_i l*(y_i), l*(y) = (y log y + (1-y) log(1-y)) / beta.
    """
    pairs = [(wi / vi, vi) for wi, vi in zip(w, v) if wi > 0.0]
    u_lo = math.log(max(r for r, _ in pairs))

    def resid(u):
        tot = 0.0
        der = 0.0
        for r, vi in pairs:
            y = r * math.exp(-u)
            if y >= 1.0:
                return -INF, INF
            tot += vi * -math.log1p(-y)
            der += vi * y / (1.0 - y)
        return b - tot / beta, der / beta

    step = 1.0
    u_hi = u_lo + step
    f_hi, d_hi = resid(u_hi)
    while f_hi < 0.0:
        u_lo = u_hi
        step *= 2.0
        u_hi = u_lo + step
        f_hi, d_hi = resid(u_hi)
    u, fu, du = u_hi, f_hi, d_hi
    for _ in range(200):
        if fu == 0.0:
            break
        cand = u - fu / du if math.isfinite(fu) and du > 0 else 0.5 * (u_lo + u_hi)
        if not u_lo < cand < u_hi:
            cand = 0.5 * (u_lo + u_hi)
        delta = abs(cand - u)
        u = cand
        fu, du = resid(u)
        if fu < 0.0:
            u_lo = u
        else:
            u_hi = u
        if delta < 1e-15 * max(1.0, abs(u)) or u_hi - u_lo < 1e-15 * max(1.0, abs(u)):
            break
    if fu == -INF:
        u = u_hi
    # any multiplier gives an upper bound; at the root the bound is tight to second order
    lam = math.exp(u)
    total = lam * b
    for r, vi in pairs:
        y = r / lam
        total += lam * vi * (y * math.log(y) + (1.0 - y) * math.log1p(-y)) / beta
    return total


@dataclass(frozen=True)
class Transformed(MapSpec):
    """g(inner(X)) for a monotone real transform g."""

    inner: MapSpec
    transform: Transform = field(default_factory=Transform)

    def __post_init__(self):
        if self.inner.orientation != QUASICONVEX:
            raise OrientationError("transforms apply to quasiconvex maps only")
        if isinstance(self.inner, Coarsened):
            raise InputError("use transformed() to transform a coarsened map")

    @property
    def g(self) -> Partition:
        return self.inner.g

    @property
    def is_cash_invariant(self) -> bool:
        return self.transform.kind == "identity" and self.inner.is_cash_invariant

    def atom_value(self, k, vals):
        return self.transform.value(self.inner.atom_value(k, vals))

    def atom_array(self, k, cols):
        return self.transform.array(self.inner.atom_array(k, cols))

    def atom_inf(self, k):
        if not self.transform.increasing:
            return -INF
        return self.transform.value(self.inner.atom_inf(k)) if self.inner.atom_inf(k) > -INF else self._range_lo()

    def _range_lo(self) -> float:
        return {"identity": -INF, "arctan": -math.pi / 2, "cubic": -INF, "exp": 0.0}[self.transform.kind]

    def atom_support(self, k, c, w):
        _check_weights(w, len(self.g.blocks[k]))
        if not self.transform.increasing:
            # level sets of a decreasing transform are upper sets: unbounded above
            return INF
        b = self.transform.inverse(c)
        if b == -INF:
            return -INF
        if b == INF:
            return INF
        return self.inner.atom_support(k, b, w)

    def atom_hint(self, k, vals):
        return self.inner.atom_hint(k, vals)

    def slope_bound(self, k, lo, hi):
        n = len(self.g.blocks[k])
        t_lo = self.inner.atom_value(k, [lo] * n)
        t_hi = self.inner.atom_value(k, [hi] * n)
        return self.transform.max_deriv(t_lo, t_hi) * self.inner.slope_bound(k, lo, hi)


@dataclass(frozen=True)
class Coarsened(MapSpec):
    """Per block of gamma, the largest value of the inner map over that block."""

    inner: MapSpec
    gamma: Partition
    _members: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.inner.orientation != QUASICONVEX:
            raise OrientationError("only quasiconvex maps can be coarsened")
        if isinstance(self.inner, Coarsened):
            raise InputError("use coarsen() to coarsen an already coarsened map")
        if not self.inner.g.refines(self.gamma):
            raise NotGMeasurablePartition("every coarsening block must be a union of G-atoms")
        members = []
        for block in self.gamma.blocks:
            members.append(tuple(k for k, a in enumerate(self.inner.g.blocks) if a[0] in block))
        object.__setattr__(self, "_members", tuple(members))

    @property
    def g(self) -> Partition:
        return self.inner.g

    @property
    def out_partition(self) -> Partition:
        return self.gamma

    @property
    def is_cash_invariant(self) -> bool:
        return self.inner.is_cash_invariant

    def members(self, j: int) -> tuple[int, ...]:
        """Indices of the G-atoms inside block j of gamma."""
        return self._members[j]

    def block_values(self, xs):
        inner = self.inner.block_values(xs)
        return [max(inner[k] for k in self._members[j]) for j in range(len(self.gamma))]

    def block_support(self, j: int, c: float, w: Sequence[float]) -> float:
        """Support over block j of gamma: constraints and objective split across G-atoms."""
        block = self.gamma.blocks[j]
        _check_weights(w, len(block))
        pos = {i: n for n, i in enumerate(block)}
        total = 0.0
        for k in self._members[j]:
            atom = self.g.blocks[k]
            wa = [w[pos[i]] for i in atom]
            if sum(wa) > 0.0:
                total += self.inner.atom_support(k, c, wa)
            elif self.inner.atom_support(k, c, [1.0] * len(atom)) == -INF:
                return -INF
        return total

    def slope_bound(self, k, lo, hi):
        return self.inner.slope_bound(k, lo, hi)


@dataclass(frozen=True)
class Mirrored(MapSpec):
    """The quasiconcave map X -> -inner(-X)."""

    inner: MapSpec
    orientation = QUASICONCAVE

    @property
    def g(self) -> Partition:
        return self.inner.g

    @property
    def out_partition(self) -> Partition:
        return self.inner.out_partition

    @property
    def is_cash_invariant(self) -> bool:
        return self.inner.is_cash_invariant

    def block_values(self, xs):
        return [-v for v in self.inner.block_values(-np.asarray(xs))]

    def atom_value(self, k, vals):
        return -self.inner.atom_value(k, [-x for x in vals])


@dataclass(frozen=True)
class CertaintyEquivalent(MapSpec):
    """u^{-1}(E[u(X) | G]) for a concave utility u."""

    g: Partition
    utility: Utility = field(default_factory=Utility)
    orientation = QUASICONCAVE

    @property
    def is_cash_invariant(self) -> bool:
        return self.utility.kind == "exponential"

    def atom_value(self, k, vals):
        return self.utility.certainty_equivalent(vals, self.weights(k))

    def dual_form(self) -> "Mirrored":
        """The same map written as a mirrored quasiconvex map (exponential utility only)."""
        if self.utility.kind != "exponential":
            raise OrientationError("a dual form is available only for exponential utility")
        return Mirrored(Entropic(self.g, self.utility.param))


# ---------------------------------------------------------------------------
# constructors and operations


def coarsen(m: MapSpec, gamma: Partition) -> Coarsened:
    """The map whose value on each block of gamma is the largest value of m there."""
    if m.orientation != QUASICONVEX:
        raise OrientationError("only quasiconvex maps can be coarsened")
    if isinstance(m, Coarsened):
        if not m.g.refines(gamma):
            raise NotGMeasurablePartition("every coarsening block must be a union of G-atoms")
        return Coarsened(m.inner, common_coarsening(m.gamma, gamma))
    return Coarsened(m, gamma)


def transformed(m: MapSpec, transform: Transform) -> MapSpec:
    """transform o m; increasing transforms commute with coarsening and are pushed inside."""
    if isinstance(m, Coarsened):
        if not transform.increasing:
            raise InputError("a decreasing transform does not commute with coarsening")
        return Coarsened(Transformed(m.inner, transform), m.gamma)
    return Transformed(m, transform)


def mirror(m: MapSpec) -> MapSpec:
    """X -> -m(-X); mirroring twice returns the original map."""
    if isinstance(m, Mirrored):
        return m.inner
    return Mirrored(m)


def evaluate(m: MapSpec, x) -> np.ndarray:
    return m.evaluate(x)


def _block_index(partition: Partition, atom) -> int:
    key = tuple(sorted(int(i) for i in atom))
    for k, block in enumerate(partition.blocks):
        if block == key:
            return k
    raise NotGMeasurablePartition(f"{list(key)} is not a block of the map's output partition")


def support_value(m: MapSpec, atom, c: float, w) -> float:
    """sup of sum_i w_i xi_i over payoffs on ``atom`` with m's value at most c."""
    if m.orientation != QUASICONVEX:
        raise OrientationError("support values are defined for quasiconvex maps")
    weights = [float(wi) for wi in w]
    k = _block_index(m.out_partition, atom)
    if isinstance(m, Coarsened):
        return m.block_support(k, float(c), weights)
    return m.atom_support(k, float(c), weights)


def cce_evaluate(u: Utility, x, g: Partition) -> np.ndarray:
    """Conditional certainty equivalent u^{-1}(E[u(X) | G])."""
    return CertaintyEquivalent(g, u).evaluate(x)


def slope_bound(m: MapSpec, k: int, lo: float, hi: float) -> float:
    return m.slope_bound(k, lo, hi)
