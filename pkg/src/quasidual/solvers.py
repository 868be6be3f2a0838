"""Monotone bisection and multi-start search over probability simplices.

``bisect`` locates the threshold of a nondecreasing predicate. It works on
the dyadic lattice ``2**-k`` with ``2**-k`` at least ``GUARD_BITS`` binary
places finer than the requested tolerance and returns the smallest lattice
point where the predicate holds. The result therefore depends only on the
predicate, never on the bracket or on the optional starting hint, which
makes it monotone in any parameter the predicate is monotone in.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .rng import Xorshift64Star

BRACKET_LIMIT = 1e6
GUARD_BITS = 10
NEG_SENTINEL = -1e300


class BisectStatus(enum.Enum):
    CONVERGED = "Converged"
    UNBOUNDED = "Unbounded"
    BRACKET_EXHAUSTED = "BracketExhausted"


@dataclass(frozen=True)
class BisectResult:
    root: float
    bracket_final: tuple[float, float]
    iterations: int
    status: BisectStatus

    @property
    def converged(self) -> bool:
        return self.status is BisectStatus.CONVERGED


@dataclass(frozen=True)
class SolverCfg:
    bisect_tol: float = 1e-9
    bracket_init: Optional[tuple[float, float]] = None
    restarts: int = 16
    grid_fallback_resolution: int = 20
    seed: int = 0
    grid_max_points: int = 2000
    max_sweeps: int = 60
    line_tol: float = 1e-10
    # stop refining once the best value is within this of a known upper bound
    stop_tol: float = 1e-11

    def __post_init__(self):
        if not self.bisect_tol > 0:
            raise ValueError("bisect_tol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.grid_fallback_resolution < 1:
            raise ValueError("grid_fallback_resolution must be at least 1")


DEFAULT_CFG = SolverCfg()


def _lattice_bits(tol: float) -> int:
    # lattice indices are Python ints; far from zero the points i / 2**k round,
    # but i -> i / 2**k stays nondecreasing, so the search remains monotone
    return math.ceil(-math.log2(tol)) + GUARD_BITS


def _expand(pred, lo: float, hi: float):
    """Grow [lo, hi] until pred(lo) is false and pred(hi) is true.

    Returns (lo, hi, status, evaluations); lo/hi are None on failure.
    """
    if not lo < hi:
        lo, hi = min(lo, hi) - 0.5, max(lo, hi) + 0.5
    width = max(hi - lo, 1.0)
    evals = 1
    if pred(lo):
        # a predicate that holds at the limit holds everywhere above it
        evals += 1
        if lo <= -BRACKET_LIMIT or pred(-BRACKET_LIMIT):
            return None, lo, BisectStatus.UNBOUNDED, evals
        while True:
            hi = lo
            lo = max(lo - width, -BRACKET_LIMIT)
            width *= 2.0
            evals += 1
            if not pred(lo):
                break
    evals += 1
    if not pred(hi):
        evals += 1
        if hi >= BRACKET_LIMIT or not pred(BRACKET_LIMIT):
            return hi, None, BisectStatus.BRACKET_EXHAUSTED, evals
        while True:
            lo = hi
            hi = min(hi + width, BRACKET_LIMIT)
            width *= 2.0
            evals += 1
            if pred(hi):
                break
    return lo, hi, BisectStatus.CONVERGED, evals


def _lattice_search(pred, lo: float, hi: float, tol: float, hint: Optional[float], evals: int):
    k = _lattice_bits(tol)
    scale = 2.0**k
    lo_i = math.floor(lo * scale)
    hi_i = math.ceil(hi * scale)
    if lo_i == hi_i:
        lo_i -= 1
    cache: dict[int, bool] = {}

    def test(i: int) -> bool:
        nonlocal evals
        if i not in cache:
            evals += 1
            cache[i] = bool(pred(i / scale))
        return cache[i]

    if hint is not None and math.isfinite(hint):
        g = min(max(math.ceil(hint * scale), lo_i + 1), hi_i)
        if test(g):
            hi_i = g
            step = 1
            while hi_i - lo_i > 1:
                cand = max(hi_i - step, lo_i + 1)
                if cand >= hi_i:
                    break
                if test(cand):
                    hi_i = cand
                    step *= 2
                else:
                    lo_i = cand
                    break
        else:
            lo_i = g
            step = 1
            while hi_i - lo_i > 1:
                cand = min(lo_i + step, hi_i - 1)
                if cand <= lo_i:
                    break
                if test(cand):
                    hi_i = cand
                    break
                lo_i = cand
                step *= 2
    while hi_i - lo_i > 1:
        mid = (lo_i + hi_i) // 2
        if test(mid):
            hi_i = mid
        else:
            lo_i = mid
    return BisectResult(hi_i / scale, (lo_i / scale, hi_i / scale), evals, BisectStatus.CONVERGED)


def bisect(
    pred: Callable[[float], bool],
    lo: float,
    hi: float,
    tol: float = 1e-9,
    *,
    hint: Optional[float] = None,
) -> BisectResult:
    """Threshold of a nondecreasing boolean predicate (false below, true above).

    The bracket is expanded geometrically up to +-1e6. When the predicate
    holds everywhere the status is UNBOUNDED with root -1e6; when it never
    holds, BRACKET_EXHAUSTED with root +1e6.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    lo_e, hi_e, status, evals = _expand(pred, float(lo), float(hi))
    if status is BisectStatus.UNBOUNDED:
        return BisectResult(-BRACKET_LIMIT, (-BRACKET_LIMIT, hi_e), evals, status)
    if status is BisectStatus.BRACKET_EXHAUSTED:
        return BisectResult(BRACKET_LIMIT, (lo_e, BRACKET_LIMIT), evals, status)
    return _lattice_search(pred, lo_e, hi_e, tol, hint, evals)


def _illinois(h, a: float, fa: float, b: float, fb: float, resolution: float, max_iter: int = 60):
    """Regula falsi (Illinois variant) estimate of the crossing of h in [a, b]."""
    side = 0
    for _ in range(max_iter):
        if b - a <= resolution:
            break
        if math.isfinite(fa) and math.isfinite(fb) and fb != fa:
            c = b - fb * (b - a) / (fb - fa)
            if not a < c < b:
                c = 0.5 * (a + b)
        else:
            c = 0.5 * (a + b)
        fc = h(c)
        if fc != fc:
            break
        if fc >= 0.0:
            if fc == 0.0:
                return c
            b, fb = c, fc
            # halve the stale end only when the same end moves twice in a row
            if side == 1 and math.isfinite(fa):
                fa *= 0.5
            side = 1
        else:
            a, fa = c, fc
            if side == -1 and math.isfinite(fb):
                fb *= 0.5
            side = -1
    return b


def threshold(
    h: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-9,
) -> BisectResult:
    """``bisect`` on the predicate h(c) >= 0 for a nondecreasing extended-real h.

    A regula falsi pass on the finite values of h supplies the starting hint.
    The returned root is the same one plain bisection would return.
    """
    values: dict[float, float] = {}

    def hv(c: float) -> float:
        v = values.get(c)
        if v is None:
            v = h(c)
            values[c] = v
        return v

    def pred(c: float) -> bool:
        return hv(c) >= 0.0

    lo_e, hi_e, status, evals = _expand(pred, float(lo), float(hi))
    if status is BisectStatus.UNBOUNDED:
        return BisectResult(-BRACKET_LIMIT, (-BRACKET_LIMIT, hi_e), evals, status)
    if status is BisectStatus.BRACKET_EXHAUSTED:
        return BisectResult(BRACKET_LIMIT, (lo_e, BRACKET_LIMIT), evals, status)
    k = _lattice_bits(tol)
    hint = _illinois(hv, lo_e, hv(lo_e), hi_e, hv(hi_e), 2.0**-k / 4)
    res = _lattice_search(pred, lo_e, hi_e, tol, hint, 0)
    return BisectResult(res.root, res.bracket_final, len(values), res.status)


# ---------------------------------------------------------------------------
# simplex search


@dataclass
class SimplexResult:
    weights: tuple[float, ...]
    value: float
    restarts_used: int = 0
    iterations: int = 0
    spread: float = 0.0
    evaluations: int = 0
    certified: bool = False
    grid_points: int = 0
    history_max: float = -math.inf
    start_values: list = field(default_factory=list, repr=False)


def _brent_max(phi, tol: float, max_iter: int = 100):
    """Maximize phi on (0, 1): golden-section search with parabolic steps."""
    cgold = 0.3819660112501051
    a, b = 0.0, 1.0
    x = w = v = a + cgold * (b - a)
    raw_x = phi(x)
    fx = -_finite(raw_x)
    fw = fv = fx
    d = e = 0.0
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        tol1 = tol + 1e-12 * abs(x)
        tol2 = 2.0 * tol1
        if abs(x - m) <= tol2 - 0.5 * (b - a):
            break
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            etemp = e
            e = d
            if abs(p) >= abs(0.5 * q * etemp) or p <= q * (a - x) or p >= q * (b - x):
                e = (a - x) if x >= m else (b - x)
                d = cgold * e
            else:
                d = p / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = tol1 if m >= x else -tol1
        else:
            e = (a - x) if x >= m else (b - x)
            d = cgold * e
        u = x + d if abs(d) >= tol1 else x + (tol1 if d > 0 else -tol1)
        raw_u = phi(u)
        fu = -_finite(raw_u)
        if fu <= fx:
            if u >= x:
                a = x
            else:
                b = x
            v, fv = w, fw
            w, fw = x, fx
            x, fx, raw_x = u, fu, raw_u
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv = w, fw
                w, fw = u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, raw_x


def _finite(v: float) -> float:
    if v == -math.inf or v != v:
        return NEG_SENTINEL
    if v == math.inf:
        return -NEG_SENTINEL
    return v


def simplex_grid(dim: int, resolution: int):
    """All points of the simplex with coordinates in multiples of 1/resolution."""
    for bars in itertools.combinations(range(resolution + dim - 1), dim - 1):
        prev = -1
        parts = []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(resolution + dim - 2 - prev)
        yield tuple(c / resolution for c in parts)


def grid_resolution(dim: int, resolution: int, max_points: int) -> int:
    r = resolution
    while r > 1 and math.comb(r + dim - 1, dim - 1) > max_points:
        r -= 1
    return r


class _Counted:
    __slots__ = ("f", "count", "best")

    def __init__(self, f):
        self.f = f
        self.count = 0
        self.best = -math.inf

    def __call__(self, w):
        self.count += 1
        v = self.f(w)
        if v > self.best:
            self.best = v
        return v


def _pair_ascent(f, w, fw, cfg: SolverCfg, stop_at: float):
    """Coordinate-pair ascent: move mass between two coordinates at a time."""
    w = list(w)
    dim = len(w)
    sweeps = 0
    spread = 0.0
    for sweeps in range(1, cfg.max_sweeps + 1):
        spread = 0.0
        gain = 0.0
        for i in range(dim - 1):
            for j in range(i + 1, dim):
                mass = w[i] + w[j]
                if mass <= 1e-15:
                    continue

                def phi(s, i=i, j=j, mass=mass):
                    trial = list(w)
                    trial[i] = s * mass
                    trial[j] = mass - s * mass
                    return f(trial)

                cands = [(phi(0.0), 0.0), (phi(1.0), 1.0)]
                s_in, v_in = _brent_max(phi, cfg.line_tol)
                cands.append((v_in, s_in))
                v_best, s_best = max(cands, key=lambda t: t[0])
                if v_best > fw:
                    gain += v_best - fw
                    new_i = s_best * mass
                    move = abs(new_i - w[i])
                    spread = max(spread, move)
                    w[i] = new_i
                    w[j] = mass - new_i
                    fw = v_best
                    if fw >= stop_at:
                        return tuple(w), fw, sweeps, spread
        if spread < cfg.line_tol or gain <= 1e-15:
            break
    return tuple(w), fw, sweeps, spread


def simplex_search(
    f: Callable[[Sequence[float]], float],
    dim: int,
    cfg: SolverCfg = DEFAULT_CFG,
    *,
    extra_starts: Sequence[Sequence[float]] = (),
    target: Optional[float] = None,
    rng: Optional[Xorshift64Star] = None,
) -> SimplexResult:
    """Maximize an extended-real function over the probability simplex.

    Starts: every vertex, the uniform point, ``extra_starts`` and
    ``cfg.restarts`` random points, each refined by coordinate-pair ascent
    in order of their initial value. If ``target`` is an upper bound for f
    (e.g. from weak duality), refinement stops once the best value reaches
    ``target - cfg.stop_tol``; otherwise, or if that never happens, a
    simplex grid is scanned and its best point refined too.
    """
    if dim < 1:
        raise ValueError("simplex dimension must be at least 1")
    fc = _Counted(f)
    if dim == 1:
        v = fc((1.0,))
        return SimplexResult((1.0,), v, 1, 0, 0.0, fc.count, target is not None and v >= target - cfg.stop_tol, 0, fc.best)

    rng = rng if rng is not None else Xorshift64Star(cfg.seed)
    stop_at = math.inf if target is None else target - cfg.stop_tol
    starts: list[tuple[float, ...]] = []
    for k in range(dim):
        starts.append(tuple(1.0 if i == k else 0.0 for i in range(dim)))
    starts.append(tuple([1.0 / dim] * dim))
    for s in extra_starts:
        tot = math.fsum(s)
        starts.append(tuple(v / tot for v in s))
    scored = [(fc(s), idx, s) for idx, s in enumerate(starts)]
    # random starts are only needed when the deterministic ones do not settle it
    if max(v for v, _, _ in scored) < stop_at:
        for _ in range(cfg.restarts):
            s = tuple(rng.dirichlet_ones(dim))
            scored.append((fc(s), len(scored), s))
    start_values = [v for v, _, _ in scored]
    order = sorted(scored, key=lambda t: (-_finite(t[0]), t[1]))

    best_v, _, best_w = order[0]
    used = 0
    sweeps_total = 0
    best_spread = 0.0
    for v0, _, s in order:
        if best_v >= stop_at or v0 == -math.inf:
            break
        used += 1
        w, v, sweeps, spread = _pair_ascent(fc, s, v0, cfg, stop_at)
        sweeps_total += sweeps
        if v > best_v:
            best_w, best_v, best_spread = w, v, spread

    n_grid = 0
    if best_v < stop_at:
        res = grid_resolution(dim, cfg.grid_fallback_resolution, cfg.grid_max_points)
        g_best_v, g_best_w = -math.inf, None
        for point in simplex_grid(dim, res):
            n_grid += 1
            v = fc(point)
            if v > g_best_v:
                g_best_v, g_best_w = v, point
        if g_best_w is not None and g_best_v > -math.inf:
            used += 1
            w, v, sweeps, spread = _pair_ascent(fc, g_best_w, g_best_v, cfg, stop_at)
            sweeps_total += sweeps
            if v > best_v:
                best_w, best_v, best_spread = w, v, spread
    return SimplexResult(
        weights=tuple(best_w),
        value=best_v,
        restarts_used=used,
        iterations=sweeps_total,
        spread=best_spread,
        evaluations=fc.count,
        certified=best_v >= stop_at,
        grid_points=n_grid,
        history_max=fc.best,
        start_values=start_values,
    )
