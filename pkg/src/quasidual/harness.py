"""Seeded random instances and the property suite.

Each check is a named mathematical statement (see ``CHECKS``) evaluated on
every generated instance. Results are aggregated per (check, family); a
check passes when no case violated it. Negative-control checks run on a
deliberately broken map and pass only if the violation is detected.
"""

from __future__ import annotations

import csv
import io
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dual import (
    duality_gap,
    fenchel_conjugate,
    glue_density,
    h_value,
    k_value,
    r_value,
    restrict_to_P_G,
    split_density,
)
from .errors import InputError
from .maps import (
    QUASICONVEX,
    CertaintyEquivalent,
    Composite,
    Entropic,
    Loss,
    MapSpec,
    Outer,
    Transform,
    Transformed,
    Utility,
    WorstCase,
    coarsen,
    mirror,
    support_value,
)
from .oracle import GridCfg, enumerate_partitions, grid_k
from .prob import (
    Density,
    FiniteSpace,
    Partition,
    build_space,
    cond_expect,
    indicator_mix,
    normalize_density,
    reference_density,
)
from .rng import Xorshift64Star, splitmix64
from .solvers import DEFAULT_CFG, SolverCfg

FAMILIES = (
    "entropic-0.5",
    "entropic-1",
    "entropic-2",
    "worst-case",
    "composite",
    "transformed-arctan",
    "transformed-cubic",
    "cce-exponential",
)
NEGATIVE_CONTROL = "negated-entropic"
SUITE_FAMILIES = FAMILIES + (NEGATIVE_CONTROL,)

GAP_TOL = 1e-6
NEGATIVE_GAP_THRESHOLD = 1e-3

CHECKS: dict[str, str] = {
    "regularity": "pi(x 1_A + y 1_A^c) = pi(x) 1_A + pi(y) 1_A^c for every union A of G-atoms",
    "monotonicity": "x <= y implies pi(x) <= pi(y)",
    "quasiconvexity": "pi(x_i) <= Y for i = 1, 2 implies pi(L x_1 + (1 - L) x_2) <= Y for G-measurable L in [0, 1]",
    "quasiconcavity": "pi(x_i) >= Y for i = 1, 2 implies pi(L x_1 + (1 - L) x_2) >= Y for G-measurable L in [0, 1]",
    "cash-invariance": "pi(x + l) = pi(x) + l for G-measurable l",
    "support-monotone": "S(c, w) is nondecreasing in c",
    "support-homogeneous": "S(c, l w) = l S(c, w) for l > 0",
    "entropic-support-grid": "grid maximum of w.xi over {pi(xi) <= c} lies in [S(c, w) - 0.1, S(c, w)]",
    "weak-duality": "K(X, Q) <= pi(X) for every density Q",
    "strong-duality": "|pi(X) - sup_Q K(X, Q)| <= 1e-6 on every atom",
    "single-density": "the glued argmax density Q satisfies H(X) - K(X, Q) < 1e-6 on every atom",
    "trivial-g-duality": "with G trivial, |pi(X) - sup_Q K(X, Q)| <= 1e-6",
    "r-k-identity": "R(E_P[xi' X | G], xi') = K(X, xi' / E_P[xi'])",
    "r-scale-invariance": "R(l Y, l xi') = R(Y, xi') exactly for l in {0.5, 2, 10}",
    "r-monotone": "Y1 <= Y2 implies R(Y1, xi') <= R(Y2, xi')",
    "r-lattice-min": "R(Y1 ^ Y2, xi') = R(Y1, xi') ^ R(Y2, xi')",
    "r-lattice-max": "R(Y1 v Y2, xi') = R(Y1, xi') v R(Y2, xi')",
    "r-quasi-affine": "R(L Y1 + (1 - L) Y2, xi') lies between R(Y1, xi') and R(Y2, xi')",
    "k-homogeneity": "K(X, l Q) = K(X, Q) exactly for l in {0.5, 2, 10}",
    "k-locality": "densities equal on atom B give equal K(X, .) on B",
    "k-upward-directed": "the density glued from the better of Q1, Q2 per atom has K >= max(K(X, Q1), K(X, Q2))",
    "transform-equivariance": "K for g o pi equals g(K for pi) for g in {arctan, (t - 1)^3}",
    "conjugate-identity": "K(X, Q) = E_Q[X | G] - pi*(Q) for cash-invariant pi and Q in P_G",
    "downward-directed": "for feasible xi_1, xi_2 the paste on {pi(xi_1) <= pi(xi_2)} is feasible with value min(pi(xi_1), pi(xi_2))",
    "grid-lower-bound": "grid minimum >= K(X, Q) - 1e-9",
    "coarse-min-equals-k": "min over partitions of atoms of K^Gamma(X, Q) equals K(X, Q), attained by the finest one",
    "coarse-dual-equals-primal": "sup_Q K^Gamma(X, Q) = pi^Gamma(X) on every block and pi^Gamma >= pi",
    "transfer-inequality": "K^Gamma(X, Q) <= K^Gamma(X, P) + eps on B for Gamma = {B^c, partition of B}",
    "cce-mirror-agreement": "u^{-1}(E[u(X) | G]) for u(x) = 1 - e^{-x} equals the mirrored entropic map and its inf-sup dual",
    "negative-control-qco": "a decreasing transform of the entropic map violates quasiconvexity on some instance",
    "negative-control-gap": "a decreasing transform of the entropic map has a duality gap above 1e-3 on some instance",
}


# ---------------------------------------------------------------------------
# instances


def make_map(family: str, g: Partition) -> MapSpec:
    if family.startswith("entropic-"):
        return Entropic(g, float(family.split("-", 1)[1]))
    if family == "worst-case":
        return WorstCase(g)
    if family == "composite":
        return Composite(g, Loss("softplus"), Outer("log"))
    if family == "transformed-arctan":
        return Transformed(Entropic(g, 1.0), Transform("arctan"))
    if family == "transformed-cubic":
        return Transformed(Entropic(g, 1.0), Transform("cubic"))
    if family == "cce-exponential":
        return CertaintyEquivalent(g, Utility("exponential", 1.0))
    if family == NEGATIVE_CONTROL:
        return Transformed(Entropic(g, 1.0), Transform("negate"))
    raise InputError(f"unknown family {family!r}; expected one of {', '.join(SUITE_FAMILIES)}")


@dataclass(frozen=True, eq=False)
class Instance:
    seed: int
    family: str
    space: FiniteSpace
    partition: Partition
    map: MapSpec
    x: np.ndarray
    densities: dict


def _family_key(family: str) -> int:
    return zlib.crc32(family.encode())


def _random_partition(rng: Xorshift64Star, n: int, atoms: int) -> list[list[int]]:
    perm = list(range(n))
    rng.shuffle(perm)
    blocks = [[perm[i]] for i in range(atoms)]
    for i in perm[atoms:]:
        blocks[rng.randint(0, atoms - 1)].append(i)
    return blocks


def gen_instance(seed: int, n_points: Optional[int] = None, n_atoms: Optional[int] = None, family: str = "entropic-1") -> Instance:
    """Random space, G, map of the given family, payoff in [-3, 3]^n and a density pool."""
    rng = Xorshift64Star(seed).split(_family_key(family))
    n = n_points if n_points is not None else rng.randint(2, 8)
    if n < 1:
        raise InputError("an instance needs at least one point")
    atoms = n_atoms if n_atoms is not None else rng.randint(1, min(4, n))
    if not 1 <= atoms <= n:
        raise InputError(f"cannot split {n} points into {atoms} atoms")
    raw = [0.1 + 0.9 * rng.random() for _ in range(n)]
    total = math.fsum(raw)
    space = build_space([f"w{i}" for i in range(n)], [r / total for r in raw])
    g = Partition(space, tuple(tuple(b) for b in _random_partition(rng, n, atoms)))
    x = np.array([rng.uniform(-3.0, 3.0) for _ in range(n)])

    pool: dict[str, Density] = {"reference": reference_density(space)}
    pool["full"] = normalize_density(space, [0.2 + 1.8 * rng.random() for _ in range(n)])
    sparse = [0.0 if rng.random() < 0.4 else rng.random() + 0.05 for _ in range(n)]
    for block in g.blocks:
        if all(sparse[i] == 0.0 for i in block):
            sparse[rng.choice(block)] = 1.0
    pool["sparse"] = normalize_density(space, sparse)
    if atoms >= 2:
        null = [0.2 + 1.8 * rng.random() for _ in range(n)]
        for i in g.blocks[rng.randint(0, atoms - 1)]:
            null[i] = 0.0
        pool["null-atom"] = normalize_density(space, null)
    point = []
    for block in g.blocks:
        hit = rng.randint(0, len(block) - 1)
        point.append(tuple(1.0 if j == hit else 0.0 for j in range(len(block))))
    pool["point-mass"] = glue_density(point, g)
    return Instance(seed, family, space, g, make_map(family, g), x, pool)


# ---------------------------------------------------------------------------
# report


@dataclass
class CheckResult:
    name: str
    family: str
    cases: int = 0
    failures: list = field(default_factory=list)
    failure_count: int = 0
    max_deviation: float = 0.0

    @property
    def passed(self) -> bool:
        return self.failure_count == 0


MAX_LOGGED_FAILURES = 5


@dataclass
class SuiteReport:
    seed: int
    cases: int
    results: dict = field(default_factory=dict)
    gaps: list = field(default_factory=list)

    def result(self, name: str, family: str) -> CheckResult:
        key = (name, family)
        if key not in self.results:
            self.results[key] = CheckResult(name, family)
        return self.results[key]

    def record(self, name: str, family: str, ok: bool, deviation: float, detail: str = "") -> None:
        res = self.result(name, family)
        res.cases += 1
        if deviation > res.max_deviation or deviation != deviation:
            res.max_deviation = deviation
        if not ok:
            res.failure_count += 1
            if len(res.failures) < MAX_LOGGED_FAILURES:
                res.failures.append(detail)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    @property
    def failure_count(self) -> int:
        return sum(r.failure_count for r in self.results.values())

    def max_deviation(self, name: str, family: Optional[str] = None) -> float:
        vals = [r.max_deviation for (n, f), r in self.results.items() if n == name and (family is None or f == family)]
        return max(vals) if vals else math.nan

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["check", "family", "cases", "failures", "max_deviation", "status"])
        for (name, family), r in self.results.items():
            out.writerow([name, family, r.cases, r.failure_count, _fmt(r.max_deviation), "pass" if r.passed else "FAIL"])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"property suite: seed {self.seed}, {self.cases} cases per family"]
        width = max(len(n) for n, _ in self.results) if self.results else 10
        for (name, family), r in self.results.items():
            status = "pass" if r.passed else "FAIL"
            lines.append(
                f"{status}  {name:<{width}}  {family:<18}  cases {r.cases:>5}  "
                f"failures {r.failure_count:>4}  max dev {_fmt(r.max_deviation)}"
            )
            for d in r.failures:
                lines.append(f"      {d}")
        if self.gaps:
            g = np.sort(np.abs(np.array(self.gaps)))
            q = lambda p: _fmt(float(g[min(len(g) - 1, int(p * (len(g) - 1)))]))
            lines.append(
                f"duality gap |pi - H| over {len(g)} atoms: median {q(0.5)}, p99 {q(0.99)}, max {_fmt(float(g[-1]))}"
            )
        total = self.failure_count
        lines.append(f"{'PASS' if total == 0 else 'FAIL'}: {len(self.results)} checks, {total} failures")
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return f"{v:.6e}"


# ---------------------------------------------------------------------------
# checks


def _max_abs(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    same = (a == b) | (np.isnan(a) & np.isnan(b))
    with np.errstate(invalid="ignore"):
        diff = np.where(same, 0.0, np.abs(a - b))
    return float(diff.max()) if diff.size else 0.0


def _violation(lhs, rhs) -> float:
    """Largest amount by which lhs exceeds rhs (0 when lhs <= rhs everywhere)."""
    a = np.asarray(lhs, dtype=float)
    b = np.asarray(rhs, dtype=float)
    ok = a <= b
    with np.errstate(invalid="ignore"):
        diff = np.where(ok, 0.0, a - b)
    return float(np.nan_to_num(diff, nan=math.inf).max()) if diff.size else 0.0


def _atom_vector(rng: Xorshift64Star, g: Partition, lo: float, hi: float) -> np.ndarray:
    """A G-measurable vector with atom values uniform in [lo, hi]."""
    out = np.empty(g.space.n)
    for block in g.blocks:
        out[list(block)] = rng.uniform(lo, hi)
    return out


def _random_union(rng: Xorshift64Star, g: Partition) -> list[tuple[int, ...]]:
    chosen = [b for b in g.blocks if rng.random() < 0.5]
    return chosen or [g.blocks[rng.randint(0, len(g.blocks) - 1)]]


class _Runner:
    def __init__(self, report: SuiteReport, inst: Instance, case: int, cfg: SolverCfg):
        self.report = report
        self.inst = inst
        self.case = case
        self.cfg = cfg
        self.rng = Xorshift64Star(inst.seed).split(0x5EED)

    def tag(self, extra: str = "") -> str:
        xs = ",".join(f"{v:.6g}" for v in self.inst.x)
        return f"case {self.case} seed {self.inst.seed} x=({xs}) {extra}".rstrip()

    def rec(self, name: str, deviation: float, tol: float, extra: str = "") -> None:
        ok = deviation <= tol
        self.report.record(name, self.inst.family, ok, deviation, "" if ok else self.tag(f"dev {deviation!r} {extra}"))

    # map axioms ------------------------------------------------------------
    def axioms(self, orientation: str) -> None:
        m, g, x, rng = self.inst.map, self.inst.partition, self.inst.x, self.rng
        n = g.space.n
        y = np.array([rng.uniform(-3, 3) for _ in range(n)])
        union = _random_union(rng, g)
        lhs = m.evaluate(indicator_mix(x, y, union))
        rhs = indicator_mix(m.evaluate(x), m.evaluate(y), union)
        self.rec("regularity", _max_abs(lhs, rhs), 0.0)

        bump = np.array([abs(rng.uniform(0, 2)) for _ in range(n)])
        if self.inst.family != NEGATIVE_CONTROL:
            self.rec("monotonicity", _violation(m.evaluate(x), m.evaluate(x + bump)), 1e-12)

        # a random pair, and a pair on a common level set where violations are easiest to see
        pairs = [(y, _atom_vector(rng, g, 0.0, 1.0))]
        matched = _level_matched(m, x, y)
        if matched is not None:
            pairs.append((matched, np.full(n, 0.5)))
            pairs.append((matched, _atom_vector(rng, g, 0.0, 1.0)))
        dev = 0.0
        px = m.evaluate(x)
        for z, lam in pairs:
            pz, pm = m.evaluate(z), m.evaluate(lam * x + (1 - lam) * z)
            if orientation == QUASICONVEX:
                dev = max(dev, _violation(pm, np.maximum(px, pz)))
            else:
                dev = max(dev, _violation(np.minimum(px, pz), pm))
        if self.inst.family == NEGATIVE_CONTROL:
            self.report.record("negative-control-qco", self.inst.family, True, dev)
        else:
            self.rec("quasiconvexity" if orientation == QUASICONVEX else "quasiconcavity", dev, 1e-9)

        if m.is_cash_invariant:
            shift = _atom_vector(rng, g, -2.0, 2.0)
            self.rec("cash-invariance", _max_abs(m.evaluate(x + shift), m.evaluate(x) + shift), 1e-10)

    def support(self) -> None:
        m, g, rng = self.inst.map, self.inst.partition, self.rng
        block = g.blocks[rng.randint(0, len(g.blocks) - 1)]
        w = [rng.random() + (0.05 if i == 0 else 0.0) for i in range(len(block))]
        c1, c2 = sorted((rng.uniform(-3, 3), rng.uniform(-3, 3)))
        s1, s2 = support_value(m, block, c1, w), support_value(m, block, c2, w)
        self.rec("support-monotone", _violation(s1, s2), 1e-12)
        dev = 0.0
        for lam in (0.5, 2.0, 10.0):
            a = support_value(m, block, c2, [lam * v for v in w])
            b = lam * s2
            if a != b:
                dev = max(dev, abs(a - b) / max(1.0, abs(b)))
        self.rec("support-homogeneous", dev, 1e-9)

        if isinstance(m, Entropic) and len(block) <= 2:
            k = g.blocks.index(block)
            v = g.cond_weights(block)
            w = [0.2 + rng.random() for _ in block]
            s = math.fsum(w)
            w = [wi / s for wi in w]
            c = rng.uniform(-1.0, 1.0)
            closed = support_value(m, block, c, w)
            axis = GridCfg(-6.0, 6.0, 0.05).axis()
            cols = [axis.reshape([-1 if d == i else 1 for d in range(len(block))]) for i in range(len(block))]
            vals = np.broadcast_to(m.atom_array(k, cols), (len(axis),) * len(block))
            lin = np.broadcast_to(sum(wi * col for wi, col in zip(w, cols)), vals.shape)
            grid = float(lin[vals <= c].max())
            over = max(grid - closed, 0.0)
            # the grid can only fall short by more than 0.1 when the maximizer leaves the box
            opt = [c + math.log(wi / vi) / m.gamma for wi, vi in zip(w, v)]
            inside = all(-6.0 <= o <= 6.0 for o in opt)
            under = max(closed - grid - 0.1, 0.0) if inside else 0.0
            self.rec("entropic-support-grid", max(over, under), 1e-12)

    # dual side -------------------------------------------------------------
    def duality(self) -> None:
        inst, cfg = self.inst, self.cfg
        m, x = inst.map, inst.x
        primal = m.block_values(x)
        dev = 0.0
        for name, q in inst.densities.items():
            k = k_value(m, x, q, cfg)
            dev = max(dev, _violation(k.values, primal))
        self.rec("weak-duality", dev, 1e-9)

        rep = h_value(m, x, cfg)
        if inst.family == NEGATIVE_CONTROL:
            self.report.record("negative-control-gap", inst.family, True, rep.max_abs_gap)
            return
        self.report.gaps.extend(rep.gaps)
        self.rec("strong-duality", rep.max_abs_gap, GAP_TOL)
        k_eps = k_value(m, x, rep.argmax_density(), cfg)
        self.rec("single-density", max(h - k for h, k in zip(rep.dual, k_eps.values)), GAP_TOL)

        trivial = make_map(inst.family, Partition.trivial(inst.space))
        self.rec("trivial-g-duality", duality_gap(trivial, x, cfg).max_abs_gap, GAP_TOL)

    def r_checks(self) -> None:
        inst, cfg, rng = self.inst, self.cfg, self.rng
        m, g, x = inst.map, inst.partition, inst.x
        n = g.space.n
        q = inst.densities["full"]
        y_id = np.empty(n)
        probs = np.array(g.space.probs)
        for block in g.blocks:
            idx = list(block)
            y_id[idx] = float(np.sum(np.array(q.q)[idx] * probs[idx] * x[idx]) / g.mass(block))
        self.rec("r-k-identity", _max_abs(r_value(m, y_id, q, cfg).values, k_value(m, x, q, cfg).values), 1e-9)

        # dyadic inputs keep the rescaled problem bit-identical
        xi = [rng.randint(0, 48) / 16.0 for _ in range(n)]
        y = np.empty(n)
        for block in g.blocks:
            y[list(block)] = rng.randint(-192, 192) / 64.0
        base = r_value(m, y, xi, cfg).values
        dev = 0.0
        for lam in (0.5, 2.0, 10.0):
            dev = max(dev, _max_abs(r_value(m, lam * y, [lam * v for v in xi], cfg).values, base))
        self.rec("r-scale-invariance", dev, 0.0)

        y1 = _atom_vector(rng, g, -3, 3)
        y2 = _atom_vector(rng, g, -3, 3)
        r1, r2 = r_value(m, y1, q, cfg).values, r_value(m, y2, q, cfg).values
        up = y1 + _atom_vector(rng, g, 0, 1)
        self.rec("r-monotone", _violation(r1, r_value(m, up, q, cfg).values), 0.0)
        self.rec("r-lattice-min", _max_abs(r_value(m, np.minimum(y1, y2), q, cfg).values, np.minimum(r1, r2)), 1e-9)
        self.rec("r-lattice-max", _max_abs(r_value(m, np.maximum(y1, y2), q, cfg).values, np.maximum(r1, r2)), 1e-9)
        lam = _atom_vector(rng, g, 0, 1)
        mid = r_value(m, lam * y1 + (1 - lam) * y2, q, cfg).values
        dev = max(_violation(np.minimum(r1, r2), mid), _violation(mid, np.maximum(r1, r2)))
        self.rec("r-quasi-affine", dev, 1e-9)

    def k_checks(self) -> None:
        inst, cfg, rng = self.inst, self.cfg, self.rng
        m, g, x = inst.map, inst.partition, inst.x
        n = g.space.n
        qd = [rng.randint(0, 32) / 16.0 for _ in range(n)]
        for block in g.blocks:
            if all(qd[i] == 0.0 for i in block):
                qd[block[0]] = 1.0
        base = k_value(m, x, qd, cfg).values
        dev = 0.0
        for lam in (0.5, 2.0, 10.0):
            dev = max(dev, _max_abs(k_value(m, x, [lam * v for v in qd], cfg).values, base))
        self.rec("k-homogeneity", dev, 0.0)

        q1 = inst.densities["full"]
        kb = g.blocks.index(g.blocks[rng.randint(0, len(g.blocks) - 1)])
        q2 = [0.2 + 1.8 * rng.random() for _ in range(n)]
        for i in g.blocks[kb]:
            q2[i] = q1.q[i]
        a, b = k_value(m, x, q1, cfg).values, k_value(m, x, q2, cfg).values
        self.rec("k-locality", _max_abs(a[kb], b[kb]), 0.0)

        pairs = [("full", "sparse")]
        if "null-atom" in inst.densities:
            pairs.append(("sparse", "null-atom"))
        dev = 0.0
        for n1, n2 in pairs:
            d1, d2 = inst.densities[n1], inst.densities[n2]
            k1, k2 = k_value(m, x, d1, cfg).values, k_value(m, x, d2, cfg).values
            w1, w2 = split_density(d1, g), split_density(d2, g)
            chosen = []
            for j, block in enumerate(g.blocks):
                pick = w1[j] if (w2[j] is None or (w1[j] is not None and k1[j] >= k2[j])) else w2[j]
                chosen.append(pick if pick is not None else g.cond_weights(block))
            kg = k_value(m, x, glue_density(chosen, g), cfg).values
            dev = max(dev, _violation(np.maximum(k1, k2), kg))
        self.rec("k-upward-directed", dev, 1e-8)

        inner = m.inner if isinstance(m, Transformed) else m
        dev = 0.0
        for kind in ("arctan", "cubic"):
            tr = Transform(kind)
            for name in ("full", "sparse"):
                q = inst.densities[name]
                lhs = k_value(Transformed(inner, tr), x, q, cfg).values
                rhs = [tr.value(v) if v > -math.inf else lhs_lo(tr) for v in k_value(inner, x, q, cfg).values]
                dev = max(dev, _max_abs(lhs, rhs))
        self.rec("transform-equivariance", dev, 1e-8)

        if m.is_cash_invariant:
            qt = restrict_to_P_G(q1, g)
            lhs = k_value(m, x, q1, cfg).values
            rhs = cond_expect(x, qt, g).values - fenchel_conjugate(m, qt, cfg).values
            self.rec("conjugate-identity", _max_abs(lhs, rhs), 1e-8)

        # paste two feasible payoffs along the atoms where the first is better
        w = split_density(q1, g)
        xi1 = x + np.array([rng.uniform(0, 1) for _ in range(n)])
        xi2 = x + np.array([rng.uniform(0, 1) for _ in range(n)])
        p1, p2 = m.block_values(xi1), m.block_values(xi2)
        better = [block for block, a_, b_ in zip(g.blocks, p1, p2) if a_ <= b_]
        xs = indicator_mix(xi1, xi2, better)
        target = cond_expect(x, q1, g).values
        feas = _violation(target, cond_expect(xs, q1, g).values + 1e-12)
        dev = max(feas, _max_abs(m.block_values(xs), np.minimum(p1, p2)))
        self.rec("downward-directed", dev, 0.0)

        if max(len(b) for b in g.blocks) <= 2:
            gk = grid_k(m, x, q1, g, GridCfg(-5.0, 5.0, 0.05)).values
            self.rec("grid-lower-bound", _violation(k_value(m, x, q1, cfg).values, gk + 1e-9), 0.0)

    def coarsening(self) -> None:
        inst, cfg, rng = self.inst, self.cfg, self.rng
        m, g, x = inst.map, inst.partition, inst.x
        q = inst.densities["full"]
        parts = enumerate_partitions(g)
        k_fine = k_value(m, x, q, cfg).values
        best = np.full(len(g.blocks), math.inf)
        primal = m.evaluate(x)
        dev_h = 0.0
        dev_order = 0.0
        for gamma in parts:
            mc = coarsen(m, gamma)
            best = np.minimum(best, k_value(mc, x, q, cfg).values)
            rep = h_value(mc, x, cfg)
            dev_h = max(dev_h, rep.max_abs_gap)
            dev_order = max(dev_order, _violation(primal, mc.evaluate(x)))
        dev_min = _max_abs(best, k_fine)
        dev_min = max(dev_min, _max_abs(k_value(coarsen(m, parts[-1]), x, q, cfg).values, k_fine))
        self.rec("coarse-min-equals-k", dev_min, 1e-8)
        self.rec("coarse-dual-equals-primal", max(dev_h, dev_order), GAP_TOL)

        # transfer inequality for partitions refining {B^c, B}
        qq = inst.densities["null-atom"] if "null-atom" in inst.densities else inst.densities["sparse"]
        pp = inst.densities["full"]
        kq, kp = k_value(m, x, qq, cfg).values, k_value(m, x, pp, cfg).values
        b_atoms = [j for j in range(len(g.blocks)) if rng.random() < 0.6] or [0]
        eps = max(max(kq[j] - kp[j], 0.0) if kq[j] > -math.inf else 0.0 for j in b_atoms)
        rest = [i for j in range(len(g.blocks)) if j not in b_atoms for i in g.blocks[j]]
        sub = Partition(g.space, tuple(g.blocks[j] for j in b_atoms) + ((tuple(rest),) if rest else ()))
        dev = 0.0
        for gamma in enumerate_partitions(sub) if len(sub.blocks) <= 6 else []:
            if rest and not any(set(rest) == set(b) for b in gamma.blocks):
                continue
            mc = coarsen(m, gamma)
            lq, lp = k_value(mc, x, qq, cfg).values, k_value(mc, x, pp, cfg).values
            for j in b_atoms:
                dev = max(dev, _violation(lq[j], lp[j] + eps))
        self.rec("transfer-inequality", dev, 1e-8)

    def cce(self) -> None:
        inst, cfg = self.inst, self.cfg
        m, g, x = inst.map, inst.partition, inst.x
        mirrored = mirror(Entropic(g, m.utility.param))
        dev = _max_abs(m.evaluate(x), mirrored.evaluate(x))
        rep = duality_gap(m, x, cfg)
        self.report.gaps.extend(rep.gaps)
        self.rec("cce-mirror-agreement", dev, 1e-10)
        self.rec("strong-duality", rep.max_abs_gap, GAP_TOL)
        trivial = make_map(inst.family, Partition.trivial(inst.space))
        self.rec("trivial-g-duality", duality_gap(trivial, x, cfg).max_abs_gap, GAP_TOL)


def _level_matched(m: MapSpec, x: np.ndarray, y: np.ndarray) -> Optional[np.ndarray]:
    """y shifted by a constant on each atom so that the map takes the value of pi(x) there.

    Works for increasing and decreasing maps; returns None when no shift in
    [-20, 20] reaches the level on some atom.
    """
    out = np.array(y, dtype=float)
    for k, block in enumerate(m.g.blocks):
        idx = list(block)
        target = m.atom_value(k, [float(v) for v in x[idx]])
        base = [float(v) for v in y[idx]]

        def f(s):
            return m.atom_value(k, [v + s for v in base]) - target

        lo, hi = -20.0, 20.0
        flo, fhi = f(lo), f(hi)
        if not (math.isfinite(flo) and math.isfinite(fhi)) or flo * fhi > 0:
            return None
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            if (fm > 0) == (fhi > 0):
                hi, fhi = mid, fm
            else:
                lo, flo = mid, fm
        out[idx] = out[idx] + 0.5 * (lo + hi)
    return out


def lhs_lo(tr: Transform) -> float:
    """g(-inf) for an increasing transform."""
    return {"identity": -math.inf, "arctan": -math.pi / 2, "cubic": -math.inf, "exp": 0.0}[tr.kind]


def instance_seed(seed: int, family: str, case: int) -> int:
    return splitmix64((splitmix64(seed) ^ _family_key(family)) + case)


def run_property_suite(
    seed: int,
    cases: int,
    families: tuple[str, ...] = SUITE_FAMILIES,
    cfg: SolverCfg = DEFAULT_CFG,
    progress: Optional[Callable[[str, int], None]] = None,
) -> SuiteReport:
    """Run every applicable check on ``cases`` instances of each family."""
    if cases < 1:
        raise InputError("cases must be at least 1")
    report = SuiteReport(seed, cases)
    for family in families:
        for case in range(cases):
            inst = gen_instance(instance_seed(seed, family, case), family=family)
            run = _Runner(report, inst, case, cfg)
            if family == NEGATIVE_CONTROL:
                run.axioms(QUASICONVEX)
                run.duality()
            elif family.startswith("cce-"):
                run.axioms(inst.map.orientation)
                run.cce()
            else:
                run.axioms(QUASICONVEX)
                run.support()
                run.duality()
                run.r_checks()
                run.k_checks()
                run.coarsening()
            if progress is not None:
                progress(family, case)
    _finalize_negative_controls(report)
    return report


def _finalize_negative_controls(report: SuiteReport) -> None:
    thresholds = {"negative-control-qco": 1e-9, "negative-control-gap": NEGATIVE_GAP_THRESHOLD}
    for (name, family), res in report.results.items():
        if name in thresholds and not res.max_deviation > thresholds[name]:
            res.failure_count += 1
            res.failures.append(f"violation not detected (max {res.max_deviation!r})")
