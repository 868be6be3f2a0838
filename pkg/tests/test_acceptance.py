"""Acceptance criteria, one test per criterion.

Criteria backed by the property suite read the report of
``quasidual props --seed 42 --cases 200``; the rest are computed here.
A pass/fail line per criterion is printed at the end of the run.
"""

import csv
import io
import math
import subprocess
import sys

import numpy as np
import pytest

from quasidual.dual import duality_gap, h_value, k_value
from quasidual.harness import FAMILIES, NEGATIVE_CONTROL, gen_instance, instance_seed
from quasidual.maps import Entropic, Utility, WorstCase, cce_evaluate, evaluate, mirror
from quasidual.oracle import GridCfg, equality_k, grid_k, grid_slope_bounds
from quasidual.prob import Partition, uniform_space

LOG3 = math.log(3.0)
MONOTONE = tuple(f for f in FAMILIES if not f.startswith("cce-"))
ENTROPIC = ("entropic-0.5", "entropic-1", "entropic-2")
CASES = 200


def _props():
    cmd = [sys.executable, "-m", "quasidual", "props", "--seed", "42", "--cases", str(CASES), "--format", "csv"]
    return subprocess.run(cmd, capture_output=True, check=False)


@pytest.fixture(scope="module")
def props_runs():
    return _props(), _props()


@pytest.fixture(scope="module")
def report(props_runs):
    first = props_runs[0]
    assert first.returncode == 0, first.stdout.decode() + first.stderr.decode()
    table = {}
    for row in csv.DictReader(io.StringIO(first.stdout.decode())):
        table[(row["check"], row["family"])] = row
    return table


def rows_for(report, check, families=MONOTONE):
    out = [report[(check, f)] for f in families]
    for r in out:
        assert int(r["cases"]) >= CASES
        assert int(r["failures"]) == 0
    return out


def max_dev(report, check, families=MONOTONE):
    return max(float(r["max_deviation"]) for r in rows_for(report, check, families))


def seeded(family, count, **kwargs):
    return [gen_instance(instance_seed(2024, family, c), family=family, **kwargs) for c in range(count)]


@pytest.mark.criterion(1, "strong duality on 200 instances per family; negative control gap > 1e-3")
def test_strong_duality(report):
    assert max_dev(report, "strong-duality") <= 1e-6
    assert float(report[("negative-control-gap", NEGATIVE_CONTROL)]["max_deviation"]) > 1e-3


@pytest.mark.criterion(2, "entropic closed forms and the conjugate identity")
def test_entropic_closed_forms():
    g = Partition.trivial(uniform_space(2))
    m = Entropic(g, 1.0)
    assert abs(evaluate(m, [0.0, LOG3])[0] - math.log(2)) <= 1e-12
    row = h_value(m, [0.0, LOG3]).rows[0]
    assert abs(row.dual - math.log(2)) <= 1e-6
    assert np.max(np.abs(np.array(row.argmax_weights) - [0.25, 0.75])) <= 1e-5

    worst = 0.0
    for c in range(CASES):
        family = ENTROPIC[c % 3]
        inst = gen_instance(instance_seed(2024, family, c), family=family)
        s, part, x = inst.space, inst.partition, inst.x
        q = np.array(inst.densities["full" if c % 2 else "sparse"].q)
        k = k_value(inst.map, x, q).values
        p = np.array(s.probs)
        for a, block in enumerate(part.blocks):
            idx = list(block)
            w = q[idx] * p[idx] / np.sum(q[idx] * p[idx])
            v = p[idx] / np.sum(p[idx])
            pos = w > 0
            kl = float(np.sum(w[pos] * np.log(w[pos] / v[pos])))
            expected = float(w @ x[idx]) - kl / inst.map.gamma
            worst = max(worst, abs(k[a] - expected))
    assert worst <= 1e-8


@pytest.mark.criterion(3, "worst case: H equals the atom max at a simplex vertex")
def test_worst_case_duality():
    for inst in seeded("worst-case", CASES):
        rep = h_value(inst.map, inst.x)
        for r in rep.rows:
            assert abs(r.dual - max(inst.x[i] for i in r.block)) <= 1e-9
            assert max(r.argmax_weights) >= 1 - 1e-6


@pytest.mark.criterion(4, "certainty equivalent equals its mirrored dual")
def test_cce_mirror():
    g = Partition.trivial(uniform_space(2))
    fixture = cce_evaluate(Utility("exponential", 1.0), [0.0, LOG3], g)[0]
    assert abs(fixture - math.log(1.5)) <= 1e-6
    assert abs(-math.log((1 + 1 / 3) / 2) - math.log(1.5)) <= 1e-15
    dual = duality_gap(mirror(Entropic(g, 1.0)), [0.0, LOG3]).rows[0].dual
    assert abs(dual - math.log(1.5)) <= 1e-6
    for inst in seeded("cce-exponential", CASES):
        g = inst.partition
        primal = cce_evaluate(Utility("exponential", 1.0), inst.x, g)
        rep = duality_gap(mirror(Entropic(g, 1.0)), inst.x)
        for r in rep.rows:
            assert abs(primal[r.block[0]] - r.dual) <= 1e-6


@pytest.mark.criterion(5, "R: exact scale invariance, lattice identities, quasi-affinity")
def test_r_properties(report):
    assert max_dev(report, "r-scale-invariance") == 0.0
    assert max_dev(report, "r-lattice-min") <= 1e-9
    assert max_dev(report, "r-lattice-max") <= 1e-9
    assert max_dev(report, "r-quasi-affine") <= 1e-9


@pytest.mark.criterion(6, "K: exact homogeneity, locality, upward directedness via gluing")
def test_k_properties(report):
    assert max_dev(report, "k-homogeneity") == 0.0
    assert max_dev(report, "k-locality") <= 1e-9
    assert max_dev(report, "k-upward-directed") <= 1e-8


@pytest.fixture(scope="module")
def oracle_set():
    """100 monotone-family instances whose atoms have at most 3 points."""
    out, c = [], 0
    while len(out) < 100:
        family = MONOTONE[len(out) % len(MONOTONE)]
        inst = gen_instance(instance_seed(7, family, c), family=family)
        c += 1
        if max(len(b) for b in inst.partition.blocks) <= 3:
            out.append(inst)
    cfg = GridCfg(-5.0, 5.0, 0.05)
    table = []
    for inst in out:
        q = inst.densities["full"]
        table.append((
            grid_k(inst.map, inst.x, q, cfg=cfg).values,
            equality_k(inst.map, inst.x, q, cfg=cfg).values,
            k_value(inst.map, inst.x, q).values,
            grid_slope_bounds(inst.map, cfg),
        ))
    return cfg, table


@pytest.mark.criterion(7, "equality-constrained grid K agrees with grid K within 2 L step")
def test_equality_constraint(oracle_set):
    cfg, table = oracle_set
    for gk, ek, _, lips in table:
        for a, b, lip in zip(gk, ek, lips):
            assert abs(b - a) <= 2 * lip * cfg.step


@pytest.mark.criterion(8, "grid oracle agrees with K within L step + 1e-6")
def test_oracle_agreement(oracle_set):
    cfg, table = oracle_set
    for gk, _, k, lips in table:
        for a, b, lip in zip(gk, k, lips):
            assert abs(a - b) <= lip * cfg.step + 1e-6


@pytest.mark.criterion(9, "coarsening: min over partitions, coarse duality, transfer inequality")
def test_coarsening(report):
    assert max_dev(report, "coarse-min-equals-k") <= 1e-8
    assert max_dev(report, "coarse-dual-equals-primal") <= 1e-6
    assert max_dev(report, "transfer-inequality") <= 1e-8


@pytest.mark.criterion(10, "glued argmax density is 1e-6 optimal on every atom")
def test_single_density(report):
    assert max_dev(report, "single-density") < 1e-6


@pytest.mark.criterion(11, "trivial G: duality gap <= 1e-6 for every family")
def test_trivial_g():
    for family in FAMILIES:
        for inst in seeded(family, 100, n_atoms=1):
            assert duality_gap(inst.map, inst.x).max_abs_gap <= 1e-6, (family, inst.seed)


@pytest.mark.criterion(12, "props --seed 42 --cases 200 is byte-identical across two runs")
def test_determinism(props_runs):
    a, b = props_runs
    assert a.returncode == b.returncode == 0
    assert a.stdout == b.stdout and len(a.stdout) > 0


def test_worst_case_reference_instance():
    # the four-point worst case from the trivial-G example, as a sanity anchor for the set above
    m = WorstCase(Partition.trivial(uniform_space(4)))
    assert duality_gap(m, [1, 3, 5, 7]).rows[0].dual == 7
