import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quasidual.dual import (
    duality_gap,
    fenchel_conjugate,
    glue_density,
    h_value,
    k_value,
    r_value,
    restrict_to_P_G,
    split_density,
)
from quasidual.errors import DimensionMismatch, NotCashInvariant, OrientationError, QNullAtom
from quasidual.maps import (
    QUASICONCAVE,
    CertaintyEquivalent,
    Composite,
    Entropic,
    Transform,
    Transformed,
    Utility,
    WorstCase,
    coarsen,
    evaluate,
    mirror,
)
from quasidual.prob import (
    Density,
    Partition,
    build_partition,
    build_space,
    cond_expect,
    is_in_P_G,
    reference_density,
    uniform_space,
)
from quasidual.solvers import DEFAULT_CFG
from strategies import densities, instances

LOG3 = math.log(3.0)
U2 = uniform_space(2)
T2 = Partition.trivial(U2)
U4 = uniform_space(4)
G2 = build_partition(U4, [[0, 1], [2, 3]])
KL_FIXTURE = 0.13081203594113695913  # 0.25 log 0.5 + 0.75 log 1.5, 40-digit arithmetic


def kl(w, v):
    return math.fsum(a * math.log(a / b) for a, b in zip(w, v) if a > 0)


def weights_density(w):
    """Density on the uniform two-point space with conditional weights w."""
    return Density(tuple(2 * wi for wi in w))


class TestK:
    def test_worst_case_uniform(self):
        assert k_value(WorstCase(T2), [1, 3], [1, 1])[0] == pytest.approx(2.0, abs=1e-9)

    @pytest.mark.parametrize("w", [0.0, 0.25, 0.5, 1.0])
    def test_worst_case_weighted(self, w):
        assert k_value(WorstCase(T2), [1, 3], weights_density([w, 1 - w]))[0] == pytest.approx(3 - 2 * w, abs=1e-9)

    @given(st.data())
    def test_entropic_closed_form(self, data):
        s, g, x = data.draw(instances())
        q = data.draw(densities(s.n))
        gamma = data.draw(st.sampled_from([0.5, 1.0, 2.0]))
        k = k_value(Entropic(g, gamma), x, q)
        for a, block in enumerate(g.blocks):
            mass = math.fsum(q[i] * s.probs[i] for i in block)
            if mass == 0:
                assert k[a] == -math.inf
                continue
            w = [q[i] * s.probs[i] / mass for i in block]
            v = g.cond_weights(block)
            expected = math.fsum(wi * x[i] for wi, i in zip(w, block)) - kl(w, v) / gamma
            assert k[a] == pytest.approx(expected, abs=1e-8)

    def test_q_null_atom_is_unbounded_below(self):
        k = k_value(Entropic(G2), [1, 2, 3, 4], [2, 2, 0, 0])
        assert k[1] == -math.inf and k[0] > -math.inf

    def test_quasiconcave_rejected(self):
        with pytest.raises(OrientationError):
            k_value(mirror(WorstCase(G2)), [1, 2, 3, 4], [1, 1, 1, 1])

    @given(st.data())
    def test_positive_homogeneity_exact(self, data):
        s, g, x = data.draw(instances())
        q = data.draw(densities(s.n))
        base = k_value(Composite(g), x, q).values
        for lam in (0.5, 2.0, 10.0):
            assert list(k_value(Composite(g), x, [lam * v for v in q]).values) == list(base)

    @given(st.data())
    def test_weak_duality(self, data):
        s, g, x = data.draw(instances())
        q = data.draw(densities(s.n))
        for m in (Entropic(g), WorstCase(g), Composite(g), Transformed(Entropic(g), Transform("arctan"))):
            k = k_value(m, x, q).values
            primal = [evaluate(m, x)[b[0]] for b in g.blocks]
            assert all(kv <= p + 1e-9 for kv, p in zip(k, primal))

    @given(st.data())
    def test_transform_equivariance(self, data):
        s, g, x = data.draw(instances())
        q = data.draw(densities(s.n, allow_zero=False))
        base = Entropic(g, 1.0)
        k = k_value(base, x, q).values
        for name in ("arctan", "cubic"):
            tr = Transform(name)
            kt = k_value(Transformed(base, tr), x, q).values
            np.testing.assert_allclose(kt, tr.array(np.array(k)), rtol=0, atol=1e-8)


class TestR:
    @given(st.data())
    def test_scale_invariance_exact(self, data):
        s, g, x = data.draw(instances())
        xi = data.draw(densities(s.n))
        y = [float(x[g.blocks[g.atom_of(i)][0]]) for i in range(s.n)]
        m = Entropic(g)
        base = r_value(m, y, xi).values
        for lam in (0.5, 2.0, 10.0):
            assert list(r_value(m, [lam * v for v in y], [lam * v for v in xi]).values) == list(base)

    @given(st.data())
    def test_matches_k(self, data):
        s, g, x = data.draw(instances())
        xi = data.draw(densities(s.n, allow_zero=False))
        m = WorstCase(g)
        y = np.array([math.fsum(xi[j] * x[j] * s.probs[j] for j in g.blocks[g.atom_of(i)]) for i in range(s.n)])
        y = y / np.array([g.mass(g.blocks[g.atom_of(i)]) for i in range(s.n)])
        np.testing.assert_allclose(r_value(m, y, xi).values, k_value(m, x, xi).values, rtol=0, atol=1e-9)

    def test_monotone_in_target(self):
        m = Entropic(G2)
        xi = [1.0, 2.0, 0.5, 0.5]
        lo = r_value(m, [0, 0, 1, 1], xi).values
        hi = r_value(m, [0.5, 0.5, 1, 1], xi).values
        assert lo[0] <= hi[0] and lo[1] == hi[1]


class TestH:
    def test_worst_case_vertex(self):
        rep = h_value(WorstCase(T2), [1, 3])
        row = rep.rows[0]
        assert row.dual == pytest.approx(3.0, abs=1e-9)
        assert row.argmax_weights == pytest.approx((0.0, 1.0), abs=1e-9)

    def test_entropic_fixture(self):
        row = h_value(Entropic(T2), [0.0, LOG3]).rows[0]
        assert row.dual == pytest.approx(math.log(2), abs=1e-6)
        assert row.argmax_weights == pytest.approx((0.25, 0.75), abs=1e-5)

    @pytest.mark.parametrize("m", [Entropic(G2), WorstCase(G2), Composite(G2)])
    def test_constant(self, m):
        rep = h_value(m, [0.75] * 4)
        primal = evaluate(m, [0.75] * 4)
        for r in rep.rows:
            assert abs(r.gap) <= 1e-6 and r.dual == pytest.approx(primal[r.block[0]], abs=1e-6)

    def test_report_shape(self):
        rep = h_value(Entropic(G2), [0.1, 0.4, -1.0, 2.0])
        assert len(rep.rows) == 2
        for r in rep.rows:
            assert all(w >= 0 for w in r.argmax_weights)
            assert math.fsum(r.argmax_weights) == pytest.approx(1.0, abs=1e-12)
            assert r.gap >= -1e-6

    def test_coarsened_rows_per_block(self):
        m = coarsen(Entropic(G2), Partition.trivial(U4))
        rep = h_value(m, [0.1, 0.4, -1.0, 2.0])
        assert len(rep.rows) == 1 and len(rep.rows[0].argmax_weights) == 4
        assert abs(rep.rows[0].gap) <= 1e-6

    def test_deterministic(self):
        x = [0.3, -1.2, 2.5, 0.0]
        assert h_value(Composite(G2), x) == h_value(Composite(G2), x)


class TestDualityGap:
    def test_cce_mirror_fixture(self):
        m = CertaintyEquivalent(T2, Utility("exponential", 1.0))
        rep = duality_gap(m, [0.0, LOG3])
        r = rep.rows[0]
        assert rep.orientation == QUASICONCAVE
        assert r.primal == pytest.approx(math.log(1.5), abs=1e-12)
        assert abs(r.gap) <= 1e-6

    def test_trivial_g_worst_case(self):
        s = uniform_space(4)
        rep = duality_gap(WorstCase(Partition.trivial(s)), [1, 3, 5, 7])
        assert rep.rows[0].primal == 7 and rep.rows[0].dual == pytest.approx(7, abs=1e-9)

    def test_log_cce_has_no_dual(self):
        with pytest.raises(OrientationError):
            duality_gap(CertaintyEquivalent(T2, Utility("log")), [1.0, 2.0])

    @given(st.data())
    def test_strong_duality(self, data):
        s, g, x = data.draw(instances(max_n=6))
        for m in (Entropic(g), WorstCase(g), Composite(g), mirror(Entropic(g, 2.0))):
            assert duality_gap(m, x).max_abs_gap <= 1e-6


class TestFenchel:
    def test_reference_is_zero(self):
        assert fenchel_conjugate(Entropic(T2), [1, 1])[0] == pytest.approx(0.0, abs=1e-12)

    def test_entropic_kl(self):
        assert fenchel_conjugate(Entropic(T2), [0.5, 1.5])[0] == pytest.approx(KL_FIXTURE, abs=1e-9)

    def test_worst_case_zero(self):
        assert fenchel_conjugate(WorstCase(T2), [0.3, 1.7])[0] == pytest.approx(0.0, abs=1e-9)

    def test_q_null(self):
        out = fenchel_conjugate(Entropic(G2), [2, 2, 0, 0])
        assert out.null[1] and not out.null[0]

    def test_requires_cash_invariance(self):
        with pytest.raises(NotCashInvariant):
            fenchel_conjugate(Composite(T2), [1, 1])

    @given(st.data())
    def test_conjugate_identity(self, data):
        s, g, x = data.draw(instances())
        q = data.draw(densities(s.n, allow_zero=False))
        for m in (Entropic(g, 0.5), WorstCase(g)):
            qt = restrict_to_P_G(q, g)
            lhs = k_value(m, x, q).values
            rhs = np.array(cond_expect(x, qt, g).values) - np.array(fenchel_conjugate(m, qt).values)
            np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-8)


class TestDensities:
    def test_glue_reference(self):
        s = build_space(list("abcd"), [0.1, 0.2, 0.3, 0.4])
        g = build_partition(s, [[0, 1], [2, 3]])
        q = glue_density([g.cond_weights(b) for b in g.blocks], g)
        assert q.q == pytest.approx((1, 1, 1, 1), abs=1e-15)

    @given(st.data())
    def test_round_trip(self, data):
        s, g, _ = data.draw(instances())
        ws = []
        for b in g.blocks:
            raw = data.draw(st.lists(st.floats(0.01, 1), min_size=len(b), max_size=len(b)))
            ws.append(tuple(r / math.fsum(raw) for r in raw))
        back = split_density(glue_density(ws, g), g)
        for w, v in zip(ws, back):
            assert v == pytest.approx(w, rel=1e-14, abs=1e-15)

    def test_point_masses_give_vertex_k(self):
        x = [1, 3, 5, 2]
        q = glue_density([(0.0, 1.0), (1.0, 0.0)], G2)
        assert list(k_value(WorstCase(G2), x, q).values) == pytest.approx([3.0, 5.0], abs=1e-9)

    def test_glue_dimension(self):
        with pytest.raises(DimensionMismatch):
            glue_density([(1.0,)], G2)

    def test_restrict_examples(self):
        assert restrict_to_P_G([2, 0, 1, 1], G2).q == (2, 0, 1, 1)
        assert restrict_to_P_G([3, 1, 1, 1], G2).q == (1.5, 0.5, 1, 1)
        assert is_in_P_G(restrict_to_P_G([3, 1, 1, 1], G2), G2)

    def test_restrict_q_null(self):
        with pytest.raises(QNullAtom):
            restrict_to_P_G([1, 1, 0, 0], G2)

    @given(st.data())
    def test_restrict_preserves_cond_expect(self, data):
        s, g, x = data.draw(instances())
        q = data.draw(densities(s.n, allow_zero=False))
        qt = restrict_to_P_G(q, g)
        assert is_in_P_G(qt, g)
        np.testing.assert_allclose(cond_expect(x, qt, g).values, cond_expect(x, q, g).values, rtol=1e-14, atol=1e-14)

    def test_single_density(self):
        x = [0.4, -1.0, 2.0, 0.5]
        m = Entropic(G2, 2.0)
        rep = h_value(m, x)
        k = k_value(m, x, rep.argmax_density()).values
        assert all(r.dual - kv < 1e-6 for r, kv in zip(rep.rows, k))


def test_reference_density_is_uniform_weights():
    assert split_density(reference_density(U4), G2) == [(0.5, 0.5), (0.5, 0.5)]


def test_default_cfg():
    assert DEFAULT_CFG.bisect_tol == 1e-9 and DEFAULT_CFG.restarts == 16
