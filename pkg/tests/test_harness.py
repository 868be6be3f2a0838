import csv
import io

import numpy as np
import pytest

from quasidual.errors import InputError
from quasidual.harness import (
    CHECKS,
    FAMILIES,
    NEGATIVE_CONTROL,
    SUITE_FAMILIES,
    SuiteReport,
    _finalize_negative_controls,
    gen_instance,
    instance_seed,
    make_map,
    run_property_suite,
)
from quasidual.prob import Partition


@pytest.fixture(scope="module")
def small_report():
    return run_property_suite(7, 3)


class TestGenInstance:
    def test_deterministic(self):
        a, b = gen_instance(1), gen_instance(1)
        assert (a.space, a.partition, a.map) == (b.space, b.partition, b.map)
        assert np.array_equal(a.x, b.x)
        assert {k: v.q for k, v in a.densities.items()} == {k: v.q for k, v in b.densities.items()}

    def test_family_changes_stream(self):
        assert not np.array_equal(gen_instance(1, family="worst-case").x, gen_instance(1).x)

    def test_trivial_g(self):
        inst = gen_instance(5, n_points=2, n_atoms=1)
        assert inst.partition == Partition.trivial(inst.space)

    @pytest.mark.parametrize("seed", range(20))
    def test_pool(self, seed):
        inst = gen_instance(seed)
        assert inst.densities["reference"].q == (1.0,) * inst.space.n
        assert 2 <= inst.space.n <= 8 and 1 <= len(inst.partition.blocks) <= 4
        assert np.all(np.abs(inst.x) <= 3)
        assert any(v == 0.0 for v in inst.densities["point-mass"].q) or all(len(b) == 1 for b in inst.partition.blocks)

    def test_bad_sizes(self):
        with pytest.raises(InputError):
            gen_instance(1, n_points=2, n_atoms=3)

    def test_unknown_family(self):
        with pytest.raises(InputError):
            make_map("quadratic", Partition.trivial(gen_instance(1).space))

    def test_instance_seed_distinct(self):
        seeds = {instance_seed(42, f, c) for f in SUITE_FAMILIES for c in range(50)}
        assert len(seeds) == 50 * len(SUITE_FAMILIES)


class TestRegistry:
    def test_statements_unique(self):
        assert len(set(CHECKS.values())) == len(CHECKS)
        assert all(name == name.strip().lower() and " " not in name for name in CHECKS)

    def test_every_recorded_check_registered(self, small_report):
        recorded = {name for name, _ in small_report.results}
        assert recorded <= set(CHECKS)

    def test_every_registered_check_exercised(self, small_report):
        recorded = {name for name, _ in small_report.results}
        assert recorded == set(CHECKS)


class TestSuite:
    def test_passes(self, small_report):
        assert small_report.passed, small_report.to_text()

    def test_one_case(self):
        rep = run_property_suite(3, 1)
        for (name, family), r in rep.results.items():
            assert r.cases >= 1
        assert {f for _, f in rep.results} == set(SUITE_FAMILIES)
        assert rep.result("strong-duality", "worst-case").cases == 1

    def test_reproducible(self):
        a = run_property_suite(11, 2, families=("composite", "worst-case"))
        b = run_property_suite(11, 2, families=("composite", "worst-case"))
        assert a.to_csv() == b.to_csv() and a.to_text() == b.to_text()

    def test_negative_control_detected(self, small_report):
        assert small_report.max_deviation("negative-control-qco", NEGATIVE_CONTROL) > 1e-9
        assert small_report.max_deviation("negative-control-gap", NEGATIVE_CONTROL) > 1e-3

    def test_undetected_negative_control_fails(self):
        # a broken map whose violation goes unseen must fail the suite
        rep = SuiteReport(0, 1)
        rep.record("negative-control-gap", NEGATIVE_CONTROL, True, 1e-5)
        rep.record("negative-control-qco", NEGATIVE_CONTROL, True, 0.5)
        _finalize_negative_controls(rep)
        assert not rep.result("negative-control-gap", NEGATIVE_CONTROL).passed
        assert rep.result("negative-control-qco", NEGATIVE_CONTROL).passed

    def test_negative_checks_only_on_control(self, small_report):
        assert {f for n, f in small_report.results if n.startswith("negative-control")} == {NEGATIVE_CONTROL}

    def test_zero_cases(self):
        with pytest.raises(InputError):
            run_property_suite(1, 0)

    def test_csv_schema(self, small_report):
        rows = list(csv.DictReader(io.StringIO(small_report.to_csv())))
        assert list(rows[0]) == ["check", "family", "cases", "failures", "max_deviation", "status"]
        assert len(rows) == len(small_report.results)
        assert all(r["status"] in ("pass", "FAIL") for r in rows)

    def test_text_summary(self, small_report):
        text = small_report.to_text()
        assert text.splitlines()[-1].startswith("PASS: ")
        assert "duality gap" in text

    def test_failures_are_data(self):
        rep = SuiteReport(0, 1)
        rep.record("weak-duality", "x", False, 0.5, "detail")
        assert not rep.passed and rep.failure_count == 1
        assert "FAIL" in rep.to_text() and "detail" in rep.to_text()


def test_families_cover_acceptance_set():
    assert {"entropic-0.5", "entropic-1", "entropic-2", "worst-case", "composite",
            "transformed-arctan", "transformed-cubic"} <= set(FAMILIES)
