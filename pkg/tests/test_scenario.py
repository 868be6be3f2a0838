import math
from pathlib import Path

import pytest

from quasidual.errors import ParseError, ValidationError
from quasidual.maps import Composite, Entropic, Mirrored, Transformed, WorstCase
from quasidual.scenario import FAMILY_NAMES, load_scenario, parse_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

MINIMAL = """
space: {a: 0.5, b: 0.5}
map: {family: worst_case}
x: {a: 1, b: 3}
"""


def write(tmp_path, text):
    p = tmp_path / "s.yaml"
    p.write_text(text)
    return p


class TestLoad:
    def test_minimal(self, tmp_path):
        sc = load_scenario(write(tmp_path, MINIMAL))
        assert isinstance(sc.map, WorstCase)
        assert sc.space.labels == ("a", "b") and list(sc.x) == [1.0, 3.0]
        assert sc.atom_names == ("all",) and len(sc.g.blocks) == 1
        assert sc.q is None and sc.gamma is None

    def test_probability_sum(self, tmp_path):
        with pytest.raises(ValidationError, match="ProbabilitySumMismatch"):
            load_scenario(write(tmp_path, MINIMAL.replace("b: 0.5}", "b: 0.4}")))

    def test_unknown_family(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_scenario(write(tmp_path, MINIMAL.replace("worst_case", "quadratic")))
        for name in FAMILY_NAMES:
            assert name in str(err.value)

    def test_yaml_syntax_error_has_position(self, tmp_path):
        with pytest.raises(ParseError, match=r"line 2, column \d+"):
            load_scenario(write(tmp_path, "space: {a: 1}\nmap: {family: [worst_case}\nx: {a: 1}\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_scenario(tmp_path / "absent.yaml")

    def test_empty(self, tmp_path):
        with pytest.raises(ParseError):
            load_scenario(write(tmp_path, ""))

    @pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.yaml")), ids=lambda p: p.stem)
    def test_shipped_scenarios_load(self, path):
        sc = load_scenario(path)
        assert sc.x.shape == (sc.space.n,)


class TestParse:
    def base(self, **changes):
        doc = {"space": {"a": 0.5, "b": 0.5}, "map": {"family": "worst_case"}, "x": {"a": 1.0, "b": 3.0}}
        doc.update(changes)
        return doc

    def test_unknown_top_key(self):
        with pytest.raises(ParseError, match="unknown top-level"):
            parse_scenario(self.base(extra=1))

    def test_missing_key(self):
        doc = self.base()
        del doc["x"]
        with pytest.raises(ParseError, match="'x'"):
            parse_scenario(doc)

    def test_unknown_label_in_x(self):
        with pytest.raises(ValidationError, match="unknown labels c"):
            parse_scenario(self.base(x={"a": 1, "b": 2, "c": 3}))

    def test_missing_label_in_x(self):
        with pytest.raises(ValidationError, match="missing labels b"):
            parse_scenario(self.base(x={"a": 1}))

    def test_non_number(self):
        with pytest.raises(ParseError, match="x.b"):
            parse_scenario(self.base(x={"a": 1, "b": "three"}))

    def test_q_normalized(self):
        sc = parse_scenario(self.base(q={"a": 1, "b": 3}))
        assert sc.q.q == (0.5, 1.5)

    def test_atoms_and_names(self):
        doc = self.base(space={"a": 0.25, "b": 0.25, "c": 0.5}, x={"a": 0, "b": 1, "c": 2},
                        g_atoms={"right": ["c"], "left": ["b", "a"]})
        sc = parse_scenario(doc)
        assert sc.g.blocks == ((0, 1), (2,))
        assert sc.atom_names == ("left", "right")

    def test_overlapping_atoms(self):
        with pytest.raises(ValidationError, match="OverlappingBlocks"):
            parse_scenario(self.base(g_atoms={"p": ["a", "b"], "r": ["b"]}))

    def test_gamma_must_coarsen_g(self):
        doc = self.base(space={"a": 0.25, "b": 0.25, "c": 0.5}, x={"a": 0, "b": 1, "c": 2},
                        g_atoms={"l": ["a", "b"], "r": ["c"]}, gamma_blocks=[["a"], ["b", "c"]])
        with pytest.raises(ValidationError, match="NotGMeasurablePartition"):
            parse_scenario(doc)

    def test_nested_maps(self):
        doc = self.base(map={"family": "mirrored", "inner": {"family": "transformed", "transform": "arctan",
                                                              "inner": {"family": "entropic", "gamma": 2}}})
        m = parse_scenario(doc).map
        assert isinstance(m, Mirrored) and isinstance(m.inner, Transformed)
        assert m.inner.inner == Entropic(m.g, 2.0)

    def test_composite_options(self):
        doc = self.base(map={"family": "composite", "loss": {"kind": "exp", "beta": 0.5}, "outer": "sqrt"})
        m = parse_scenario(doc).map
        assert isinstance(m, Composite) and m.loss.kind == "exp" and m.outer.kind == "sqrt"

    def test_bad_parameter(self):
        with pytest.raises(ValidationError, match="map"):
            parse_scenario(self.base(map={"family": "entropic", "gamma": -1}))

    def test_transformed_needs_inner(self):
        with pytest.raises(ParseError, match="inner"):
            parse_scenario(self.base(map={"family": "transformed"}))

    def test_solver_overrides(self):
        sc = parse_scenario(self.base(solver={"restarts": 4, "bisect_tol": 1e-10, "seed": 9}))
        assert (sc.solver.restarts, sc.solver.bisect_tol, sc.solver.seed) == (4, 1e-10, 9)

    def test_solver_unknown_key(self):
        with pytest.raises(ParseError, match="solver.speed"):
            parse_scenario(self.base(solver={"speed": 3}))

    def test_solver_invalid_value(self):
        with pytest.raises(ValidationError):
            parse_scenario(self.base(solver={"restarts": 0}))

    def test_nonfinite_x(self):
        with pytest.raises(ValidationError):
            parse_scenario(self.base(x={"a": math.inf, "b": 0}))
