"""Scenario documents (YAML).

A scenario names everything by label. The grammar::

    space:                 # sample-point label -> probability, in order
      up: 0.5
      down: 0.5
    g_atoms:               # optional; atom name -> list of point labels
      all: [up, down]      # omitted means a single atom (trivial G)
    map:                   # see MAP FAMILIES below
      family: entropic
      gamma: 1.0
    x: {up: 0.0, down: 1.0986122886681098}
    q: {up: 1.0, down: 1.0}          # optional density (any positive scale)
    gamma_blocks:                    # optional coarsening, lists of point labels
      - [up, down]
    solver:                          # optional overrides of SolverCfg fields
      restarts: 16
      bisect_tol: 1.0e-9
      seed: 0

Map families:

    entropic      gamma (default 1)
    worst_case
    composite     loss: {kind: softplus | exp, beta}, outer: identity | log | sqrt
    transformed   transform: identity | arctan | cubic | exp | negate,
                  shift (default 1, used by cubic), inner: <map block>
    cce           utility: exponential | power | log, param (alpha or eta)
    mirrored      inner: <map block>

Nested ``inner`` blocks use the same G as the scenario.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .errors import InputError, ParseError, ValidationError
from .maps import (
    CertaintyEquivalent,
    Composite,
    Entropic,
    Loss,
    MapSpec,
    Mirrored,
    Outer,
    Transform,
    Transformed,
    Utility,
    WorstCase,
)
from .prob import Density, FiniteSpace, Partition, build_space, normalize_density
from .solvers import SolverCfg

FAMILY_NAMES = ("entropic", "worst_case", "composite", "transformed", "cce", "mirrored")
TOP_KEYS = ("space", "g_atoms", "map", "x", "q", "gamma_blocks", "solver")


@dataclass(frozen=True)
class Scenario:
    space: FiniteSpace
    g: Partition
    atom_names: tuple[str, ...]
    map: MapSpec
    x: np.ndarray
    q: Optional[Density]
    gamma: Optional[Partition]
    solver: SolverCfg


def _mapping(value: Any, where: str) -> dict:
    if not isinstance(value, dict):
        raise ParseError(f"{where}: expected a mapping, got {type(value).__name__}")
    return value


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _label_list(value: Any, where: str) -> list[str]:
    if not isinstance(value, list) or not value:
        raise ParseError(f"{where}: expected a nonempty list of labels")
    return [str(v) for v in value]


def _validated(where: str, build):
    """Run a constructor and report any invariant it rejects as a ValidationError."""
    try:
        return build()
    except (ParseError, ValidationError):
        raise
    except InputError as exc:
        raise ValidationError(f"{where}: {type(exc).__name__}: {exc}") from exc


def _by_label(space: FiniteSpace, value: Any, where: str) -> list[float]:
    table = _mapping(value, where)
    unknown = [str(k) for k in table if str(k) not in space.labels]
    if unknown:
        raise ValidationError(f"{where}: unknown labels {', '.join(unknown)}")
    missing = [l for l in space.labels if l not in {str(k) for k in table}]
    if missing:
        raise ValidationError(f"{where}: missing labels {', '.join(missing)}")
    by = {str(k): v for k, v in table.items()}
    return [_number(by[l], f"{where}.{l}") for l in space.labels]


def _blocks(space: FiniteSpace, groups: list[list[str]], where: str) -> tuple[tuple[int, ...], ...]:
    out = []
    for j, group in enumerate(groups):
        idx = []
        for label in group:
            if label not in space.labels:
                raise ValidationError(f"{where}[{j}]: unknown label {label!r}")
            idx.append(space.labels.index(label))
        out.append(tuple(idx))
    return tuple(out)


def build_map(block: Any, g: Partition, where: str = "map") -> MapSpec:
    entry = _mapping(block, where)
    family = entry.get("family")
    if family not in FAMILY_NAMES:
        raise ParseError(f"{where}.family: unknown map family {family!r}; supported: {', '.join(FAMILY_NAMES)}")

    def num(key, default):
        return _number(entry.get(key, default), f"{where}.{key}")

    if family == "entropic":
        return _validated(where, lambda: Entropic(g, num("gamma", 1.0)))
    if family == "worst_case":
        return WorstCase(g)
    if family == "composite":
        loss = _mapping(entry.get("loss", {}), f"{where}.loss")
        return _validated(
            where,
            lambda: Composite(
                g,
                Loss(str(loss.get("kind", "softplus")), _number(loss.get("beta", 1.0), f"{where}.loss.beta")),
                Outer(str(entry.get("outer", "log"))),
            ),
        )
    if family == "transformed":
        if "inner" not in entry:
            raise ParseError(f"{where}.inner: a transformed map needs an inner map block")
        inner = build_map(entry["inner"], g, f"{where}.inner")
        tr = _validated(where, lambda: Transform(str(entry.get("transform", "arctan")), num("shift", 1.0)))
        return _validated(where, lambda: Transformed(inner, tr))
    if family == "cce":
        return _validated(
            where, lambda: CertaintyEquivalent(g, Utility(str(entry.get("utility", "exponential")), num("param", 1.0)))
        )
    if "inner" not in entry:
        raise ParseError(f"{where}.inner: a mirrored map needs an inner map block")
    return Mirrored(build_map(entry["inner"], g, f"{where}.inner"))


def parse_scenario(doc: Any) -> Scenario:
    """Validate an already-parsed YAML document."""
    doc = _mapping(doc, "scenario")
    extra = [str(k) for k in doc if k not in TOP_KEYS]
    if extra:
        raise ParseError(f"unknown top-level keys {', '.join(extra)}; expected {', '.join(TOP_KEYS)}")
    for key in ("space", "map", "x"):
        if key not in doc:
            raise ParseError(f"missing required key {key!r}")

    space_tbl = _mapping(doc["space"], "space")
    labels = [str(k) for k in space_tbl]
    probs = [_number(v, f"space.{k}") for k, v in space_tbl.items()]
    space = _validated("space", lambda: build_space(labels, probs))

    if "g_atoms" in doc:
        atoms = _mapping(doc["g_atoms"], "g_atoms")
        names = tuple(str(k) for k in atoms)
        groups = [_label_list(v, f"g_atoms.{k}") for k, v in atoms.items()]
        g = _validated("g_atoms", lambda: Partition(space, _blocks(space, groups, "g_atoms")))
        # keep the user's atom names aligned with the canonical block order
        order = {tuple(sorted(b)): n for b, n in zip(_blocks(space, groups, "g_atoms"), names)}
        names = tuple(order[b] for b in g.blocks)
    else:
        g = Partition.trivial(space)
        names = ("all",)

    m = build_map(doc["map"], g)
    x = np.array(_by_label(space, doc["x"], "x"))
    if not np.all(np.isfinite(x)):
        raise ValidationError("x: payoffs must be finite")

    q = None
    if doc.get("q") is not None:
        qv = _by_label(space, doc["q"], "q")
        q = _validated("q", lambda: normalize_density(space, qv))

    gamma = None
    if doc.get("gamma_blocks") is not None:
        raw = doc["gamma_blocks"]
        if not isinstance(raw, list):
            raise ParseError("gamma_blocks: expected a list of label lists")
        groups = [_label_list(v, f"gamma_blocks[{j}]") for j, v in enumerate(raw)]
        gamma = _validated("gamma_blocks", lambda: Partition(space, _blocks(space, groups, "gamma_blocks")))
        if not g.refines(gamma):
            raise ValidationError("gamma_blocks: NotGMeasurablePartition: every block must be a union of G-atoms")

    solver = SolverCfg()
    if doc.get("solver") is not None:
        tbl = _mapping(doc["solver"], "solver")
        known = {f.name: f for f in fields(SolverCfg)}
        kwargs = {}
        for key, value in tbl.items():
            if key not in known:
                raise ParseError(f"solver.{key}: unknown setting; expected one of {', '.join(known)}")
            if key == "bracket_init":
                kwargs[key] = None if value is None else tuple(_number(v, f"solver.{key}") for v in value)
            elif isinstance(known[key].default, int) and not isinstance(known[key].default, bool):
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ParseError(f"solver.{key}: expected an integer, got {value!r}")
                kwargs[key] = value
            else:
                kwargs[key] = _number(value, f"solver.{key}")
        try:
            solver = SolverCfg(**kwargs)
        except ValueError as exc:
            raise ValidationError(f"solver: {exc}") from exc

    return Scenario(space, g, names, m, x, q, gamma, solver)


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"{p}: cannot read ({exc.strerror or exc})") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else "unknown position"
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(f"{p}: {where}: {problem}") from exc
    if doc is None:
        raise ParseError(f"{p}: empty document")
    return parse_scenario(doc)
