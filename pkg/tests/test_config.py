import json
from pathlib import Path

import jsonschema
import pytest
from hypothesis import given, settings, strategies as st

from singular_cs.config import SimConfig, load_config, parse_config, random_cloud
from singular_cs.errors import SchemaError
from singular_cs.scenarios import SCENARIOS

SCHEMA = json.loads((Path(__file__).parents[1] / "docs" / "config.schema.json").read_text())

MINIMAL = """
kernel: {kind: singular, alpha: 0.3}
n: 2
dim: 1
t_final: 1
initial: {scenario: critical-pair}
"""


def test_minimal_document():
    cfg = parse_config(MINIMAL)
    assert cfg.kernel.alpha == 0.3 and cfg.kernel.floor == 1e-10
    assert cfg.n_particles == 2 and cfg.t_final == 1.0
    assert cfg.initial.scenario == "critical-pair"
    state = cfg.initial_state()
    assert state.positions.tolist() == [[-0.5], [0.5]]


@pytest.mark.parametrize(
    "doc, path",
    [
        ({"kernel": {"alpha": -1}, "t_final": 1}, "kernel.alpha"),
        ({"n": 2, "dim": 1, "t_final": 1, "initial": {"positions": [[0.0]], "velocities": [[0.0]]}}, "initial.positions"),
        ({"n": 2, "dim": 1, "t_final": 1, "initial": {"positions": [[0.0], [1.0]], "velocities": [[0.0, 1.0], [0.0, 1.0]]}}, "initial.velocities"),
        ({"t_final": 1, "colour": "red"}, "colour"),
        ({"t_final": 1, "kernel": {"alpha": 0.3, "beta": 1}}, "kernel.beta"),
        ({"t_final": 0}, "t_final"),
        ({}, "t_final"),
        ({"t_final": 1, "step_control": {"rel_tol": 0}}, "step_control"),
        ({"t_final": 1, "initial": {"scenario": "nope"}}, "initial.scenario"),
        ({"t_final": 1, "n": 3, "initial": {"scenario": "critical-pair"}}, "initial.scenario"),
        ({"t_final": 1, "n": 2.5}, "n"),
    ],
)
def test_schema_errors_name_the_key(doc, path):
    with pytest.raises(SchemaError) as info:
        parse_config(doc)
    assert path in str(info.value)


def test_invalid_yaml():
    with pytest.raises(SchemaError):
        parse_config("t_final: [1,")


def test_load_missing_file(tmp_path):
    with pytest.raises(SchemaError):
        load_config(tmp_path / "absent.yaml")


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_round_trip_and_schema(name):
    cfg = SCENARIOS[name].config()
    doc = cfg.to_dict()
    jsonschema.validate(doc, SCHEMA)
    assert parse_config(doc) == cfg
    assert parse_config(cfg.to_json()) == cfg


def test_schema_rejects_what_the_parser_rejects():
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"t_final": 1, "kernel": {"alpha": -1}}, SCHEMA)
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"t_final": 1, "extra": 1}, SCHEMA)


def test_overrides():
    cfg = SCENARIOS["many-body"].config().with_overrides(alpha=0.4, n=5, t_final=2.0, seed=3)
    assert (cfg.kernel.alpha, cfg.n_particles, cfg.t_final, cfg.seed) == (0.4, 5, 2.0, 3)


def test_refined_scales_floor_and_tolerances():
    cfg = SimConfig(t_final=1.0).refined(0.1)
    assert cfg.kernel.floor == pytest.approx(1e-11)
    assert cfg.step_control.rel_tol == pytest.approx(1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(1, 3), st.integers(0, 2**64 - 1))
def test_random_cloud(n, d, seed):
    X, V = random_cloud(n, d, seed)
    X2, V2 = random_cloud(n, d, seed)
    assert (X == X2).all() and (V == V2).all()
    assert abs(X).max() <= 1 and (V**2).sum(axis=1).max() <= 1 + 1e-12
    if n > 1:
        D = ((X[:, None] - X[None]) ** 2).sum(-1) ** 0.5
        assert D[~__import__("numpy").eye(n, dtype=bool)].min() >= 1e-3


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.integers(1, 8), st.integers(1, 3), st.floats(0.1, 50), st.integers(0, 2**64 - 1))
def test_round_trip_random_configs(alpha, n, d, t_final, seed):
    doc = {"kernel": {"alpha": alpha}, "n": n, "dim": d, "t_final": t_final, "seed": seed}
    cfg = parse_config(doc)
    assert parse_config(cfg.to_dict()) == cfg


def test_yaml_exponent_without_dot_is_a_number():
    cfg = parse_config("t_final: 2e1\nkernel: {alpha: 0.3, floor: 1e-12}\nstep_control: {rel_tol: 1E-8}\n")
    assert cfg.t_final == 20.0 and cfg.kernel.floor == 1e-12 and cfg.step_control.rel_tol == 1e-8
