import copy
import json

import numpy as np
import pytest

from stoptime.errors import ParseError, ValidationError
from stoptime.fixtures import (
    F1_CONFIG,
    build_fixture,
    fingerprint,
    load_fixture,
    parse_matrix,
    random_adapted_stopping_time,
    random_fixture_config,
    tensor_chain_algebras,
)
from stoptime.kernel import op_norm

from conftest import FIXTURE_DIR


def cfg(**changes):
    out = copy.deepcopy(F1_CONFIG)
    out.update(changes)
    return out


def test_f1_from_disk_matches_builtin(f1):
    disk = load_fixture(FIXTURE_DIR / "f1.json")
    assert disk.filtration.gns.dim == 16
    assert disk.fingerprint == f1.fingerprint
    for a, b in zip(disk.tau.q, f1.tau.q):
        assert np.allclose(a, b)


def test_every_shipped_fixture_loads_or_is_known_bad():
    for path in sorted(FIXTURE_DIR.glob("*.json")):
        if path.name.startswith("broken"):
            with pytest.raises(ValidationError):
                load_fixture(path)
        else:
            load_fixture(path)


def test_q0_nonzero():
    bad = cfg(stopping_time={"q": ["identity", "identity", "identity"]})
    with pytest.raises(ValidationError, match="q_0 = 0 violated"):
        build_fixture(bad)


def test_adaptedness_error():
    q1 = {"kron": [{"identity": 2}, [[1, 0], [0, 0]]]}
    with pytest.raises(ValidationError, match="adaptedness"):
        build_fixture(cfg(stopping_time={"q": ["zero", q1, "identity"]}))


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"schema_version": 2}, "schema_version"),
        ({"grid": ["a", "b"]}, "grid"),
        ({"algebra": {"tensor_chain": [2, 2], "levels": [0, 1]}}, "algebra.levels"),
        ({"algebra": {"tensor_chain": [2, 2], "levels": [0, 1, 5]}}, "algebra.levels[2]"),
        ({"stopping_time": {"q": ["zero", "identity"]}}, "stopping_time.q"),
        ({"stopping_time": {"q": ["zero", "bogus", "identity"]}}, "stopping_time.q[1]"),
        ({"stopping_time": {"q": ["zero", [[1, "x"], [0, 0]], "identity"]}}, None),
        ({"tolerance": {"eq_tol": 2.0}}, "tolerance"),
    ],
)
def test_parse_errors_name_the_field(changes, field):
    with pytest.raises(ParseError) as info:
        build_fixture(cfg(**changes))
    if field is not None:
        assert info.value.field == field
    else:
        assert info.value.field.startswith("stopping_time.q[1]")


def test_grid_must_start_at_zero():
    with pytest.raises(ValidationError, match="start at 0"):
        build_fixture(cfg(grid=[1, 2, 3]))


def test_parse_matrix_forms():
    assert np.allclose(parse_matrix([["1/2", [0, 1]], [[0, -1], "1/2"]], "m"),
                       [[0.5, 1j], [-1j, 0.5]])
    assert np.allclose(parse_matrix({"unit": [0, 1, 2]}, "m"), [[0, 1], [0, 0]])
    assert parse_matrix({"kron": [{"identity": 2}, {"zero": 3}]}, "m").shape == (6, 6)
    with pytest.raises(ParseError):
        parse_matrix([[1, 2], [3]], "m")
    with pytest.raises(ParseError):
        parse_matrix("identity", "m")


def test_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ParseError, match="line 1"):
        load_fixture(p)
    with pytest.raises(ParseError):
        load_fixture(tmp_path / "missing.json")


def test_non_product_state_rejected():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 4))
    rho = x @ x.T + np.eye(4)
    rho /= np.trace(rho)
    with pytest.raises(ValidationError):
        build_fixture(cfg(state={"rho": rho.tolist()}))


def test_random_seed_determinism():
    F = build_fixture(F1_CONFIG).filtration
    a = random_adapted_stopping_time(F, 42)
    b = random_adapted_stopping_time(F, 42)
    for x, y in zip(a.q, b.q):
        assert np.array_equal(x, y)
    assert random_fixture_config(7) == random_fixture_config(7)
    assert fingerprint(random_fixture_config(7)) == fingerprint(random_fixture_config(7))
    assert fingerprint(F1_CONFIG, 1) != fingerprint(F1_CONFIG, 2)


def test_seed_override():
    conf = cfg(stopping_time={"random_adapted": {"seed": 3}})
    assert build_fixture(conf).seed == 3
    assert build_fixture(conf, seed=9).seed == 9


def test_scalar_filtration_forces_deterministic_at_horizon():
    conf = cfg(grid=[0, 1, 2], algebra={"tensor_chain": [2, 2], "levels": [0, 0, 2]},
               stopping_time={"random_adapted": {"seed": 0}})
    F = build_fixture(conf).filtration
    for seed in range(10):
        tau = random_adapted_stopping_time(F, seed)
        q1 = tau.q[1]
        assert op_norm(q1) < 1e-12 or op_norm(q1 - np.eye(4)) < 1e-12


def test_tensor_chain_dimensions():
    chain = tensor_chain_algebras([2, 3])
    assert [a.dim for a in chain] == [1, 4, 36]


def test_chain_222_fixture():
    fx = load_fixture(FIXTURE_DIR / "chain_222_random.json")
    assert fx.seed == 42
    assert fx.filtration.gns.dim == 64
    assert len(fx.filtration.grid) == 5


def test_config_is_copied():
    conf = cfg()
    fx = build_fixture(conf)
    conf["name"] = "changed"
    assert fx.config["name"] == "F1"
    json.dumps(fx.config)
