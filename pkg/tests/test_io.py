import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphfpe import io
from graphfpe.errors import AsymmetricWeight, ParseError, ValidationError
from graphfpe.graph import binary_tree, lattice_window, random_sparse
from graphfpe.scenario import (
    Scenario,
    apply_override,
    emit_scenario,
    parse_scenario,
)


def test_fmt_round_trip_and_specials():
    assert io.fmt(0.1) == "0.10000000000000001"
    assert float(io.fmt(0.1)) == 0.1
    assert io.fmt(math.inf) == "inf" and io.fmt(-math.inf) == "-inf" and io.fmt(math.nan) == "nan"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_is_exact(x):
    assert float(io.fmt(x)) == x


def test_edge_list_round_trip():
    for g in (lattice_window(3, "absorbing"), binary_tree(2), random_sparse(9, 3, seed=4, weight_range=(0.3, 3.0))):
        h = io.parse_edge_list(io.format_edge_list(g))
        assert h == g
        np.testing.assert_array_equal(h.measure, g.measure)
        np.testing.assert_array_equal(h.weights, g.weights)


def test_edge_list_parsing_details(tmp_path):
    text = "# a path\nmode=closed root=1\n0 1 1.0  # first\n\n1 2 2.5\n"
    p = tmp_path / "g.txt"
    p.write_text(text)
    g = io.read_edge_list(p)
    assert g.root == 1
    np.testing.assert_array_equal(g.measure, [1.0, 3.5, 2.5])


@pytest.mark.parametrize(
    "text, exc, match",
    [
        ("0 1\n", ParseError, "line 1"),
        ("0 1 1.0\n1 x 1.0\n", ParseError, "line 2"),
        ("0 1 1.0\nmode=closed\n", ParseError, "line 2"),
        ("colour=red\n0 1 1.0\n", ParseError, "header"),
        ("mode=absorbing\n0 1 1.0\n", ValidationError, "pi"),
        ("0 1 1.0\n1 0 2.0\n", AsymmetricWeight, "0"),
    ],
)
def test_edge_list_errors(text, exc, match):
    with pytest.raises(exc, match=match):
        io.parse_edge_list(text)


def test_vertex_json_forms():
    np.testing.assert_array_equal(io.parse_vertex_json("[1, 2.5, 3]"), [1, 2.5, 3])
    np.testing.assert_array_equal(io.parse_vertex_json('{"1": 2, "0": 1}'), [1, 2])
    np.testing.assert_array_equal(io.parse_vertex_json('{"values": [4, 5]}'), [4, 5])
    v = np.array([0.1, 1 / 3, 1e-300])
    np.testing.assert_array_equal(io.parse_vertex_json(io.format_vertex_json(v)), v)


@pytest.mark.parametrize(
    "text, n, exc",
    [("[1, 2", None, ParseError), ('["a"]', None, ParseError), ('{"0": 1, "2": 1}', None, ValidationError),
     ("[1, 2]", 3, ValidationError), ("3", None, ParseError)],
)
def test_vertex_json_errors(text, n, exc):
    with pytest.raises(exc):
        io.parse_vertex_json(text, n)


def test_csv_round_trip(tmp_path):
    rows = np.array([[0.0, 0.6, 0.4], [0.5, 0.1 + 0.2, math.inf]])
    path = tmp_path / "t.csv"
    io.write_csv(path, io.trajectory_header(2), rows)
    assert path.read_text().splitlines()[0] == "t,rho_0,rho_1"
    t, states = io.read_trajectory_csv(path)
    np.testing.assert_array_equal(t, rows[:, 0])
    np.testing.assert_array_equal(states, rows[:, 1:])


def test_trajectory_csv_header_checked(tmp_path):
    path = tmp_path / "bad.csv"
    io.write_csv(path, ["time", "x"], [[0.0, 1.0]])
    with pytest.raises(ParseError):
        io.read_trajectory_csv(path)
    path.write_text("t,rho_0\n0,abc\n")
    with pytest.raises(ParseError, match="line 2"):
        io.read_csv(path)


MINIMAL = """
[graph]
family = "path"
size = 5
"""


def test_scenario_defaults_from_minimal_document():
    s = parse_scenario(MINIMAL)
    assert s.graph.mode == "closed" and s.potential.kind == "linear" and s.potential.slope == 1.0
    assert s.integrator.method == "rk45" and s.integrator.rtol == 1e-10
    assert s.analysis.exponents == [2, 4, 8, math.inf]
    assert s.seed == 0
    cfg = s.integrator_config()
    assert cfg.horizon == s.integrator.horizon


def test_scenario_round_trip():
    s = parse_scenario(MINIMAL + "\n[integrator]\nrtol = 1e-8\nmethod = 'semi-implicit'\n[output]\nfigures = false\n")
    again = parse_scenario(emit_scenario(s))
    assert again == s
    assert again.digest() == s.digest()
    assert apply_override(s, "integrator.rtol", 1e-9).digest() != s.digest()


def test_scenario_unknown_key():
    with pytest.raises(ParseError, match=r"integrater\.rtol"):
        parse_scenario(MINIMAL + "\n[integrater]\nrtol = 1e-8\n")
    with pytest.raises(ParseError, match=r"graph\.sise"):
        parse_scenario("[graph]\nfamily = 'path'\nsise = 4\n")
    with pytest.raises(ParseError):
        parse_scenario("[graph\n")


@pytest.mark.parametrize(
    "extra",
    [
        "\n[integrator]\nrtol = 'tight'\n",
        "\n[integrator]\nrtol = -1.0\n",
        "\n[potential]\nslope = -1.0\n",
        "\n[analysis]\nexponents = [3]\n",
        "\n[initial]\namplitude = 1.5\n",
    ],
)
def test_scenario_validation(extra):
    with pytest.raises(ValidationError):
        parse_scenario(MINIMAL + extra)


def test_scenario_negative_seed():
    with pytest.raises(ValidationError):
        parse_scenario("seed = -2\n" + MINIMAL)


def test_scenario_graph_source_exclusive():
    with pytest.raises(ValidationError):
        parse_scenario("[graph]\nfamily = 'path'\nsize = 4\nfile = 'g.txt'\n")
    with pytest.raises(ValidationError):
        parse_scenario("[graph]\nmode = 'closed'\n")


def test_apply_override_unknown_key():
    s = Scenario()
    s.graph.family, s.graph.size = "path", 3
    with pytest.raises(ParseError):
        apply_override(s, "solver.rtol", 1e-3)
    assert apply_override(s, "seed", 5).seed == 5
