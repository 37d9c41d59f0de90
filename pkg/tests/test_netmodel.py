
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from outageid.netmodel import (
    Branch,
    Bus,
    BusKind,
    CaseSemanticError,
    CaseSyntaxError,
    NetworkModel,
    build_admittance,
    count_islands,
    from_json,
    load_case,
    parse_case,
    remove_lines,
    serialize,
)

from conftest import TWO_BUS, two_bus
from oracles import admittance_loops, strip_shunts


class TestTwoBus:
    def test_shapes_and_admittance(self):
        m = two_bus()
        assert (m.n_bus, m.n_line) == (2, 1)
        np.testing.assert_allclose(m.y, [-10j])
        np.testing.assert_array_equal(m.M, [[1.0], [-1.0]])
        y = m.y[0]
        np.testing.assert_allclose(m.Y, [[y, -y], [-y, y]], atol=1e-15)

    def test_remove_only_line(self):
        m = remove_lines(two_bus(), {1})
        np.testing.assert_array_equal(m.Y, np.zeros((2, 2)))
        assert count_islands(m)[0] == 2

    def test_reference_and_kinds(self):
        m = two_bus()
        assert m.reference == 1
        assert [b.kind for b in m.buses] == [BusKind.REFERENCE, BusKind.LOAD]


class TestCase39:
    def test_size(self, net39):
        assert (net39.n_bus, net39.n_line) == (39, 46)

    def test_admittance_matches_loop_assembly(self, net39):
        ref = admittance_loops(net39)
        assert np.max(np.abs(net39.Y - ref)) <= 1e-12

    def test_symmetric(self, net39):
        assert np.max(np.abs(net39.Y - net39.Y.T)) == 0.0

    def test_incidence_columns(self, net39):
        M = net39.M
        np.testing.assert_array_equal(M.sum(axis=0), 0.0)
        np.testing.assert_array_equal((M != 0).sum(axis=0), 2)
        assert set(np.unique(M)) == {-1.0, 0.0, 1.0}

    def test_series_identity_without_shunts(self, net39):
        m = strip_shunts(net39)
        series = (m.M * m.y) @ m.M.T
        assert np.max(np.abs(m.Y - series)) <= 1e-12
        assert np.max(np.abs(m.Y.sum(axis=1))) <= 1e-12

    def test_connectivity(self, net39):
        assert count_islands(net39)[0] == 1
        n, labels = count_islands(remove_lines(net39, {21}))
        assert n == 2
        assert len(set(labels)) == 2

    def test_reference_bus_is_31(self, net39):
        assert net39.bus_ids[net39.reference - 1] == 31

    def test_serialize_round_trip(self, net39):
        text = serialize(net39)
        back = from_json(text)
        assert back == net39
        assert serialize(back) == text

    def test_load_json(self, net39, tmp_path):
        p = tmp_path / "net.json"
        p.write_text(serialize(net39))
        assert load_case(str(p)) == net39

    def test_remove_lines_composes(self, net39):
        a, b = {3, 9}, {9, 30}
        once = remove_lines(net39, a | b)
        twice = remove_lines(remove_lines(net39, a), b)
        assert once == twice
        np.testing.assert_array_equal(once.Y, twice.Y)

    def test_remove_nothing(self, net39):
        np.testing.assert_array_equal(remove_lines(net39, set()).Y, net39.Y)

    def test_remove_unknown_line(self, net39):
        with pytest.raises(ValueError, match="unknown line"):
            remove_lines(net39, {47})

    def test_scale_loads(self, net39):
        f = np.full(39, 1.05)
        scaled = net39.scale_loads(f)
        np.testing.assert_allclose(
            [b.p_load for b in scaled.buses], [1.05 * b.p_load for b in net39.buses]
        )
        with pytest.raises(ValueError):
            net39.scale_loads(np.ones(3))


def test_no_lines_gives_n_islands():
    buses = tuple(
        Bus(i, BusKind.REFERENCE if i == 1 else BusKind.LOAD) for i in range(1, 6)
    )
    m = NetworkModel(buses, ())
    assert count_islands(m)[0] == 5


def test_sparse_ids_are_densified():
    text = TWO_BUS.format(pd=10, qd=0, r=0, x=0.1)
    text = text.replace("  1 3", "  10 3").replace("  2 1", "  20 1")
    text = text.replace("  1 0 0 300", "  10 0 0 300").replace("  1 2 0", "  10 20 0")
    m = parse_case(text)
    assert [b.id for b in m.buses] == [1, 2]
    assert list(m.bus_ids) == [10, 20]
    assert m.bus_index(20) == 1
    assert m.branches[0].from_bus == 1


def test_comments_and_whitespace():
    text = TWO_BUS.format(pd=0, qd=0, r=0, x=0.1).replace(";\n", ";  % trailing\n")
    assert parse_case(text).n_line == 1


@pytest.mark.parametrize(
    "edit, match",
    [
        (("  1 2 0 0.1", "  1 99 0 0.1"), "unknown bus"),
        (("  2 1 0", "  1 1 0"), "duplicate bus"),
        (("  1 2 0 0.1", "  1 2 0 0"), "zero reactance"),
        (("  1 3 0", "  1 2 0"), "no reference bus"),
        (("  2 1 0", "  2 3 0"), "more than one reference"),
        (("  1 2 0 0.1", "  1 1 0 0.1"), "to itself"),
    ],
)
def test_semantic_errors(edit, match):
    text = TWO_BUS.format(pd=0, qd=0, r=0, x=0.1).replace(*edit)
    with pytest.raises(CaseSemanticError, match=match):
        parse_case(text)


def test_syntax_error_reports_position():
    text = TWO_BUS.format(pd=0, qd=0, r=0, x=0.1).replace("mpc.baseMVA = 100;", "mpc.baseMVA = 100 #;")
    with pytest.raises(CaseSyntaxError) as err:
        parse_case(text)
    assert err.value.line == 3
    assert err.value.column == 19


def test_missing_case_file():
    with pytest.raises(FileNotFoundError):
        load_case("no_such_case")


@st.composite
def _networks(draw):
    n = draw(st.integers(2, 7))
    buses = tuple(
        Bus(i, BusKind.REFERENCE if i == 1 else BusKind.LOAD,
            shunt_b=draw(st.floats(0, 0.5)))
        for i in range(1, n + 1)
    )
    edges = []
    for j in range(2, n + 1):  # a spanning tree keeps every bus attached
        edges.append((draw(st.integers(1, j - 1)), j))
    edges += draw(st.lists(st.tuples(st.integers(1, n), st.integers(1, n)).filter(
        lambda e: e[0] != e[1]), max_size=5))
    branches = tuple(
        Branch(k + 1, f, t, r=draw(st.floats(0, 0.1)), x=draw(st.floats(0.01, 1.0)),
               b_charging=draw(st.floats(0, 0.3)))
        for k, (f, t) in enumerate(edges)
    )
    return NetworkModel(buses, branches)


@settings(max_examples=60, deadline=None)
@given(_networks())
def test_admittance_properties(model):
    Y = build_admittance(model)
    assert np.max(np.abs(Y - Y.T)) <= 1e-12
    assert np.max(np.abs(Y - admittance_loops(model))) <= 1e-12
    bare = strip_shunts(model)
    series = (bare.M * bare.y) @ bare.M.T
    assert np.max(np.abs(build_admittance(bare) - series)) <= 1e-12
    assert count_islands(model)[0] == 1
