import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cnsl.graph import (BridgeLinks, CrossNetwork, GraphFormatError, Network, bridge_argmax,
                        bridge_transfer, load_cross_network_dir, read_edges, read_vector,
                        save_cross_network, structural_features, validate, write_vector)


def small_cross():
    src = Network(3, [(0, 1), (1, 2)], name="source")
    tgt = Network(4, [(0, 1), (2, 3)], name="target")
    return CrossNetwork(src, tgt, BridgeLinks([(0, 0), (1, 0), (2, 3)]))


def test_bridge_transfer_takes_max_over_incoming_links():
    cross = small_cross()
    x_t = bridge_transfer(np.array([0.2, 0.7, 0.4]), cross.bridges, 4)
    assert x_t.tolist() == [0.7, 0.0, 0.0, 0.4]


def test_bridge_transfer_without_bridges_is_zero():
    x_t = bridge_transfer(np.ones(3), BridgeLinks(np.zeros((0, 2))), 5)
    assert x_t.tolist() == [0.0] * 5


def test_bridge_argmax_breaks_ties_to_lowest_source():
    bridges = BridgeLinks([(2, 0), (1, 0), (0, 1)])
    assert bridge_argmax(np.array([0.1, 0.5, 0.5]), bridges, 3).tolist() == [1, 0, -1]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 6)), max_size=20, unique=True),
       st.lists(st.floats(0, 1), min_size=6, max_size=6))
def test_transfer_bounded_and_monotone(pairs, y):
    bridges = BridgeLinks(np.array(pairs, dtype=np.int64).reshape(-1, 2))
    y = np.array(y)
    x = bridge_transfer(y, bridges, 7)
    assert np.all((x >= 0) & (x <= 1))
    assert np.all(bridge_transfer(np.minimum(1.0, y + 0.1), bridges, 7) >= x)
    winner = bridge_argmax(y, bridges, 7)
    has = winner >= 0
    assert np.allclose(x[has], y[winner[has]])


def test_validate_reports_each_problem():
    src = Network(3, [(0, 1), (1, 1), (0, 5), (1, 0)])
    cross = CrossNetwork(src, Network(2, []), BridgeLinks([(0, 2), (0, 2)]), np.ones((2, 1)))
    report = validate(cross)
    text = "\n".join(report)
    assert "self-loop" in text and "out of range" in text and "duplicate" in text
    assert "rows for a 3-node network" in text


def test_roundtrip_directory(tmp_path):
    cross = small_cross()
    cross = CrossNetwork(cross.source, cross.target, cross.bridges, structural_features(cross.source))
    save_cross_network(cross, tmp_path)
    back = load_cross_network_dir(tmp_path)
    assert back.source.edge_set() == cross.source.edge_set()
    assert back.target.edge_set() == cross.target.edge_set()
    assert back.bridges.pairs.tolist() == cross.bridges.pairs.tolist()
    assert np.array_equal(back.source_features, cross.source_features)


@pytest.mark.parametrize("body, message", [
    ("0\t1\n", "before the nodes=N header"),
    ("nodes=3\n0\t3\n", "out of range"),
    ("nodes=3\n1\t1\n", "self-loop"),
    ("nodes=3\n0\t1\n1\t0\n", "duplicate edge"),
    ("nodes=3\n0\tx\n", "g.edges:2: non-integer"),
])
def test_edge_file_errors_name_the_line(tmp_path, body, message):
    path = tmp_path / "g.edges"
    path.write_text(body)
    with pytest.raises(GraphFormatError, match=message) as err:
        read_edges(path)
    assert str(path) in str(err.value)


def test_vector_roundtrip_is_exact(tmp_path):
    v = np.random.default_rng(0).random(17)
    write_vector(v, tmp_path / "v.csv")
    assert np.array_equal(read_vector(tmp_path / "v.csv", size=17), v)


def test_structural_features_flag_isolated_nodes():
    f = structural_features(Network(4, [(0, 1)]))
    assert f.shape == (4, 4)
    assert f[:, 3].tolist() == [0, 0, 1, 1]
