import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ari, clustered_loss, mutual_information_bits, planted_block_matrix

from flowlens.cocluster import (
    CoClustering,
    JointDistribution,
    adjusted_rand_index,
    best_fit_grid,
    cocluster_flows,
    extract_cell_series,
    fit_cells,
    itcc,
    mutual_information,
    normalize_joint,
    traffic_matrix,
)
from flowlens.errors import AllZeroError, InvalidKLError, UnassignedEntityError
from flowlens.ingest import UNKNOWN, EnrichedFlow

positive = st.integers(2, 7).flatmap(
    lambda n: st.lists(st.lists(st.floats(0.01, 10), min_size=n, max_size=n), min_size=2, max_size=7)
)


def ef(ts, user, domain, building="B1"):
    return EnrichedFlow(ts, user, domain, building, 10)


# -- joint distribution ------------------------------------------------------------

def test_normalize_sums_to_one():
    rng = np.random.default_rng(0)
    jd = normalize_joint(rng.integers(0, 1000, (37, 13)))
    assert abs(jd.p.sum() - 1.0) <= 1e-12
    assert jd.row_labels[:2] == ["0", "1"]
    np.testing.assert_allclose(jd.px, jd.p.sum(1))


def test_normalize_rejects_bad_counts():
    with pytest.raises(AllZeroError):
        normalize_joint(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        normalize_joint([[1, -1]])
    with pytest.raises(ValueError):
        JointDistribution(np.full((2, 2), 0.3))


def test_mutual_information_examples():
    assert mutual_information(np.full((3, 3), 1 / 9)) == pytest.approx(0.0, abs=1e-15)
    assert mutual_information(np.eye(4) / 4) == pytest.approx(2.0)
    p = np.array([[0.3, 0.1], [0.05, 0.55]])
    assert mutual_information(p) == pytest.approx(mutual_information_bits(p), abs=1e-14)


@given(positive)
@settings(max_examples=40)
def test_mutual_information_matches_oracle(rows):
    jd = normalize_joint(rows)
    assert mutual_information(jd) == pytest.approx(mutual_information_bits(jd.p), abs=1e-12)
    assert mutual_information(jd.transpose()) == pytest.approx(mutual_information(jd), abs=1e-12)


# -- ITCC -------------------------------------------------------------------------------

def test_identity_with_full_clusters_loses_nothing():
    cc = itcc(np.eye(6) / 6, k=6, l=6)
    assert cc.loss == pytest.approx(0.0, abs=1e-12)
    assert cc.mutual_information == pytest.approx(np.log2(6))


def test_loss_matches_oracle():
    p, _, _ = planted_block_matrix(3, 40, 20, 4, 5)
    cc = itcc(p, 4, 5, seed=1)
    assert cc.loss == pytest.approx(clustered_loss(p, cc.row_assign, cc.col_assign), abs=1e-12)
    assert cc.q.shape == p.shape
    assert cc.q.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("init", ["spread", "random"])
def test_planted_blocks_recovered(init):
    p, rows, cols = planted_block_matrix(0, 60, 30, 4, 3)
    cc = itcc(p, 4, 3, seed=0, n_init=5, init=init)
    assert ari(cc.row_assign, rows) == pytest.approx(1.0)
    assert ari(cc.col_assign, cols) == pytest.approx(1.0)
    assert cc.loss == pytest.approx(0.0, abs=1e-9) or cc.loss < 0.05 * cc.mutual_information


@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 4), st.sampled_from(["spread", "random"]))
@settings(max_examples=30)
def test_loss_trace_never_increases(seed, k, l, init):
    rng = np.random.default_rng(seed)
    p = rng.gamma(0.4, 1.0, (9, 8))
    cc = itcc(p / p.sum(), k, l, seed=seed, init=init)
    trace = np.array(cc.loss_trace)
    assert np.all(np.diff(trace) <= 1e-12)
    assert np.all(trace >= 0)
    assert trace[-1] <= cc.mutual_information + 1e-12
    assert set(cc.row_assign.tolist()) == set(range(k))
    assert set(cc.col_assign.tolist()) == set(range(l))


def test_row_permutation_is_equivariant():
    p, _, _ = planted_block_matrix(5, 30, 12, 3, 3)
    perm = np.random.default_rng(1).permutation(30)
    a = itcc(p, 3, 3, n_init=5)
    b = itcc(p[perm], 3, 3, n_init=5)
    assert ari(a.row_assign[perm], b.row_assign) == pytest.approx(1.0)
    assert b.loss == pytest.approx(a.loss, abs=1e-12)


def test_more_starts_never_hurt():
    p, _, _ = planted_block_matrix(2, 50, 30, 6, 6)
    one = itcc(p, 6, 6, seed=3, n_init=1)
    many = itcc(p, 6, 6, seed=3, n_init=8)
    assert many.loss <= one.loss + 1e-15


def test_deterministic_for_a_seed():
    p, _, _ = planted_block_matrix(7, 40, 20, 5, 4)
    a, b = itcc(p, 5, 4, seed=11), itcc(p, 5, 4, seed=11)
    np.testing.assert_array_equal(a.row_assign, b.row_assign)
    assert a.loss_trace == b.loss_trace


@pytest.mark.parametrize("k,l", [(0, 2), (2, 0), (6, 2), (2, 6)])
def test_invalid_cluster_counts(k, l):
    with pytest.raises(InvalidKLError):
        itcc(np.full((5, 5), 1 / 25), k, l)


def test_bad_options():
    p = np.full((4, 4), 1 / 16)
    with pytest.raises(ValueError):
        itcc(p, 2, 2, init="kmeans")
    with pytest.raises(ValueError):
        itcc(p, 2, 2, max_iter=0)


def test_serialisation_round_trip():
    p, _, _ = planted_block_matrix(1, 20, 10, 2, 2)
    jd = JointDistribution(p, [f"u{i}" for i in range(20)], [f"d{j}" for j in range(10)])
    cc = itcc(jd, 2, 2)
    back = CoClustering.from_dict(cc.to_dict())
    np.testing.assert_array_equal(back.row_assign, cc.row_assign)
    np.testing.assert_array_equal(back.col_assign, cc.col_assign)
    assert back.row_cluster_of() == cc.row_cluster_of()
    assert back.loss == cc.loss and back.iterations == cc.iterations


# -- ARI ---------------------------------------------------------------------------------

def test_ari_examples():
    assert adjusted_rand_index([0, 0, 1, 1], [5, 5, 2, 2]) == 1.0
    assert adjusted_rand_index([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        adjusted_rand_index([0, 1], [0])


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4)), min_size=2, max_size=40))
def test_ari_matches_oracle(pairs):
    a, b = zip(*pairs)
    want = ari(a, b)
    if np.isfinite(want):
        assert adjusted_rand_index(a, b) == pytest.approx(want, abs=1e-12)


# -- flows ---------------------------------------------------------------------------------

def corpus():
    flows = []
    for t in range(40):
        flows += [ef(t + 0.1, "u0", "a"), ef(t + 0.2, "u1", "a"), ef(t + 0.3, "u2", "b", "B2")]
        if t % 2:
            flows.append(ef(t + 0.4, "u3", "b", "B2"))
    flows.append(ef(5.5, "u0", "a", UNKNOWN))
    return flows


def test_traffic_matrix_counts_and_bytes():
    flows = corpus()
    jd = traffic_matrix(flows, "domain")
    assert jd.row_labels == ["u0", "u1", "u2", "u3"] and jd.col_labels == ["a", "b"]
    assert jd.p[0, 0] == pytest.approx(41 / len(flows))
    loc = traffic_matrix(flows, "location")
    assert loc.col_labels == ["B1", "B2"]
    assert loc.p.sum() == pytest.approx(1.0)
    assert traffic_matrix(flows, "domain", "bytes").p == pytest.approx(jd.p)
    with pytest.raises(AllZeroError):
        traffic_matrix([ef(0, "u", "a", UNKNOWN)], "location")
    with pytest.raises(ValueError):
        traffic_matrix(flows, "time")


def test_cell_series_pool_their_members():
    flows = corpus()
    cc = cocluster_flows(flows, "domain", 2, 2, n_init=3)
    cells = extract_cell_series(flows, cc, "domain")
    assert sum(cells.flow_counts.values()) == len(flows)
    assert len(cells.non_empty()) == 2
    r0 = cc.row_cluster_of()["u0"]
    c0 = cc.col_cluster_of()["a"]
    assert cc.row_cluster_of()["u1"] == r0
    assert cells.cells[(r0, c0)].total == 81
    assert set(cells.series()) == {f"{r},{c}" for r, c in cells.non_empty()}


def test_unassigned_user_is_an_error():
    flows = corpus()
    cc = cocluster_flows(flows, "domain", 2, 2)
    with pytest.raises(UnassignedEntityError):
        extract_cell_series(flows + [ef(3.0, "stranger", "a")], cc, "domain")


def test_best_fit_grid_marks_empty_cells():
    rng = np.random.default_rng(0)
    flows = [ef(t + rng.random(), "u0", "a") for t in range(300) for _ in range(rng.poisson(3))]
    flows += [ef(t + 0.5, "u1", "b") for t in range(0, 300, 7)]
    cc = cocluster_flows(flows, "domain", 2, 2)
    cells = extract_cell_series(flows, cc, "domain")
    models = fit_cells(cells)
    grid = best_fit_grid(cells, models)
    assert sum(v == "" for row in grid for v in row) == 2
    letters = [v for row in grid for v in row if v]
    assert len(letters) == 2 and all(len(v) == 1 for v in letters)
    assert best_fit_grid(cells, {})[cc.row_cluster_of()["u0"]][cc.col_cluster_of()["a"]] == "?"
