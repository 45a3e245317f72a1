import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from sadh.errors import DataError, DimensionError
from sadh.nn import MlpNetwork
from sadh.retrieval import (
    CodeDatabase,
    average_precision,
    encode,
    pr_curve_from,
    rank,
    retrieve,
    topk_from,
    write_metrics,
)


def random_instance(rng, n_db, n_q, K, C=3):
    def labels(n):
        L = (rng.random((n, C)) < 0.3).astype(int)
        L[np.arange(n), rng.integers(0, C, n)] = 1
        return L

    db_codes = rng.choice([-1, 1], size=(n_db, K))
    q_codes = rng.choice([-1, 1], size=(n_q, K))
    ids = rng.permutation(n_db) + 100
    return q_codes, labels(n_q), db_codes, labels(n_db), ids


def test_ap_hand_example():
    assert average_precision([1, 0, 1, 0]) == pytest.approx((1 + 2 / 3) / 2, abs=1e-15)
    assert average_precision([1, 1, 1]) == 1.0
    assert average_precision([0, 0]) == 0.0
    assert average_precision([0, 1, 1], cutoff=2) == 0.5


def test_map_two_queries():
    db = CodeDatabase.from_codes([[1, 1], [-1, -1]], labels=[[1, 0], [0, 1]])
    # query 0 ranks its relevant item first (AP 1); query 1 ranks it second (AP 0.5)
    run = retrieve([[1, 1], [1, 1]], [[1, 0], [0, 1]], db)
    np.testing.assert_allclose(run.ap, [1.0, 0.5])
    assert run.map == 0.75


def test_cutoff_all_equals_db_size():
    rng = np.random.default_rng(0)
    q, ql, dbc, dbl, ids = random_instance(rng, 15, 4, 8)
    db = CodeDatabase.from_codes(dbc, ids, dbl)
    assert retrieve(q, ql, db).map == retrieve(q, ql, db, cutoff=15).map
    with pytest.raises(DataError):
        retrieve(q, ql, db, cutoff=16)


def test_rank_examples():
    db = CodeDatabase.from_codes([[1, 1, 1, 1], [-1, -1, 1, 1], [-1, 1, 1, 1]], ids=[0, 1, 2])
    assert rank([1, 1, 1, 1], db).tolist() == [0, 2, 1]
    same = CodeDatabase.from_codes(np.ones((4, 4)), ids=[7, 3, 9, 1])
    assert rank(np.ones(4), same).tolist() == [1, 3, 7, 9]


def test_rank_is_permutation():
    rng = np.random.default_rng(1)
    codes = rng.choice([-1, 1], size=(50, 16))
    db = CodeDatabase.from_codes(codes, ids=rng.permutation(50))
    r = rank(codes[3], db)
    assert sorted(r.tolist()) == sorted(db.ids.tolist())
    assert r[0] == db.ids[3] or (codes == codes[3]).all(1).sum() > 1
    np.testing.assert_array_equal(r, rank(codes[3], db))


def test_query_width_checked():
    db = CodeDatabase.from_codes(np.ones((2, 8)))
    with pytest.raises(DimensionError):
        rank(np.ones(6), db)


def test_encode_properties():
    net = MlpNetwork([5, 6], 16, 3, seed=0)
    x = np.random.default_rng(0).normal(size=(10, 5))
    a, b = encode(net, x), encode(net, x)
    assert a == b and a.K == 16 and a.packed.shape == (10, 2)
    net.params["hash.W"][:] = 0
    net.params["hash.b"][:] = 0
    assert (np.unpackbits(encode(net, x).packed, axis=1) == 1).all()


def test_perfect_ranking_pr():
    db = CodeDatabase.from_codes([[1, 1, 1], [1, 1, -1], [-1, -1, -1], [-1, -1, 1]],
                                 labels=[[1, 0], [1, 0], [0, 1], [0, 1]])
    run = retrieve([[1, 1, 1]], [[1, 0]], db)
    radius = pr_curve_from(run, "radius")
    assert all(prec == 1.0 for rec, prec in radius if rec < 1.0)
    assert radius[-1][0] == 1.0  # radius K retrieves everything
    ranked = pr_curve_from(run, "rank")
    assert [p for _, p in ranked[:2]] == [1.0, 1.0] and ranked[1][0] == 1.0


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**31), n_db=st.integers(1, 20), n_q=st.integers(1, 5), K=st.integers(1, 12))
def test_metrics_equal_brute_force(seed, n_db, n_q, K):
    rng = np.random.default_rng(seed)
    q, ql, dbc, dbl, ids = random_instance(rng, n_db, n_q, K)
    db = CodeDatabase.from_codes(dbc, ids, dbl)
    evaluable = any(oracles.similar(a, b) for a in ql for b in dbl)
    if not evaluable:
        with pytest.raises(DataError):
            retrieve(q, ql, db)
        return
    cutoff = int(rng.integers(1, n_db + 1)) if rng.random() < 0.5 else None
    run = retrieve(q, ql, db, cutoff)
    grid = [1, 2, 5, 50]
    m, radius, rankpts, topk = oracles.evaluate(q, ql, dbc, dbl, ids.tolist(), K, cutoff, grid)
    assert abs(run.map - m) <= 1e-12
    got_r = pr_curve_from(run, "radius")
    assert len(got_r) == len(radius)
    for (a, b), (c, d) in zip(got_r, radius):
        assert abs(a - c) <= 1e-12 and abs(b - d) <= 1e-12
    for (a, b), (c, d) in zip(pr_curve_from(run, "rank"), rankpts):
        assert abs(a - c) <= 1e-12 and abs(b - d) <= 1e-12
    for k, p in topk_from(run, grid):
        assert abs(p - topk[k]) <= 1e-12
    for qi in range(n_q):
        want = [ids[p] for p in oracles.ranking(q[qi], dbc, ids.tolist())]
        assert run.rankings[qi].tolist() == want


def test_topk_random_codes_monte_carlo():
    # relevance independent of codes: precision@k ~ p with sd sqrt(p(1-p)/(k*n_q))
    rng = np.random.default_rng(7)
    n, p, nq, k = 4000, 0.3, 200, 500
    lab = np.where(rng.random(n) < p, 0, 1)
    dbl = np.eye(2, dtype=int)[lab]
    db = CodeDatabase.from_codes(rng.choice([-1, 1], size=(n, 32)), labels=dbl)
    run = retrieve(rng.choice([-1, 1], size=(nq, 32)), np.tile([1, 0], (nq, 1)), db)
    (_, got), = topk_from(run, [k])
    p_hat = (lab == 0).mean()
    # finite population: k items drawn without replacement; the bound ignores the correction
    sd = np.sqrt(p_hat * (1 - p_hat) / (k * nq))
    assert abs(got - p_hat) <= 3 * sd


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_far_irrelevant_item_keeps_ap(seed):
    rng = np.random.default_rng(seed)
    K = 8
    q, ql, dbc, dbl, ids = random_instance(rng, 12, 1, K, C=2)
    if not any(oracles.similar(ql[0], b) for b in dbl):
        return
    db = CodeDatabase.from_codes(dbc, ids, dbl)
    far_label = 1 - ql[0]
    if far_label.sum() == 0:
        return
    db2 = CodeDatabase.from_codes(np.vstack([dbc, -q[0]]), np.append(ids, 10**6), np.vstack([dbl, far_label]))
    r1, r2 = retrieve(q, ql, db), retrieve(q, ql, db2)
    pos = int(np.flatnonzero(r2.rankings[0] == 10**6)[0])
    for cutoff in range(1, pos + 1):
        assert retrieve(q, ql, db, cutoff).map == retrieve(q, ql, db2, cutoff).map
    assert r1.map == r2.map  # trailing irrelevant items never change AP at ALL


def test_zero_relevant_queries_excluded():
    db = CodeDatabase.from_codes([[1, 1], [-1, 1]], labels=[[1, 0, 0], [1, 0, 0]])
    run = retrieve([[1, 1], [1, 1]], [[1, 0, 0], [0, 0, 1]], db)
    assert run.n_skipped == 1 and run.map == 1.0


def test_write_metrics_files(tmp_path):
    rng = np.random.default_rng(0)
    q, ql, dbc, dbl, ids = random_instance(rng, 20, 5, 8)
    run = retrieve(q, ql, CodeDatabase.from_codes(dbc, ids, dbl))
    s = write_metrics(run, tmp_path, [1, 5, 10])
    assert s["cutoff"] == "ALL" and s["K"] == 8
    assert (tmp_path / "pr_curve.csv").read_text().startswith("point,recall,precision")
    assert (tmp_path / "topk.csv").read_text().splitlines()[0] == "k,precision"
