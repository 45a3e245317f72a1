import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sadh.data import (
    MultiLabelDataset,
    batch_similarity,
    generate_synthetic,
    load_dataset,
    make_split,
    pairwise_similarity,
    save_dataset,
)
from sadh.errors import (
    DataError,
    EmptyLabelError,
    InsufficientItemsError,
    LabelValueError,
    MalformedRowError,
    RowCountMismatchError,
)


@pytest.mark.parametrize("a,b,want", [([1, 0, 1], [0, 0, 1], 1), ([1, 0, 0], [0, 1, 0], 0), ([1, 1], [1, 1], 1)])
def test_pairwise_similarity(a, b, want):
    assert pairwise_similarity(a, b) == want


def test_batch_similarity_examples():
    np.testing.assert_array_equal(batch_similarity([[1, 0], [0, 1]], [[1, 0], [0, 1]]), np.eye(2))
    np.testing.assert_array_equal(batch_similarity([[1, 0, 1]], [[0, 1, 0], [0, 0, 1]]), [[0, 1]])
    with pytest.raises(EmptyLabelError):
        batch_similarity([[1, 1]], [[1, 0], [0, 1], [0, 0]])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 12), C=st.integers(2, 6))
def test_batch_similarity_symmetric_unit_diagonal(seed, n, C):
    rng = np.random.default_rng(seed)
    L = (rng.random((n, C)) < 0.4).astype(int)
    L[np.arange(n), rng.integers(0, C, n)] = 1
    S = batch_similarity(L, L)
    np.testing.assert_array_equal(S, S.T)
    np.testing.assert_array_equal(np.diag(S), 1)
    for i in range(n):
        for j in range(n):
            assert S[i, j] == pairwise_similarity(L[i], L[j])


def test_generate_single_label():
    ds = generate_synthetic(100, 4, 32, 0.0, 0.1, 7)
    assert len(ds) == 400 and ds.dim == 32
    assert (ds.labels.sum(axis=1) == 1).all()
    np.testing.assert_array_equal(ds.labels.sum(axis=0), [100] * 4)


def test_generate_deterministic():
    a = generate_synthetic(100, 4, 32, 0.0, 0.1, 7)
    b = generate_synthetic(100, 4, 32, 0.0, 0.1, 7)
    assert a == b
    assert a != generate_synthetic(100, 4, 32, 0.0, 0.1, 8)


def test_generate_multi_label_rows_nonempty():
    ds = generate_synthetic(50, 3, 16, 0.5, 0.1, 1)
    assert (ds.labels.sum(axis=1) >= 1).all()
    assert (ds.labels.sum(axis=1) > 1).any()


def test_dataset_is_read_only():
    ds = generate_synthetic(5, 2, 3, 0.0, 0.1, 0)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


def test_dataset_validation():
    with pytest.raises(RowCountMismatchError):
        MultiLabelDataset(np.zeros((3, 2)), np.eye(2, dtype=int))
    with pytest.raises(EmptyLabelError):
        MultiLabelDataset(np.zeros((2, 2)), [[1, 0], [0, 0]])
    with pytest.raises(LabelValueError):
        MultiLabelDataset(np.zeros((2, 2)), [[1, 0], [0, 2]])


def test_split_protocol():
    ds = generate_synthetic(550, 4, 32, 0.0, 0.1, 7)
    sp = make_split(ds, 50, 100, seed=0)
    assert sp.query.size == 200 and sp.train.size == 400 and sp.database.size == 2000
    assert not set(sp.query) & set(sp.database)
    assert set(sp.train) <= set(sp.database)
    np.testing.assert_array_equal(ds.labels[sp.query].sum(axis=0), [50] * 4)
    sp2 = make_split(ds, 50, 100, seed=0)
    for a, b in zip((sp.query, sp.train, sp.database), (sp2.query, sp2.train, sp2.database)):
        np.testing.assert_array_equal(a, b)


def test_split_cifar_style_counts():
    ds = generate_synthetic(700, 10, 8, 0.0, 0.1, 0)
    sp = make_split(ds, 100, 500, seed=1)
    assert sp.query.size == 1000 and sp.train.size == 5000 and sp.database.size == 6000


def test_split_zero_queries_and_disjoint_train():
    ds = generate_synthetic(20, 2, 4, 0.0, 0.1, 0)
    sp = make_split(ds, 0, 5, seed=0)
    assert sp.query.size == 0 and sp.database.size == 40
    sp = make_split(ds, 2, 5, seed=0, train_in_database=False)
    assert not set(sp.train) & set(sp.database)
    assert sp.database.size == 40 - 4 - 10


def test_split_insufficient():
    ds = generate_synthetic(5, 2, 4, 0.0, 0.1, 0)
    with pytest.raises(InsufficientItemsError):
        make_split(ds, 3, 3)


def test_csv_round_trip(tmp_path):
    ds = generate_synthetic(10, 3, 5, 0.4, 0.3, 2)
    f, lab = save_dataset(ds, tmp_path)
    assert load_dataset(f, lab) == ds


def test_csv_headerless(tmp_path):
    (tmp_path / "f.csv").write_text("0.5,1\n2,3\n")
    (tmp_path / "l.csv").write_text("1,0\n0,1\n")
    ds = load_dataset(tmp_path / "f.csv", tmp_path / "l.csv")
    np.testing.assert_array_equal(ds.features, [[0.5, 1], [2, 3]])


def test_csv_bad_label_value(tmp_path):
    (tmp_path / "f.csv").write_text("1,2\n3,4\n")
    (tmp_path / "l.csv").write_text("c0,c1\n1,0\n0,2\n")
    with pytest.raises(LabelValueError, match="row 1, column 1"):
        load_dataset(tmp_path / "f.csv", tmp_path / "l.csv")


def test_csv_row_mismatch(tmp_path):
    (tmp_path / "f.csv").write_text("1,2\n3,4\n5,6\n")
    (tmp_path / "l.csv").write_text("1,0\n0,1\n")
    with pytest.raises(RowCountMismatchError):
        load_dataset(tmp_path / "f.csv", tmp_path / "l.csv")


def test_csv_malformed(tmp_path):
    (tmp_path / "f.csv").write_text("1,2\n3,x\n")
    (tmp_path / "l.csv").write_text("1,0\n0,1\n")
    with pytest.raises(MalformedRowError):
        load_dataset(tmp_path / "f.csv", tmp_path / "l.csv")
    (tmp_path / "f.csv").write_text("1,2\n3\n")
    with pytest.raises(MalformedRowError):
        load_dataset(tmp_path / "f.csv", tmp_path / "l.csv")


def test_csv_empty_label_row(tmp_path):
    (tmp_path / "f.csv").write_text("1,2\n3,4\n")
    (tmp_path / "l.csv").write_text("1,0\n0,0\n")
    with pytest.raises(EmptyLabelError):
        load_dataset(tmp_path / "f.csv", tmp_path / "l.csv")


def test_load_does_not_touch_files(tmp_path):
    ds = generate_synthetic(4, 2, 3, 0.0, 0.1, 0)
    paths = save_dataset(ds, tmp_path)
    before = [hashlib.sha256(p.read_bytes()).hexdigest() for p in paths]
    load_dataset(*paths)
    assert before == [hashlib.sha256(p.read_bytes()).hexdigest() for p in paths]


def test_empty_batch_similarity():
    with pytest.raises(DataError):
        batch_similarity(np.zeros((0, 2)), [[1, 0]])
