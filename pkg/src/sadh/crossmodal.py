"""Several modalities hashed into one Hamming space through shared dictionaries.

Each modality gets its own network trained with the feature-network
objective against the same ``U``/``Q``. Networks never see each other's
gradients; the dictionaries are the only coupling.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import MultiLabelDataset, SplitSpec, batch_similarity
from .errors import DataError, DimensionError, RowCountMismatchError
from .image import ImageNetConfig, train_image
from .retrieval import RetrievalRun, encode, retrieve
from .semantic import SemanticDictionary


@dataclass(frozen=True, eq=False)
class BiModalDataset:
    modalities: tuple  # ((name, features), ...)
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        mods = tuple((str(n), np.asarray(f, dtype=np.float64)) for n, f in self.modalities)
        if not mods:
            raise DataError("need at least one modality")
        names = [n for n, _ in mods]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate modality names {names}")
        for name, feats in mods:
            if feats.ndim != 2 or feats.shape[0] != labels.shape[0]:
                raise RowCountMismatchError(
                    f"modality {name!r} has {feats.shape[0]} rows, labels have {labels.shape[0]}"
                )
        MultiLabelDataset(mods[0][1], labels)  # label validation
        object.__setattr__(self, "modalities", mods)
        object.__setattr__(self, "labels", labels.astype(np.int8))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.modalities]

    def features(self, name: str) -> np.ndarray:
        for n, f in self.modalities:
            if n == name:
                return f
        raise KeyError(name)

    def view(self, name: str) -> MultiLabelDataset:
        return MultiLabelDataset(self.features(name), self.labels)


def synthetic_text_modality(labels, vocab: int = 200, words_per_class: int = 20,
                            noise_words: int = 3, seed: int = 0) -> np.ndarray:
    """Sparse non-negative bag-of-words features driven by the labels.

    Each class owns ``words_per_class`` vocabulary entries; an item counts
    Poisson(2) occurrences of each word owned by any of its classes, plus
    ``noise_words`` random words with a single occurrence each.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    n, C = labels.shape
    owned = np.zeros((C, vocab), dtype=bool)
    for c in range(C):
        owned[c, rng.choice(vocab, size=words_per_class, replace=False)] = True
    mask = (labels.astype(np.int64) @ owned.astype(np.int64)) > 0
    counts = rng.poisson(2.0, size=(n, vocab)) * mask
    noise = np.zeros((n, vocab))
    cols = rng.integers(0, vocab, size=(n, noise_words))
    np.add.at(noise, (np.repeat(np.arange(n), noise_words), cols.ravel()), 1.0)
    feats = counts + noise
    # every row needs a non-zero entry so features never vanish entirely
    empty = feats.sum(axis=1) == 0
    feats[empty, rng.integers(0, vocab, size=int(empty.sum()))] = 1.0
    return np.log1p(feats)


def make_bimodal(dataset: MultiLabelDataset, vocab: int = 200, seed: int = 0,
                 names=("image", "text")) -> BiModalDataset:
    text = synthetic_text_modality(dataset.labels, vocab=vocab, seed=seed)
    return BiModalDataset(((names[0], dataset.features), (names[1], text)), dataset.labels)


def train_crossmodal(dataset: BiModalDataset, split: SplitSpec, d: SemanticDictionary,
                     cfgs: dict, histories: dict | None = None) -> dict:
    """Train one network per modality on the training split.

    ``cfgs`` maps modality name to :class:`ImageNetConfig`. Returns a dict of
    trained networks keyed by modality name.
    """
    nets = {}
    y = dataset.labels[split.train]
    for name in dataset.names:
        cfg = cfgs[name]
        hist = [] if histories is not None else None
        nets[name] = train_image(dataset.features(name)[split.train], y, d, cfg, hist)
        if histories is not None:
            histories[name] = hist
    return nets


def crossmodal_eval(nets: dict, dataset: BiModalDataset, split: SplitSpec,
                    cutoff: int | None = None, pairs=None) -> dict:
    """MAP for each (query modality, database modality) pair.

    By default every ordered pair of distinct modalities is evaluated,
    which for two modalities means both A->B and B->A.
    """
    names = dataset.names
    Ks = {n: net.K for n, net in nets.items()}
    if len(set(Ks.values())) != 1:
        raise DimensionError(f"code lengths differ across modalities: {Ks}")
    if pairs is None:
        pairs = [(a, b) for a in names for b in names if a != b]
    out: dict[tuple[str, str], RetrievalRun] = {}
    for qa, db_mod in pairs:
        db = encode(nets[db_mod], dataset.features(db_mod)[split.database],
                    labels=dataset.labels[split.database])
        q = encode(nets[qa], dataset.features(qa)[split.query])
        out[(qa, db_mod)] = retrieve(q.packed, dataset.labels[split.query], db, cutoff)
    return out


def random_ranking_map(query_labels, db_labels) -> float:
    """Expected MAP@ALL of a uniformly random ranking.

    For R relevant items among N, ``E[AP] = (H_N + (R-1)/(N-1) * (N - H_N)) / N``
    with ``H_N`` the N-th harmonic number; averaged over evaluable queries.
    """
    rel = batch_similarity(query_labels, db_labels)
    N = rel.shape[1]
    R = rel.sum(axis=1)
    R = R[R > 0]
    H_N = float(np.sum(1.0 / np.arange(1, N + 1)))
    if N == 1:
        return 1.0
    expected = (H_N + (R - 1) / (N - 1) * (N - H_N)) / N
    return float(expected.mean())


def per_modality_configs(base: ImageNetConfig, names) -> dict:
    return {n: replace(base) for n in names}
