"""Discrete intonation codebooks.

Two sources of codes:

* k-means centroids over autoencoder phrase embeddings;
* VAMP mode centres, i.e. the encoder's posterior mean for each learned
  pseudo-input sequence.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimMismatch, FormatError, TooFewPoints, UnknownCode, WrongModelKind


class CodeSource(enum.Enum):
    KMEANS = "kmeans_centroid"
    VAMP = "vamp_mode"


@dataclass
class IntonationCode:
    id: int
    vector: np.ndarray
    source: CodeSource
    length: int | None = None  # pseudo-input frames (VAMP only)

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("code vector must be finite")


@dataclass
class Codebook:
    codes: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.codes:
            raise ValueError("empty codebook")
        dims = {c.vector.size for c in self.codes}
        if len(dims) != 1:
            raise DimMismatch("all code vectors must have the same dimension")
        if [c.id for c in self.codes] != list(range(len(self.codes))):
            raise ValueError("code ids must be 0..K-1 in order")

    @property
    def K(self) -> int:
        return len(self.codes)

    @property
    def latent_dim(self) -> int:
        return self.codes[0].vector.size

    @property
    def vectors(self) -> np.ndarray:
        return np.stack([c.vector for c in self.codes])

    def __getitem__(self, code_id) -> IntonationCode:
        if not isinstance(code_id, (int, np.integer)) or not 0 <= code_id < self.K:
            raise UnknownCode(f"no code {code_id!r} in a codebook of {self.K}")
        return self.codes[int(code_id)]

    def to_text(self) -> str:
        lines = ["# id\tsource\tlength\tvector"]
        for k in sorted(self.meta):
            lines.append(f"#meta {k}={self.meta[k]}")
        for c in self.codes:
            length = "-" if c.length is None else str(c.length)
            vec = " ".join(repr(float(v)) for v in c.vector)
            lines.append(f"{c.id}\t{c.source.value}\t{length}\t{vec}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str, path=None) -> "Codebook":
        codes, meta = [], {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if line.startswith("#meta "):
                k, _, v = line[6:].partition("=")
                meta[k] = v
                continue
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise FormatError("expected 4 tab-separated columns", path, lineno)
            try:
                codes.append(IntonationCode(int(cols[0]), np.array([float(v) for v in cols[3].split()]),
                                            CodeSource(cols[1]),
                                            None if cols[2] == "-" else int(cols[2])))
            except ValueError as exc:
                raise FormatError(str(exc), path, lineno) from None
        return cls(codes, meta)

    @classmethod
    def load(cls, path) -> "Codebook":
        with open(path) as fh:
            return cls.from_text(fh.read(), path)


def kmeans_objective(X, centroids, labels) -> float:
    return float(((X - centroids[labels]) ** 2).sum())


def kmeans_plusplus(X, K, rng):
    N = X.shape[0]
    centers = [int(rng.integers(N))]
    d2 = ((X - X[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(N))
        else:
            idx = int(rng.choice(N, p=d2 / total))
        centers.append(idx)
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[centers].copy()


def lloyd(X, centroids, max_iter=300, tol=1e-6):
    """Lloyd iterations; returns ``(centroids, labels, objective, history)``.

    A cluster that loses all its points is moved onto the point farthest from
    its current centroid.  ``history`` holds the objective after each
    assignment step and is asserted non-increasing.
    """
    C = centroids.copy()
    history = []
    labels = None
    for _ in range(max_iter):
        labels, d2 = kernels.nearest_centroid(X, C)
        obj = float(d2.sum())
        if history and obj > history[-1] * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"k-means objective increased: {history[-1]} -> {obj}")
        history.append(obj)
        newC = C.copy()
        for k in range(C.shape[0]):
            members = labels == k
            if members.any():
                newC[k] = X[members].mean(axis=0)
        for k in range(C.shape[0]):
            if not (labels == k).any():
                far = int(np.argmax(d2))
                newC[k] = X[far]
                labels[far] = k
                d2[far] = 0.0
        shift = float(np.sqrt(((newC - C) ** 2).sum(axis=1)).max())
        C = newC
        if shift < tol:
            break
    labels, d2 = kernels.nearest_centroid(X, C)
    return C, labels, float(d2.sum()), history


def kmeans_fit(embeddings, K: int = 20, seed: int = 0, n_init: int = 10,
               max_iter: int = 300, tol: float = 1e-6) -> Codebook:
    """k-means++ seeded Lloyd clustering; best of ``n_init`` seeded restarts."""
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2:
        raise DimMismatch("embeddings must be an (N, D) array")
    if X.shape[0] < K:
        raise TooFewPoints(f"{X.shape[0]} points for {K} clusters")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        C, labels, obj, _ = lloyd(X, kmeans_plusplus(X, K, rng), max_iter, tol)
        if best is None or obj < best[2]:
            best = (C, labels, obj)
    C, labels, obj = best
    codes = [IntonationCode(k, C[k], CodeSource.KMEANS) for k in range(K)]
    return Codebook(codes, {"objective": repr(obj), "n_points": str(X.shape[0])})


def assign(embedding, codebook: Codebook) -> int:
    """Nearest code by Euclidean distance; ties go to the lowest id."""
    e = np.asarray(embedding, dtype=np.float64).reshape(-1)
    if e.size != codebook.latent_dim:
        raise DimMismatch(f"embedding has {e.size} dims, codebook {codebook.latent_dim}")
    labels, _ = kernels.nearest_centroid(e[None], codebook.vectors)
    return int(labels[0])


def assign_all(embeddings, codebook: Codebook) -> np.ndarray:
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != codebook.latent_dim:
        raise DimMismatch("embeddings must be (N, latent_dim)")
    return kernels.nearest_centroid(X, codebook.vectors)[0]


def extract_vamp_codes(checkpoint) -> Codebook:
    """One code per pseudo-input: the encoder's posterior mean at its last frame."""
    model = getattr(checkpoint, "model", checkpoint)
    if getattr(model, "kind", None) != "vamp":
        raise WrongModelKind("codes can only be extracted from a vamp model")
    means, _ = model.prior_components()
    codes = [IntonationCode(k, means[k], CodeSource.VAMP, int(L))
             for k, L in enumerate(model.pseudo_lengths)]
    return Codebook(codes)


def cluster_purity(labels, truth) -> float:
    """Fraction of points whose cluster's majority label equals their own."""
    labels = list(labels)
    truth = list(truth)
    if len(labels) != len(truth) or not labels:
        raise ValueError("labels and truth must be equal-length and non-empty")
    total = 0
    for k in set(labels):
        members = [t for l, t in zip(labels, truth) if l == k]
        total += Counter(members).most_common(1)[0][1]
    return total / len(labels)
