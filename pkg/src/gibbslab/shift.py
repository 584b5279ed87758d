"""Finite words over a finite alphabet, cylinder indexing and sequence distances.

Words are plain tuples of ints (or 1-D integer arrays).  The index of a word
of length ``n`` over an alphabet of size ``q`` is its base-``q`` reading with
the first symbol most significant, so lexicographic order and index order
coincide and all words sharing a prefix occupy a contiguous index range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError

#: Separation index of two words that agree on the whole compared range.
INFINITY = math.inf

DEFAULT_THETA = 0.5


@dataclass(frozen=True)
class Alphabet:
    size: int

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise DomainError(f"alphabet size must be a positive integer, got {self.size!r}")

    def check(self, word):
        for s in word:
            if not 0 <= int(s) < self.size:
                raise DomainError(f"symbol {s!r} outside alphabet of size {self.size}")

    def n_words(self, n):
        return self.size**n


@dataclass(frozen=True)
class MetricParams:
    theta: float = DEFAULT_THETA

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise DomainError(f"theta must lie in (0, 1), got {self.theta!r}")


def _size(alphabet) -> int:
    return alphabet.size if isinstance(alphabet, Alphabet) else int(alphabet)


def word_index(w: Sequence[int], alphabet=2) -> int:
    """Base-|A| reading of ``w`` (first symbol most significant)."""
    q = _size(alphabet)
    idx = 0
    for s in w:
        s = int(s)
        if not 0 <= s < q:
            raise DomainError(f"symbol {s} outside alphabet of size {q}")
        idx = idx * q + s
    return idx


def index_word(i: int, n: int, alphabet=2) -> tuple:
    """Inverse of :func:`word_index` for words of length ``n``."""
    q = _size(alphabet)
    i = int(i)
    if n < 0 or not 0 <= i < q**n:
        raise DomainError(f"index {i} out of range for words of length {n} over {q} symbols")
    out = []
    for _ in range(n):
        i, s = divmod(i, q)
        out.append(s)
    return tuple(reversed(out))


def all_words(n: int, alphabet=2) -> np.ndarray:
    """Array of shape ``(|A|**n, n)`` listing A^n in index order."""
    q = _size(alphabet)
    idx = np.arange(q**n, dtype=np.int64)
    powers = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] // powers[None, :]) % q).astype(np.int64)


def words_to_indices(words: np.ndarray, alphabet=2) -> np.ndarray:
    """Row-wise :func:`word_index` for a 2-D integer array."""
    q = _size(alphabet)
    words = np.asarray(words, dtype=np.int64)
    n = words.shape[-1]
    powers = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return words @ powers


def window_indices(path, d: int, alphabet=2) -> np.ndarray:
    """Indices of all length-``d`` windows of ``path`` (last axis).

    For a path of length ``L`` the result has length ``L - d + 1`` along the
    last axis; entry ``j`` is the index of ``path[j:j+d]``.
    """
    q = _size(alphabet)
    path = np.asarray(path, dtype=np.int64)
    L = path.shape[-1]
    if d < 0 or d > L:
        raise DomainError(f"window length {d} incompatible with path length {L}")
    if d == 0:
        return np.zeros(path.shape[:-1] + (L + 1,), dtype=np.int64)
    out = np.zeros(path.shape[:-1] + (L - d + 1,), dtype=np.int64)
    for i in range(d):
        out = out * q + path[..., i : L - d + 1 + i]
    return out


def marginalize(masses: np.ndarray, depth: int, new_depth: int, alphabet=2) -> np.ndarray:
    """Push a measure on A^depth forward to its first ``new_depth`` symbols."""
    q = _size(alphabet)
    if not 0 <= new_depth <= depth:
        raise DomainError(f"cannot marginalize depth {depth} to {new_depth}")
    masses = np.asarray(masses, dtype=float)
    return masses.reshape(q**new_depth, q ** (depth - new_depth)).sum(axis=1)


def marginalize_suffix(masses: np.ndarray, depth: int, new_depth: int, alphabet=2) -> np.ndarray:
    """Push a measure on A^depth forward to its last ``new_depth`` symbols."""
    q = _size(alphabet)
    masses = np.asarray(masses, dtype=float)
    return masses.reshape(q ** (depth - new_depth), q**new_depth).sum(axis=0)


def separation_index(x: Sequence[int], y: Sequence[int]):
    """Smallest k with x^k != y^k, compared on the common prefix length.

    Returns :data:`INFINITY` when the words agree on the whole compared range.
    """
    for k, (a, b) in enumerate(zip(x, y)):
        if a != b:
            return k
    return INFINITY


def d_theta(x, y, p: MetricParams | float = DEFAULT_THETA) -> float:
    theta = p.theta if isinstance(p, MetricParams) else MetricParams(p).theta
    k = separation_index(x, y)
    return 0.0 if k == INFINITY else theta**k


def d_phi(x, y, W) -> float:
    """Distance W_p at separation p, where ``W`` is a positive non-increasing profile.

    ``W`` may be a VariationProfile, a callable ``p -> W_p`` or a sequence.
    """
    k = separation_index(x, y)
    if k == INFINITY:
        return 0.0
    values = _profile_values(W, k + 1)
    if np.any(values <= 0) or np.any(np.diff(values) > 0):
        raise ConfigError("W profile must be strictly positive and non-increasing")
    return float(values[k])


def _profile_values(W, n) -> np.ndarray:
    if hasattr(W, "walters"):
        return np.array([W.walters(p) for p in range(n)], dtype=float)
    if callable(W):
        return np.array([W(p) for p in range(n)], dtype=float)
    W = np.asarray(W, dtype=float)
    if len(W) < n:
        raise ConfigError(f"W profile has {len(W)} entries, need {n}")
    return W[:n]


def hamming_n(x, y) -> int:
    if len(x) != len(y):
        raise DomainError(f"Hamming distance needs equal lengths, got {len(x)} and {len(y)}")
    return int(sum(a != b for a, b in zip(x, y)))


def hamming_matrix(n: int, alphabet=2) -> np.ndarray:
    """Pairwise Hamming distances on A^n in index order."""
    W = all_words(n, alphabet)
    return (W[:, None, :] != W[None, :, :]).sum(axis=2).astype(float)


def d_theta_matrix(m: int, theta: float = DEFAULT_THETA, alphabet=2) -> np.ndarray:
    """Pairwise d_theta between the depth-m cylinders, as words of length m."""
    W = all_words(m, alphabet)
    neq = W[:, None, :] != W[None, :, :]
    first = np.where(neq.any(axis=2), neq.argmax(axis=2), -1)
    return np.where(first >= 0, theta ** np.maximum(first, 0), 0.0)
