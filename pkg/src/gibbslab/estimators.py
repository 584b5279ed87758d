"""Trajectory statistics: Birkhoff sums, block frequencies, hitting times,
shadowing scores, empirical block measures, asymptotic variance and the
log-averaged (almost-sure CLT) empirical law.

Estimators accept single paths (1-D integer arrays or :class:`Trajectory`)
and, where Monte Carlo loops need it, batches of paths as 2-D arrays.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EstimationFailure
from .markov import MarkovModel, PathStream, Trajectory
from .shift import DEFAULT_THETA, all_words, window_indices, word_index
from .transfer import GFunction, SpectralData, _lift

HITTING_CAP = 10**9


def _symbols(x) -> np.ndarray:
    return np.asarray(x.symbols if isinstance(x, Trajectory) else x, dtype=np.int64)


# --------------------------------------------------------------------------
# observables


@dataclass(frozen=True, eq=False)
class ObservableSpec:
    """Function of the first ``depth`` symbols, stored as a table over A^depth."""

    depth: int
    table: np.ndarray
    alphabet: int = 2
    theta: float = DEFAULT_THETA
    label: str = ""

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float).reshape(-1)
        if len(t) != self.alphabet**self.depth:
            raise DomainError(f"table needs {self.alphabet ** self.depth} entries, got {len(t)}")
        if not np.all(np.isfinite(t)):
            raise DomainError("observable table must be finite")
        object.__setattr__(self, "table", t)

    @property
    def lip(self) -> float:
        """max_n var_n(f) / theta^n over n < depth (d_theta Lipschitz constant)."""
        q, best = self.alphabet, 0.0
        for n in range(self.depth):
            spread = np.ptp(self.table.reshape(q**n, -1), axis=1).max()
            best = max(best, spread / self.theta**n)
        return float(best)

    def windows(self, x) -> np.ndarray:
        """f evaluated at every shift of x that still has ``depth`` symbols."""
        return self.table[window_indices(x, self.depth, self.alphabet)]

    def mean(self, masses) -> float:
        masses = np.asarray(masses, dtype=float)
        reps = len(masses) // len(self.table)
        if reps * len(self.table) != len(masses):
            raise DomainError("measure depth smaller than observable depth")
        return float(masses @ np.repeat(self.table, reps))

    def shifted(self, c: float) -> "ObservableSpec":
        return ObservableSpec(self.depth, self.table + c, self.alphabet, self.theta, self.label)

    def scaled(self, c: float) -> "ObservableSpec":
        return ObservableSpec(self.depth, self.table * c, self.alphabet, self.theta, self.label)


def indicator(word, alphabet=2, theta=DEFAULT_THETA) -> ObservableSpec:
    """1_[w] as an observable of depth len(w)."""
    word = tuple(int(s) for s in word)
    t = np.zeros(alphabet ** len(word))
    t[word_index(word, alphabet)] = 1.0
    return ObservableSpec(len(word), t, alphabet, theta, label="1[" + "".join(map(str, word)) + "]")


def observable(depth, fn, alphabet=2, theta=DEFAULT_THETA, label="") -> ObservableSpec:
    """Tabulate ``fn(word_tuple)`` over A^depth."""
    t = np.array([fn(tuple(w)) for w in all_words(depth, alphabet).tolist()], dtype=float)
    return ObservableSpec(depth, t, alphabet, theta, label)


# --------------------------------------------------------------------------
# Birkhoff sums and block frequencies


def birkhoff_sum(f: ObservableSpec, x, n: int) -> float:
    """sum_{j<n} f(x^{j..j+d-1}); needs n + d - 1 symbols."""
    x = _symbols(x)
    if n < 0 or n + f.depth - 1 > len(x):
        raise DomainError(f"Birkhoff sum of length {n} needs {n + f.depth - 1} symbols, path has {len(x)}")
    if n == 0:
        return 0.0
    return float(f.windows(x[: n + f.depth - 1]).sum())


def birkhoff_sums(f: ObservableSpec, paths, n: int) -> np.ndarray:
    """Row-wise Birkhoff sums for a (count, L) batch."""
    paths = np.atleast_2d(np.asarray(paths, dtype=np.int64))
    if n + f.depth - 1 > paths.shape[1]:
        raise DomainError("paths too short for the requested Birkhoff sum")
    return f.windows(paths[:, : n + f.depth - 1]).sum(axis=1)


def block_counts(x, k: int, n: int, alphabet=2) -> np.ndarray:
    """Occurrences of every k-block at positions 0..n-k of x."""
    x = _symbols(x)
    if k > n or n > x.shape[-1]:
        raise DomainError(f"need k <= n <= len(x), got k={k}, n={n}, len={x.shape[-1]}")
    idx = window_indices(x[..., :n], k, alphabet)
    if idx.ndim == 1:
        return np.bincount(idx, minlength=alphabet**k)
    offs = np.arange(idx.shape[0])[:, None] * alphabet**k
    return np.bincount((idx + offs).ravel(), minlength=idx.shape[0] * alphabet**k).reshape(idx.shape[0], -1)


def block_frequency(x, w, n: int, alphabet=2) -> float:
    """Empirical frequency of block w among the n-len(w)+1 windows of x^{0..n-1}."""
    w = tuple(int(s) for s in w)
    k = len(w)
    if k > n:
        raise DomainError(f"block of length {k} longer than n={n}")
    counts = block_counts(x, k, n, alphabet)
    return float(counts[word_index(w, alphabet)] / (n - k + 1))


def max_block_deviation(x, S: SpectralData, k: int, n: int) -> float | np.ndarray:
    """max_w |freq_n(x, w) - mu[w]| over w in A^k (row-wise for a batch)."""
    if k > S.depth:
        raise DomainError(f"block length {k} exceeds truncation depth {S.depth}")
    counts = block_counts(x, k, n, S.alphabet)
    dev = np.abs(counts / (n - k + 1) - S.marginal(k))
    return float(dev.max()) if dev.ndim == 1 else dev.max(axis=-1)


# --------------------------------------------------------------------------
# hitting times


def _first_match(buf: np.ndarray, code: int, n: int, q: int, start: int):
    if len(buf) - start < n:
        return None
    hits = np.flatnonzero(window_indices(buf[start:], n, q) == code)
    return int(hits[0]) + start if len(hits) else None


def first_hit(w, y, alphabet=2):
    """Smallest j >= 1 with y^{j..j+n-1} = w inside the finite path y, else None."""
    w = tuple(int(s) for s in w)
    y = _symbols(y)
    return _first_match(y, word_index(w, alphabet), len(w), alphabet, 1)


def hitting_time(w, model: MarkovModel, seed=None, cap: int = HITTING_CAP, rng=None) -> int:
    """Hitting time of w by a lazily extended stationary path; ``cap`` if not found."""
    w = tuple(int(s) for s in w)
    n, q = len(w), model.alphabet
    if n < 1:
        raise DomainError("hitting time needs a non-empty word")
    if q == 1:
        return 1
    code = word_index(w, q)
    stream = PathStream(model, seed=seed, rng=rng)
    buf = stream.next(max(4096, 4 * n))
    offset, start, chunk = 0, 1, 4096
    while True:
        j = _first_match(buf, code, n, q, start)
        if j is not None:
            return min(offset + j, cap)
        if offset + len(buf) - n + 1 > cap:
            return cap
        keep = buf[-(n - 1):] if n > 1 else buf[:0]
        offset += len(buf) - len(keep)
        chunk = min(chunk * 2, 1 << 20)
        buf = np.concatenate([keep, stream.next(chunk)])
        start = 0


@dataclass(frozen=True)
class HittingEstimate:
    n: int
    trials: int
    median: float
    iqr: float
    censored: int
    values: np.ndarray = field(repr=False)

    def row(self):
        return {"n": self.n, "trials": self.trials, "median": self.median, "iqr": self.iqr, "censored": self.censored}


def entropy_from_hitting(model: MarkovModel, n: int, trials: int, seed: int = 0, cap: int = HITTING_CAP) -> HittingEstimate:
    """Median and IQR of (1/n) log T_{x^{0,n-1}}(y) over independent (x, y) pairs."""
    if trials < 30:
        raise DomainError("entropy_from_hitting needs at least 30 trials")
    root = np.random.SeedSequence(seed)
    vals, censored = [], 0
    for child in root.spawn(trials):
        rx, ry = (np.random.default_rng(s) for s in child.spawn(2))
        x = PathStream(model, rng=rx).next(n)
        T = hitting_time(x, model, cap=cap, rng=ry)
        if T >= cap:
            censored += 1
        else:
            vals.append(math.log(T) / n)
    if not vals:
        raise EstimationFailure(f"all {trials} hitting-time trials reached the cap {cap}")
    v = np.array(vals)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return HittingEstimate(n, trials, float(med), float(q3 - q1), censored, v)


# --------------------------------------------------------------------------
# shadowing


def _shadow_single(x, a, n, theta):
    k = len(a)
    if k > n:
        raise DomainError(f"cylinder length {k} exceeds n={n}")
    x = np.asarray(x, dtype=np.int64)
    if x.shape[-1] < k:
        raise DomainError("path shorter than the cylinder")
    mism = x[..., :k] != np.asarray(a, dtype=np.int64)
    # distance from j to the next mismatch at or after j (inf if none)
    pos = np.arange(k)
    nxt = np.where(mism, pos, k)
    nxt = np.flip(np.minimum.accumulate(np.flip(nxt, axis=-1), axis=-1), axis=-1)
    delta = nxt - pos
    terms = np.where(nxt < k, float(theta) ** delta, 0.0)
    return terms.sum(axis=-1) / n


def shadowing_score(x, a, n: int, theta: float = DEFAULT_THETA):
    """(1/n) inf_{y in A} sum_{j<n} d_theta(T^j x, T^j y) for A a cylinder or a union of cylinders.

    ``a`` is a word, or a list of words for a finite union (minimum over
    components).  Accepts a single path or a (count, L) batch.
    """
    x = _symbols(x)
    if len(a) and isinstance(a[0], (tuple, list, np.ndarray)):
        return np.minimum.reduce([np.asarray(_shadow_single(x, c, n, theta)) for c in a]) if x.ndim > 1 else min(
            float(_shadow_single(x, c, n, theta)) for c in a
        )
    out = _shadow_single(x, tuple(a), n, theta)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# empirical measures


def empirical_block_measure(x, m: int, n: int, alphabet=2) -> np.ndarray:
    """m-block projection of E_n(x) = (1/n) sum_{j<n} delta_{T^j x}.

    Uses the n windows starting at j < n when the path has n + m - 1
    symbols; otherwise the windows contained in x^{0..n-1}.
    """
    x = _symbols(x)
    if n < m:
        raise DomainError(f"n={n} smaller than block length {m}")
    L = min(x.shape[-1], n + m - 1)
    if L < m:
        raise DomainError("path shorter than block length")
    idx = window_indices(x[..., :L], m, alphabet)
    if idx.ndim == 1:
        c = np.bincount(idx, minlength=alphabet**m)
        return c / c.sum()
    offs = np.arange(idx.shape[0])[:, None] * alphabet**m
    c = np.bincount((idx + offs).ravel(), minlength=idx.shape[0] * alphabet**m).reshape(idx.shape[0], -1)
    return c / c.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------
# asymptotic variance


@dataclass(frozen=True)
class SigmaSquared:
    value: float
    last_term: float
    terms: int
    slow_mixing: bool


def sigma_squared(f: ObservableSpec, S: SpectralData, G: GFunction, i_max: int = 200, tol: float = 1e-12) -> SigmaSquared:
    """Green-Kubo sum int f_c^2 dmu + 2 sum_{i>=1} int (P~^i f_c) f_c dmu, truncated at i_max."""
    if f.depth > S.depth:
        raise DomainError(f"observable depth {f.depth} exceeds truncation depth {S.depth}")
    fk = _lift(f.table, S.depth, S.alphabet)
    mu = S.mu
    fc = fk - mu @ fk
    total = float(mu @ (fc * fc))
    g = fc
    last = 0.0
    for i in range(1, i_max + 1):
        g = G.apply(g)
        last = float(mu @ (g * fc))
        total += 2 * last
        if abs(last) < tol * 1e-3:
            break
    return SigmaSquared(max(total, 0.0) if total > -tol else total, abs(last), i, abs(last) > tol)


# --------------------------------------------------------------------------
# almost-sure CLT


@dataclass(frozen=True, eq=False)
class ASCLTState:
    """Atoms S_n f / sqrt(n), n = 1..N, with weights 1/(n L_N)."""

    N: int
    L_N: float
    atoms: np.ndarray
    partial: float = 0.0

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / (np.arange(1, self.N + 1) * self.L_N)

    @staticmethod
    def empty():
        return ASCLTState(0, 0.0, np.empty(0), 0.0)


def asclt_update(state: ASCLTState | None, f: ObservableSpec, x, N: int) -> ASCLTState:
    """Extend the log-averaged empirical law A_N to N atoms along x."""
    state = state or ASCLTState.empty()
    x = _symbols(x)
    if N < state.N:
        raise DomainError("ASCLT state can only grow")
    if N + f.depth - 1 > len(x):
        raise DomainError(f"ASCLT to N={N} needs {N + f.depth - 1} symbols")
    vals = f.windows(x[state.N : N + f.depth - 1])
    sums = state.partial + np.cumsum(vals)
    n = np.arange(state.N + 1, N + 1)
    atoms = np.concatenate([state.atoms, sums / np.sqrt(n)])
    L = float(np.sum(1.0 / np.arange(1, N + 1)))
    return ASCLTState(N, L, atoms, float(sums[-1]) if len(sums) else state.partial)


# --------------------------------------------------------------------------
# CSV rows


ROW_FIELDS = ("estimator", "params", "seed", "value")


def estimator_row(estimator: str, params: dict, seed, value) -> dict:
    p = ";".join(f"{k}={params[k]}" for k in sorted(params))
    return {"estimator": estimator, "params": p, "seed": seed, "value": repr(float(value))}


def write_rows(rows, fh):
    w = csv.DictWriter(fh, fieldnames=ROW_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
