"""Cylinder-truncated Ruelle transfer operator and its dominant eigendata.

At depth k the operator acts on functions of the first k symbols:

    (P f)(w) = sum_a exp(phi(a.w)) f(prefix_k(a.w))

where ``phi(a.w)`` is the potential evaluated on the (k+1)-word ``a.w``.
Rows are stored densely as ``weights[w, a]`` together with the source index
``source[w, a] = index(prefix_k(a.w))``, so the matrix has exactly |A|
nonzero entries per row.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NumericError, ResourceError
from .potentials import PotentialSpec, eval_cylinder
from .shift import DEFAULT_THETA, all_words, marginalize, window_indices

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 2**22


def default_depth(alphabet: int, budget: int = 2**20) -> int:
    """Largest k with |A|^(k+1) <= budget."""
    k = 1
    while alphabet ** (k + 2) <= budget:
        k += 1
    return k


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    depth: int
    alphabet: int
    weights: np.ndarray  # (|A|^k, |A|), exp(phi(a.w))
    source: np.ndarray  # (|A|^k, |A|), index of prefix_k(a.w)
    log_weights: np.ndarray

    @property
    def n_states(self):
        return self.alphabet**self.depth

    def apply(self, f):
        """(P f)(w)."""
        return (self.weights * f[self.source]).sum(axis=1)

    def apply_adjoint(self, nu):
        """(P* nu)(v) = sum over (w, a) with source v of weights[w, a] nu[w]."""
        return np.bincount(
            self.source.ravel(), weights=(self.weights * nu[:, None]).ravel(), minlength=self.n_states
        )

    def dense(self):
        M = np.zeros((self.n_states, self.n_states))
        rows = np.repeat(np.arange(self.n_states), self.alphabet)
        np.add.at(M, (rows, self.source.ravel()), self.weights.ravel())
        return M


def extension_words(k: int, alphabet: int) -> np.ndarray:
    """Words a.w of length k+1 laid out as ``[w, a]`` -> row ``w * |A| + a``."""
    W = all_words(k, alphabet)
    q = alphabet
    a = np.tile(np.arange(q), len(W))
    return np.column_stack([a, np.repeat(W, q, axis=0)])


def build_transfer(phi: PotentialSpec, k: int, budget: int = DEFAULT_BUDGET) -> TransferMatrix:
    if k < 1:
        raise DomainError(f"truncation depth must be >= 1, got {k}")
    q = phi.alphabet
    size = q ** (k + 1)
    if size > budget:
        raise ResourceError(f"depth {k} needs {size} weights, budget is {budget}", required=size)
    logw = phi.evaluate(extension_words(k, q)).reshape(q**k, q)
    w_idx = np.arange(q**k)
    source = np.arange(q)[None, :] * q ** (k - 1) + (w_idx // q)[:, None]
    return TransferMatrix(k, q, np.exp(logw), source, logw)


@dataclass(frozen=True, eq=False)
class SpectralData:
    depth: int
    alphabet: int
    lam: float
    h: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    residual: float
    iterations: int

    @property
    def pressure(self):
        return math.log(self.lam)

    def marginal(self, n: int) -> np.ndarray:
        """Equilibrium masses of the n-cylinders (n <= depth)."""
        if n > self.depth:
            raise DomainError(f"marginal depth {n} exceeds truncation depth {self.depth}")
        return marginalize(self.mu, self.depth, n, self.alphabet)

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "alphabet": self.alphabet,
            "lambda": self.lam,
            "pressure": self.pressure,
            "residual": self.residual,
            "iterations": self.iterations,
        }

    def write(self, json_path, csv_path):
        with open(json_path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
        W = all_words(self.depth, self.alphabet)
        with open(csv_path, "w") as fh:
            fh.write("index,word,mu\n")
            for i, (w, m) in enumerate(zip(W, self.mu)):
                fh.write(f"{i},{''.join(map(str, w))},{float(m)!r}\n")


def _power(step, x0, tol, max_iter):
    x = x0 / x0.sum()
    for it in range(1, max_iter + 1):
        y = step(x)
        growth = y.sum()
        y /= growth
        diff = np.abs(y - x).max()
        x = y
        if diff < tol:
            return x, growth, it, diff
    raise NumericError(f"power iteration did not converge in {max_iter} steps", residual=diff)


def spectral_solve(M: TransferMatrix, tol: float = 1e-13, max_iter: int = 200_000) -> SpectralData:
    """Perron eigendata by power iteration on P and its adjoint (l1-normalized)."""
    n = M.n_states
    # tol is relative to the typical entry size 1/n of an l1-normalized vector
    h, lam_h, it1, _ = _power(M.apply, np.ones(n), tol / n, max_iter)
    nu, lam_n, it2, _ = _power(M.apply_adjoint, np.ones(n), tol / n, max_iter)
    lam = float((M.apply(h) @ nu) / (h @ nu))
    h = h / (h @ nu)
    mu = h * nu
    mu /= mu.sum()
    res = max(
        np.abs(M.apply(h) - lam * h).max() / np.abs(h).max(),
        np.abs(M.apply_adjoint(nu) - lam * nu).sum(),
    )
    if np.any(h <= 0):
        raise NumericError("eigenfunction has non-positive entries", residual=res)
    return SpectralData(M.depth, M.alphabet, lam, h, nu, mu, float(res), max(it1, it2))


def solve(phi: PotentialSpec, k: int | None = None, **kw) -> SpectralData:
    if k is None:
        k = default_depth(phi.alphabet)
    return spectral_solve(build_transfer(phi, k), **kw)


@dataclass(frozen=True, eq=False)
class GFunction:
    """g(a.w) = h(prefix_k(a.w)) exp(phi(a.w)) / (lambda h(w)) stored as ``g[w, a]``."""

    depth: int
    alphabet: int
    g: np.ndarray
    source: np.ndarray

    def apply(self, f):
        """Normalized operator (P~ f)(w) = sum_a g(a.w) f(prefix_k(a.w))."""
        return (self.g * f[self.source]).sum(axis=1)

    def apply_adjoint(self, m):
        return np.bincount(
            self.source.ravel(), weights=(self.g * m[:, None]).ravel(), minlength=self.alphabet**self.depth
        )

    def log_g_words(self) -> np.ndarray:
        """log g on A^(k+1) in word index order (first symbol most significant)."""
        q, k = self.alphabet, self.depth
        # row w*|A| + a holds a.w; reorder to index(a.w) = a*|A|^k + w
        lg = np.log(self.g)
        return lg.T.reshape(-1)

    def kernel_matrix(self) -> np.ndarray:
        n = self.alphabet**self.depth
        K = np.zeros((n, n))
        rows = np.repeat(np.arange(n), self.alphabet)
        np.add.at(K, (rows, self.source.ravel()), self.g.ravel())
        return K


def g_function(S: SpectralData, phi: PotentialSpec) -> GFunction:
    if np.any(S.h <= 0):
        raise DomainError("g-function needs a strictly positive eigenfunction")
    M = build_transfer(phi, S.depth)
    g = S.h[M.source] * M.weights / (S.lam * S.h[:, None])
    return GFunction(S.depth, S.alphabet, g, M.source)


# --------------------------------------------------------------------------
# probes


def lipschitz_seminorm(f, depth: int, alphabet: int, W) -> float:
    """sup_n var_n(f) / W_n for f given on A^depth."""
    f = np.asarray(f, dtype=float)
    best = 0.0
    for n in range(depth):
        var = np.ptp(f.reshape(alphabet**n, -1), axis=1).max()
        if var > 0:
            best = max(best, var / _W(W, n))
    return best


def _W(W, n):
    if W is None:
        return DEFAULT_THETA**n
    if hasattr(W, "walters"):
        return W.walters(n)
    if callable(W):
        return W(n)
    return W[n]


def walters_test_function(depth: int, W, alphabet: int = 2) -> np.ndarray:
    """f(w) = sum_j (W_j - W_{j+1}) (2 w^j - 1): var_n(f) = 2(W_n - W_depth).

    This saturates the d_phi Lipschitz seminorm at every scale, so its
    convergence rate tracks the worst case over the unit ball.
    """
    if alphabet != 2:
        raise DomainError("the Walters test function is defined for binary alphabets")
    Ws = np.array([_W(W, j) for j in range(depth + 1)])
    coef = Ws[:-1] - Ws[1:]
    return (2 * all_words(depth, 2) - 1) @ coef


def convergence_probe(S: SpectralData, G: GFunction, f, n_max: int, W=None) -> np.ndarray:
    """eps_n = ||P~^n f - int f dmu||_inf / ||f||_{L_phi} for n = 0..n_max.

    ``f`` is a function on A^d with d <= depth (lifted to the depth).  ``W``
    is the profile defining d_phi; d_theta with theta = 0.5 when omitted.
    """
    f = _lift(np.asarray(f, dtype=float), S.depth, S.alphabet)
    norm = np.abs(f).max() + lipschitz_seminorm(f, S.depth, S.alphabet, W)
    mean = f @ S.mu
    out = np.empty(n_max + 1)
    g = f.copy()
    for n in range(n_max + 1):
        out[n] = np.abs(g - mean).max()
        g = G.apply(g)
    return out / norm if norm > 0 else np.zeros_like(out)


def _lift(f, depth, alphabet):
    d = round(math.log(len(f), alphabet)) if len(f) > 1 else 0
    if alphabet**d != len(f) or d > depth:
        raise DomainError(f"function table of length {len(f)} does not live on A^d, d <= {depth}")
    return np.repeat(f, alphabet ** (depth - d))


def distortion_probe(
    G: GFunction, W, K: int = 8, n_pairs: int = 10_000, seed: int = 0
) -> float:
    """Sampled lower bound of sup |1 - g^(j)(a x) / g^(j)(a y)| / d_phi(x, y), j <= K.

    x and y are depth-k words separating exactly at a random index n < k,
    paired with the same random preimage word a of length j.
    """
    if W is None:
        raise ConfigError("distortion probe needs a W profile for d_phi")
    q, k = G.alphabet, G.depth
    rng = np.random.default_rng(seed)
    lg = G.log_g_words()
    best = 0.0
    n = rng.integers(0, k, size=n_pairs)
    x = rng.integers(0, q, size=(n_pairs, k))
    y = rng.integers(0, q, size=(n_pairs, k))
    cols = np.arange(k)[None, :]
    y = np.where(cols < n[:, None], x, y)
    flip = rng.integers(1, q, size=n_pairs)
    y[np.arange(n_pairs), n] = (x[np.arange(n_pairs), n] + flip) % q
    dphi = np.array([_W(W, int(i)) for i in range(k)])[n]
    for j in range(1, K + 1):
        a = rng.integers(0, q, size=(n_pairs, j))
        ax = np.concatenate([a, x], axis=1)
        ay = np.concatenate([a, y], axis=1)
        # g^(j)(a x) = prod_{i<j} g(window_i), windows of length k+1
        lx = lg[window_indices(ax, k + 1, q)[:, :j]].sum(axis=1)
        ly = lg[window_indices(ay, k + 1, q)[:, :j]].sum(axis=1)
        ratio = np.abs(1 - np.exp(lx - ly)) / dphi
        best = max(best, float(ratio.max()))
    return best


def gibbs_ratio_check(S: SpectralData, phi: PotentialSpec, n: int):
    """(min, max) over w in A^n of mu[w] / exp(-n P + S_n phi(www...))."""
    if n > S.depth:
        raise DomainError(f"n={n} exceeds truncation depth {S.depth}")
    W = all_words(n, S.alphabet)
    birk = np.zeros(len(W))
    for i in range(n):
        birk += phi.evaluate(np.roll(W, -i, axis=1))
    ratio = S.marginal(n) / np.exp(-n * S.pressure + birk)
    return float(ratio.min()), float(ratio.max())


def check_normalization(S: SpectralData, G: GFunction) -> dict:
    """Deviations in the identities P~ 1 = 1 and P~* mu = mu."""
    ones = np.ones(S.alphabet**S.depth)
    return {
        "row_sum": float(np.abs(G.g.sum(axis=1) - 1).max()),
        "constants": float(np.abs(G.apply(ones) - 1).max()),
        "invariance": float(np.abs(G.apply_adjoint(S.mu) - S.mu).max()),
    }


__all__ = [
    "TransferMatrix",
    "SpectralData",
    "GFunction",
    "build_transfer",
    "spectral_solve",
    "solve",
    "g_function",
    "convergence_probe",
    "distortion_probe",
    "gibbs_ratio_check",
    "check_normalization",
    "walters_test_function",
    "lipschitz_seminorm",
    "default_depth",
    "eval_cylinder",
]
