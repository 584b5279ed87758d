"""Distances between measures on cylinders and on the real line.

* ``w1_tree`` -- Kantorovich distance for d_theta in closed form on the
  cylinder tree;
* ``w1_lp`` / ``dbar_n`` -- exact couplings from a transportation simplex;
* ``relative_entropy_n`` / ``relative_entropy_rate`` / ``pinsker_gap``;
* ``w1_real`` -- one-dimensional Wasserstein distance against atoms or a
  centred Gaussian.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DomainError, NumericError, ResourceError
from .markov import MarkovModel
from .potentials import PotentialSpec
from .shift import DEFAULT_THETA, all_words, d_theta_matrix, hamming_matrix
from .transfer import SpectralData

DBAR_MAX_STATES = 512


@dataclass(frozen=True, eq=False)
class BlockMeasure:
    """Probability vector on A^depth in word index order."""

    depth: int
    masses: np.ndarray
    alphabet: int = 2

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float).reshape(-1)
        if len(m) != self.alphabet**self.depth:
            raise DomainError(f"expected {self.alphabet ** self.depth} masses, got {len(m)}")
        if np.any(m < -1e-15) or abs(m.sum() - 1) > 1e-12:
            raise DomainError("block measure must be a probability vector (sum 1 within 1e-12)")
        object.__setattr__(self, "masses", np.clip(m, 0.0, None))

    def marginal(self, j: int) -> np.ndarray:
        q = self.alphabet
        return self.masses.reshape(q**j, -1).sum(axis=1)

    @classmethod
    def from_spectral(cls, S: SpectralData, n: int):
        return cls(n, S.marginal(n), S.alphabet)

    @classmethod
    def from_model(cls, model: MarkovModel, n: int):
        return cls(n, model.block_measure(n), model.alphabet)

    @classmethod
    def point(cls, word, alphabet=2):
        from .shift import word_index

        m = np.zeros(alphabet ** len(word))
        m[word_index(word, alphabet)] = 1.0
        return cls(len(word), m, alphabet)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    depth: int
    plan: np.ndarray
    cost: float

    def triplets(self, tol: float = 0.0):
        i, j = np.nonzero(self.plan > tol)
        return list(zip(i.tolist(), j.tolist(), self.plan[i, j].tolist()))

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "target", "mass"])
        for i, j, m in self.triplets():
            w.writerow([i, j, repr(m)])


def _check_pair(mu: BlockMeasure, nu: BlockMeasure):
    if mu.depth != nu.depth or mu.alphabet != nu.alphabet:
        raise DomainError(f"measures live on different block spaces ({mu.depth}, {nu.depth})")


# --------------------------------------------------------------------------
# tree closed form


def w1_tree(mu: BlockMeasure, nu: BlockMeasure, theta: float = DEFAULT_THETA) -> float:
    """sum_j ((theta^{j-1} - theta^j) / 2) sum_{w in A^j} |mu_j[w] - nu_j[w]|."""
    _check_pair(mu, nu)
    total = 0.0
    for j in range(1, mu.depth + 1):
        total += 0.5 * (theta ** (j - 1) - theta**j) * np.abs(mu.marginal(j) - nu.marginal(j)).sum()
    return float(total)


# --------------------------------------------------------------------------
# transportation simplex


def transport_simplex(a, b, C, max_iter: int = 200_000, tol: float = 1e-12):
    """Exact min-cost transport between supplies ``a`` and demands ``b``.

    Matrix-minimum start, u-v potentials on the spanning-tree basis,
    Dantzig pricing with a Bland fallback on degenerate streaks.
    Returns ``(value, plan)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    m, n = C.shape
    if a.shape != (m,) or b.shape != (n,):
        raise DomainError("supply/demand shapes do not match the cost matrix")
    if np.any(a < 0) or np.any(b < 0) or abs(a.sum() - b.sum()) > 1e-9:
        raise DomainError("transport needs nonnegative marginals with equal total mass")

    # matrix-minimum start: each allocation retires one row or column, so the
    # m + n - 1 cells (some possibly 0) form a spanning tree of the basis graph
    X = {}
    s, d = a.copy(), b.copy()
    row_alive = np.ones(m, dtype=bool)
    col_alive = np.ones(n, dtype=bool)
    rows_left, cols_left = m, n
    for idx in np.argsort(C, axis=None, kind="stable").tolist():
        i, j = divmod(idx, n)
        if not (row_alive[i] and col_alive[j]):
            continue
        t = min(s[i], d[j])
        X[(i, j)] = t
        s[i] -= t
        d[j] -= t
        if rows_left == 1 and cols_left == 1:
            break
        if (s[i] <= d[j] and rows_left > 1) or cols_left == 1:
            row_alive[i] = False
            rows_left -= 1
        else:
            col_alive[j] = False
            cols_left -= 1

    degenerate = 0
    for _ in range(max_iter):
        adj = [[] for _ in range(m + n)]
        for (r, c) in X:
            adj[r].append(m + c)
            adj[m + c].append(r)
        u = np.full(m, np.nan)
        v = np.full(n, np.nan)
        u[0] = 0.0
        queue = deque([0])
        seen = np.zeros(m + n, dtype=bool)
        seen[0] = True
        while queue:
            node = queue.popleft()
            for nb in adj[node]:
                if seen[nb]:
                    continue
                seen[nb] = True
                if node < m:
                    v[nb - m] = C[node, nb - m] - u[node]
                else:
                    u[nb] = C[nb, node - m] - v[node - m]
                queue.append(nb)
        red = C - u[:, None] - v[None, :]
        if degenerate > 20:
            neg = np.flatnonzero(red.ravel() < -tol)
            if len(neg) == 0:
                break
            ei, ej = divmod(int(neg[0]), n)
        else:
            k = int(np.argmin(red))
            if red.flat[k] >= -tol:
                break
            ei, ej = divmod(k, n)

        # path in the basis tree from column ej back to row ei
        parent = {m + ej: None}
        queue = deque([m + ej])
        while queue:
            node = queue.popleft()
            if node == ei:
                break
            for nb in adj[node]:
                if nb not in parent:
                    parent[nb] = node
                    queue.append(nb)
        path = [ei]
        while parent[path[-1]] is not None:
            path.append(parent[path[-1]])
        # path: row ei -> ... -> col ej; cells alternate -, +, -, ...
        cells = []
        for p, q_ in zip(path[:-1], path[1:]):
            r, c = (p, q_ - m) if p < m else (q_, p - m)
            cells.append((r, c))
        minus = cells[0::2]
        plus = cells[1::2]
        leave = min(minus, key=lambda rc: (X[rc], rc))
        t = X[leave]
        for rc in minus:
            X[rc] -= t
        for rc in plus:
            X[rc] += t
        del X[leave]
        X[(ei, ej)] = t
        degenerate = degenerate + 1 if t <= tol else 0
    else:
        raise NumericError("transportation simplex hit its iteration cap")

    plan = np.zeros((m, n))
    for (r, c), val in X.items():
        plan[r, c] = max(val, 0.0)
    return float((plan * C).sum()), plan


def w1_lp(mu: BlockMeasure, nu: BlockMeasure, theta: float = DEFAULT_THETA, cost=None):
    """Exact coupling optimum of d_theta cost between depth-m cylinders."""
    _check_pair(mu, nu)
    if cost is None:
        cost = d_theta_matrix(mu.depth, theta, mu.alphabet)
    val, plan = transport_simplex(mu.masses, nu.masses, cost)
    return val, TransportPlan(mu.depth, plan, val)


def dbar_n(mu: BlockMeasure, nu: BlockMeasure, max_states: int = DBAR_MAX_STATES):
    """Minimum expected Hamming distance over all couplings of mu and nu on A^n.

    Dropping the shift-invariance constraint on joinings makes this
    a lower bound for the process d-bar_n.
    """
    _check_pair(mu, nu)
    size = mu.alphabet**mu.depth
    if size > max_states:
        raise ResourceError(f"d-bar LP on {size} states exceeds guard {max_states}", required=size * size)
    val, plan = transport_simplex(mu.masses, nu.masses, hamming_matrix(mu.depth, mu.alphabet))
    return val, TransportPlan(mu.depth, plan, val)


# --------------------------------------------------------------------------
# relative entropy


def relative_entropy_n(nu: BlockMeasure, mu: BlockMeasure) -> float:
    """sum nu log(nu / mu); ``inf`` when nu charges a mu-null block."""
    _check_pair(mu, nu)
    p, q = nu.masses, mu.masses
    pos = p > 0
    if np.any(q[pos] <= 0):
        return math.inf
    return float(max(np.sum(p[pos] * np.log(p[pos] / q[pos])), 0.0))


def relative_entropy_rate(nu: MarkovModel, S: SpectralData, phi: PotentialSpec, tol: float = 1e-3) -> float:
    """P(phi) - int phi dnu - h(nu), with phi read at the truncation depth k + 1."""
    D = S.depth + 1
    if phi.exact_depth is not None and phi.exact_depth <= D:
        D = max(phi.exact_depth, nu.order + 1)
    elif phi.profile is not None:
        err = phi.profile.walters(D - 1)
        if err > tol:
            raise ResourceError(f"truncation error {err:.3g} of int phi dnu exceeds tolerance {tol}", required=D)
    vals = phi.evaluate(all_words(D, nu.alphabet))
    mean_phi = float(nu.block_measure(D) @ vals)
    return S.pressure - mean_phi - nu.entropy_rate()


@dataclass(frozen=True)
class PinskerGap:
    lhs: float
    rhs: float
    ratio: float
    kl: float


def pinsker_gap(nu: MarkovModel, S: SpectralData, n: int) -> PinskerGap:
    """d-bar_n(nu_n, mu_n) against sqrt(n H_n(nu | mu)); ratio lhs / rhs (0 when both vanish)."""
    if n > S.depth:
        raise DomainError(f"n={n} exceeds truncation depth {S.depth}")
    mu_n = BlockMeasure.from_spectral(S, n)
    nu_n = BlockMeasure.from_model(nu, n)
    lhs, _ = dbar_n(nu_n, mu_n)
    kl = relative_entropy_n(nu_n, mu_n)
    rhs = math.sqrt(n * kl)
    if rhs == 0:
        ratio = 0.0 if lhs <= 1e-12 else math.inf
    else:
        ratio = lhs / rhs
    return PinskerGap(lhs, rhs, ratio, kl)


# --------------------------------------------------------------------------
# real line


def _gauss_int(lo, hi, sigma):
    """int_lo^hi Phi(x / sigma) dx via the antiderivative t Phi(t) + phi(t)."""

    def psi(t):
        with np.errstate(invalid="ignore"):
            out = t * special.ndtr(t) + np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
        return np.where(np.isneginf(t), 0.0, out)

    return sigma * (psi(np.asarray(hi) / sigma) - psi(np.asarray(lo) / sigma))


def w1_real(atoms, weights=None, ref="gaussian", sigma2: float = 1.0, ref_atoms=None, ref_weights=None) -> float:
    """Wasserstein-1 on R between weighted atoms and a reference law.

    ``ref`` is ``"gaussian"`` (N(0, sigma2); sigma2 = 0 means delta_0),
    ``"delta0"`` or ``"atoms"`` (``ref_atoms``/``ref_weights``).
    """
    x = np.asarray(atoms, dtype=float).reshape(-1)
    w = np.full(len(x), 1.0 / len(x)) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if np.any(w < 0):
        raise DomainError("atom weights must be nonnegative")
    if len(w) != len(x) or w.sum() <= 0:
        raise DomainError("atoms and weights must match and carry positive mass")
    w = w / w.sum()
    if ref == "gaussian" and sigma2 == 0:
        ref = "delta0"
    if ref == "delta0":
        return float(w @ np.abs(x))
    if ref == "atoms":
        y = np.asarray(ref_atoms, dtype=float).reshape(-1)
        return float(stats.wasserstein_distance(x, y, w, ref_weights))
    if ref != "gaussian":
        raise DomainError(f"unknown reference law {ref!r}")
    if sigma2 < 0:
        raise DomainError("variance must be nonnegative")
    s = math.sqrt(sigma2)
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    F = np.cumsum(w)
    F[-1] = 1.0
    # (-inf, x_0): F = 0;  (x_K-1, inf): F = 1
    total = float(_gauss_int(-np.inf, x[0], s)) + float(_gauss_int(-np.inf, -x[-1], s))
    lo, hi, c = x[:-1], x[1:], F[:-1]
    cross = np.clip(s * special.ndtri(np.clip(c, 1e-300, 1 - 1e-16)), lo, hi)
    seg = c * (cross - lo) - _gauss_int(lo, cross, s) + _gauss_int(cross, hi, s) - c * (hi - cross)
    return total + float(seg.sum())


__all__ = [
    "BlockMeasure",
    "TransportPlan",
    "w1_tree",
    "transport_simplex",
    "w1_lp",
    "dbar_n",
    "relative_entropy_n",
    "relative_entropy_rate",
    "PinskerGap",
    "pinsker_gap",
    "w1_real",
]
