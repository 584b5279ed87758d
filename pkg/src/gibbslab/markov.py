"""Markov approximations of equilibrium states and trajectory sampling.

All randomness in the package flows through :func:`sample_path`,
:func:`sample_paths` and :class:`PathStream`, seeded by an explicit integer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMeasureError, DomainError, NumericError
from .potentials import markov_potential
from .shift import index_word
from .transfer import SpectralData


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """Order-m chain: ``transition[w, a]`` = P(next = a | last m symbols = w)."""

    order: int
    alphabet: int
    transition: np.ndarray
    initial: np.ndarray = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        q, m = self.alphabet, self.order
        P = np.asarray(self.transition, dtype=float)
        if P.shape != (q**m, q):
            raise DomainError(f"transition table must have shape {(q**m, q)}, got {P.shape}")
        if np.any(P < 0) or np.any(P > 1 + 1e-12) or np.abs(P.sum(axis=1) - 1).max() > 1e-9:
            raise DomainError("transition rows must be probability vectors")
        object.__setattr__(self, "transition", P)
        if self.initial is None:
            object.__setattr__(self, "initial", stationary_distribution(self))

    @property
    def n_contexts(self):
        return self.alphabet**self.order

    def context_step(self, pi):
        """One step of the induced chain on contexts A^m."""
        q, m = self.alphabet, self.order
        if m == 0:
            return np.array([pi.sum()])
        nxt = (np.arange(q**m)[:, None] * q + np.arange(q)[None, :]) % q**m
        return np.bincount(nxt.ravel(), weights=(pi[:, None] * self.transition).ravel(), minlength=q**m)

    def block_measure(self, n: int) -> np.ndarray:
        """Stationary masses of the n-cylinders."""
        q, m = self.alphabet, self.order
        if n <= m:
            return self.initial.reshape(q**n, -1).sum(axis=1)
        masses = self.initial.copy()
        for j in range(m, n):
            ctx = np.arange(q**j) % q**m
            masses = (masses[:, None] * self.transition[ctx]).reshape(-1)
        return masses

    def entropy_rate(self) -> float:
        P = self.transition
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(P > 0, P * np.log(P), 0.0)
        return float(-(self.initial @ plogp.sum(axis=1)))

    def stationarity_residual(self) -> float:
        return float(np.abs(self.context_step(self.initial) - self.initial).max())

    def describe(self) -> dict:
        return {"order": self.order, "alphabet": self.alphabet, "label": self.label}


def stationary_distribution(model: MarkovModel, tol: float = 1e-15, max_iter: int = 1_000_000):
    """Fixed point of the context chain by power iteration from the uniform vector."""
    n = model.n_contexts
    pi = np.full(n, 1.0 / n)
    if model.order == 0:
        return np.ones(1)
    for _ in range(max_iter):
        new = model.context_step(pi)
        new /= new.sum()
        diff = np.abs(new - pi).max()
        pi = new
        if diff < tol:
            return pi
    raise NumericError("context chain did not converge to a stationary vector", residual=diff)


def markov_from_equilibrium(S: SpectralData, m: int) -> MarkovModel:
    """Order-m chain with transitions mu[w.a] / mu[w] from the equilibrium cylinder masses."""
    if m + 1 > S.depth:
        raise DomainError(f"order {m} needs truncation depth >= {m + 1}, have {S.depth}")
    q = S.alphabet
    joint = S.marginal(m + 1).reshape(q**m, q)
    ctx = joint.sum(axis=1)
    if np.any(ctx <= 0):
        raise DegenerateMeasureError("equilibrium measure gives zero mass to a context")
    return MarkovModel(m, q, joint / ctx[:, None], meta={"source_depth": S.depth})


def bernoulli_model(probs) -> MarkovModel:
    probs = np.asarray(probs, dtype=float)
    return MarkovModel(0, len(probs), probs[None, :], label=f"bernoulli{probs.tolist()}")


def model_potential(model: MarkovModel):
    """Locally constant potential log nu(x^0 | x^1..x^m) whose equilibrium state is ``model``.

    It is normalized: sum_a exp(phi(a.w)) = 1, so its pressure is 0.
    """
    q, m = model.alphabet, model.order
    joint = model.block_measure(m + 1)
    ctx = joint.reshape(q, q**m).sum(axis=0)  # last m symbols
    if np.any(joint <= 0):
        raise DegenerateMeasureError("model potential needs a fully supported chain")
    table = np.log(joint.reshape(q, q**m) / ctx[None, :]).reshape(-1)
    return markov_potential(table, m + 1, q)


# --------------------------------------------------------------------------
# sampling


@dataclass(frozen=True, eq=False)
class Trajectory:
    symbols: np.ndarray
    model: str
    seed: int

    def __len__(self):
        return len(self.symbols)


def _cum(model):
    cum = np.cumsum(model.transition, axis=1)
    cum[:, -1] = 1.0
    return cum


def _draw_contexts(model, u):
    c = np.searchsorted(np.cumsum(model.initial)[:-1], u, side="right")
    return c


def _context_symbols(c, m, q):
    return np.array([index_word(int(ci), m, q) for ci in np.atleast_1d(c)], dtype=np.int64).reshape(-1, m)


def _run_chain(cum_rows, q, m, c, u):
    """Sequentially draw len(u) symbols starting from context index c."""
    mod = q**m
    out = np.empty(len(u), dtype=np.int64)
    last = q - 1
    for t, x in enumerate(u.tolist()):
        row = cum_rows[c]
        a = 0
        while a < last and x >= row[a]:
            a += 1
        out[t] = a
        c = (c * q + a) % mod
    return out, c


def sample_paths(model: MarkovModel, n: int, count: int, seed: int) -> np.ndarray:
    """``count`` independent stationary paths of length ``n``, shape (count, n)."""
    if n < 1:
        raise DomainError("path length must be >= 1")
    q, m = model.alphabet, model.order
    rng = np.random.default_rng(seed)
    u0 = rng.random(count)
    c = _draw_contexts(model, u0)
    head = min(m, n)
    out = np.empty((count, n), dtype=np.int64)
    if m:
        out[:, :head] = _context_symbols(c, m, q)[:, :head]
    U = rng.random((count, max(n - m, 0)))
    if n <= m:
        return out
    cum = _cum(model)
    if m == 0:
        out[:, m:] = np.searchsorted(cum[0], U, side="right").clip(max=q - 1)
    elif count == 1:
        out[0, m:], _ = _run_chain(cum.tolist(), q, m, int(c[0]), U[0])
    else:
        mod = q**m
        for t in range(n - m):
            a = (U[:, t, None] >= cum[c]).sum(axis=1).clip(max=q - 1)
            out[:, m + t] = a
            c = (c * q + a) % mod
    return out


def sample_path(model: MarkovModel, n: int, seed: int) -> Trajectory:
    return Trajectory(sample_paths(model, n, 1, seed)[0], model.label or f"order{model.order}", seed)


class PathStream:
    """Lazily extended stationary path, drawn in chunks from one generator."""

    def __init__(self, model: MarkovModel, seed=None, rng=None):
        self.model = model
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self._cum = _cum(model)
        self._rows = self._cum.tolist()
        self._ctx = None
        self._pending = np.empty(0, dtype=np.int64)

    def next(self, n: int) -> np.ndarray:
        q, m = self.model.alphabet, self.model.order
        parts = []
        if self._ctx is None:
            self._ctx = int(_draw_contexts(self.model, self.rng.random(1))[0])
            if m:
                self._pending = _context_symbols(self._ctx, m, q)[0]
        if len(self._pending):
            take = self._pending[:n]
            self._pending = self._pending[n:]
            parts.append(take)
            n -= len(take)
        if n > 0:
            u = self.rng.random(n)
            if m == 0:
                parts.append(np.searchsorted(self._cum[0], u, side="right").clip(max=q - 1))
            else:
                sym, self._ctx = _run_chain(self._rows, q, m, self._ctx, u)
                parts.append(sym)
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


def write_paths(paths, fh, alphabet=2):
    """One path per line; digits run together for |A| <= 10, space separated otherwise."""
    for p in np.atleast_2d(paths):
        if alphabet <= 10:
            fh.write("".join(map(str, p.tolist())) + "\n")
        else:
            fh.write(" ".join(map(str, p.tolist())) + "\n")


def read_paths(fh):
    out = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        toks = line.split() if " " in line else list(line)
        out.append(np.array([int(t) for t in toks], dtype=np.int64))
    return out
