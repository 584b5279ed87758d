"""Potentials on the full shift, their variation and Walters sequences.

A potential is evaluated on finite words through the periodic extension
``www...`` of the word.  Every builtin carries an analytic variation profile
``var_n`` and an upper bound ``W_p <= sum_{k>p} var_k`` for its Walters
sequence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np
from scipy import special

from .errors import (
    ConfigError,
    DomainError,
    InsufficientDataError,
    ResourceError,
    UnsupportedRegimeError,
)
from .shift import DEFAULT_THETA, all_words, word_index

log = logging.getLogger(__name__)

SERIES_TOL = 1e-12
MAX_ENUMERATION = 2**22

KINDS = ("constant", "depth-1", "markov-depth", "long-range-ising", "pollicott", "exp-ising", "custom")


# --------------------------------------------------------------------------
# variation profiles


@dataclass(frozen=True)
class VariationProfile:
    """Variation ``var_n`` and Walters bound ``W_p`` of a potential.

    ``var`` maps n to var_n.  ``tail`` (optional) is the closed form of
    ``sum_{k>p} var_k``.  ``walters_fn`` overrides the W sequence entirely
    (used for synthetic profiles).  When ``floor`` is set the W bound is
    replaced by ``max(W_p, eta**p)`` so that it stays strictly positive for
    locally constant potentials.
    """

    var: Callable[[int], float] | None = None
    tail: Callable[[int], float] | None = None
    walters_fn: Callable[[int], float] | None = None
    floor: bool = False
    eta: float = DEFAULT_THETA
    label: str = ""

    @classmethod
    def from_walters(cls, W, label=""):
        return cls(walters_fn=W, label=label)

    @classmethod
    def from_variation(cls, var, tail=None, label=""):
        return cls(var=var, tail=tail, label=label)

    def walters(self, p: int) -> float:
        if self.walters_fn is not None:
            return float(self.walters_fn(p))
        w = walters_bound(self, p)
        if self.floor:
            w = max(w, self.eta**p)
        return w

    def provenance(self, p: int) -> str:
        if self.walters_fn is not None:
            return "analytic"
        if self.floor and walters_bound(self, p) < self.eta**p:
            return "surrogate"
        return "upper-bound"

    def samples(self, horizon: int):
        """Arrays ``(var[0..horizon], W[0..horizon])``; var is NaN when unknown."""
        ps = range(horizon + 1)
        var = np.array([self.var(n) if self.var else np.nan for n in ps], dtype=float)
        W = np.array([self.walters(p) for p in ps], dtype=float)
        return var, W


def walters_bound(profile: VariationProfile, p: int) -> float:
    """Upper bound ``sum_{k=p+1}^inf var_k`` for W_p.

    Uses the closed form tail when the profile has one.  Otherwise the
    series is summed directly with an integral remainder estimate, which
    requires var to decay faster than 1/n.
    """
    if profile.tail is not None:
        return float(profile.tail(p))
    if profile.var is None:
        if profile.walters_fn is not None:
            return float(profile.walters_fn(p))
        raise ConfigError("profile has neither a variation sequence nor a W sequence")
    var = profile.var
    N = p + 1 + 20000
    ks = np.arange(p + 1, N + 1)
    terms = np.array([var(int(k)) for k in ks], dtype=float)
    head = float(terms.sum())
    vN = terms[-1]
    if vN <= 0:
        return head
    # local decay exponent near the truncation point
    v_half = terms[len(terms) // 2]
    k_half = ks[len(ks) // 2]
    ratio = vN / v_half
    if ratio < 0.5 ** ((N - k_half) / 50):
        # faster than any polynomial: geometric remainder with the observed ratio
        r = (vN / terms[-2]) if terms[-2] > 0 else 0.0
        if r >= 1:
            raise UnsupportedRegimeError("variation does not decay")
        return head + vN * r / (1 - r)
    s = -math.log(ratio) / math.log(N / k_half)
    if s <= 1.0 + 1e-3:
        raise UnsupportedRegimeError(f"variation not summable (local decay exponent {s:.3f} <= 1)")
    return head + vN * N / (s - 1)


@dataclass(frozen=True)
class RegimeFit:
    regime: int | None
    alpha: float
    rss: dict
    r2: float
    params: dict = field(default_factory=dict)

    @property
    def supported(self):
        return self.regime is not None


def regime_classify(profile, horizon: int = 64, p_min: int = 4) -> RegimeFit:
    """Classify the decay of W_p into the four supported decay regimes.

    1: W_p = O(theta^p); 2: W_p = O(p^-alpha), alpha > 1;
    3: W_p = O(theta^((log p)^alpha)), alpha > 1; 4: W_p = O(exp(-c p^alpha)), 0 < alpha < 1.
    Each regime is a linear regression on a transform of L_p = -log W_p; the
    model with the smallest residual in L-space wins, ties going to the
    lower regime number.
    """
    try:
        Wfun = profile.walters if hasattr(profile, "walters") else profile
        ps = np.arange(p_min, horizon + 1, dtype=float)
        W = np.array([Wfun(int(p)) for p in ps], dtype=float)
    except UnsupportedRegimeError:
        return RegimeFit(None, math.nan, {}, math.nan, {"reason": "W not computable"})
    keep = (W > 0) & (W < 1) & np.isfinite(W)
    ps, L = ps[keep], -np.log(W[keep])
    if len(ps) < 8:
        raise InsufficientDataError(f"need at least 8 usable W samples, got {len(ps)}")
    sst = float(((L - L.mean()) ** 2).sum())
    fits = {}

    def linfit(x, y):
        A = np.vstack([np.ones_like(x), x]).T
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        return coef

    a, b = linfit(ps, L)
    fits[1] = (b, a + b * ps)
    a, b = linfit(np.log(ps), L)
    fits[2] = (b, a + b * np.log(ps))
    a, b = linfit(np.log(np.log(ps)), np.log(L))
    fits[3] = (b, np.exp(a) * np.log(ps) ** b)
    a, b = linfit(np.log(ps), np.log(L))
    fits[4] = (b, np.exp(a) * ps**b)

    rss = {r: float(((L - pred) ** 2).sum()) for r, (_, pred) in fits.items()}
    best_rss = min(rss.values())
    tie = 1e-9 * max(sst, 1e-300)
    best = min(r for r in rss if rss[r] <= best_rss + tie)
    slope = float(fits[best][0])
    valid = {1: slope > 0, 2: slope > 1, 3: slope > 1, 4: 0 < slope < 1}[best]
    r2 = 1 - rss[best] / sst if sst > 0 else 1.0
    return RegimeFit(best if valid else None, slope, rss, r2, {"model": best})


# --------------------------------------------------------------------------
# potentials


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """An evaluable potential.

    ``evaluator`` maps an integer array of words ``(N, L)`` to the values of
    the potential at the periodic extensions of those words.  ``exact_depth``
    is the depth from which evaluation is exact (locally constant
    potentials), ``None`` for infinite-range ones.
    """

    kind: str
    alphabet: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    profile: VariationProfile
    sup_norm: float
    exact_depth: int | None = None
    params: Mapping = field(default_factory=dict)

    def evaluate(self, words) -> np.ndarray:
        words = np.asarray(words, dtype=np.int64)
        if words.ndim == 1:
            words = words[None, :]
        if words.shape[1] == 0:
            raise DomainError("potential evaluation needs nonempty words")
        return np.asarray(self.evaluator(words), dtype=float)

    def describe(self) -> dict:
        return {"kind": self.kind, "alphabet": self.alphabet, **dict(self.params)}


def eval_cylinder(phi: PotentialSpec, w) -> float:
    """Value of ``phi`` at the periodic extension of the nonempty word ``w``."""
    w = tuple(int(s) for s in w)
    if not w:
        raise DomainError("eval_cylinder needs a nonempty word")
    for s in w:
        if not 0 <= s < phi.alphabet:
            raise DomainError(f"symbol {s} outside alphabet of size {phi.alphabet}")
    return float(phi.evaluate(np.array([w]))[0])


def variation_numeric(phi: PotentialSpec, n: int, k: int) -> float:
    """Finite-depth lower bound of var_n: sup over pairs in A^k sharing n symbols."""
    if k < n:
        raise DomainError(f"search depth k={k} must be >= n={n}")
    q = phi.alphabet
    if q**k > MAX_ENUMERATION:
        raise ResourceError(f"enumerating A^{k} needs {q**k} evaluations", required=q**k)
    vals = phi.evaluate(all_words(k, q)).reshape(q**n, q ** (k - n))
    return float(np.ptp(vals, axis=1).max())


def _periodic_prefix(words: np.ndarray, m: int) -> np.ndarray:
    """First m symbols of the periodic extension of each row."""
    L = words.shape[1]
    if L >= m:
        return words[:, :m]
    return words[:, np.arange(m) % L]


def constant_potential(c=0.0, alphabet=2) -> PotentialSpec:
    return PotentialSpec(
        "constant",
        alphabet,
        lambda w: np.full(len(w), float(c)),
        VariationProfile(var=lambda n: 0.0, tail=lambda p: 0.0, floor=True),
        abs(float(c)),
        exact_depth=1,
        params={"value": float(c)},
    )


def depth1_potential(values) -> PotentialSpec:
    values = np.asarray(values, dtype=float)
    spread = float(np.ptp(values))
    return PotentialSpec(
        "depth-1",
        len(values),
        lambda w: values[w[:, 0]],
        VariationProfile(
            var=lambda n: spread if n == 0 else 0.0, tail=lambda p: 0.0, floor=True
        ),
        float(np.abs(values).max()),
        exact_depth=1,
        params={"values": values.tolist()},
    )


def bernoulli_potential(probs) -> PotentialSpec:
    """phi(x) = log p_{x^0}; its equilibrium state is the product measure."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs <= 0) or abs(probs.sum() - 1) > 1e-12:
        raise ConfigError(f"Bernoulli probabilities must be positive and sum to 1, got {probs}")
    return depth1_potential(np.log(probs))


def markov_potential(table, depth: int, alphabet=2, kind="markov-depth") -> PotentialSpec:
    """Locally constant potential given by its values on A^depth (index order)."""
    table = np.asarray(table, dtype=float)
    if table.shape != (alphabet**depth,):
        raise ConfigError(f"table must have {alphabet**depth} entries, got {table.shape}")
    powers = alphabet ** np.arange(depth - 1, -1, -1, dtype=np.int64)

    def ev(w):
        return table[_periodic_prefix(w, depth) @ powers]

    grouped = [np.ptp(table.reshape(alphabet**n, -1), axis=1).max() for n in range(depth)]

    def var(n):
        return float(grouped[n]) if n < depth else 0.0

    def tail(p):
        return float(sum(grouped[p + 1 :]))

    return PotentialSpec(
        kind,
        alphabet,
        ev,
        VariationProfile(var=var, tail=tail, floor=True),
        float(np.abs(table).max()),
        exact_depth=depth,
        params={"depth": depth, "table": table.tolist()},
    )


def custom_potential(table: Mapping[str, float], alphabet=2) -> PotentialSpec:
    """Potential from word -> value pairs at a fixed depth (words as digit strings)."""
    depths = {len(k) for k in table}
    if len(depths) != 1:
        raise ConfigError("custom potential words must all have the same length")
    (depth,) = depths
    values = np.full(alphabet**depth, np.nan)
    for word, v in table.items():
        values[word_index([int(c) for c in word], alphabet)] = float(v)
    if np.isnan(values).any():
        raise ConfigError(f"custom potential table must cover all of A^{depth}")
    return markov_potential(values, depth, alphabet, kind="custom")


@lru_cache(maxsize=256)
def _folded_couplings(L: int, kind: str, a: float) -> np.ndarray:
    """c_r = sum over m >= 2 with (m-1) % L == r of the pair coupling J(m)."""
    if kind == "power":
        M = int(math.ceil((1.0 / ((a - 1) * SERIES_TOL)) ** (1.0 / (a - 1)))) + 2
        m = np.arange(2, M + 1, dtype=float)
        J = m**-a
    else:
        M = int(math.ceil(math.log(SERIES_TOL * (1 - a)) / math.log(a))) + 2
        m = np.arange(2, M + 1, dtype=float)
        J = a ** (m - 1)
    r = (np.arange(2, M + 1) - 1) % L
    # small terms first for accurate accumulation
    order = np.argsort(J)
    return np.bincount(r[order], weights=J[order], minlength=L)


def _pair_evaluator(kind, a, coupling):
    def ev(w):
        spins = 2 * w - 1
        c = _folded_couplings(w.shape[1], kind, a)
        return -coupling * spins[:, 0] * (spins @ c)

    return ev


def long_range_ising(p: float = 4.0, coupling: float = 1.0) -> PotentialSpec:
    """phi(x) = -J sum_{m>=2} s^0 s^{m-1} / m^p with spins s = 2x - 1."""
    if p <= 1:
        raise ConfigError(f"long-range Ising exponent must exceed 1, got {p}")
    J = float(coupling)

    def var(n):
        return 2 * abs(J) * float(special.zeta(p, max(n + 1, 2)))

    def tail(q):
        if p <= 2:
            raise UnsupportedRegimeError(f"variation of long-range Ising with p={p} is not summable")
        a = q + 2
        return 2 * abs(J) * float(special.zeta(p - 1, a) - (q + 1) * special.zeta(p, a))

    return PotentialSpec(
        "long-range-ising",
        2,
        _pair_evaluator("power", float(p), J),
        VariationProfile(var=var, tail=tail),
        abs(J) * float(special.zeta(p) - 1),
        params={"p": p, "coupling": J},
    )


def exp_ising(rate: float = 0.5, coupling: float = 1.0) -> PotentialSpec:
    """phi(x) = -J sum_{m>=2} s^0 s^{m-1} rate^(m-1); a d_theta-Lipschitz potential."""
    if not 0 < rate < 1:
        raise ConfigError(f"rate must lie in (0, 1), got {rate}")
    J, r = float(coupling), float(rate)

    def var(n):
        return 2 * abs(J) * r ** max(n, 1) / (1 - r)

    def tail(p):
        return 2 * abs(J) * r ** (p + 1) / (1 - r) ** 2

    return PotentialSpec(
        "exp-ising",
        2,
        _pair_evaluator("geometric", r, J),
        VariationProfile(var=var, tail=tail),
        abs(J) * r / (1 - r),
        params={"rate": r, "coupling": J},
    )


def pollicott(exponent: float = 2.0, scale: float = 1.0, v=None) -> PotentialSpec:
    """phi = v_k on [0^k 1], 0 on the all-zero sequence; var_n = v_n.

    With ``v`` omitted, v_n = scale * n^-exponent for n >= 1 and v_0 = v_1.
    An explicit sequence ``v`` is extended by zeros.
    """
    if v is not None:
        seq = np.asarray(v, dtype=float)
        if np.any(np.diff(seq) > 0) or np.any(seq < 0):
            raise ConfigError("Pollicott sequence must be non-negative and non-increasing")

        def vfun(n):
            return float(seq[n]) if n < len(seq) else 0.0

        def tail(p):
            return float(seq[p + 1 :].sum())

        params = {"v": seq.tolist()}
    else:
        s, c = float(exponent), float(scale)

        def vfun(n):
            return c * max(n, 1) ** -s

        def tail(p):
            if s <= 1:
                raise UnsupportedRegimeError(f"v_n = n^-{s} is not summable")
            return c * float(special.zeta(s, p + 1))

        params = {"exponent": s, "scale": c}

    cache = {}

    def ev(w):
        L = w.shape[1]
        if L not in cache:
            cache[L] = np.array([vfun(j) for j in range(L)] + [0.0])
        has_one = w.any(axis=1)
        first = np.where(has_one, w.argmax(axis=1), L)
        return cache[L][first]

    return PotentialSpec(
        "pollicott",
        2,
        ev,
        VariationProfile(var=vfun, tail=tail, floor=v is not None),
        vfun(0),
        params=params,
    )


def potential_from_config(cfg: Mapping) -> PotentialSpec:
    """Build a potential from a ``{"kind": ..., params...}`` mapping (strict keys)."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    allowed = {
        "constant": {"value", "alphabet"},
        "bernoulli": {"probs"},
        "depth-1": {"values"},
        "markov-depth": {"depth", "table", "alphabet"},
        "long-range-ising": {"p", "coupling"},
        "exp-ising": {"rate", "coupling"},
        "pollicott": {"exponent", "scale", "v"},
        "custom": {"table", "alphabet"},
    }
    if kind not in allowed:
        raise ConfigError(f"unknown potential kind {kind!r}; expected one of {sorted(allowed)}")
    unknown = set(cfg) - allowed[kind]
    if unknown:
        raise ConfigError(f"unknown keys for potential {kind!r}: {sorted(unknown)}")
    try:
        if kind == "constant":
            return constant_potential(cfg.get("value", 0.0), cfg.get("alphabet", 2))
        if kind == "bernoulli":
            return bernoulli_potential(cfg["probs"])
        if kind == "depth-1":
            return depth1_potential(cfg["values"])
        if kind == "markov-depth":
            return markov_potential(cfg["table"], int(cfg["depth"]), cfg.get("alphabet", 2))
        if kind == "long-range-ising":
            return long_range_ising(cfg.get("p", 4.0), cfg.get("coupling", 1.0))
        if kind == "exp-ising":
            return exp_ising(cfg.get("rate", 0.5), cfg.get("coupling", 1.0))
        if kind == "pollicott":
            return pollicott(cfg.get("exponent", 2.0), cfg.get("scale", 1.0), cfg.get("v"))
        return custom_potential(cfg["table"], cfg.get("alphabet", 2))
    except KeyError as exc:
        raise ConfigError(f"potential {kind!r} missing parameter {exc}") from None


def builtin_potentials() -> dict:
    """A representative instance of every builtin kind."""
    return {
        "constant": constant_potential(0.3),
        "bernoulli": bernoulli_potential([0.7, 0.3]),
        "markov-depth-2": markov_potential([0.1, -0.4, 0.3, 0.2], 2),
        "markov-depth-3": markov_potential([0.2, -0.1, 0.4, 0.0, -0.3, 0.5, 0.1, -0.2], 3),
        "long-range-ising": long_range_ising(4.0),
        "exp-ising": exp_ising(0.5, 0.5),
        "pollicott": pollicott(2.0),
    }
