"""Monte Carlo stress tests of the Gaussian concentration bound.

A functional K of n orbit points with per-coordinate Lipschitz constants
Lip_i is sampled under a Markov model; the fitted constant

    C_hat = max_t log E exp(t (K - EK)) / (t^2 sum Lip_i^2)

is compared against tail probabilities, variances and the proof-side
constant assembled from transfer-operator diagnostics.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import ConfigError, DomainError, UnsupportedRegimeError
from .estimators import ObservableSpec, block_counts, shadowing_score
from .markov import MarkovModel, sample_paths
from .potentials import PotentialSpec
from .shift import DEFAULT_THETA, all_words, window_indices
from .transfer import SpectralData, lipschitz_seminorm
from .transport import BlockMeasure

DEFAULT_TAU = np.array([0.25, 0.5, 0.75, 1.0, 1.5, 2.0])
SHARD_SYMBOLS = 1 << 22


@dataclass(frozen=True, eq=False)
class FunctionalSpec:
    """K(x, Tx, ..., T^{n-1}x) evaluated row-wise on (count, path_length) symbol arrays."""

    name: str
    n: int
    path_length: int
    lips: np.ndarray
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __post_init__(self):
        lips = np.asarray(self.lips, dtype=float)
        if np.any(lips < 0) or not np.all(np.isfinite(lips)):
            raise DomainError("Lipschitz constants must be finite and nonnegative")
        object.__setattr__(self, "lips", lips)

    @property
    def sum_lip2(self) -> float:
        return float(np.sum(self.lips**2))

    def evaluate(self, paths) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_2d(paths)), dtype=float)


def birkhoff_functional(f: ObservableSpec, n: int) -> FunctionalSpec:
    def fn(p):
        return f.windows(p[:, : n + f.depth - 1]).sum(axis=1)

    return FunctionalSpec(f"birkhoff[{f.label or 'f'}]", n, n + f.depth - 1, np.full(n, f.lip), fn)


def single_coordinate(f: ObservableSpec) -> FunctionalSpec:
    return FunctionalSpec(f"coord[{f.label or 'f'}]", 1, f.depth, np.array([f.lip]), lambda p: f.windows(p[:, : f.depth])[:, 0])


def _w1_tree_rows(E, mu, q, theta):
    m = round(math.log(E.shape[1], q))
    diff = E - mu[None, :]
    total = np.zeros(E.shape[0])
    for j in range(m, 0, -1):
        total += 0.5 * (theta ** (j - 1) - theta**j) * np.abs(diff).sum(axis=1)
        diff = diff.reshape(E.shape[0], -1, q).sum(axis=2)
    return total


def kantorovich_functional(mu: BlockMeasure, n: int, theta: float = DEFAULT_THETA) -> FunctionalSpec:
    """d_K(E_n(x), mu) through the depth-m tree closed form; Lip_i = 1/n."""
    m, q = mu.depth, mu.alphabet

    def fn(p):
        idx = window_indices(p[:, : n + m - 1], m, q)
        offs = np.arange(idx.shape[0])[:, None] * q**m
        E = np.bincount((idx + offs).ravel(), minlength=idx.shape[0] * q**m).reshape(idx.shape[0], -1) / n
        return _w1_tree_rows(E, mu.masses, q, theta)

    return FunctionalSpec(f"kantorovich[m={m}]", n, n + m - 1, np.full(n, 1.0 / n), fn)


def shadowing_functional(a, n: int, theta: float = DEFAULT_THETA) -> FunctionalSpec:
    """S_A(x, n) for the cylinder A = [a]; Lip_i = 1/n."""
    a = tuple(int(s) for s in a)
    return FunctionalSpec(
        f"shadowing[{''.join(map(str, a))}]", n, n, np.full(n, 1.0 / n), lambda p: shadowing_score(p[:, :n], a, n, theta)
    )


def block_max_functional(masses, k: int, n: int, alphabet: int = 2, theta: float = DEFAULT_THETA) -> FunctionalSpec:
    """max_w |freq_n(x, w) - mu[w]| over A^k, with the envelope Lip_j = theta^-k / (n-k+1)."""
    masses = np.asarray(masses, dtype=float)
    N = n - k + 1

    def fn(p):
        return np.abs(block_counts(p[:, :n], k, n, alphabet) / N - masses[None, :]).max(axis=1)

    return FunctionalSpec(f"blockmax[k={k}]", N, n, np.full(N, theta ** (-k) / N), fn)


def scaled(K: FunctionalSpec, c: float) -> FunctionalSpec:
    return FunctionalSpec(f"{c}*{K.name}", K.n, K.path_length, K.lips * abs(c), lambda p: c * K.fn(p))


# --------------------------------------------------------------------------
# sampling


def sample_functional(K: FunctionalSpec, model: MarkovModel, samples: int, seed) -> np.ndarray:
    """K on ``samples`` independent paths, drawn in shards of deterministic size."""
    per = max(1, SHARD_SYMBOLS // K.path_length)
    n_shards = -(-samples // per)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    out = []
    for i, child in enumerate(ss.spawn(n_shards)):
        cnt = min(per, samples - i * per)
        out.append(K.evaluate(sample_paths(model, K.path_length, cnt, child)))
    return np.concatenate(out)


# --------------------------------------------------------------------------
# constant fitting


@dataclass(frozen=True)
class MGFFit:
    C: float
    se: float
    t_grid: tuple
    ratios: tuple
    dropped: tuple = ()


def _fit_values(v, sum_lip2, t):
    c = v - v.mean()
    lm = logsumexp(np.outer(t, c), axis=1) - math.log(len(c))
    return lm / (t * t * sum_lip2)


def _small_t_limit(v, sum_lip2):
    # log E e^{t(K-EK)} / t^2 -> Var(K) / 2 as t -> 0
    return float(np.var(v)) / (2 * sum_lip2)


def fit_constant(values, sum_lip2: float, tau=DEFAULT_TAU, groups: int = 20) -> MGFFit:
    """C_hat from sampled values; grid t = +-tau / sqrt(sum Lip^2); delete-group jackknife.

    The t -> 0 limit Var(K) / (2 sum Lip^2) is part of the grid, so C_hat is
    never below the value forced by the second-order term of the MGF.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 1000:
        raise DomainError("the MGF fit needs at least 1000 samples")
    if sum_lip2 <= 0:
        raise DomainError("sum of squared Lipschitz constants must be positive")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("tau grid must be positive (the symmetric grid is built internally)")
    t = np.concatenate([-tau[::-1], tau]) / math.sqrt(sum_lip2)
    with np.errstate(over="ignore", invalid="ignore"):
        r = _fit_values(v, sum_lip2, t)
    ok = np.isfinite(r)
    dropped = tuple(t[~ok].tolist())
    if dropped:
        warnings.warn(f"MGF overflow at t={dropped}; dropped from the fit", RuntimeWarning, stacklevel=2)
    t = t[ok]
    if len(t) == 0:
        raise DomainError("every t on the grid overflowed")
    C = max(float(r[ok].max()), _small_t_limit(v, sum_lip2))
    G = min(groups, len(v))
    parts = np.array_split(np.arange(len(v)), G)
    jk = np.array(
        [max(_fit_values(w, sum_lip2, t).max(), _small_t_limit(w, sum_lip2)) for w in (np.delete(v, idx) for idx in parts)]
    )
    se = math.sqrt((G - 1) / G * np.sum((jk - jk.mean()) ** 2))
    return MGFFit(C, se, tuple(t.tolist()), tuple(r[ok].tolist()), dropped)


def mgf_constant_fit(K: FunctionalSpec, model: MarkovModel, samples: int, seed=0, tau=DEFAULT_TAU) -> MGFFit:
    if samples < 1000:
        raise DomainError("the MGF fit needs at least 1000 samples")
    return fit_constant(sample_functional(K, model, samples, seed), K.sum_lip2, tau)


# --------------------------------------------------------------------------
# tails


def wilson(k, n, level=0.95):
    """Wilson score interval(s) for k successes out of n."""
    k = np.asarray(k, dtype=float)
    z = stats.norm.ppf(0.5 + level / 2)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    # exact endpoints at k = 0 and k = n (rounding would leave them at ~1e-18)
    lo = np.where(k == 0, 0.0, np.clip(mid - half, 0, 1))
    hi = np.where(k == n, 1.0, np.clip(mid + half, 0, 1))
    return lo, hi


@dataclass
class ConcentrationReport:
    functional: str
    n: int
    samples: int
    sum_lip2: float
    C: float
    C_se: float
    u: np.ndarray
    upper: np.ndarray
    upper_lo: np.ndarray
    upper_hi: np.ndarray
    two_sided: np.ndarray
    two_lo: np.ndarray
    two_hi: np.ndarray
    bound: np.ndarray
    flags: np.ndarray
    flags_two: np.ndarray
    order: int
    seed: object
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.flags.all() and self.flags_two.all())

    def to_json(self) -> dict:
        d = asdict(self)
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, default=str)

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "p_hat", "ci_lo", "ci_hi", "bound", "flag"])
        for i in range(len(self.u)):
            w.writerow(
                [repr(float(self.u[i])), repr(float(self.upper[i])), repr(float(self.upper_lo[i])),
                 repr(float(self.upper_hi[i])), repr(float(self.bound[i])), int(self.flags[i])]
            )


def gaussian_bound(u, C, sum_lip2):
    """exp(-u^2 / (4 C sum Lip^2)); 1 at u = 0 and 0 when C = 0 and u > 0."""
    u = np.asarray(u, dtype=float)
    if C <= 0:
        return np.where(u > 0, 0.0, 1.0)
    return np.exp(-(u**2) / (4 * C * sum_lip2))


def tail_report(values, center, fit: MGFFit, sum_lip2, u_grid, name="K", n=0, order=0, seed=None) -> ConcentrationReport:
    v = np.asarray(values, dtype=float) - center
    u = np.asarray(u_grid, dtype=float)
    N = len(v)
    ku = (v[None, :] >= u[:, None]).sum(axis=1)
    ka = (np.abs(v)[None, :] >= u[:, None]).sum(axis=1)
    ulo, uhi = wilson(ku, N)
    alo, ahi = wilson(ka, N)
    b = gaussian_bound(u, fit.C, sum_lip2)
    return ConcentrationReport(
        name, n, N, sum_lip2, fit.C, fit.se, u, ku / N, ulo, uhi, ka / N, alo, ahi, b,
        ulo <= b, alo <= np.minimum(2 * b, 1.0) + 0.0, order, seed,
    )


def default_u_grid(values, points=17, sds=4.0):
    sd = float(np.std(values))
    return np.linspace(0.0, sds * sd, points) if sd > 0 else np.linspace(0.0, 1.0, points)


def tail_curve(K: FunctionalSpec, model: MarkovModel, samples: int, u_grid=None, seed=0, tau=DEFAULT_TAU) -> ConcentrationReport:
    """Upper and two-sided tails of K - EK against the Gaussian bound.

    EK and C_hat come from one batch, the tails from an independent one.
    """
    if samples < 1000:
        raise DomainError("tail curves need at least 1000 samples")
    s_center, s_tail = np.random.SeedSequence(seed).spawn(2)
    ref = sample_functional(K, model, samples, s_center)
    fit = fit_constant(ref, K.sum_lip2, tau) if np.ptp(ref) > 0 else MGFFit(0.0, 0.0, (), ())
    vals = sample_functional(K, model, samples, s_tail)
    u = default_u_grid(ref) if u_grid is None else u_grid
    return tail_report(vals, ref.mean(), fit, K.sum_lip2, u, K.name, K.n, model.order, seed)


def _var_se(v):
    """Standard error of the sample variance, exact finite-sample form (mu4 - s^4 (N-3)/(N-1)) / N."""
    N = len(v)
    s2 = float(np.var(v, ddof=1))
    m4 = float(np.mean((v - v.mean()) ** 4))
    return math.sqrt(max(m4 - s2 * s2 * (N - 3) / (N - 1), 0.0) / N)


@dataclass(frozen=True)
class VarianceCheck:
    variance: float
    bound: float
    se: float
    C: float
    passed: bool


def variance_check(K: FunctionalSpec, model: MarkovModel, samples: int, seed=0, tau=DEFAULT_TAU) -> VarianceCheck:
    """Sample variance of K against 2 C_hat sum Lip^2 (C_hat from an independent batch)."""
    s_fit, s_var = np.random.SeedSequence(seed).spawn(2)
    ref = sample_functional(K, model, samples, s_fit)
    fit = fit_constant(ref, K.sum_lip2, tau) if np.ptp(ref) > 0 else MGFFit(0.0, 0.0, (), ())
    v = sample_functional(K, model, samples, s_var)
    var = float(np.var(v, ddof=1))
    se = _var_se(v)
    bound = 2 * fit.C * K.sum_lip2
    # both batches carry sampling noise: the tested variance and the fitted C
    slack = 1.96 * (math.hypot(se, _var_se(ref)) + 2 * fit.se * K.sum_lip2)
    return VarianceCheck(var, bound, se, fit.C, var <= bound + slack)


def birkhoff_potential_tail(
    S: SpectralData,
    phi: PotentialSpec,
    n: int,
    model: MarkovModel,
    samples: int,
    u_grid=None,
    seed=0,
    psi: ObservableSpec | None = None,
    lip_phi: float | None = None,
    depth: int | None = None,
    tau=DEFAULT_TAU,
    min_count: int = 20,
) -> ConcentrationReport:
    """Tails of (1/n) S_n psi - int psi dmu in the d_phi normalization (default psi = -phi).

    The report's ``extra`` holds the regression of log P(upper tail) on n u^2.
    """
    q = S.alphabet
    if psi is None:
        D = depth or min(S.depth, 10)
        psi = ObservableSpec(D, -phi.evaluate(all_words(D, q)), q, label="-phi")
    if lip_phi is None:
        if phi.profile is None:
            raise ConfigError("psi needs a d_phi Lipschitz constant (no variation profile available)")
        lip_phi = lipschitz_seminorm(psi.table, psi.depth, q, phi.profile)
    mean = psi.mean(S.marginal(psi.depth)) if psi.depth <= S.depth else None

    def fn(p):
        return psi.windows(p[:, : n + psi.depth - 1]).sum(axis=1) / n

    K = FunctionalSpec(f"birkhoff-phi[{psi.label}]", n, n + psi.depth - 1, np.full(n, lip_phi / n), fn)
    s_center, s_tail = np.random.SeedSequence(seed).spawn(2)
    ref = sample_functional(K, model, samples, s_center)
    fit = fit_constant(ref, K.sum_lip2, tau) if np.ptp(ref) > 0 else MGFFit(0.0, 0.0, (), ())
    vals = sample_functional(K, model, samples, s_tail)
    u = default_u_grid(ref) if u_grid is None else u_grid
    rep = tail_report(vals, ref.mean(), fit, K.sum_lip2, u, K.name, n, model.order, seed)
    sel = (rep.upper * rep.samples >= min_count) & (rep.u > 0)
    extra = {"lip_phi": lip_phi, "mean_psi": mean, "fit_points": int(sel.sum())}
    if sel.sum() >= 3:
        res = stats.linregress(n * rep.u[sel] ** 2, np.log(rep.upper[sel]))
        extra.update(slope=float(res.slope), r2=float(res.rvalue**2))
    rep.extra = extra
    return rep


# --------------------------------------------------------------------------
# proof-side constant


def summed_eps(eps, floor: float = 1e-13, window: int = 6) -> float:
    """sum_{k>=1} eps_k with an extrapolated tail beyond the supplied horizon.

    ``eps[0]`` is eps_1.  The tail is geometric or power-law, whichever fits
    the last ``window`` positive entries better.
    """
    e = np.asarray(eps, dtype=float)
    if np.any(e < 0):
        raise DomainError("eps must be nonnegative")
    e = np.where(e < floor, 0.0, e)
    head = float(e.sum())
    if head == 0 or e[-1] == 0:
        return head
    k = np.arange(1, len(e) + 1, dtype=float)
    pos = np.flatnonzero(e > 0)
    pos = pos[-window:]
    if len(pos) < 3:
        raise UnsupportedRegimeError("too few positive eps values to extrapolate the tail")
    y = np.log(e[pos])
    g = np.polyfit(k[pos], y, 1, full=True)
    p = np.polyfit(np.log(k[pos]), y, 1, full=True)
    rss_g = float(g[1][0]) if len(g[1]) else 0.0
    rss_p = float(p[1][0]) if len(p[1]) else 0.0
    K = len(e)
    if rss_g <= rss_p:
        r = math.exp(g[0][0])
        if r >= 1:
            raise UnsupportedRegimeError("eps shows no decay")
        return head + e[-1] * r / (1 - r)
    s = -p[0][0]
    if s <= 1.0 + 1e-3:
        raise UnsupportedRegimeError(f"eps decays like k^-{s:.3g}, not summable")
    return head + e[-1] * K / (s - 1)


def constant_assembler(eps, c1: float, c2: float, theta: float = DEFAULT_THETA, C_bg: float = 1.0) -> float:
    """Diagnostic proof-side constant 1 + (C_bg (c1 + 2 c2))^2 (1 - theta)^-2 (sum eps_k)^2."""
    if not 0 < theta < 1:
        raise DomainError("theta must lie in (0, 1)")
    total = summed_eps(eps)
    return 1.0 + (C_bg * (c1 + 2 * c2)) ** 2 * (1 - theta) ** -2 * total**2


__all__ = [
    "FunctionalSpec",
    "birkhoff_functional",
    "single_coordinate",
    "kantorovich_functional",
    "shadowing_functional",
    "block_max_functional",
    "scaled",
    "sample_functional",
    "MGFFit",
    "fit_constant",
    "mgf_constant_fit",
    "wilson",
    "ConcentrationReport",
    "gaussian_bound",
    "tail_curve",
    "VarianceCheck",
    "variance_check",
    "birkhoff_potential_tail",
    "summed_eps",
    "constant_assembler",
]
