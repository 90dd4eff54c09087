"""Randomness primitives: seeded streams, urn sampling, rewards and budgets.

Everything stochastic in the package flows through here. Samplers come in two
flavours: a convenience form that pulls from an :class:`RngStream`, and a
``*_from_*`` form that consumes pre-drawn uniforms/normals. The batch engine
uses the latter so a whole block of replications can advance in lockstep
while each replication still reads only from its own stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import CalibrationError, CapacityError, DegenerateUrnError, SpecError

FAMILIES = ("bernoulli", "poisson", "exponential")

# Calibration draws for marginals without a closed-form induced correlation.
CALIBRATION_DRAWS = 1_000_000
_CALIBRATION_SEED = 0x5EED_C0DE


@dataclass
class RngStream:
    """Independent random stream keyed by ``(seed, stream_id)``.

    The stream id is normally the replication index; distinct ids give
    statistically independent generators via :class:`numpy.random.SeedSequence`.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        ss = np.random.SeedSequence([int(self.seed) & (2**64 - 1), int(self.stream_id) & (2**64 - 1)])
        self.generator = np.random.default_rng(ss)

    def random(self, size=None) -> np.ndarray:
        return self.generator.random(size)

    def standard_normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)


# ---------------------------------------------------------------------------
# Multivariate hypergeometric urn
# ---------------------------------------------------------------------------

def mvhyper_sample_from_uniforms(budget, weights, uniforms) -> np.ndarray:
    """Sequential unit-decrement draws driven by pre-drawn uniforms.

    Broadcasts over leading axes: ``weights`` is ``(..., d)``, ``budget`` is
    ``(...)`` and ``uniforms`` is ``(..., m)`` with ``m >= max(budget)``.
    Draw ``j`` is consumed only where ``j < budget``.
    """
    w = np.array(weights, dtype=float, copy=True)
    budget = np.asarray(budget)
    u = np.asarray(uniforms, dtype=float)
    d = w.shape[-1]
    if np.any(w < 0):
        raise SpecError("urn weights must be nonnegative")
    active = budget > 0
    if np.any(active & (w.sum(axis=-1) <= 0)):
        raise DegenerateUrnError("all urn weights are zero")
    capacity = np.ceil(w).sum(axis=-1)
    if np.any(budget > capacity):
        raise CapacityError(
            f"budget {int(np.max(budget))} exceeds urn capacity {int(np.min(capacity))}")
    if np.any(budget > u.shape[-1]):
        raise ValueError("not enough uniforms for the requested budget")

    x = np.zeros(w.shape, dtype=np.int64)
    arange = np.arange(d)
    for j in range(int(np.max(budget, initial=0))):
        take = j < budget
        cum = np.cumsum(w, axis=-1)
        target = u[..., j] * cum[..., -1]
        k = np.sum(cum <= target[..., None], axis=-1)
        # guard the k == d rounding edge: fall back to the last positive arm
        last_pos = d - 1 - np.argmax((w > 0)[..., ::-1], axis=-1)
        k = np.minimum(k, last_pos)
        onehot = (arange == k[..., None]) & take[..., None]
        x += onehot
        w = np.maximum(w - onehot, 0.0)
    return x


def mvhyper_sample(budget: int, weights: Sequence[float], rng: RngStream) -> np.ndarray:
    """Draw ``budget`` units without replacement from an urn with real weights.

    Each draw picks arm ``k`` with probability ``w_k / |w|`` and then removes one
    unit (``w_k <- max(w_k - 1, 0)``). On integer weights this is exactly the
    multivariate hypergeometric law.

    Raises:
        CapacityError: ``budget`` exceeds ``sum(ceil(weights))``.
        DegenerateUrnError: every weight is zero.
    """
    budget = int(budget)
    if budget < 0:
        raise SpecError("budget must be nonnegative")
    u = rng.random(budget)
    return mvhyper_sample_from_uniforms(np.int64(budget), np.asarray(weights, float), u)


def mvhyper_pmf(budget: int, weights: Sequence[int], x: Sequence[int]) -> float:
    """Exact multivariate hypergeometric probability of the count vector ``x``."""
    w = np.asarray(weights)
    if not np.all(np.equal(np.mod(w, 1), 0)):
        raise SpecError("mvhyper_pmf requires integral weights")
    w = w.astype(np.int64)
    x = np.asarray(x, dtype=np.int64)
    if x.shape != w.shape:
        raise SpecError("x and weights must have the same length")
    if x.sum() != budget or np.any(x < 0) or np.any(x > w):
        return 0.0
    num = 1
    for wk, xk in zip(w.tolist(), x.tolist()):
        num *= math.comb(wk, xk)
    return num / math.comb(int(w.sum()), int(budget))


# ---------------------------------------------------------------------------
# Marginals and copula
# ---------------------------------------------------------------------------

def marginal_variance(family: str, mean: float) -> float:
    if family == "bernoulli":
        return mean * (1.0 - mean)
    if family == "poisson":
        return mean
    if family == "exponential":
        return mean * mean
    raise SpecError(f"unknown family {family!r}")


@lru_cache(maxsize=256)
def _poisson_cdf_table(mean: float) -> np.ndarray:
    kmax = int(mean + 40.0 * math.sqrt(mean) + 40)
    return stats.poisson.cdf(np.arange(kmax + 1), mean)


def marginal_from_normal(family: str, mean, z: np.ndarray) -> np.ndarray:
    """Map latent standard normals to the marginal law by inverse CDF.

    The map is nondecreasing in ``z`` for every family, so a positive latent
    correlation induces a positive reward correlation.
    """
    z = np.asarray(z, dtype=float)
    if family == "bernoulli":
        return (z > special.ndtri(1.0 - np.asarray(mean))).astype(float)
    if family == "exponential":
        return -np.asarray(mean) * special.log_ndtr(-z)
    if family == "poisson":
        u = special.ndtr(z)
        if np.ndim(mean) == 0:
            return np.searchsorted(_poisson_cdf_table(float(mean)), u, side="right").astype(float)
        return stats.poisson.ppf(u, mean)
    raise SpecError(f"unknown family {family!r}")


def _bvn_cdf(h: float, k: float, rho: float) -> float:
    # Plackett: d/drho Phi2(h, k; rho) = phi2(h, k; rho)
    def density(r):
        s = 1.0 - r * r
        return math.exp(-(h * h - 2 * r * h * k + k * k) / (2 * s)) / (2 * math.pi * math.sqrt(s))

    val, _ = integrate.quad(density, 0.0, rho, epsabs=1e-14, epsrel=1e-12)
    return special.ndtr(h) * special.ndtr(k) + val


def _bernoulli_pair_corr(p1: float, p2: float, rho_z: float) -> float:
    a1, a2 = special.ndtri(p1), special.ndtri(p2)
    if rho_z >= 1.0:
        both = min(p1, p2)
    else:
        both = _bvn_cdf(a1, a2, rho_z)
    return (both - p1 * p2) / math.sqrt(p1 * (1 - p1) * p2 * (1 - p2))


@lru_cache(maxsize=1)
def _calibration_normals() -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(_CALIBRATION_SEED)
    return rng.standard_normal(CALIBRATION_DRAWS), rng.standard_normal(CALIBRATION_DRAWS)


def induced_correlation(m1: tuple[str, float], m2: tuple[str, float], rho_z: float) -> float:
    """Pearson correlation of two marginals coupled by a Gaussian copula.

    Closed form for Bernoulli pairs; otherwise a Monte Carlo estimate on a
    fixed set of common random numbers, which keeps the map deterministic.
    """
    if m1[0] == "bernoulli" and m2[0] == "bernoulli":
        return _bernoulli_pair_corr(m1[1], m2[1], rho_z)
    z1, w = _calibration_normals()
    if rho_z >= 1.0:
        z2 = z1
    else:
        z2 = rho_z * z1 + math.sqrt(1.0 - rho_z * rho_z) * w
    x1 = marginal_from_normal(m1[0], m1[1], z1)
    x2 = marginal_from_normal(m2[0], m2[1], z2)
    return float(np.corrcoef(x1, x2)[0, 1])


def max_attainable_correlation(m1: tuple[str, float], m2: tuple[str, float]) -> float:
    """Upper Frechet bound of the Pearson correlation for the two marginals."""
    return induced_correlation(m1, m2, 1.0)


@lru_cache(maxsize=256)
def _calibrate_cached(m1, m2, target, tol):
    if target == 0.0:
        return 0.0
    bound = max_attainable_correlation(m1, m2)
    if target >= bound:
        raise CalibrationError(
            f"correlation {target} unattainable for {m1} x {m2}; upper bound is {bound:.4f}")

    def gap(r):
        return induced_correlation(m1, m2, r) - target

    if m1[0] == "bernoulli" and m2[0] == "bernoulli":
        return float(optimize.brentq(gap, 0.0, 1.0 - 1e-15, xtol=1e-13))
    lo, hi = 0.0, 1.0
    mid = 0.5
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        g = gap(mid)
        if abs(g) < tol and hi - lo < 1e-6:
            break
        if g < 0:
            lo = mid
        else:
            hi = mid
    return mid


def calibrate_copula(m1: tuple[str, float], m2: tuple[str, float], rho_target: float,
                     tol: float = 0.005) -> float:
    """Latent Gaussian correlation that reproduces ``rho_target`` between marginals.

    Marginals are ``(family, mean)`` pairs. Bisection runs to convergence on a
    deterministic estimate of the induced correlation, so the result always
    satisfies ``|induced - rho_target| < tol``.

    Raises:
        CalibrationError: ``rho_target`` is at or above the attainable bound.
    """
    if rho_target < 0:
        raise CalibrationError("only nonnegative target correlations are supported")
    return _calibrate_cached(tuple(m1), tuple(m2), float(rho_target), float(tol))


# ---------------------------------------------------------------------------
# Environment specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RewardSpec:
    """Per-arm reward marginals plus a uniform pairwise correlation target.

    ``drift``, when given, maps a round index to the vector of means in force at
    that round; the copula stays calibrated at the base means.
    """

    families: tuple[str, ...]
    means: tuple[float, ...]
    rho: float = 0.0
    drift: Callable[[int], Sequence[float]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(f.lower() for f in self.families))
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        if len(self.families) != len(self.means):
            raise SpecError("families and means must have equal length")
        if len(self.means) < 1:
            raise SpecError("at least one arm is required")
        for fam, mu in zip(self.families, self.means):
            if fam not in FAMILIES:
                raise SpecError(f"unknown family {fam!r}; expected one of {FAMILIES}")
            if not mu > 0:
                raise SpecError("all means must be strictly positive")
            if fam == "bernoulli" and not mu < 1:
                raise SpecError("Bernoulli means must lie in (0, 1)")
        if not 0.0 <= self.rho < 1.0:
            raise SpecError("rho must lie in [0, 1)")

    @classmethod
    def of(cls, family: str, means: Sequence[float], rho: float = 0.0, drift=None) -> "RewardSpec":
        return cls(tuple([family] * len(means)), tuple(means), rho, drift)

    @property
    def d(self) -> int:
        return len(self.means)

    @property
    def variances(self) -> np.ndarray:
        return np.array([marginal_variance(f, m) for f, m in zip(self.families, self.means)])

    @property
    def covariance(self) -> np.ndarray:
        """Target reward covariance matrix (uniform correlation ``rho``)."""
        sd = np.sqrt(self.variances)
        corr = np.full((self.d, self.d), self.rho)
        np.fill_diagonal(corr, 1.0)
        return corr * np.outer(sd, sd)

    def latent_correlation(self) -> np.ndarray:
        """Latent Gaussian correlation matrix after pairwise calibration."""
        p = np.eye(self.d)
        if self.rho == 0.0:
            return p
        for i in range(self.d):
            for j in range(i + 1, self.d):
                r = calibrate_copula((self.families[i], self.means[i]),
                                     (self.families[j], self.means[j]), self.rho)
                p[i, j] = p[j, i] = r
        return p

    def cholesky(self) -> np.ndarray:
        return _latent_cholesky(self.families, self.means, self.rho)

    def means_at(self, t: int) -> np.ndarray:
        if self.drift is None:
            return np.asarray(self.means)
        return np.asarray(self.drift(t), dtype=float)


@lru_cache(maxsize=128)
def _latent_cholesky(families, means, rho) -> np.ndarray:
    spec = RewardSpec(families, means, rho)
    try:
        return np.linalg.cholesky(spec.latent_correlation())
    except np.linalg.LinAlgError as exc:
        raise SpecError("calibrated latent correlation matrix is not positive definite") from exc


def rewards_from_normals(spec: RewardSpec, t: int, eps: np.ndarray) -> np.ndarray:
    """Turn independent standard normals ``(..., d)`` into a reward vector."""
    eps = np.asarray(eps, dtype=float)
    z = eps if spec.rho == 0.0 else eps @ spec.cholesky().T
    means = spec.means_at(t)
    out = np.empty_like(z)
    for k, fam in enumerate(spec.families):
        out[..., k] = marginal_from_normal(fam, float(means[k]), z[..., k])
    return out


def draw_rewards(spec: RewardSpec, t: int, rng: RngStream) -> np.ndarray:
    """Reward vector for every arm at round ``t``; the engine keeps only played arms."""
    return rewards_from_normals(spec, t, rng.standard_normal(spec.d))


@dataclass(frozen=True)
class BudgetSpec:
    """Reinforcement budget drawn uniformly from a finite support of positive integers."""

    support: tuple[int, ...] = (1,)

    def __post_init__(self):
        sup = tuple(int(s) for s in self.support)
        if not sup:
            raise SpecError("budget support is empty")
        if any(s < 1 for s in sup):
            raise SpecError("budget support must contain positive integers only")
        object.__setattr__(self, "support", sup)

    @classmethod
    def constant(cls, n: int) -> "BudgetSpec":
        return cls((n,))

    @property
    def n_max(self) -> int:
        return max(self.support)

    @property
    def N(self) -> float:
        return float(np.mean(self.support))

    @property
    def Q(self) -> float:
        return float(np.mean(np.square(self.support)))

    def from_uniforms(self, u) -> np.ndarray:
        sup = np.asarray(self.support, dtype=np.int64)
        idx = np.minimum((np.asarray(u) * len(sup)).astype(np.int64), len(sup) - 1)
        return sup[idx]


def draw_budget(spec: BudgetSpec, rng: RngStream) -> int:
    return int(spec.from_uniforms(rng.random()))
