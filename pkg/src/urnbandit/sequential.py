"""Group sequential design on the information-fraction scale.

Boundaries are computed for the canonical joint law ``Cov(Z_i, Z_j) =
sqrt(t_i / t_j)`` by writing ``Z_k = S_k / sqrt(t_k)`` with ``S`` a Brownian
motion on the information clock and propagating the sub-density of ``S`` on
the continuation region from look to look.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import optimize, special, stats

from .errors import PlanningError, SpecError

GRID_NODES = 1025
GRID_SD = 8.0


# ---------------------------------------------------------------------------
# Spending functions
# ---------------------------------------------------------------------------

SPENDING_FAMILIES = ("pocock", "obf", "power", "hsd")


@dataclass(frozen=True)
class SpendingFunction:
    """Cumulative alpha spent as a function of information fraction.

    Families: ``pocock`` (log form), ``obf`` (O'Brien-Fleming-like),
    ``power`` (``alpha * t**param``, ``param > 0``) and ``hsd``
    (Hwang-Shih-DeCani with ``param != 0``).
    """

    family: str = "obf"
    alpha: float = 0.05
    param: float | None = None

    def __post_init__(self):
        fam = self.family.lower()
        aliases = {"obrien-fleming": "obf", "of": "obf", "hwang-shih-decani": "hsd", "hs": "hsd"}
        fam = aliases.get(fam, fam)
        object.__setattr__(self, "family", fam)
        if fam not in SPENDING_FAMILIES:
            raise SpecError(f"unknown spending family {self.family!r}")
        if not 0 < self.alpha < 1:
            raise SpecError("alpha must lie in (0, 1)")
        if fam == "power":
            if self.param is None:
                object.__setattr__(self, "param", 1.0)
            if not self.param > 0:
                raise SpecError("power spending needs param > 0")
        if fam == "hsd":
            if self.param is None:
                object.__setattr__(self, "param", -4.0)
            if self.param == 0:
                raise SpecError("Hwang-Shih-DeCani spending needs param != 0")

    def __call__(self, t: float) -> float:
        return spending_value(self, t)


def spending_value(f: SpendingFunction, t: float) -> float:
    if not 0.0 <= t <= 1.0:
        raise SpecError(f"information fraction {t} outside [0, 1]")
    a = f.alpha
    if f.family == "pocock":
        return a * math.log(1.0 + (math.e - 1.0) * t)
    if f.family == "obf":
        if t == 0.0:
            return 0.0
        return float(stats.norm.sf(stats.norm.isf(a) / math.sqrt(t)))
    if f.family == "power":
        return a * t ** f.param
    g = f.param
    return a * (1.0 - math.exp(-g * t)) / (1.0 - math.exp(-g))


def information_target(alpha: float, eta: float, delta: float) -> float:
    """Fixed-design information ``((z_alpha + z_eta) / delta)^2``."""
    if not delta > 0:
        raise PlanningError("design effect must be positive")
    if not (0 < alpha < 0.5 and 0 < eta < 0.5):
        raise PlanningError("alpha and eta must lie in (0, 0.5)")
    return ((stats.norm.isf(alpha) + stats.norm.isf(eta)) / delta) ** 2


# ---------------------------------------------------------------------------
# Sub-density recursion
# ---------------------------------------------------------------------------

def _simpson_weights(m: int, h: float) -> np.ndarray:
    w = np.ones(m)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def _check_fractions(fractions) -> np.ndarray:
    t = np.asarray(fractions, dtype=float)
    if t.ndim != 1 or len(t) == 0:
        raise SpecError("need at least one information fraction")
    if t[0] <= 0 or t[-1] > 1 + 1e-12 or np.any(np.diff(t) <= 0):
        raise SpecError("information fractions must be strictly increasing in (0, 1]")
    return t


class _Recursion:
    """Sub-density of the score process on the continuation region."""

    def __init__(self, drift: float, nodes: int = GRID_NODES):
        if nodes < 257 or nodes % 2 == 0:
            raise SpecError("grid needs an odd number of nodes, at least 257")
        self.drift = drift
        self.nodes = nodes
        self.t_prev = 0.0
        self.grid = None      # None means point mass at 0 (before the first look)
        self.dens = None
        self.weights = None

    def _mass_above(self, b: float, t: float) -> float:
        dt = t - self.t_prev
        sd = math.sqrt(dt)
        if self.grid is None:
            return float(special.ndtr(-(b - self.drift * t) / sd))
        tail = special.ndtr(-(b - self.grid - self.drift * dt) / sd)
        return float(np.dot(self.weights * self.dens, tail))

    def exit_probability(self, b: float, t: float) -> float:
        if math.isinf(b):
            return 0.0
        return self._mass_above(b, t)

    def advance(self, b: float, t: float) -> None:
        dt = t - self.t_prev
        sd = math.sqrt(dt)
        mean = self.drift * t
        lo = mean - GRID_SD * math.sqrt(t)
        hi = b if not math.isinf(b) else mean + GRID_SD * math.sqrt(t)
        hi = max(hi, lo + 1e-9)
        grid = np.linspace(lo, hi, self.nodes)
        if self.grid is None:
            dens = stats.norm.pdf(grid, loc=mean, scale=sd)
        else:
            z = (grid[:, None] - self.grid[None, :] - self.drift * dt) / sd
            kernel = np.exp(-0.5 * z * z) / (sd * math.sqrt(2 * math.pi))
            dens = kernel @ (self.weights * self.dens)
        self.grid, self.dens, self.t_prev = grid, dens, t
        self.weights = _simpson_weights(self.nodes, grid[1] - grid[0])


@dataclass
class BoundaryTable:
    fractions: np.ndarray
    boundaries: np.ndarray
    cumulative_alpha: np.ndarray
    increments: np.ndarray
    exit_probabilities: np.ndarray


def compute_boundaries(fractions: Sequence[float], spending: SpendingFunction,
                       alpha: float | None = None, nodes: int = GRID_NODES) -> BoundaryTable:
    """Efficacy boundaries matching each look's alpha increment under the canonical law.

    Looks with a nonpositive increment get an infinite boundary and a warning.
    """
    t = _check_fractions(fractions)
    if alpha is not None and not math.isclose(alpha, spending.alpha):
        spending = SpendingFunction(spending.family, alpha, spending.param)
    cum = np.array([spending_value(spending, float(tk)) for tk in t])
    inc = np.diff(np.concatenate([[0.0], cum]))
    rec = _Recursion(0.0, nodes)
    bounds = np.empty(len(t))
    exits = np.empty(len(t))
    for k, (tk, target) in enumerate(zip(t, inc)):
        if target <= 0:
            warnings.warn(f"no alpha spent at look {k + 1}; boundary set to +inf", stacklevel=2)
            b = math.inf
        else:
            sd = math.sqrt(tk)
            lo, hi = -GRID_SD * sd, GRID_SD * sd * 2
            if rec.exit_probability(lo, tk) < target:
                raise PlanningError(f"alpha increment at look {k + 1} cannot be met")
            b = optimize.brentq(lambda x: rec.exit_probability(x, tk) - target, lo, hi,
                                xtol=1e-13, rtol=1e-13, maxiter=500)
        exits[k] = rec.exit_probability(b, tk)
        bounds[k] = b / math.sqrt(tk)
        rec.advance(b, tk)
    return BoundaryTable(t, bounds, cum, inc, exits)


def crossing_probabilities(fractions: Sequence[float], boundaries: Sequence[float],
                           drift: float = 0.0, nodes: int = GRID_NODES) -> np.ndarray:
    """Per-look exit probabilities when ``E[Z_k] = drift * sqrt(t_k)``."""
    t = _check_fractions(fractions)
    rec = _Recursion(drift, nodes)
    out = np.empty(len(t))
    for k, (tk, c) in enumerate(zip(t, boundaries)):
        b = c * math.sqrt(tk)
        out[k] = rec.exit_probability(b, tk)
        rec.advance(b, tk)
    return out


def inflation_factor(fractions: Sequence[float], spending: SpendingFunction, eta: float,
                     boundaries: Sequence[float] | None = None, tol: float = 1e-4) -> float:
    """Smallest ``L >= 1`` giving power ``1 - eta`` when information is inflated by ``L``.

    Under the design alternative ``E[Z_k] = (z_alpha + z_eta) sqrt(L t_k)``.
    """
    t = _check_fractions(fractions)
    if boundaries is None:
        boundaries = compute_boundaries(t, spending).boundaries
    base = stats.norm.isf(spending.alpha) + stats.norm.isf(eta)
    target = 1.0 - eta

    def power(L):
        return float(crossing_probabilities(t, boundaries, base * math.sqrt(L)).sum())

    if power(1.0) >= target - tol:
        return 1.0
    lo, hi = 1.0, 2.0
    while power(hi) < target:
        lo, hi = hi, hi * 2
        if hi > 1e3:
            raise PlanningError("inflation factor diverges; boundaries too conservative")
    while hi - lo > tol * 1e-2:
        mid = 0.5 * (lo + hi)
        if power(mid) < target:
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------------------
# Design and monitoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SequentialDesign:
    alpha: float
    eta: float
    delta: float
    fractions: tuple[float, ...]
    spending: SpendingFunction
    i_max: float
    inflation: float
    boundaries: tuple[float, ...]
    cumulative_alpha: tuple[float, ...]
    exit_probabilities: tuple[float, ...]

    @property
    def looks(self) -> int:
        return len(self.fractions)

    @property
    def i_max_inflated(self) -> float:
        return self.inflation * self.i_max


@lru_cache(maxsize=64)
def _plan_cached(alpha, eta, delta, fractions, family, param):
    spending = SpendingFunction(family, alpha, param)
    i_max = information_target(alpha, eta, delta)
    table = compute_boundaries(fractions, spending)
    L = inflation_factor(fractions, spending, eta, table.boundaries)
    return SequentialDesign(alpha, eta, delta, tuple(fractions), spending, i_max, L,
                            tuple(table.boundaries), tuple(table.cumulative_alpha),
                            tuple(table.exit_probabilities))


def plan_design(alpha: float = 0.05, power: float = 0.9, delta: float = 0.2, looks: int = 10,
                spending: str = "obf", param: float | None = None,
                fractions: Sequence[float] | None = None) -> SequentialDesign:
    """Information target, inflation factor and boundaries for a one-sided design."""
    if fractions is None:
        if looks < 1:
            raise PlanningError("need at least one look")
        fractions = [(k + 1) / looks for k in range(looks)]
    fr = tuple(float(x) for x in _check_fractions(fractions))
    return _plan_cached(float(alpha), float(1 - power), float(delta), fr, spending, param)


class Decision(str, enum.Enum):
    CONTINUE = "continue"
    REJECT = "reject"
    ACCEPT_AT_MAX = "accept_at_max"


@dataclass
class LookRecord:
    round: int
    information: float
    fraction: float
    statistic: float
    boundary: float
    rejected: bool


@dataclass
class MonitorState:
    next_look: int = 0
    records: list[LookRecord] = field(default_factory=list)
    decision: Decision = Decision.CONTINUE


def monitor_step(state: MonitorState, information: float, statistic: float,
                 design: SequentialDesign, round_index: int = 0) -> Decision:
    """Check every look whose information fraction has been reached.

    Fractions are taken against the inflated target. Returns the decision and
    records each look consumed.
    """
    if state.decision is not Decision.CONTINUE:
        raise RuntimeError("monitor already reached a terminal decision")
    target = design.i_max_inflated
    frac = information / target
    while state.next_look < design.looks and frac >= design.fractions[state.next_look]:
        j = state.next_look
        c = design.boundaries[j]
        hit = statistic > c
        state.records.append(LookRecord(round_index, information, frac, statistic, c, hit))
        if hit:
            state.decision = Decision.REJECT
            return state.decision
        state.next_look += 1
    if information >= target:
        state.decision = Decision.ACCEPT_AT_MAX
    return state.decision


# ---------------------------------------------------------------------------
# Information-fraction diagnostics
# ---------------------------------------------------------------------------

@dataclass
class InfoFractionReport:
    gamma: float
    calendar: np.ndarray
    empirical: np.ndarray
    limit: np.ndarray

    def inverse(self, t) -> np.ndarray:
        return np.asarray(t, dtype=float) ** (1.0 / self.gamma)


def info_fraction_diagnostics(information_path, means: Sequence[float], arms: Sequence[int],
                              calendar: Sequence[float] | None = None) -> InfoFractionReport:
    """Empirical ``r -> I_floor(nr) / I_n`` against its limit ``r**gamma``.

    ``information_path`` holds observed information per round (last axis); any
    leading axes are replications. ``gamma`` is the smallest mean among the
    hypothesis arms over the best mean overall.
    """
    path = np.asarray(information_path, dtype=float)
    means = np.asarray(means, dtype=float)
    gamma = float(means[list(arms)].min() / means.max())
    r = np.linspace(0.1, 1.0, 10) if calendar is None else np.asarray(calendar, dtype=float)
    n = path.shape[-1]
    idx = np.clip(np.floor(n * r).astype(int) - 1, 0, n - 1)
    emp = path[..., idx] / path[..., -1:]
    return InfoFractionReport(gamma, r, emp, r ** gamma)
