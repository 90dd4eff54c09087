"""Urn bandit allocation plus equal-randomization and UCB baselines.

State arrays carry the arm axis last and broadcast over any leading axes, so
one ``BanditState`` can hold a single trial (``R.shape == (d,)``) or a block of
replications advancing together (``R.shape == (B, d)``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields

import numpy as np

from .errors import SpecError
from .kernel import RewardSpec, RngStream, mvhyper_sample_from_uniforms, rewards_from_normals

DEFAULT_BURN_IN = 20
DEFAULT_FLOOR = 1.0


class PolicyKind(str, enum.Enum):
    UNB = "UNB"
    ER = "ER"
    UCB = "UCB"

    @classmethod
    def parse(cls, value) -> "PolicyKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise SpecError(f"unknown policy {value!r}") from None

    @property
    def single_pull(self) -> bool:
        return self is not PolicyKind.UNB


@dataclass
class BanditState:
    """Urn weights and the streaming sums behind every estimator.

    ``W``/``S`` are cumulative weights and selection counts, ``A``/``B`` the
    weighted first and second reward sums, ``U``/``C`` the pairwise weight
    products and weighted cross-reward sums. ``n`` counts allocation rounds
    after burn-in; ``sum_n``, ``sum_n2`` and ``sum_share`` feed the budget
    moments and the reward-proportion estimate.
    """

    R: np.ndarray
    W: np.ndarray
    S: np.ndarray
    A: np.ndarray
    B: np.ndarray
    U: np.ndarray
    C: np.ndarray
    n: np.ndarray
    sum_n: np.ndarray
    sum_n2: np.ndarray
    sum_share: np.ndarray

    @property
    def d(self) -> int:
        return self.R.shape[-1]

    @property
    def T(self) -> np.ndarray:
        """Pull counts (rounds in which each arm was played)."""
        return self.S

    @property
    def total_samples(self) -> np.ndarray:
        return self.S.sum(axis=-1)

    def copy(self) -> "BanditState":
        return BanditState(**{f.name: np.array(getattr(self, f.name), copy=True) for f in fields(self)})

    def select(self, idx) -> "BanditState":
        """Sub-state for the replications picked by ``idx`` along the batch axis."""
        return BanditState(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})

    @classmethod
    def empty(cls, d: int, batch: tuple[int, ...] = ()) -> "BanditState":
        vec = lambda: np.zeros(batch + (d,))  # noqa: E731
        mat = lambda: np.zeros(batch + (d, d))  # noqa: E731
        return cls(R=vec(), W=vec(), S=vec(), A=vec(), B=vec(), U=mat(), C=mat(),
                   n=np.zeros(batch, dtype=np.int64), sum_n=np.zeros(batch),
                   sum_n2=np.zeros(batch), sum_share=vec())


def _fold(state: BanditState, x: np.ndarray, xi: np.ndarray) -> None:
    xf = np.asarray(x, dtype=float)
    xr = xf * xi
    state.W += xf
    state.S += xf > 0
    state.A += xr
    state.B += xr * xi
    state.U += xf[..., :, None] * xf[..., None, :]
    state.C += xr[..., :, None] * xr[..., None, :]


def accumulate(state: BanditState, x, xi, budget) -> BanditState:
    """Fold one round's weights ``x`` and rewards ``xi`` into the streaming sums.

    Only played arms contribute; ``xi`` for unplayed arms is ignored. A round
    with ``budget == 0`` (used to freeze finished replications) leaves the
    state untouched. Mutates and returns ``state``.
    """
    x = np.asarray(x)
    xi = np.where(x > 0, np.asarray(xi, dtype=float), 0.0)
    budget = np.asarray(budget)
    _fold(state, x, xi)
    live = budget > 0
    nf = np.where(live, budget, 1).astype(float)
    state.n += live
    state.sum_n += np.where(live, budget, 0)
    state.sum_n2 += np.where(live, budget.astype(float) ** 2, 0.0)
    state.sum_share += np.where(live[..., None], x / nf[..., None], 0.0)
    return state


def init_from_rewards(burn_in: np.ndarray, floor: float = DEFAULT_FLOOR) -> BanditState:
    """Initial state from burn-in rewards of shape ``(..., n0, d)``.

    Every arm is pulled once per burn-in row; ``R_0`` is the per-arm reward sum
    floored at ``floor``. Burn-in observations enter the streaming sums with
    unit weight but not the budget moments.
    """
    burn_in = np.asarray(burn_in, dtype=float)
    if burn_in.shape[-2] < 1:
        raise SpecError("burn-in must pull every arm at least once")
    if floor <= 0:
        raise SpecError("burn-in floor must be positive")
    batch, d = burn_in.shape[:-2], burn_in.shape[-1]
    state = BanditState.empty(d, batch)
    ones = np.ones(batch + (d,))
    for j in range(burn_in.shape[-2]):
        _fold(state, ones, burn_in[..., j, :])
    state.R = np.maximum(burn_in.sum(axis=-2), floor)
    return state


def unb_init(spec: RewardSpec, rng: RngStream, n0: int = DEFAULT_BURN_IN,
             floor: float = DEFAULT_FLOOR) -> BanditState:
    """Pull each arm ``n0`` times and seed the urn from the observed rewards."""
    if n0 < 1:
        raise SpecError("burn-in n0 must be at least 1")
    rewards = rewards_from_normals(spec, 0, rng.standard_normal((n0, spec.d)))
    return init_from_rewards(rewards, floor)


def unb_step_from_uniforms(state: BanditState, budget, xi, uniforms):
    """One urn round from pre-drawn uniforms; returns ``(X_t, state)``."""
    x = mvhyper_sample_from_uniforms(budget, state.R, uniforms)
    xi = np.where(x > 0, np.asarray(xi, dtype=float), 0.0)
    state.R = state.R + x * xi
    accumulate(state, x, xi, budget)
    return x, state


def unb_step(state: BanditState, budget: int, xi, rng: RngStream):
    """Draw ``X_t ~ Multi-Hyper(N_t; R_{t-1})``, observe played arms, reinforce the urn.

    Returns the weight vector ``X_t`` and the (mutated) state.
    """
    if budget < 1:
        raise SpecError("budget must be at least 1")
    return unb_step_from_uniforms(state, np.int64(budget), xi, rng.random(int(budget)))


def ucb_index(mean, t, pulls) -> np.ndarray:
    """Classical UCB index ``mean + sqrt(2 ln t / pulls)``; unpulled arms get +inf."""
    pulls = np.asarray(pulls, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        bonus = np.sqrt(2.0 * np.log(np.asarray(t, dtype=float))[..., None] / pulls)
        idx = np.asarray(mean, dtype=float) + bonus
    return np.where(pulls > 0, idx, np.inf)


def choose_baseline_arm(kind: PolicyKind, state: BanditState) -> np.ndarray:
    kind = PolicyKind.parse(kind)
    pulls = state.T
    if kind is PolicyKind.ER:
        # least-pulled arm, lowest index on ties: round robin after a balanced burn-in
        return np.argmin(pulls, axis=-1)
    if kind is PolicyKind.UCB:
        with np.errstate(divide="ignore", invalid="ignore"):
            mean = np.where(pulls > 0, state.A / np.where(pulls > 0, pulls, 1), 0.0)
        t = pulls.sum(axis=-1)
        return np.argmax(ucb_index(mean, np.maximum(t, 1), pulls), axis=-1)
    raise SpecError("baseline_step supports ER and UCB only")


def baseline_step(kind: PolicyKind, state: BanditState, xi, rng: RngStream | None = None,
                  active=True):
    """Single-pull ER or UCB round; returns ``(arm, state)``.

    ``rng`` is unused (both baselines are deterministic given the state) and is
    accepted for interface symmetry with :func:`unb_step`.
    """
    arm = choose_baseline_arm(kind, state)
    active = np.asarray(active)
    x = (np.arange(state.d) == arm[..., None]).astype(np.int64) * active[..., None]
    accumulate(state, x, xi, active.astype(np.int64))
    return arm, state
