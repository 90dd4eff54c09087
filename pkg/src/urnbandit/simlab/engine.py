"""Vectorised trial runner.

Replications advance in lockstep as one batched ``BanditState``. Each
replication ``i`` owns ``RngStream(seed, i)`` and consumes it in a fixed
pattern (burn-in normals, then blocks of per-round normals and uniforms)
whether or not it is still running, so every replication's path depends only
on ``(seed, i)`` and never on how replications are grouped into batches or
threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np
from scipy import stats

from ..allocation import BanditState, PolicyKind, accumulate, choose_baseline_arm, init_from_rewards
from ..errors import SpecError
from ..estimators import update_moments
from ..inference import Hypothesis, adaptive_statistic, classical_statistic, gradient
from ..kernel import RngStream, mvhyper_sample_from_uniforms, rewards_from_normals
from ..sequential import SequentialDesign, plan_design
from .scenario import Scenario

BLOCK_ROUNDS = 64
HORIZON_MULTIPLIER = 50


@dataclass
class TrialBatch:
    """Per-replication outcomes, one entry per replication along axis 0."""

    reject: np.ndarray
    stop_round: np.ndarray
    samples: np.ndarray
    weights: np.ndarray
    s_inf: np.ndarray
    total: np.ndarray
    statistic: np.ndarray
    information: np.ndarray
    look: np.ndarray
    inconclusive: np.ndarray
    unestimable: np.ndarray
    naive_reject: np.ndarray
    naive_s_reject: np.ndarray
    gamma: np.ndarray
    rep_ids: np.ndarray

    @property
    def reps(self) -> int:
        return len(self.reject)

    @staticmethod
    def concat(parts: list["TrialBatch"]) -> "TrialBatch":
        return TrialBatch(**{f.name: np.concatenate([getattr(p, f.name) for p in parts])
                             for f in fields(TrialBatch)})


@dataclass
class RunSpec:
    """Everything one (scenario, policy, hypothesis-state) run needs."""

    scenario: Scenario
    policy: PolicyKind
    null: bool
    design: SequentialDesign | None = None
    horizon: int | None = None
    trace: Callable[[dict], None] | None = field(default=None, repr=False)


class _Streams:
    """Block pre-draws for a batch of replications."""

    def __init__(self, seed: int, rep_ids: np.ndarray, d: int, n_max: int):
        self.gens = [RngStream(seed, int(i)) for i in rep_ids]
        self.d, self.n_max = d, n_max
        self.offset = 0
        self.eps = self.ub = self.uu = None

    def burn_in(self, n0: int) -> np.ndarray:
        return np.stack([g.standard_normal((n0, self.d)) for g in self.gens])

    def round(self, t: int):
        """Normals, budget uniform and urn uniforms for allocation round ``t`` (1-based)."""
        j = t - 1 - self.offset
        if self.eps is None or j >= BLOCK_ROUNDS:
            self.offset = t - 1
            j = 0
            eps, ub, uu = [], [], []
            for g in self.gens:
                eps.append(g.standard_normal((BLOCK_ROUNDS, self.d)))
                ub.append(g.random(BLOCK_ROUNDS))
                uu.append(g.random((BLOCK_ROUNDS, self.n_max)))
            self.eps, self.ub, self.uu = np.stack(eps), np.stack(ub), np.stack(uu)
        return self.eps[:, j], self.ub[:, j], self.uu[:, j]


def capacity_floor(floor: float, n_max: int, d: int) -> float:
    """Initial-weight floor large enough that every urn can serve ``n_max`` draws."""
    return max(float(floor), float(math.ceil(n_max / d)))


def design_for(scenario: Scenario) -> SequentialDesign:
    sp = scenario.spending
    return plan_design(scenario.alpha, scenario.power_target, scenario.delta_design,
                       scenario.looks, sp.get("family", "obf"), sp.get("param"))


def horizon_rounds(scenario: Scenario, design: SequentialDesign) -> int:
    """Safety cap: a multiple of the rounds equal randomisation needs to reach the target."""
    hyp = scenario.build_hypothesis()
    worst = 0.0
    for null in (True, False):
        spec = scenario.reward_spec(null)
        g = gradient(hyp, np.asarray(spec.means))
        worst = max(worst, float(np.sum(g * g * spec.variances)))
    # equal randomisation reaches information I after about I * d * sum(g^2 var) samples;
    # every round yields at least one sample, so this also bounds rounds
    return int(HORIZON_MULTIPLIER * math.ceil(design.i_max_inflated * worst * scenario.d))


def _statistics(state: BanditState, hyp: Hypothesis, policy: PolicyKind):
    """Policy statistic plus naive variants; NaNs mark unestimable replications."""
    est = update_moments(state, strict=False)
    naive = classical_statistic(est, hyp, counts=est.W)
    naive_s = classical_statistic(est, hyp, counts=est.S)
    if policy is PolicyKind.UNB:
        main = adaptive_statistic(est, hyp, strict=False)
        gamma = main.gamma
    else:
        main = naive_s
        gamma = np.ones_like(main.value)
    return main, naive, naive_s, gamma


def run_batch(run: RunSpec, rep_ids) -> TrialBatch:
    """Run the replications ``rep_ids`` of one configuration to completion."""
    sc, policy = run.scenario, run.policy
    rep_ids = np.asarray(rep_ids, dtype=np.int64)
    B, d = len(rep_ids), sc.d
    spec = sc.reward_spec(run.null)
    hyp = sc.build_hypothesis()
    n_max = sc.budget.n_max if policy is PolicyKind.UNB else 1
    streams = _Streams(sc.seed, rep_ids, d, max(sc.budget.n_max, 1))
    sequential = sc.mode == "sequential"
    if sequential and run.design is None:
        raise SpecError("sequential run needs a design")
    crit = stats.norm.isf(sc.alpha)

    burn = rewards_from_normals(spec, 0, streams.burn_in(sc.n0))
    state = init_from_rewards(burn, capacity_floor(sc.floor, n_max, d))
    active = np.ones(B, dtype=bool)
    stop_round = np.zeros(B, dtype=np.int64)
    reject = np.zeros(B, dtype=bool)
    look = np.zeros(B, dtype=np.int64)
    next_look = np.zeros(B, dtype=np.int64)
    inconclusive = np.zeros(B, dtype=bool)
    stat = np.full(B, np.nan)
    info = np.full(B, np.nan)
    naive_rej = np.zeros(B, dtype=bool)
    naive_s_rej = np.zeros(B, dtype=bool)
    gamma_out = np.full(B, np.nan)

    def finish(mask, main, naive, naive_s, gamma):
        stat[mask] = main.value[mask]
        info[mask] = main.information[mask]
        naive_rej[mask] = naive.value[mask] > crit
        naive_s_rej[mask] = naive_s.value[mask] > crit
        gamma_out[mask] = gamma[mask]

    if sequential:
        design = run.design
        fractions = np.asarray(design.fractions)
        bounds = np.asarray(design.boundaries)
        target = design.i_max_inflated
        horizon = run.horizon or horizon_rounds(sc, design)
    else:
        horizon = None

    t = 0
    while active.any():
        t += 1
        traced = run.trace is not None and bool(active[0])
        eps, ub, uu = streams.round(t)
        xi = rewards_from_normals(spec, t, eps)
        if policy is PolicyKind.UNB:
            budget = np.where(active, sc.budget.from_uniforms(ub), 0)
            x = mvhyper_sample_from_uniforms(budget, state.R, uu)
            xi_obs = np.where(x > 0, xi, 0.0)
            state.R = state.R + x * xi_obs
            accumulate(state, x, xi_obs, budget)
        else:
            arm = choose_baseline_arm(policy, state)
            x = (np.arange(d) == arm[:, None]).astype(np.int64) * active[:, None]
            accumulate(state, x, xi, active.astype(np.int64))

        rounds_done = sc.n0 + t
        if not sequential:
            done = active & (state.total_samples >= sc.sample_size)
            if done.any():
                main, naive, naive_s, gamma = _statistics(state, hyp, policy)
                finish(done, main, naive, naive_s, gamma)
                reject[done] = main.value[done] > crit
                stop_round[done] = t
                active &= ~done
        else:
            main, naive, naive_s, gamma = _statistics(state, hyp, policy)
            I = np.where(np.isfinite(main.information), main.information, 0.0)
            frac = I / target
            psi = main.value
            if rounds_done >= sc.t_min:
                for _ in range(design.looks):
                    can = active & (next_look < design.looks)
                    can &= frac >= fractions[np.minimum(next_look, design.looks - 1)]
                    if not can.any():
                        break
                    c = bounds[np.minimum(next_look, design.looks - 1)]
                    hit = can & (psi > c)
                    look[can] = next_look[can] + 1
                    reject |= hit
                    next_look += can & ~hit
                    stopped = hit
                    finish(stopped, main, naive, naive_s, gamma)
                    stop_round[stopped] = t
                    active &= ~stopped
                at_max = active & (I >= target)
                finish(at_max, main, naive, naive_s, gamma)
                stop_round[at_max] = t
                active &= ~at_max
            capped = active & (t >= horizon)
            if capped.any():
                finish(capped, main, naive, naive_s, gamma)
                inconclusive |= capped
                stop_round[capped] = t
                active &= ~capped
        if traced:
            run.trace(_trace_row(t, rounds_done, state, x, xi, policy, hyp, sc))

    S = state.S.copy()
    inferior = sc.inferior_arms(run.null)
    unest = ~np.isfinite(stat)
    reject &= ~unest
    return TrialBatch(
        reject=reject, stop_round=stop_round, samples=S, weights=state.W.copy(),
        s_inf=S[:, inferior].sum(axis=1), total=S.sum(axis=1), statistic=stat,
        information=info, look=look, inconclusive=inconclusive, unestimable=unest,
        naive_reject=naive_rej & ~unest, naive_s_reject=naive_s_rej & ~unest,
        gamma=gamma_out, rep_ids=rep_ids,
    )


def _trace_row(t, rounds_done, state, x, xi, policy, hyp, sc) -> dict:
    """Per-round snapshot of replication 0 of the batch."""
    est = update_moments(state.select(0), strict=False)
    stat = adaptive_statistic(est, hyp, strict=False) if policy is PolicyKind.UNB else \
        classical_statistic(est, hyp)
    row = {"round": t, "total_round": rounds_done, "psi": float(stat.value),
           "information": float(stat.information)}
    for k in range(sc.d):
        row[f"x{k + 1}"] = int(x[0, k])
        row[f"xi{k + 1}"] = float(xi[0, k]) if x[0, k] > 0 else 0.0
        row[f"R{k + 1}"] = float(state.R[0, k])
        row[f"W{k + 1}"] = float(state.W[0, k])
        row[f"S{k + 1}"] = float(state.S[0, k])
        row[f"mu{k + 1}"] = float(est.mu[k])
    return row


def resolve_threads(threads: int | None) -> int:
    env = os.environ.get("UNB_THREADS")
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise SpecError(f"UNB_THREADS must be an integer, got {env!r}") from None
    return max(1, int(threads or 1))


def run_replications(run: RunSpec, reps: int | None = None, threads: int = 1,
                     chunk: int | None = None) -> TrialBatch:
    """Split replications into chunks, run them (optionally threaded) and reassemble in order."""
    reps = run.scenario.reps if reps is None else reps
    if reps < 1:
        raise SpecError("replications must be at least 1")
    threads = max(1, threads)
    if chunk is None:
        chunk = max(1, math.ceil(reps / threads))
    ids = np.arange(reps)
    parts = [ids[i:i + chunk] for i in range(0, reps, chunk)]
    if run.trace is not None:
        # only the chunk holding replication 0 traces
        traced = RunSpec(run.scenario, run.policy, run.null, run.design, run.horizon, run.trace)
        quiet = RunSpec(run.scenario, run.policy, run.null, run.design, run.horizon, None)
        jobs = [(traced if k == 0 else quiet, p) for k, p in enumerate(parts)]
    else:
        jobs = [(run, p) for p in parts]
    if threads == 1 or len(parts) == 1:
        results = [run_batch(r, p) for r, p in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda job: run_batch(*job), jobs))
    return TrialBatch.concat(results)


def statistics_at_fractions(scenario: Scenario, fractions, policy=PolicyKind.UNB, null: bool = True,
                            target: float | None = None, reps: int | None = None) -> np.ndarray:
    """Statistic observed when information first reaches each fraction of ``target``.

    Returns an array ``(reps, len(fractions))``; ``target`` defaults to the
    inflated information target of the scenario's design. Used to check the
    canonical joint law of interim statistics.
    """
    policy = PolicyKind.parse(policy)
    fractions = np.asarray(fractions, dtype=float)
    if target is None:
        target = design_for(scenario).i_max_inflated
    reps = scenario.reps if reps is None else reps
    sc, d = scenario, scenario.d
    ids = np.arange(reps)
    spec = sc.reward_spec(null)
    hyp = sc.build_hypothesis()
    n_max = sc.budget.n_max if policy is PolicyKind.UNB else 1
    streams = _Streams(sc.seed, ids, d, sc.budget.n_max)
    state = init_from_rewards(rewards_from_normals(spec, 0, streams.burn_in(sc.n0)),
                              capacity_floor(sc.floor, n_max, d))
    out = np.full((reps, len(fractions)), np.nan)
    pending = np.ones((reps, len(fractions)), dtype=bool)
    t = 0
    while pending.any():
        t += 1
        active = pending.any(axis=1)
        eps, ub, uu = streams.round(t)
        xi = rewards_from_normals(spec, t, eps)
        if policy is PolicyKind.UNB:
            budget = np.where(active, sc.budget.from_uniforms(ub), 0)
            x = mvhyper_sample_from_uniforms(budget, state.R, uu)
            xi_obs = np.where(x > 0, xi, 0.0)
            state.R = state.R + x * xi_obs
            accumulate(state, x, xi_obs, budget)
        else:
            arm = choose_baseline_arm(policy, state)
            x = (np.arange(d) == arm[:, None]).astype(np.int64) * active[:, None]
            accumulate(state, x, xi, active.astype(np.int64))
        main = _statistics(state, hyp, policy)[0]
        info = np.where(np.isfinite(main.information), main.information, 0.0)
        hit = pending & (info[:, None] >= fractions[None, :] * target) & active[:, None]
        out[hit] = np.broadcast_to(main.value[:, None], out.shape)[hit]
        pending &= ~hit
    return out
