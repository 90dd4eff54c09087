"""Aggregation of per-replication outcomes into Monte Carlo metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..allocation import PolicyKind
from ..errors import SpecError
from .engine import RunSpec, TrialBatch, design_for, resolve_threads, run_replications
from .scenario import Scenario

log = logging.getLogger(__name__)


def loss_index(asn: float, s_inf: float, lam: float) -> float:
    """Weighted loss ``ASN + lam * S_inf``."""
    if lam < 0:
        raise SpecError("loss weight must be nonnegative")
    return asn + lam * s_inf


def binomial_se(p: float, n: int) -> float:
    return float(np.sqrt(p * (1.0 - p) / n))


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


@dataclass
class Metrics:
    """Monte Carlo summary of one (scenario, policy, null/alternative) cell."""

    label: str
    policy: str
    state: str
    reps: int
    rate: float
    rate_se: float
    asn: float
    asn_se: float
    s_inf: float
    s_inf_se: float
    mean_rounds: float
    inconclusive: float
    unestimable: float
    naive_rate: float
    naive_s_rate: float
    gamma_mean: float
    lambdas: tuple[float, ...] = ()
    scenario: Scenario | None = field(default=None, repr=False, compare=False)

    @property
    def radius(self) -> float:
        """Half-width of the 95% normal interval for the rejection rate."""
        return 1.959963984540054 * self.rate_se

    def loss(self, lam: float) -> float:
        return loss_index(self.asn, self.s_inf, lam)


def summarize(batch: TrialBatch, label: str, policy: str, state: str,
              lambdas=(), scenario: Scenario | None = None) -> Metrics:
    n = batch.reps
    rate = float(batch.reject.mean())
    asn, asn_se = _mean_se(batch.total)
    s_inf, s_inf_se = _mean_se(batch.s_inf)
    g = batch.gamma[np.isfinite(batch.gamma)]
    return Metrics(
        label=label, policy=policy, state=state, reps=n, rate=rate, rate_se=binomial_se(rate, n),
        asn=asn, asn_se=asn_se, s_inf=s_inf, s_inf_se=s_inf_se,
        mean_rounds=float(batch.stop_round.mean()), inconclusive=float(batch.inconclusive.mean()),
        unestimable=float(batch.unestimable.mean()), naive_rate=float(batch.naive_reject.mean()),
        naive_s_rate=float(batch.naive_s_reject.mean()),
        gamma_mean=float(g.mean()) if len(g) else float("nan"),
        lambdas=tuple(lambdas), scenario=scenario,
    )


def monte_carlo(scenario: Scenario, policy: PolicyKind | str = PolicyKind.UNB, null: bool = True,
                threads: int = 1, trace=None) -> Metrics:
    """Run all replications of one cell and aggregate them."""
    policy = PolicyKind.parse(policy)
    design = design_for(scenario) if scenario.mode == "sequential" else None
    batch = run_replications(RunSpec(scenario, policy, null, design, trace=trace),
                             threads=resolve_threads(threads))
    m = summarize(batch, scenario.label, policy.value, "H0" if null else "H1",
                  scenario.lambdas, scenario)
    if m.inconclusive > 0:
        log.warning("%s %s %s: %.1f%% of replications hit the horizon cap", scenario.label,
                    m.policy, m.state, 100 * m.inconclusive)
    return m


def run_scenario(scenario: Scenario, threads: int = 1, trace=None) -> list[Metrics]:
    """Every requested policy under every requested hypothesis state."""
    out = []
    for policy in scenario.policies:
        if scenario.mode == "sequential" and policy is not PolicyKind.UNB and \
                (scenario.rho > 0 or scenario.budget.n_max > 1):
            log.warning("%s: %s excluded from correlated/batched sequential runs",
                        scenario.label, policy.value)
            continue
        for state in scenario.evaluate:
            null = state == "size"
            cb = trace if (trace is not None and not out) else None
            out.append(monte_carlo(scenario, policy, null, threads, cb))
    return out
