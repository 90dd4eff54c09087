"""Delta-method inference for smooth functionals of the arm means."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateFunctionalError, SpecError, UnestimableArmError
from .estimators import MomentEstimates, adaptive_covariance, sigma_hat_matrix


@dataclass(frozen=True)
class Hypothesis:
    """One-sided test ``H0: h(mu) <= null_value`` against ``h(mu) > null_value``.

    ``func`` and ``grad`` act on the last axis of their argument. ``arms`` is
    the set of indices ``h`` depends on. ``kind`` tags the built-ins so the
    closed-form correction factors can be looked up.
    """

    func: Callable[[np.ndarray], np.ndarray]
    d: int
    arms: tuple[int, ...]
    null_value: float = 0.0
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    kind: str = "custom"
    name: str = "h"

    def value(self, mu) -> np.ndarray:
        return np.asarray(self.func(np.asarray(mu, dtype=float)), dtype=float) - self.null_value

    def gradient(self, mu) -> np.ndarray:
        return gradient(self, mu)


def linear(beta: Sequence[float], null_value: float = 0.0, kind: str = "linear",
           name: str = "linear") -> Hypothesis:
    beta = np.asarray(beta, dtype=float)
    arms = tuple(int(k) for k in np.flatnonzero(beta))
    return Hypothesis(func=lambda m: m @ beta, d=len(beta), arms=arms, null_value=null_value,
                      grad=lambda m: np.broadcast_to(beta, np.shape(m)).copy(), kind=kind, name=name)


def difference(i: int = 0, j: int = 1, d: int = 2) -> Hypothesis:
    """A/B comparison ``mu_i - mu_j <= 0``."""
    beta = np.zeros(d)
    beta[i], beta[j] = 1.0, -1.0
    return linear(beta, 0.0, kind="difference", name=f"mu{i + 1}-mu{j + 1}")


def threshold(k: int, bound: float, d: int) -> Hypothesis:
    """Benchmark ``mu_k <= bound``."""
    beta = np.zeros(d)
    beta[k] = 1.0
    return linear(beta, bound, kind="threshold", name=f"mu{k + 1}-{bound:g}")


def control_average(d: int = 3) -> Hypothesis:
    """New arm against the average of two controls, ``mu_1 - (mu_2 + mu_3)/2 <= 0``."""
    if d < 3:
        raise SpecError("control-average contrast needs at least three arms")
    beta = np.zeros(d)
    beta[:3] = (1.0, -0.5, -0.5)
    return linear(beta, 0.0, kind="control_average", name="mu1-avg(mu2,mu3)")


def ratio(i: int = 0, j: int = 1, d: int = 2, null_value: float = 1.0) -> Hypothesis:
    """Lift-type ratio ``mu_i / mu_j <= null_value``."""

    def func(m):
        m = np.asarray(m, dtype=float)
        if np.any(m[..., j] <= 0):
            raise SpecError("ratio hypothesis requires a positive denominator mean")
        return m[..., i] / m[..., j]

    def grad(m):
        m = np.asarray(m, dtype=float)
        if np.any(m[..., j] <= 0):
            raise SpecError("ratio hypothesis requires a positive denominator mean")
        g = np.zeros(np.shape(m))
        g[..., i] = 1.0 / m[..., j]
        g[..., j] = -m[..., i] / m[..., j] ** 2
        return g

    return Hypothesis(func=func, d=d, arms=(i, j), null_value=null_value, grad=grad,
                      kind="ratio", name=f"mu{i + 1}/mu{j + 1}")


def gradient(hyp: Hypothesis, mu) -> np.ndarray:
    """Analytic gradient for built-ins, central differences otherwise.

    The numeric step for coordinate ``k`` is ``1e-6 * max(1, |mu_k|)``.
    """
    mu = np.asarray(mu, dtype=float)
    if hyp.grad is not None:
        return np.asarray(hyp.grad(mu), dtype=float)
    g = np.zeros(mu.shape)
    for k in range(mu.shape[-1]):
        step = 1e-6 * np.maximum(1.0, np.abs(mu[..., k]))
        up, down = mu.copy(), mu.copy()
        up[..., k] += step
        down[..., k] -= step
        g[..., k] = (np.asarray(hyp.func(up)) - np.asarray(hyp.func(down))) / (2.0 * step)
    return g


def delta_variance(grad, W, sigma, strict: bool = True) -> np.ndarray:
    """Quadratic form ``sum_ij g_i g_j sigma_ij / sqrt(W_i W_j)``.

    Raises (when ``strict``):
        DegenerateFunctionalError: the gradient is identically zero.
        UnestimableArmError: an arm with nonzero gradient has zero weight.
    """
    grad = np.asarray(grad, dtype=float)
    W = np.asarray(W, dtype=float)
    used = grad != 0
    if strict:
        if np.any(~used.any(axis=-1)):
            raise DegenerateFunctionalError("gradient vanishes on every arm")
        bad = used & ~(W > 0)
        if np.any(bad):
            raise UnestimableArmError(int(np.argwhere(np.atleast_2d(bad))[0, -1]))
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(used, grad / np.sqrt(W), 0.0)
    sigma = np.where(np.isnan(sigma), 0.0, sigma) if not strict else np.asarray(sigma)
    return np.einsum("...i,...ij,...j->...", b, sigma, b)


def test_statistic(h_value, sigma_h) -> np.ndarray:
    """Standardized statistic ``h / sigma_h``; reject at level alpha iff it exceeds ``z_alpha``."""
    sigma_h = np.asarray(sigma_h, dtype=float)
    if np.any(~(sigma_h > 0)):
        raise SpecError("standard error must be strictly positive")
    return np.asarray(h_value, dtype=float) / sigma_h


def critical_value(alpha: float) -> float:
    return float(stats.norm.isf(alpha))


@dataclass
class TestStat:
    value: np.ndarray
    variance: np.ndarray
    information: np.ndarray
    gamma: np.ndarray | None = None
    lam: np.ndarray | None = None


def adaptive_statistic(est: MomentEstimates, hyp: Hypothesis, strict: bool = True) -> TestStat:
    """Urn-bandit statistic with the full adaptive covariance correction."""
    g = gradient(hyp, est.mu)
    sigma = sigma_hat_matrix(est) if strict else _sigma_lenient(est)
    var = delta_variance(g, est.W, sigma, strict=strict)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = hyp.value(est.mu) / np.sqrt(var)
        classical_w = np.sum(np.where(g != 0, g * g * est.var / est.W, 0.0), axis=-1)
        classical_s = np.sum(np.where(g != 0, g * g * est.var / est.S, 0.0), axis=-1)
        return TestStat(value=value, variance=var, information=1.0 / var,
                        gamma=var / classical_w, lam=classical_w / classical_s)


def classical_statistic(est: MomentEstimates, hyp: Hypothesis, counts=None) -> TestStat:
    """Studentized statistic with variance ``sum_k g_k^2 var_k / counts_k``.

    With ``counts`` left as the selection counts this is the ER/UCB statistic
    in single-pull mode and the uncorrected ("naive") statistic under batching.
    """
    counts = est.S if counts is None else np.asarray(counts, dtype=float)
    g = gradient(hyp, est.mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.sum(np.where(g != 0, g * g * est.var / counts, 0.0), axis=-1)
        value = hyp.value(est.mu) / np.sqrt(var)
        return TestStat(value=value, variance=var, information=1.0 / var)


def _sigma_lenient(est: MomentEstimates) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return adaptive_covariance(est.var, est.cov, est.share, est.budget_ratio)


@dataclass
class CorrectionFactors:
    gamma: np.ndarray
    lam: np.ndarray
    inflation: np.ndarray
    table: np.ndarray | None = None


def arm_inflation(est: MomentEstimates) -> np.ndarray:
    """Arm-specific variance inflation ``share_k (m_Q/m_N - 1) + 1``."""
    return est.share * (est.budget_ratio - 1.0)[..., None] + 1.0


def _checked_ratio(num, den, what: str):
    den = np.asarray(den, dtype=float)
    if np.any(den == 0):
        raise ZeroDivisionError(f"vanishing denominator in {what}")
    return np.asarray(num, dtype=float) / den


def gamma_difference(est: MomentEstimates, i: int = 0, j: int = 1) -> np.ndarray:
    """Closed-form factor for ``mu_i - mu_j`` under cross-arm independence."""
    a, v, W, S = arm_inflation(est), est.var, est.W, est.S
    num = a[..., i] * v[..., i] / W[..., i] + a[..., j] * v[..., j] / W[..., j]
    den = v[..., i] / S[..., i] + v[..., j] / S[..., j]
    return _checked_ratio(num, den, "difference correction factor")


def gamma_threshold(est: MomentEstimates, k: int) -> np.ndarray:
    """Closed-form factor for the single-arm benchmark test."""
    return _checked_ratio(arm_inflation(est)[..., k] * est.S[..., k], est.W[..., k],
                          "threshold correction factor")


def gamma_control_average(est: MomentEstimates) -> np.ndarray:
    """Closed-form factor for ``mu_1 - (mu_2 + mu_3)/2`` under independence."""
    a, v, W, S = arm_inflation(est), est.var, est.W, est.S
    num = a[..., 0] * v[..., 0] / W[..., 0] + a[..., 1] * v[..., 1] / (4 * W[..., 1]) \
        + a[..., 2] * v[..., 2] / (4 * W[..., 2])
    den = v[..., 0] / S[..., 0] + v[..., 1] / (4 * S[..., 1]) + v[..., 2] / (4 * S[..., 2])
    return _checked_ratio(num, den, "control-average correction factor")


def correction_factors(est: MomentEstimates, hyp: Hypothesis) -> CorrectionFactors:
    """Reinforcement factor, weight-sample discrepancy factor and per-arm inflation.

    ``table`` carries the closed-form factor matching the hypothesis kind
    (difference, threshold or control average); it is None for other kinds.
    """
    g = gradient(hyp, est.mu)
    quad = delta_variance(g, est.W, sigma_hat_matrix(est))
    used = g != 0
    by_w = np.sum(np.where(used, g * g * est.var / est.W, 0.0), axis=-1)
    by_s = np.sum(np.where(used, g * g * est.var / est.S, 0.0), axis=-1)
    gamma = _checked_ratio(quad, by_w, "reinforcement factor")
    lam = _checked_ratio(by_w, by_s, "weight-sample discrepancy factor")
    table = None
    if hyp.kind == "difference":
        i, j = (hyp.arms[0], hyp.arms[1]) if g[..., hyp.arms[0]].ravel()[0] > 0 else hyp.arms[::-1]
        table = gamma_difference(est, i, j)
    elif hyp.kind == "threshold":
        table = gamma_threshold(est, hyp.arms[0])
    elif hyp.kind == "control_average":
        table = gamma_control_average(est)
    return CorrectionFactors(gamma=gamma, lam=lam, inflation=arm_inflation(est), table=table)


def gamma_limit(grad, cov, share, optimal, N: float, Q: float) -> float:
    """Almost-sure limit of the reinforcement factor.

    Equals 1 when the functional loads on any suboptimal arm; otherwise
    ``1 + (Q/N - 1) * sum_{i,j opt} g_i g_j C_ij / sum_{k opt} g_k^2 C_kk / Z_k``.
    """
    g = np.asarray(grad, dtype=float)
    cov = np.asarray(cov, dtype=float)
    z = np.asarray(share, dtype=float)
    opt = np.zeros(len(g), dtype=bool)
    opt[list(optimal)] = True
    if np.any((g != 0) & ~opt):
        return 1.0
    go = np.where(opt, g, 0.0)
    num = go @ cov @ go
    den = np.sum(np.where(opt & (g != 0), g * g * np.diag(cov) / np.where(opt, z, 1.0), 0.0))
    return float(1.0 + (Q / N - 1.0) * num / den)


def ncp_unb(delta: float, gamma1, var, S) -> np.ndarray:
    """Non-centrality of the corrected urn-bandit statistic for ``mu_1 - mu_2``."""
    var, S = np.asarray(var, float), np.asarray(S, float)
    if np.any(S[..., :2] <= 0):
        raise SpecError("selection counts must be positive")
    return delta / (np.sqrt(gamma1) * np.sqrt(var[..., 0] / S[..., 0] + var[..., 1] / S[..., 1]))


def ncp_ucb(delta: float, var, T) -> np.ndarray:
    """Non-centrality of the pull-count studentized statistic used with UCB."""
    var, T = np.asarray(var, float), np.asarray(T, float)
    if np.any(T[..., :2] <= 0):
        raise SpecError("pull counts must be positive")
    return delta / np.sqrt(var[..., 0] / T[..., 0] + var[..., 1] / T[..., 1])
