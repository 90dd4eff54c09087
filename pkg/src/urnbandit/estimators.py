"""Plug-in moment estimators and the adaptive-design covariance matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocation import BanditState
from .errors import SpecError, UnestimableArmError

VARIANCE_FLOOR = 1e-12


@dataclass
class MomentEstimates:
    """Snapshot of every plug-in estimator; arrays broadcast like ``BanditState``.

    ``cross_missing[..., k, s]`` is True where arms ``k`` and ``s`` were never
    co-selected; the matching ``cov`` entries are reported as 0.
    """

    mu: np.ndarray
    q: np.ndarray
    var: np.ndarray
    q_cross: np.ndarray
    cov: np.ndarray
    corr: np.ndarray
    share: np.ndarray
    m_n: np.ndarray
    m_q: np.ndarray
    W: np.ndarray
    S: np.ndarray
    cross_missing: np.ndarray
    var_clamped: np.ndarray

    @property
    def budget_ratio(self) -> np.ndarray:
        """``m_Q / m_N``; equals 1 in the single-play regime."""
        return self.m_q / self.m_n


def update_moments(state: BanditState, strict: bool = True) -> MomentEstimates:
    """All estimators from the streaming sums in O(d^2).

    With ``strict`` an arm with zero cumulative weight raises
    :class:`UnestimableArmError`; otherwise its entries come back as NaN.
    """
    W = np.asarray(state.W, dtype=float)
    if strict and np.any(W <= 0):
        arm = int(np.argwhere(np.atleast_2d(W) <= 0)[0, -1])
        raise UnestimableArmError(arm)
    with np.errstate(divide="ignore", invalid="ignore"):
        Wsafe = np.where(W > 0, W, np.nan)
        mu = state.A / Wsafe
        q = state.B / Wsafe
        raw_var = q - mu * mu
        var = np.maximum(raw_var, VARIANCE_FLOOR)
        var = np.where(np.isnan(raw_var), np.nan, var)
        U = np.asarray(state.U, dtype=float)
        missing = U <= 0
        q_cross = np.where(missing, np.nan, state.C / np.where(missing, 1.0, U))
        cov = np.where(missing, 0.0, q_cross - mu[..., :, None] * mu[..., None, :])
        d = W.shape[-1]
        diag = np.arange(d)
        cov[..., diag, diag] = var
        corr = cov / np.sqrt(q[..., :, None] * q[..., None, :])
        n = np.asarray(state.n, dtype=float)
        nsafe = np.where(n > 0, n, np.nan)
        share = state.sum_share / nsafe[..., None]
        m_n = state.sum_n / nsafe
        m_q = state.sum_n2 / nsafe
    return MomentEstimates(mu=mu, q=q, var=var, q_cross=q_cross, cov=cov, corr=corr,
                           share=share, m_n=m_n, m_q=m_q, W=W, S=np.asarray(state.S, float),
                           cross_missing=missing, var_clamped=raw_var < VARIANCE_FLOOR)


def adaptive_covariance(var, cov, share, ratio) -> np.ndarray:
    """Assemble the covariance kernel from variances, covariances and allocation shares.

    Diagonal: ``var_p * (share_p * (ratio - 1) + 1)``; off-diagonal:
    ``cov_pq * sqrt(share_p * share_q) * (ratio - 1)`` with ``ratio = Q / N``.
    Works for estimates and for population inputs alike.
    """
    var = np.asarray(var, dtype=float)
    cov = np.asarray(cov, dtype=float)
    share = np.asarray(share, dtype=float)
    excess = np.asarray(ratio, dtype=float) - 1.0
    root = np.sqrt(np.clip(share, 0.0, None))
    out = cov * (root[..., :, None] * root[..., None, :]) * excess[..., None, None]
    d = var.shape[-1]
    diag = np.arange(d)
    out[..., diag, diag] = var * (share * excess[..., None] + 1.0)
    return out


def sigma_hat_matrix(est: MomentEstimates) -> np.ndarray:
    """Estimated covariance matrix of the scaled mean estimators."""
    if np.any(~(np.asarray(est.m_n) > 0)):
        raise SpecError("budget mean estimate must be positive (no allocation rounds yet?)")
    return adaptive_covariance(est.var, est.cov, est.share, est.budget_ratio)


def population_kernel(var, cov, share, N: float, Q: float) -> np.ndarray:
    """Population counterpart of :func:`sigma_hat_matrix` for exact inputs."""
    if Q < N * N or N < 1:
        raise SpecError("budget moments must satisfy Q >= N^2 >= N >= 1")
    return adaptive_covariance(var, cov, share, Q / N)
