"""Gaussian negative log likelihood, the L0.5 sparsity penalty and their
analytic gradients.

All losses are means per scalar stress observation (nats/point).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data_pipeline import BiaxialDataset, DataError, Observations, TRAIN
from .energy_terms import N_TERMS, term_stress_integrals
from .stress_model import CovarianceMode, GaussianModel

VAR_FLOOR = 1e-6  # kPa^2
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class LossBreakdown:
    nll: float
    reg: float
    per_curve_nll: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.nll + self.reg


@dataclass
class Gradients:
    w_mu: np.ndarray
    w_star: np.ndarray
    d: np.ndarray
    chol_rows: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w_mu, self.w_star, self.d, self.chol_rows.ravel()])


def gaussian_nll(y, mean, var) -> np.ndarray:
    """Pointwise NLL with the variance floor applied."""
    var = np.maximum(var, VAR_FLOOR)
    return HALF_LOG_2PI + 0.5 * np.log(var) + 0.5 * (y - mean) ** 2 / var


def _observations(data, split) -> Observations:
    if isinstance(data, Observations):
        if len(data) == 0:
            raise DataError("empty split")
        return data
    return data.observations(split)


def pointwise(model: GaussianModel, obs: Observations):
    """Mean, raw variance and NLL of every observation."""
    h, _ = obs.unit_stresses(model.w_star)
    p_hat = h * model.w_mu
    mean = p_hat.sum(axis=1)
    q = p_hat * model.covariance.scales()
    u = q @ model.covariance.unit_factor() if model.mode is CovarianceMode.CORRELATED else q
    var = np.sum(u * u, axis=1)
    mean, var = mean[obs.point], var[obs.point]
    return mean, var, gaussian_nll(obs.stress, mean, var)


def nll(model: GaussianModel, data, split: str = TRAIN) -> float:
    obs = _observations(data, split)
    return float(pointwise(model, obs)[2].mean())


def per_curve_nll(model: GaussianModel, data, split: str = TRAIN) -> dict[str, float]:
    obs = _observations(data, split)
    point = pointwise(model, obs)[2]
    return {cid: float(point[obs.curve == k].mean())
            for k, cid in enumerate(obs.curve_ids) if np.any(obs.curve == k)}


def ideal_nll(data: BiaxialDataset, curve_id: str) -> float:
    """NLL of a curve under its own per-point empirical mean and variance."""
    curve = data.curve(curve_id)
    total = 0.0
    for g in curve.point_groups():
        y = curve.stress[g]
        total += gaussian_nll(y, y.mean(), y.var()).sum()
    return total / len(curve)


def curve_nll(model: GaussianModel, data: BiaxialDataset, curve_id: str) -> float:
    return nll(model, Observations.from_curves([data.curve(curve_id)]))


def extra_nll(model: GaussianModel, data: BiaxialDataset, curve_id: str) -> float:
    """Model NLL on a curve minus the NLL of its empirical distribution."""
    curve = data.curve(curve_id)
    if any(len(g) < 2 for g in curve.point_groups()):
        warnings.warn(f"{curve_id}: single-sample points; empirical variance floored", stacklevel=2)
    return curve_nll(model, data, curve_id) - ideal_nll(data, curve_id)


def l_half_penalty(model: GaussianModel, alpha: float, lambda_max: float) -> float:
    if alpha == 0:
        return 0.0
    S, _ = term_stress_integrals(model.w_star, lambda_max)
    return float(alpha * np.sum(np.sqrt(np.maximum(model.w_mu * S, 0.0))))


def loss_breakdown(model: GaussianModel, data: BiaxialDataset, split: str = TRAIN,
                   alpha: float = 0.0, lambda_max: float | None = None) -> LossBreakdown:
    value = nll(model, data, split)
    reg = 0.0
    if alpha:
        lambda_max = lambda_max or data.max_stretch(TRAIN)
        reg = l_half_penalty(model, alpha, lambda_max)
    return LossBreakdown(value, reg, per_curve_nll(model, data, split))


def _normalize_rows_backward(raw: np.ndarray, grad_unit: np.ndarray) -> np.ndarray:
    L = np.tril(raw)
    norms = np.linalg.norm(L, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = L / safe[:, None]
    g = np.tril(grad_unit)
    out = (g - unit * np.sum(unit * g, axis=1, keepdims=True)) / safe[:, None]
    out[norms == 0.0] = 0.0
    return np.tril(out)


def loss_and_grad(model: GaussianModel, obs: Observations, alpha: float = 0.0,
                  lambda_max: float | None = None) -> tuple[float, float, Gradients]:
    """Mean NLL, penalty and the gradient of their sum.

    The penalty has zero subgradient for w_mu == 0, so pruned terms only
    re-enter if the likelihood pulls them back.
    """
    n = len(obs)
    cov = model.covariance
    d = cov.scales()
    correlated = model.mode is CovarianceMode.CORRELATED

    # everything up to the residuals lives on the cached points
    h, dh = obs.unit_stresses(model.w_star)
    p_hat = h * model.w_mu
    mean = p_hat.sum(axis=1)
    q = p_hat * d
    Lt = cov.unit_factor()
    u = q @ Lt if correlated else q
    var = np.sum(u * u, axis=1)
    floored = var < VAR_FLOOR
    s = np.where(floored, VAR_FLOOR, var)
    s_obs = s[obs.point]
    r = obs.stress - mean[obs.point]
    value = float(np.mean(HALF_LOG_2PI + 0.5 * np.log(s_obs) + 0.5 * r * r / s_obs))

    m = obs.n_points
    dl_dmean = np.bincount(obs.point, -r / s_obs, minlength=m) / n
    dl_dvar = np.bincount(obs.point, 0.5 / s_obs - 0.5 * r * r / (s_obs * s_obs), minlength=m) / n
    dl_dvar[floored] = 0.0

    # var = |Lt^T (d * p_hat)|^2
    Ru = u @ Lt.T if correlated else u  # R q
    dvar_dphat = 2.0 * Ru * d  # Sigma p_hat
    g_phat = dl_dmean[:, None] + dl_dvar[:, None] * dvar_dphat
    g_w_mu = np.sum(g_phat * h, axis=0)
    g_w_star = np.sum(g_phat * dh, axis=0) * model.w_mu
    g_d = np.zeros(N_TERMS)
    g_chol = np.zeros((N_TERMS, N_TERMS))
    if model.mode is not CovarianceMode.DETERMINISTIC:
        g_d = np.sum(dl_dvar[:, None] * 2.0 * Ru * p_hat, axis=0)
    if correlated:
        g_unit = 2.0 * (q * dl_dvar[:, None]).T @ u
        g_chol = _normalize_rows_backward(cov.chol_rows, g_unit)

    reg = 0.0
    if alpha:
        if lambda_max is None:
            raise ValueError("lambda_max is required when alpha > 0")
        S, dS = term_stress_integrals(model.w_star, lambda_max)
        prod = np.maximum(model.w_mu * S, 0.0)
        root = np.sqrt(prod)
        reg = float(alpha * root.sum())
        active = root > 0.0
        inv_root = np.where(active, 0.5 * alpha / np.where(active, root, 1.0), 0.0)
        g_w_mu = g_w_mu + inv_root * S
        g_w_star = g_w_star + inv_root * model.w_mu * dS
    return value, reg, Gradients(g_w_mu, g_w_star, g_d, g_chol)


def gradients(model: GaussianModel, data, split: str = TRAIN, alpha: float = 0.0,
              lambda_max: float | None = None) -> Gradients:
    obs = _observations(data, split)
    if alpha and lambda_max is None and isinstance(data, BiaxialDataset):
        lambda_max = data.max_stretch(TRAIN)
    return loss_and_grad(model, obs, alpha, lambda_max)[2]
