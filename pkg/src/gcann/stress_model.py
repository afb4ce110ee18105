"""Gaussian distribution of the biaxial stresses.

The external weights are w = w_mu * w_hat with w_hat ~ N(1, Sigma). The stress
is linear in w_hat, so its mean and variance are closed form::

    P_hat[i] = w_mu[i] * f_i
    mean     = sum(P_hat)
    var      = P_hat @ Sigma @ P_hat

Sigma = D R D with D = diag(d), d in [0, 1), and R = Lt Lt^T where the rows of
Lt are the lower-triangular Cholesky rows normalized to unit length.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .energy_terms import N_TERMS, library_stress
from .kinematics import DeformationState, invariants

NEG_WEIGHT_BOUND = float(ndtr(-1.0))


class CovarianceMode(str, enum.Enum):
    DETERMINISTIC = "det"
    INDEPENDENT = "indep"
    CORRELATED = "corr"

    @classmethod
    def parse(cls, value) -> "CovarianceMode":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        aliases = {
            "det": cls.DETERMINISTIC, "deterministic": cls.DETERMINISTIC,
            "indep": cls.INDEPENDENT, "independent": cls.INDEPENDENT,
            "independentdiag": cls.INDEPENDENT,
            "corr": cls.CORRELATED, "correlated": cls.CORRELATED,
            "correlatedfull": cls.CORRELATED,
        }
        try:
            return aliases[text]
        except KeyError:
            raise ValueError(f"unknown covariance mode {value!r}") from None


def normalize_rows(chol_rows: np.ndarray) -> np.ndarray:
    """Lower triangle of ``chol_rows`` with every row scaled to unit norm."""
    L = np.tril(np.asarray(chol_rows, dtype=float))
    norms = np.linalg.norm(L, axis=1)
    eye = np.eye(L.shape[0])
    bad = norms == 0.0
    L = np.where(bad[:, None], eye, L)
    norms = np.where(bad, 1.0, norms)
    return L / norms[:, None]


@dataclass
class CovarianceParam:
    mode: CovarianceMode = CovarianceMode.INDEPENDENT
    d: np.ndarray = field(default_factory=lambda: np.zeros(N_TERMS))
    chol_rows: np.ndarray = field(default_factory=lambda: np.eye(N_TERMS))

    def __post_init__(self):
        self.mode = CovarianceMode.parse(self.mode)
        self.d = np.asarray(self.d, dtype=float).copy()
        self.chol_rows = np.tril(np.asarray(self.chol_rows, dtype=float))
        if self.d.shape != (N_TERMS,):
            raise ValueError(f"d must have {N_TERMS} entries")
        if self.chol_rows.shape != (N_TERMS, N_TERMS):
            raise ValueError(f"chol_rows must be {N_TERMS}x{N_TERMS}")

    def unit_factor(self) -> np.ndarray:
        """Lt with R = Lt Lt^T, honoring the mode."""
        if self.mode is CovarianceMode.CORRELATED:
            return normalize_rows(self.chol_rows)
        return np.eye(N_TERMS)

    def scales(self) -> np.ndarray:
        if self.mode is CovarianceMode.DETERMINISTIC:
            return np.zeros(N_TERMS)
        return self.d

    def correlation(self) -> np.ndarray:
        Lt = self.unit_factor()
        return Lt @ Lt.T

    def copy(self) -> "CovarianceParam":
        return CovarianceParam(self.mode, self.d.copy(), self.chol_rows.copy())


def realize_sigma(cov: CovarianceParam) -> np.ndarray:
    d = cov.scales()
    if cov.mode is CovarianceMode.INDEPENDENT:
        return np.diag(d * d)
    if cov.mode is CovarianceMode.DETERMINISTIC:
        return np.zeros((N_TERMS, N_TERMS))
    R = cov.correlation()
    return d[:, None] * R * d[None, :]


@dataclass
class GaussianModel:
    w_mu: np.ndarray
    w_star: np.ndarray
    covariance: CovarianceParam = field(default_factory=CovarianceParam)

    def __post_init__(self):
        self.w_mu = np.asarray(self.w_mu, dtype=float).copy()
        self.w_star = np.asarray(self.w_star, dtype=float).copy()
        if self.w_mu.shape != (N_TERMS,) or self.w_star.shape != (N_TERMS,):
            raise ValueError(f"w_mu and w_star must have {N_TERMS} entries")

    @property
    def mode(self) -> CovarianceMode:
        return self.covariance.mode

    def validate(self):
        if np.any(self.w_mu < 0) or np.any(self.w_star < 0):
            raise ValueError("w_mu and w_star must be non-negative")
        d = self.covariance.scales()
        if np.any(d < 0) or np.any(d >= 1):
            raise ValueError("normalized standard deviations must lie in [0, 1)")

    def copy(self) -> "GaussianModel":
        return GaussianModel(self.w_mu.copy(), self.w_star.copy(), self.covariance.copy())

    def with_mode(self, mode) -> "GaussianModel":
        return replace(self.copy(), covariance=CovarianceParam(
            mode, self.covariance.d.copy(), self.covariance.chol_rows.copy()))


@dataclass(frozen=True)
class StressDistribution:
    mu11: np.ndarray
    mu22: np.ndarray
    var11: np.ndarray
    var22: np.ndarray

    @property
    def std11(self):
        return np.sqrt(self.var11)

    @property
    def std22(self):
        return np.sqrt(self.var22)


def stress_moments(model: GaussianModel, p_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance from rows of weighted term stresses, shape (n, 14)."""
    mean = p_hat.sum(axis=-1)
    q = p_hat * model.covariance.scales()
    if model.mode is CovarianceMode.CORRELATED:
        u = q @ model.covariance.unit_factor()
    else:
        u = q
    return mean, np.sum(u * u, axis=-1)


def term_stresses(model: GaussianModel, state: DeformationState) -> tuple[np.ndarray, np.ndarray]:
    """Weighted term stresses (P_hat11, P_hat22), each of shape (..., 14)."""
    inv = invariants(state)
    shape = np.shape(inv.values[0])
    vals = inv.values.reshape(5, -1)
    f, _ = library_stress(vals, inv.d1.reshape(5, -1), model.w_star)
    g, _ = library_stress(vals, inv.d2.reshape(5, -1), model.w_star)
    return ((model.w_mu * f).reshape(shape + (N_TERMS,)),
            (model.w_mu * g).reshape(shape + (N_TERMS,)))


def predict(model: GaussianModel, state: DeformationState) -> StressDistribution:
    p11, p22 = term_stresses(model, state)
    mu11, var11 = stress_moments(model, p11)
    mu22, var22 = stress_moments(model, p22)
    return StressDistribution(mu11, mu22, var11, var22)


def sample_weights(model: GaussianModel, n: int, seed: int) -> np.ndarray:
    """Draw n weight vectors w = w_mu * (1 + D Lt z), shape (n, 14)."""
    if n < 1:
        raise ValueError("need at least one draw")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, N_TERMS))
    Lt = model.covariance.unit_factor()
    w_hat = 1.0 + (z @ Lt.T) * model.covariance.scales()
    return model.w_mu * w_hat


def prob_negative_weight(model: GaussianModel, i: int) -> float:
    """P(w_i < 0) for the unit-mean normalized weight with variance Sigma_ii."""
    var = realize_sigma(model.covariance)[i, i]
    if var <= 0.0:
        return 0.0
    return float(ndtr(-1.0 / np.sqrt(var)))
