"""Versioned JSON document for a trained Gaussian model."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .energy_terms import LIBRARY, N_TERMS, TERM_NAMES, Invariant
from .stress_model import CovarianceMode, CovarianceParam, GaussianModel

SCHEMA_VERSION = "1.0"
JITTER = 1e-10


class ModelFormatError(ValueError):
    pass


def to_document(model: GaussianModel, provenance: dict | None = None) -> dict:
    cov = model.covariance
    corr = cov.correlation()
    doc = {
        "schema_version": SCHEMA_VERSION,
        "terms": [
            {"name": name, "w_mu": float(m), "w_star": float(s), "active": bool(m > 0)}
            for name, m, s in zip(TERM_NAMES, model.w_mu, model.w_star)
        ],
        "covariance": {
            "mode": cov.mode.value,
            "d": [float(x) for x in cov.scales()],
            "correlation": corr.tolist(),
        },
        "provenance": dict(provenance or {}),
    }
    if cov.mode is CovarianceMode.CORRELATED:
        # raw rows make load(save(m)) exact; the correlation alone is enough otherwise
        doc["covariance"]["factor"] = np.tril(cov.chol_rows).tolist()
    return doc


EIG_FLOOR = 1e-8


def nearest_correlation(corr: np.ndarray) -> np.ndarray:
    """Clip eigenvalues to a small positive floor and restore the unit diagonal.

    Correlations rounded to a few digits are often slightly indefinite.
    """
    vals, vecs = np.linalg.eigh(0.5 * (corr + corr.T))
    fixed = (vecs * np.maximum(vals, EIG_FLOOR)) @ vecs.T
    scale = 1.0 / np.sqrt(np.diag(fixed))
    return fixed * scale[:, None] * scale[None, :]


def factor_from_correlation(corr: np.ndarray) -> np.ndarray:
    corr = 0.5 * (corr + corr.T)
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(corr + JITTER * np.eye(len(corr)))
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(nearest_correlation(corr))


def from_document(doc: dict) -> GaussianModel:
    if str(doc.get("schema_version", "")).split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise ModelFormatError(f"unsupported schema version {doc.get('schema_version')!r}")
    try:
        by_name = {t["name"]: t for t in doc["terms"]}
        missing = [n for n in TERM_NAMES if n not in by_name]
        if missing:
            raise ModelFormatError(f"model lacks terms {missing}")
        w_mu = np.array([float(by_name[n]["w_mu"]) for n in TERM_NAMES])
        w_star = np.array([float(by_name[n]["w_star"]) for n in TERM_NAMES])
        cov = doc["covariance"]
        mode = CovarianceMode.parse(cov["mode"])
        d = np.array(cov["d"], dtype=float)
        corr = np.array(cov.get("correlation", np.eye(N_TERMS)), dtype=float)
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from None
    if corr.shape != (N_TERMS, N_TERMS):
        raise ModelFormatError("correlation must be 14x14")
    if not np.allclose(corr, corr.T, atol=1e-9) or np.any(np.abs(corr) > 1 + 1e-9):
        raise ModelFormatError("correlation must be symmetric with entries in [-1, 1]")
    if "factor" in cov:
        chol = np.array(cov["factor"], dtype=float)
    elif mode is CovarianceMode.CORRELATED:
        chol = factor_from_correlation(corr)
    else:
        chol = np.eye(N_TERMS)
    model = GaussianModel(w_mu, w_star, CovarianceParam(mode, d, chol))
    model.validate()
    return model


def save_model(model: GaussianModel, path, provenance: dict | None = None) -> None:
    Path(path).write_text(json.dumps(to_document(model, provenance), indent=2) + "\n", encoding="utf-8")


def load_model(path) -> tuple[GaussianModel, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such model file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
    return from_document(doc), doc.get("provenance", {})


def summary(model: GaussianModel) -> list[str]:
    """Active terms in (a, b) / mu notation: psi = 1/2 a (exp(b x) - 1) / b."""
    lines = []
    d = model.covariance.scales()
    active = np.flatnonzero(model.w_mu > 0)
    for i in active:
        spec = LIBRARY[i]
        # the usual notation carries a 1/2 prefactor per fiber family; I4s terms already split in halves
        a = model.w_mu[i] * (1.0 if spec.invariant is Invariant.I4s else 2.0)
        sd = a * d[i]
        if spec.inner_weight_frozen:
            lines.append(f"{spec.name:12s} mu = {a:.4g} kPa (sd {sd:.4g} kPa)")
        else:
            lines.append(f"{spec.name:12s} a = {a:.4g} kPa (sd {sd:.4g} kPa), b = {model.w_star[i]:.4g}")
    if model.mode is CovarianceMode.CORRELATED and len(active) > 1:
        corr = model.covariance.correlation()[np.ix_(active, active)]
        lines.append("correlation of active weights:")
        for row in corr:
            lines.append("  " + " ".join(f"{x:+.2f}" for x in row))
    return lines
