"""The 14-term orthotropic strain-energy library.

Each term is psi_i = w_i * phi(x; b) with x = I - I_ref, inner weight b = w_i*
and one of three activations applied to z = x**k (k = 1 or 2)::

    identity            phi = b z
    exponential         phi = (exp(b z) - 1) / b             -> z      as b -> 0
    linear-exponential  phi = (exp(b z) - 1 - b z) / b       -> 0      as b -> 0

Terms on I4s act on both offset fibers with a 1/2 weight each. Stresses are
derivatives of the reduced energy psi(l1, l2), so the incompressibility
pressure is already folded in.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .kinematics import (
    DeformationState,
    InvariantSet,
    Orientation,
    invariants,
    invariants_from_stretches,
)

N_TERMS = 14
EXP_LIMIT = 700.0
SMALL_B = 1e-8


class Invariant(enum.IntEnum):
    I1 = 0
    I2 = 1
    I4w = 2
    I4s = 3  # expands to (I4sI, I4sII)


class Activation(str, enum.Enum):
    IDENTITY = "identity"
    EXP = "exp"
    LINEXP = "linexp"


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class TermSpec:
    index: int  # 1-based, matches the usual numbering of the library
    invariant: Invariant
    power: int
    activation: Activation

    @property
    def reference(self) -> float:
        return 3.0 if self.invariant in (Invariant.I1, Invariant.I2) else 1.0

    @property
    def name(self) -> str:
        inv = self.invariant.name
        power = "" if self.power == 1 else "_sq"
        act = {"identity": "", "exp": "_exp", "linexp": "_linexp"}[self.activation.value]
        return f"{inv}{power}{act}" if (power or act) else f"{inv}_lin"

    @property
    def rows(self) -> tuple[int, ...]:
        """Rows of InvariantSet.values this term reads."""
        if self.invariant is Invariant.I4s:
            return (3, 4)
        return (int(self.invariant),)

    @property
    def inner_weight_frozen(self) -> bool:
        # only the product w * w* is identifiable for identity activations
        return self.activation is Activation.IDENTITY


def _library() -> tuple[TermSpec, ...]:
    specs = []
    idx = 1
    for inv in (Invariant.I1, Invariant.I2):
        for power in (1, 2):
            for act in (Activation.IDENTITY, Activation.EXP):
                specs.append(TermSpec(idx, inv, power, act))
                idx += 1
    for inv in (Invariant.I4w, Invariant.I4s):
        specs.append(TermSpec(idx, inv, 1, Activation.LINEXP))
        specs.append(TermSpec(idx + 1, inv, 2, Activation.IDENTITY))
        specs.append(TermSpec(idx + 2, inv, 2, Activation.EXP))
        idx += 3
    return tuple(specs)


LIBRARY: tuple[TermSpec, ...] = _library()
TERM_NAMES: tuple[str, ...] = tuple(t.name for t in LIBRARY)
FROZEN_INNER = np.array([t.inner_weight_frozen for t in LIBRARY])


def term_by_name(name: str) -> TermSpec:
    try:
        return LIBRARY[TERM_NAMES.index(name)]
    except ValueError:
        raise KeyError(f"unknown term {name!r}; known: {', '.join(TERM_NAMES)}") from None


@dataclass(frozen=True)
class TermEval:
    psi: np.ndarray
    f: np.ndarray
    g: np.ndarray
    dpsi_dI1: np.ndarray
    dpsi_dI2: np.ndarray
    df_dwstar: np.ndarray
    dg_dwstar: np.ndarray


def _check_overflow(arg, spec: TermSpec):
    if np.any(arg > EXP_LIMIT):
        raise OverflowError(
            f"term {spec.index} ({spec.name}): exponent {float(np.max(arg)):.4g} exceeds {EXP_LIMIT:g}")


def _activation(spec: TermSpec, x, b):
    """Return phi, dphi/dx and d2phi/(dx db) for one invariant row."""
    z = x if spec.power == 1 else x * x
    dz = np.ones_like(x) if spec.power == 1 else 2.0 * x
    if spec.activation is Activation.IDENTITY:
        return b * z, b * dz, dz
    bz = b * z
    _check_overflow(bz, spec)
    e = np.exp(bz)
    if spec.activation is Activation.EXP:
        if b < SMALL_B:
            phi = z + 0.5 * b * z * z
        else:
            phi = np.expm1(bz) / b
        return phi, e * dz, z * e * dz
    # linear-exponential
    if b < SMALL_B:
        phi = 0.5 * b * z * z
    else:
        phi = (np.expm1(bz) - bz) / b
    return phi, np.expm1(bz) * dz, z * e * dz


def eval_term(spec: TermSpec, inv: InvariantSet, wstar: float) -> TermEval:
    """Unit-external-weight energy and stresses of a single term."""
    wstar = float(wstar)
    if wstar < 0:
        raise ConstraintError(f"term {spec.index}: inner weight must be non-negative, got {wstar}")
    rows = spec.rows
    scale = 0.5 if len(rows) == 2 else 1.0
    shape = np.shape(inv.values[0])
    psi = np.zeros(shape)
    f = np.zeros(shape)
    g = np.zeros(shape)
    df = np.zeros(shape)
    dg = np.zeros(shape)
    for r in rows:
        phi, dphi, dphi_db = _activation(spec, inv.values[r] - spec.reference, wstar)
        psi = psi + scale * phi
        f = f + scale * dphi * inv.d1[r]
        g = g + scale * dphi * inv.d2[r]
        df = df + scale * dphi_db * inv.d1[r]
        dg = dg + scale * dphi_db * inv.d2[r]
    zero = np.zeros(shape)
    first = _activation(spec, inv.values[rows[0]] - spec.reference, wstar)[1]
    dI1 = first if spec.invariant is Invariant.I1 else zero
    dI2 = first if spec.invariant is Invariant.I2 else zero
    return TermEval(psi, f, g, dI1, dI2, df, dg)


def eval_library(inv: InvariantSet, wstar_vec) -> list[TermEval]:
    wstar_vec = np.asarray(wstar_vec, dtype=float)
    if wstar_vec.shape != (N_TERMS,):
        raise ValueError(f"expected {N_TERMS} inner weights, got shape {wstar_vec.shape}")
    return [eval_term(spec, inv, w) for spec, w in zip(LIBRARY, wstar_vec)]


def library_stress(values: np.ndarray, dvalues: np.ndarray, wstar_vec) -> tuple[np.ndarray, np.ndarray]:
    """Directional unit-weight stresses for every term, vectorized.

    ``values`` and ``dvalues`` are (5, n) invariants and their partials along
    the stress direction of each observation. Returns ``(h, dh_dwstar)``,
    both of shape (n, 14).
    """
    wstar_vec = np.asarray(wstar_vec, dtype=float)
    if np.any(wstar_vec < 0):
        raise ConstraintError("inner weights must be non-negative")
    n = values.shape[1]
    h = np.zeros((n, N_TERMS))
    dh = np.zeros((n, N_TERMS))
    for j, spec in enumerate(LIBRARY):
        rows = spec.rows
        scale = 0.5 if len(rows) == 2 else 1.0
        for r in rows:
            _, dphi, dphi_db = _activation(spec, values[r] - spec.reference, wstar_vec[j])
            h[:, j] += scale * dphi * dvalues[r]
            dh[:, j] += scale * dphi_db * dvalues[r]
    return h, dh


def reduced_energy(spec: TermSpec, lambda1, lambda2, orientation, wstar: float):
    """psi of one term as a function of the two in-plane stretches."""
    return eval_term(spec, invariants_from_stretches(lambda1, lambda2, orientation), wstar).psi


# Fixed Gauss-Legendre rule on [1, lambda_max]; smooth in lambda_max and w*.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _equibiaxial_rule(lambda_max: float):
    half = 0.5 * (lambda_max - 1.0)
    lam = 1.0 + half * (_GL_NODES + 1.0)
    return lam, half * _GL_WEIGHTS


def term_stress_integral(spec: TermSpec, wstar: float, lambda_max: float) -> float:
    """Integral of the term's equibiaxial P11 over [1, lambda_max] (0-90 mount)."""
    return float(term_stress_integrals(np.full(N_TERMS, wstar), lambda_max)[0][spec.index - 1])


def term_stress_integrals(wstar_vec, lambda_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Stress integrals of all 14 terms and their derivatives in w*."""
    if not lambda_max > 1.0:
        raise ValueError(f"lambda_max must exceed 1, got {lambda_max}")
    lam, weights = _equibiaxial_rule(float(lambda_max))
    inv = invariants_from_stretches(lam, lam, Orientation.ALIGNED)
    h, dh = library_stress(inv.values, inv.d1, wstar_vec)
    return weights @ h, weights @ dh


__all__ = [
    "Activation", "ConstraintError", "DeformationState", "FROZEN_INNER", "Invariant",
    "LIBRARY", "N_TERMS", "TERM_NAMES", "TermEval", "TermSpec", "eval_library", "eval_term",
    "invariants", "library_stress", "reduced_energy", "term_by_name", "term_stress_integral",
    "term_stress_integrals",
]
