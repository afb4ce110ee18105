"""Incompressible, shear-free biaxial kinematics.

The deformation gradient is F = diag(l1, l2, 1/(l1 l2)). All invariant
derivatives are taken with respect to (l1, l2) after the out-of-plane stretch
has been eliminated, so dpsi/dl1 of the reduced energy is directly P11.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

SQRT_HALF = np.sqrt(0.5)
FIBER_OFFSET = np.deg2rad(60.0)


class Orientation(str, enum.Enum):
    """Mounting of the specimen relative to the loading axes."""

    ALIGNED = "0-90"  # warp fiber along axis 1
    OFFSET = "pm45"  # warp fiber at +45 degrees

    @classmethod
    def parse(cls, value) -> "Orientation":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        aliases = {
            "0-90": cls.ALIGNED, "0/90": cls.ALIGNED, "aligned": cls.ALIGNED,
            "aligned0_90": cls.ALIGNED,
            "pm45": cls.OFFSET, "-45/+45": cls.OFFSET, "+-45": cls.OFFSET,
            "offset": cls.OFFSET, "offset45": cls.OFFSET,
        }
        try:
            return aliases[text]
        except KeyError:
            raise ValueError(f"unknown orientation {value!r}") from None


@dataclass(frozen=True)
class FiberFrame:
    w: np.ndarray
    sI: np.ndarray
    sII: np.ndarray

    @property
    def vectors(self):
        return self.w, self.sI, self.sII


def _in_plane(angle: float) -> np.ndarray:
    return np.array([np.cos(angle), np.sin(angle), 0.0])


def fiber_frame(orientation: Orientation) -> FiberFrame:
    """Warp direction w and the two offset fibers at +/-60 degrees from it."""
    orientation = Orientation.parse(orientation)
    if orientation is Orientation.ALIGNED:
        w = np.array([1.0, 0.0, 0.0])
        sI = _in_plane(FIBER_OFFSET)
        sII = sI * np.array([1.0, -1.0, 0.0])
    else:
        w = np.array([SQRT_HALF, SQRT_HALF, 0.0])
        sI = _in_plane(np.pi / 4 + FIBER_OFFSET)
        # mirror about w, written exactly so the equibiaxial fiber invariants tie bitwise
        sII = sI[[1, 0, 2]]
    return FiberFrame(w=w, sI=sI, sII=sII)


@dataclass(frozen=True)
class DeformationState:
    """Biaxial stretches (scalars or equally shaped arrays) and the mount."""

    lambda1: float | np.ndarray
    lambda2: float | np.ndarray
    orientation: Orientation = Orientation.ALIGNED

    def __post_init__(self):
        object.__setattr__(self, "orientation", Orientation.parse(self.orientation))
        l1 = np.asarray(self.lambda1, dtype=float)
        l2 = np.asarray(self.lambda2, dtype=float)
        if not (np.all(l1 > 0) and np.all(l2 > 0)):
            raise ValueError("stretches must be strictly positive")

    @property
    def lambda3(self):
        return 1.0 / (np.asarray(self.lambda1, dtype=float) * np.asarray(self.lambda2, dtype=float))

    def cauchy_green(self) -> np.ndarray:
        """Diagonal of C, shape (..., 3)."""
        l1 = np.asarray(self.lambda1, dtype=float)
        l2 = np.asarray(self.lambda2, dtype=float)
        return np.stack(np.broadcast_arrays(l1**2, l2**2, self.lambda3**2), axis=-1)

    def swapped(self) -> "DeformationState":
        return DeformationState(self.lambda2, self.lambda1, self.orientation)


INVARIANT_NAMES = ("I1", "I2", "I4w", "I4sI", "I4sII")


@dataclass(frozen=True)
class InvariantSet:
    """Invariants and their partials with respect to (lambda1, lambda2).

    ``values`` has shape (5, ...) ordered as INVARIANT_NAMES; ``d1`` and ``d2``
    hold the matching partials along lambda1 and lambda2.
    """

    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    def __getattr__(self, name):
        if name in INVARIANT_NAMES:
            return self.values[INVARIANT_NAMES.index(name)]
        if name.startswith("d") and name[1:] in INVARIANT_NAMES:
            k = INVARIANT_NAMES.index(name[1:])
            return self.d1[k], self.d2[k]
        raise AttributeError(name)

    def directional(self, direction: int) -> np.ndarray:
        """Partials along lambda1 (direction 1) or lambda2 (direction 2)."""
        if direction == 1:
            return self.d1
        if direction == 2:
            return self.d2
        raise ValueError(f"direction must be 1 or 2, got {direction!r}")


def invariants_from_stretches(lambda1, lambda2, orientation) -> InvariantSet:
    """Vectorized core of :func:`invariants`."""
    l1 = np.asarray(lambda1, dtype=float)
    l2 = np.asarray(lambda2, dtype=float)
    if not (np.all(l1 > 0) and np.all(l2 > 0)):
        raise ValueError("stretches must be strictly positive")
    l1, l2 = np.broadcast_arrays(l1, l2)
    frame = fiber_frame(orientation)

    a, b = l1**2, l2**2
    c = 1.0 / (a * b)
    I1 = a + b + c
    I2 = a * b + 1.0 / a + 1.0 / b
    dI1 = (2 * l1 - 2 * c / l1, 2 * l2 - 2 * c / l2)
    dI2 = (2 * l1 * b - 2 / (a * l1), 2 * l2 * a - 2 / (b * l2))

    values = [I1, I2]
    d1 = [dI1[0], dI2[0]]
    d2 = [dI1[1], dI2[1]]
    for v in frame.vectors:
        # v3 == 0, so the out-of-plane stretch never enters the fiber invariants
        values.append(v[0] ** 2 * a + v[1] ** 2 * b)
        d1.append(2 * v[0] ** 2 * l1)
        d2.append(2 * v[1] ** 2 * l2)
    return InvariantSet(values=np.array(values), d1=np.array(d1), d2=np.array(d2))


def invariants(state: DeformationState) -> InvariantSet:
    return invariants_from_stretches(state.lambda1, state.lambda2, state.orientation)


# Partials vanish at the reference state; below this magnitude the check
# reports absolute error, since central differences carry O(h^2) noise there.
DERIVATIVE_CHECK_FLOOR = 1e-2


def invariant_derivatives_check(state: DeformationState, h: float = 1e-6) -> float:
    """Max relative error of the analytic partials against central differences."""
    if not 1e-8 <= h <= 1e-4:
        raise ValueError("step must lie in [1e-8, 1e-4]")
    l1 = np.asarray(state.lambda1, dtype=float)
    l2 = np.asarray(state.lambda2, dtype=float)
    inv = invariants(state)
    o = state.orientation
    fd1 = (invariants_from_stretches(l1 + h, l2, o).values
           - invariants_from_stretches(l1 - h, l2, o).values) / (2 * h)
    fd2 = (invariants_from_stretches(l1, l2 + h, o).values
           - invariants_from_stretches(l1, l2 - h, o).values) / (2 * h)
    err1 = np.abs(inv.d1 - fd1) / np.maximum(np.abs(inv.d1), DERIVATIVE_CHECK_FLOOR)
    err2 = np.abs(inv.d2 - fd2) / np.maximum(np.abs(inv.d2), DERIVATIVE_CHECK_FLOOR)
    return float(max(err1.max(), err2.max()))
