"""Finite-population data model.

Potential outcomes and covariates are fixed quantities here; the only
randomness in the whole framework comes from treatment assignment. A
:class:`Population` stores the full potential-outcome table (both arms),
while :class:`ObservedData` stores what an experimenter actually sees
after one assignment is realized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


def canonicalize_labels(labels) -> np.ndarray:
    """Map arbitrary hashable labels to integers 1..K by first appearance."""
    mapping = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
        out[i] = mapping[lab]
    return out


def _check_vector(v, name: str, n: int | None = None) -> np.ndarray:
    arr = np.array(v, dtype=float)
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional")
    if n is not None and arr.shape[0] != n:
        raise DataError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains missing or non-finite values")
    return arr


@dataclass(frozen=True)
class Population:
    """A fixed table of potential outcomes, covariates, and optional strata.

    ``x`` is an ``n x d`` matrix (``d`` may be zero), ``y1``/``y0`` are the
    potential outcomes under treatment and control, and ``strata`` (when
    present) holds stratum labels canonicalized to 1..K in order of first
    appearance. Instances are immutable and safe to share.
    """

    y1: np.ndarray
    y0: np.ndarray
    x: np.ndarray
    strata: np.ndarray | None = None

    def __post_init__(self):
        y1 = _check_vector(self.y1, "y1")
        n = y1.shape[0]
        if n == 0:
            raise DataError("population must contain at least one unit")
        y0 = _check_vector(self.y0, "y0", n)
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(n, 1) if x.size else x.reshape(n, 0)
        if x.ndim != 2 or x.shape[0] != n:
            raise DataError(f"x must be an {n} x d matrix")
        if not np.all(np.isfinite(x)):
            raise DataError("x contains missing or non-finite values")
        strata = self.strata
        if strata is not None:
            if len(strata) != n:
                raise DataError("strata must have one label per unit")
            strata = canonicalize_labels(list(strata))
            strata.setflags(write=False)
        y1.setflags(write=False)
        y0.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "strata", strata)

    @property
    def n(self) -> int:
        return self.y1.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def n_strata(self) -> int:
        if self.strata is None:
            return 0
        return int(self.strata.max())


@dataclass(frozen=True)
class ObservedData:
    """One realized experiment: covariates, strata, assignment, outcome."""

    y: np.ndarray
    z: np.ndarray
    x: np.ndarray
    strata: np.ndarray | None = None

    def __post_init__(self):
        y = _check_vector(self.y, "y")
        n = y.shape[0]
        z = np.array(self.z)
        if z.shape != (n,) or not np.all((z == 0) | (z == 1)):
            raise DataError("z must be a binary vector matching y in length")
        z = z.astype(np.int8)
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(n, 1) if x.size else x.reshape(n, 0)
        if x.ndim != 2 or x.shape[0] != n:
            raise DataError(f"x must be an {n} x d matrix")
        if not np.all(np.isfinite(x)):
            raise DataError("x contains missing or non-finite values")
        strata = self.strata
        if strata is not None:
            if len(strata) != n:
                raise DataError("strata must have one label per unit")
            strata = canonicalize_labels(list(strata))
            strata.setflags(write=False)
        y.setflags(write=False)
        z.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "strata", strata)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


def ate_true(pop: Population) -> float:
    """Average treatment effect of the fixed population."""
    return float(np.mean(pop.y1 - pop.y0))


def realize(pop: Population, z) -> ObservedData:
    """Reveal the observed outcomes for one assignment vector."""
    z = np.asarray(z)
    if z.shape != (pop.n,):
        raise DataError(f"assignment has length {z.size}, expected {pop.n}")
    if not np.all((z == 0) | (z == 1)):
        raise DataError("assignment must be binary")
    z = z.astype(np.int8)
    y = np.where(z == 1, pop.y1, pop.y0)
    return ObservedData(y=y, z=z, x=pop.x, strata=pop.strata)
