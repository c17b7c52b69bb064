"""Randomization laws for the four canonical experimental designs.

Each design is an immutable description of a distribution over binary
assignment vectors: Bernoulli randomization, complete randomization,
stratified randomization, and matched pairs (a stratified design with
strata of size two and one treated unit per stratum). Besides sampling,
every design exposes exact per-unit treatment probabilities, the exact
probability of a full assignment vector, and exhaustive enumeration of
its support for small problems.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, SupportTooLarge
from .population import canonicalize_labels

DEFAULT_ENUMERATION_CAP = 1_000_000


def _draw_without_replacement(rng: np.random.Generator, pool: np.ndarray, k: int) -> np.ndarray:
    """Uniform k-subset of ``pool`` via a partial Fisher-Yates shuffle.

    Exact uniformity without rejection; the random draws are generated
    in one vectorized call and the swaps applied in order.
    """
    idx = np.array(pool, copy=True)
    n = idx.shape[0]
    if k == 0:
        return idx[:0]
    targets = rng.integers(np.arange(k), n)
    for j in range(k):
        r = targets[j]
        idx[j], idx[r] = idx[r], idx[j]
    return idx[:k]


@dataclass(frozen=True)
class Design:
    """Base class; concrete designs implement the sampling/probability API."""

    @property
    def kind(self) -> str:
        return KIND_BY_CLASS[type(self)]

    def to_json(self) -> dict:
        raise NotImplementedError

    def support_size(self) -> int:
        raise NotImplementedError


@dataclass(frozen=True)
class Bernoulli(Design):
    """Independent Bernoulli(r1) assignment for each of n units."""

    n: int
    r1: float

    def __post_init__(self):
        if self.n < 0:
            raise DataError("n must be nonnegative")
        if not 0.0 < self.r1 < 1.0:
            raise DataError("r1 must lie strictly between 0 and 1")

    def to_json(self) -> dict:
        return {"kind": "bernoulli", "n": self.n, "r1": self.r1}

    def support_size(self) -> int:
        return 2 ** self.n


@dataclass(frozen=True)
class CompleteRandomization(Design):
    """Uniform distribution over assignments with exactly n1 treated units."""

    n: int
    n1: int

    def __post_init__(self):
        if not 0 < self.n1 < self.n:
            raise DataError("complete randomization needs 0 < n1 < n")

    @property
    def n0(self) -> int:
        return self.n - self.n1

    def to_json(self) -> dict:
        return {"kind": "complete", "n": self.n, "n1": self.n1}

    def support_size(self) -> int:
        return math.comb(self.n, self.n1)


@dataclass(frozen=True)
class Stratified(Design):
    """Independent complete randomizations within strata.

    ``strata`` holds one label per unit; labels are canonicalized to 1..K
    in order of first appearance. ``treated`` gives the number of treated
    units per stratum, aligned with that first-appearance order.
    """

    strata: tuple
    treated: tuple

    def __post_init__(self):
        labels = canonicalize_labels(list(self.strata))
        object.__setattr__(self, "strata", tuple(int(v) for v in labels))
        object.__setattr__(self, "treated", tuple(int(v) for v in self.treated))
        arr = np.asarray(self.strata)
        sizes = tuple(int(np.sum(arr == k)) for k in range(1, int(arr.max()) + 1))
        object.__setattr__(self, "_sizes", sizes)
        object.__setattr__(
            self, "_units", tuple(np.flatnonzero(arr == k) for k in range(1, len(sizes) + 1))
        )
        if len(self.treated) != len(sizes):
            raise DataError("treated counts must match the number of strata")
        for k, (nk, nk1) in enumerate(zip(sizes, self.treated), start=1):
            if not 0 < nk1 < nk:
                raise DataError(f"stratum {k} needs 0 < treated < size, got {nk1}/{nk}")

    @property
    def n(self) -> int:
        return len(self.strata)

    @property
    def n_strata(self) -> int:
        return max(self.strata)

    @property
    def stratum_sizes(self) -> tuple:
        return self._sizes

    def units_in(self, k: int) -> np.ndarray:
        return self._units[k - 1]

    def to_json(self) -> dict:
        return {"kind": "stratified", "strata": list(self.strata), "treated": list(self.treated)}

    def support_size(self) -> int:
        total = 1
        for nk, nk1 in zip(self.stratum_sizes, self.treated):
            total *= math.comb(nk, nk1)
        return total


@dataclass(frozen=True)
class MatchedPairs(Design):
    """One treated unit per pair, chosen by an independent fair coin."""

    pairs: tuple

    def __post_init__(self):
        labels = canonicalize_labels(list(self.pairs))
        object.__setattr__(self, "pairs", tuple(int(v) for v in labels))
        arr = np.asarray(self.pairs)
        counts = np.bincount(arr)[1:]
        if len(counts) == 0 or not np.all(counts == 2):
            raise DataError("every pair label must appear exactly twice")
        object.__setattr__(
            self, "_units", tuple(np.flatnonzero(arr == k) for k in range(1, len(counts) + 1))
        )

    @property
    def n(self) -> int:
        return len(self.pairs)

    @property
    def n_pairs(self) -> int:
        return max(self.pairs)

    def units_in(self, k: int) -> np.ndarray:
        return self._units[k - 1]

    def as_stratified(self) -> Stratified:
        """The equivalent stratified design with strata of size two."""
        return Stratified(strata=self.pairs, treated=(1,) * self.n_pairs)

    def to_json(self) -> dict:
        return {"kind": "matched_pairs", "pairs": list(self.pairs)}

    def support_size(self) -> int:
        return 2 ** self.n_pairs


KIND_BY_CLASS = {
    Bernoulli: "bernoulli",
    CompleteRandomization: "complete",
    Stratified: "stratified",
    MatchedPairs: "matched_pairs",
}


def from_json(obj: dict) -> Design:
    kind = obj.get("kind")
    if kind == "bernoulli":
        return Bernoulli(n=int(obj["n"]), r1=float(obj["r1"]))
    if kind == "complete":
        return CompleteRandomization(n=int(obj["n"]), n1=int(obj["n1"]))
    if kind == "stratified":
        return Stratified(strata=tuple(obj["strata"]), treated=tuple(obj["treated"]))
    if kind == "matched_pairs":
        return MatchedPairs(pairs=tuple(obj["pairs"]))
    raise DataError(f"unknown design kind: {kind!r}")


def sample_assignment(design: Design, rng: np.random.Generator) -> np.ndarray:
    """Draw one assignment vector from the design's law."""
    if isinstance(design, Bernoulli):
        return (rng.random(design.n) < design.r1).astype(np.int8)
    if isinstance(design, CompleteRandomization):
        z = np.zeros(design.n, dtype=np.int8)
        treated = _draw_without_replacement(rng, np.arange(design.n), design.n1)
        z[treated] = 1
        return z
    if isinstance(design, Stratified):
        z = np.zeros(design.n, dtype=np.int8)
        for k in range(1, design.n_strata + 1):
            units = design.units_in(k)
            treated = _draw_without_replacement(rng, units, design.treated[k - 1])
            z[treated] = 1
        return z
    if isinstance(design, MatchedPairs):
        z = np.zeros(design.n, dtype=np.int8)
        for k in range(1, design.n_pairs + 1):
            units = design.units_in(k)
            z[units[int(rng.integers(0, 2))]] = 1
        return z
    raise TypeError(f"unsupported design: {design!r}")


def treatment_prob(design: Design, unit: int, arm: int) -> float:
    """Exact marginal probability that ``unit`` receives ``arm``."""
    if arm not in (0, 1):
        raise DataError("arm must be 0 or 1")
    if not 0 <= unit < design.n:
        raise DataError(f"unit {unit} out of range")
    if isinstance(design, Bernoulli):
        p1 = design.r1
    elif isinstance(design, CompleteRandomization):
        p1 = design.n1 / design.n
    elif isinstance(design, Stratified):
        k = design.strata[unit]
        p1 = design.treated[k - 1] / design.stratum_sizes[k - 1]
    elif isinstance(design, MatchedPairs):
        p1 = 0.5
    else:
        raise TypeError(f"unsupported design: {design!r}")
    return p1 if arm == 1 else 1.0 - p1


def treatment_probs(design: Design, arm: int = 1) -> np.ndarray:
    """Vector of per-unit marginal probabilities for one arm."""
    return np.array([treatment_prob(design, i, arm) for i in range(design.n)])


def assignment_prob(design: Design, z) -> float:
    """Exact probability of a full assignment vector (0 outside support)."""
    z = np.asarray(z)
    if z.shape != (design.n,):
        raise DataError(f"assignment has length {z.size}, expected {design.n}")
    if not np.all((z == 0) | (z == 1)):
        return 0.0
    if isinstance(design, Bernoulli):
        s = int(z.sum())
        return design.r1 ** s * (1.0 - design.r1) ** (design.n - s)
    if isinstance(design, CompleteRandomization):
        if int(z.sum()) != design.n1:
            return 0.0
        return 1.0 / math.comb(design.n, design.n1)
    if isinstance(design, Stratified):
        # Product over strata, accumulated in log space to dodge underflow
        # when there are many strata.
        logp = 0.0
        for k in range(1, design.n_strata + 1):
            units = design.units_in(k)
            if int(z[units].sum()) != design.treated[k - 1]:
                return 0.0
            logp -= math.log(math.comb(len(units), design.treated[k - 1]))
        return math.exp(logp)
    if isinstance(design, MatchedPairs):
        for k in range(1, design.n_pairs + 1):
            units = design.units_in(k)
            if int(z[units].sum()) != 1:
                return 0.0
        return 0.5 ** design.n_pairs
    raise TypeError(f"unsupported design: {design!r}")


def enumerate_assignments(design: Design, cap: int = DEFAULT_ENUMERATION_CAP):
    """Yield every (assignment, probability) pair in the design's support.

    Raises :class:`SupportTooLarge` when the support exceeds ``cap``. The
    iteration order is deterministic.
    """
    count = design.support_size()
    if count > cap:
        raise SupportTooLarge(count, cap)
    if isinstance(design, Bernoulli):
        for bits in itertools.product((0, 1), repeat=design.n):
            z = np.array(bits, dtype=np.int8)
            s = int(z.sum())
            yield z, design.r1 ** s * (1.0 - design.r1) ** (design.n - s)
        return
    if isinstance(design, CompleteRandomization):
        p = 1.0 / math.comb(design.n, design.n1)
        for treated in itertools.combinations(range(design.n), design.n1):
            z = np.zeros(design.n, dtype=np.int8)
            z[list(treated)] = 1
            yield z, p
        return
    if isinstance(design, Stratified):
        per_stratum = []
        for k in range(1, design.n_strata + 1):
            units = design.units_in(k)
            per_stratum.append(
                [list(c) for c in itertools.combinations(units.tolist(), design.treated[k - 1])]
            )
        p = 1.0 / count
        for combo in itertools.product(*per_stratum):
            z = np.zeros(design.n, dtype=np.int8)
            for treated in combo:
                z[treated] = 1
            yield z, p
        return
    if isinstance(design, MatchedPairs):
        units_by_pair = [design.units_in(k) for k in range(1, design.n_pairs + 1)]
        p = 0.5 ** design.n_pairs
        for picks in itertools.product((0, 1), repeat=design.n_pairs):
            z = np.zeros(design.n, dtype=np.int8)
            for units, pick in zip(units_by_pair, picks):
                z[units[pick]] = 1
            yield z, p
        return
    raise TypeError(f"unsupported design: {design!r}")
