"""Conditional sample-splitting plans and their induced fold designs.

A split plan divides the experiment into two folds so that, given the
split, the two folds' assignment vectors are independent randomized
experiments in their own right. Each plan is tied to the design family
it is valid for:

* ``BernoulliSplit`` labels units by independent coins (Bernoulli
  designs); each fold stays a Bernoulli experiment with the same rate.
* ``SplitByTreatmentCRE`` splits each treatment arm of a completely
  randomized experiment into fixed-size pieces; each fold is itself a
  completely randomized experiment.
* ``SplitByTreatmentSRE`` applies the arm split within every stratum of
  a stratified experiment; each fold is a stratified experiment over all
  strata with the per-fold counts.
* ``SplitByStratum`` sends whole strata to one fold or the other; each
  fold is a stratified (or matched-pairs) experiment over its strata
  with the original counts.
* ``Hybrid`` mixes the two stratified strategies stratum by stratum.

The resulting :class:`SplitResult` records fold membership, the two
conditional fold designs, and every unit's conditional treatment
probability given the split. Those probabilities are the denominators
of the cross-fitted estimator, so they are computed exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import designs as dsg
from .designs import (
    Bernoulli,
    CompleteRandomization,
    Design,
    MatchedPairs,
    Stratified,
    _draw_without_replacement,
)
from .errors import DataError, DegenerateStratum, PlanIncompatible, SupportTooLarge

DEFAULT_SPLIT_CAP = 1_000_000


@dataclass(frozen=True)
class SplitPlan:
    """Base class for split plans."""

    @property
    def kind(self) -> str:
        return PLAN_KIND[type(self)]

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class BernoulliSplit(SplitPlan):
    """Independent fold coins with P(fold 1) = pi; ignores the realized z."""

    pi: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.pi < 1.0:
            raise DataError("pi must lie strictly between 0 and 1")

    def to_json(self) -> dict:
        return {"kind": "bernoulli", "pi": self.pi}


@dataclass(frozen=True)
class SplitByTreatmentCRE(SplitPlan):
    """Fold-1 arm sizes for a completely randomized experiment.

    Fold 1 receives ``n1_fold1`` treated and ``n0_fold1`` control units,
    drawn uniformly within each arm of the realized assignment; fold 2
    receives the rest.
    """

    n1_fold1: int
    n0_fold1: int

    def to_json(self) -> dict:
        return {"kind": "by_treatment_cre", "n1_fold1": self.n1_fold1, "n0_fold1": self.n0_fold1}


@dataclass(frozen=True)
class SplitByTreatmentSRE(SplitPlan):
    """Per-stratum fold-1 arm sizes, one (treated, control) pair per stratum."""

    fold1: tuple  # ((n1_fold1, n0_fold1), ...) aligned with stratum labels 1..K

    def __post_init__(self):
        object.__setattr__(
            self, "fold1", tuple((int(a), int(b)) for a, b in self.fold1)
        )

    def to_json(self) -> dict:
        return {"kind": "by_treatment_sre", "fold1": [list(p) for p in self.fold1]}


@dataclass(frozen=True)
class SplitByStratum(SplitPlan):
    """Send ``k_fold1`` whole strata (or pairs) to fold 1, uniformly at random."""

    k_fold1: int

    def to_json(self) -> dict:
        return {"kind": "by_stratum", "k_fold1": self.k_fold1}


@dataclass(frozen=True)
class Hybrid(SplitPlan):
    """Stratum-by-stratum mix of by-treatment and whole-stratum splitting.

    ``by_treatment`` lists (stratum label, n1_fold1, n0_fold1) for strata
    split within arms; all remaining strata are assigned wholesale, with
    ``whole_fold1`` of them going to fold 1.
    """

    by_treatment: tuple  # ((k, n1_fold1, n0_fold1), ...)
    whole_fold1: int = 0

    def __post_init__(self):
        object.__setattr__(
            self,
            "by_treatment",
            tuple((int(k), int(a), int(b)) for k, a, b in self.by_treatment),
        )

    def to_json(self) -> dict:
        return {
            "kind": "hybrid",
            "by_treatment": [list(t) for t in self.by_treatment],
            "whole_fold1": self.whole_fold1,
        }


PLAN_KIND = {
    BernoulliSplit: "bernoulli",
    SplitByTreatmentCRE: "by_treatment_cre",
    SplitByTreatmentSRE: "by_treatment_sre",
    SplitByStratum: "by_stratum",
    Hybrid: "hybrid",
}


def plan_from_json(obj: dict) -> SplitPlan:
    kind = obj.get("kind")
    if kind == "bernoulli":
        return BernoulliSplit(pi=float(obj["pi"]))
    if kind == "by_treatment_cre":
        return SplitByTreatmentCRE(n1_fold1=int(obj["n1_fold1"]), n0_fold1=int(obj["n0_fold1"]))
    if kind == "by_treatment_sre":
        return SplitByTreatmentSRE(fold1=tuple(tuple(p) for p in obj["fold1"]))
    if kind == "by_stratum":
        return SplitByStratum(k_fold1=int(obj["k_fold1"]))
    if kind == "hybrid":
        return Hybrid(
            by_treatment=tuple(tuple(t) for t in obj["by_treatment"]),
            whole_fold1=int(obj.get("whole_fold1", 0)),
        )
    raise DataError(f"unknown plan kind: {kind!r}")


def validate_plan(plan: SplitPlan, design: Design) -> None:
    """Check plan/design compatibility; raises PlanIncompatible on failure."""
    if isinstance(plan, BernoulliSplit):
        if not isinstance(design, Bernoulli):
            raise PlanIncompatible("a Bernoulli split applies only to Bernoulli designs")
        return
    if isinstance(plan, SplitByTreatmentCRE):
        if not isinstance(design, CompleteRandomization):
            raise PlanIncompatible("split-by-treatment (CRE form) needs a complete randomization")
        if not (0 < plan.n1_fold1 < design.n1 and 0 < plan.n0_fold1 < design.n0):
            raise PlanIncompatible(
                f"fold-1 arm sizes ({plan.n1_fold1}, {plan.n0_fold1}) must be strictly "
                f"inside (0, {design.n1}) x (0, {design.n0})"
            )
        return
    if isinstance(plan, SplitByTreatmentSRE):
        if not isinstance(design, Stratified):
            raise PlanIncompatible("split-by-treatment (SRE form) needs a stratified design")
        if len(plan.fold1) != design.n_strata:
            raise PlanIncompatible("plan must list one (treated, control) pair per stratum")
        sizes = design.stratum_sizes
        for k, (a, b) in enumerate(plan.fold1, start=1):
            nk1 = design.treated[k - 1]
            nk0 = sizes[k - 1] - nk1
            if min(nk1, nk0) < 2:
                raise DegenerateStratum(
                    f"stratum {k} has an arm with fewer than 2 units; "
                    "split it wholesale instead"
                )
            if not (0 < a < nk1 and 0 < b < nk0):
                raise PlanIncompatible(
                    f"stratum {k} fold-1 arm sizes ({a}, {b}) out of range"
                )
        return
    if isinstance(plan, SplitByStratum):
        if isinstance(design, MatchedPairs):
            n_groups = design.n_pairs
        elif isinstance(design, Stratified):
            n_groups = design.n_strata
        else:
            raise PlanIncompatible("split-by-stratum needs a stratified or matched-pairs design")
        if not 0 < plan.k_fold1 < n_groups:
            raise PlanIncompatible(
                f"k_fold1 must be strictly between 0 and {n_groups}, got {plan.k_fold1}"
            )
        return
    if isinstance(plan, Hybrid):
        if not isinstance(design, Stratified):
            raise PlanIncompatible("a hybrid split needs a stratified design")
        sizes = design.stratum_sizes
        seen = set()
        for k, a, b in plan.by_treatment:
            if not 1 <= k <= design.n_strata or k in seen:
                raise PlanIncompatible(f"invalid or repeated stratum label {k}")
            seen.add(k)
            nk1 = design.treated[k - 1]
            nk0 = sizes[k - 1] - nk1
            if min(nk1, nk0) < 2:
                raise DegenerateStratum(
                    f"stratum {k} has an arm with fewer than 2 units and cannot "
                    "be split by treatment"
                )
            if not (0 < a < nk1 and 0 < b < nk0):
                raise PlanIncompatible(f"stratum {k} fold-1 arm sizes ({a}, {b}) out of range")
        whole = [k for k in range(1, design.n_strata + 1) if k not in seen]
        if not 0 <= plan.whole_fold1 <= len(whole):
            raise PlanIncompatible("whole_fold1 out of range")
        fold1_empty = not seen and plan.whole_fold1 == 0
        fold2_empty = not seen and plan.whole_fold1 == len(whole)
        if fold1_empty or fold2_empty:
            raise PlanIncompatible("each fold must receive at least one unit")
        return
    raise PlanIncompatible(f"unsupported plan: {plan!r}")


def _hybrid_whole(plan: Hybrid, design: Stratified) -> list:
    chosen = {k for k, _, _ in plan.by_treatment}
    return [k for k in range(1, design.n_strata + 1) if k not in chosen]


def _check_realized_counts(plan: SplitPlan, design: Design, z: np.ndarray) -> None:
    z = np.asarray(z)
    if z.shape != (design.n,):
        raise PlanIncompatible(f"assignment has length {z.size}, expected {design.n}")
    if isinstance(design, CompleteRandomization) and int(z.sum()) != design.n1:
        raise PlanIncompatible(
            f"realized treated count {int(z.sum())} does not match the design's {design.n1}"
        )
    if isinstance(design, Stratified):
        for k in range(1, design.n_strata + 1):
            got = int(z[design.units_in(k)].sum())
            if got != design.treated[k - 1]:
                raise PlanIncompatible(
                    f"stratum {k} has {got} treated units, design expects {design.treated[k - 1]}"
                )
    if isinstance(design, MatchedPairs):
        for k in range(1, design.n_pairs + 1):
            if int(z[design.units_in(k)].sum()) != 1:
                raise PlanIncompatible(f"pair {k} does not have exactly one treated unit")


@dataclass(frozen=True)
class SplitResult:
    """A realized partition into two folds plus the conditional laws.

    ``membership`` maps each unit to fold 1 or fold 2; ``fold_designs``
    are the two conditional assignment laws (in the order of each fold's
    ascending original unit indices); ``cond_prob`` is the n x 2 table of
    P(Z_i = z | split).
    """

    membership: np.ndarray
    fold_designs: tuple
    cond_prob: np.ndarray
    plan: SplitPlan
    design: Design

    def __post_init__(self):
        m = np.asarray(self.membership, dtype=np.int8)
        m.setflags(write=False)
        object.__setattr__(self, "membership", m)
        cp = np.asarray(self.cond_prob, dtype=float)
        cp.setflags(write=False)
        object.__setattr__(self, "cond_prob", cp)

    @property
    def n(self) -> int:
        return self.membership.shape[0]

    @property
    def fold_sizes(self) -> tuple:
        return (int(np.sum(self.membership == 1)), int(np.sum(self.membership == 2)))

    def fold_indices(self, q: int) -> np.ndarray:
        return np.flatnonzero(self.membership == q)


def _cond_prob_table(plan: SplitPlan, design: Design, membership: np.ndarray) -> np.ndarray:
    n = design.n
    p1 = np.empty(n, dtype=float)
    if isinstance(plan, BernoulliSplit):
        p1[:] = design.r1
    elif isinstance(plan, SplitByTreatmentCRE):
        frac = {
            1: plan.n1_fold1 / (plan.n1_fold1 + plan.n0_fold1),
            2: (design.n1 - plan.n1_fold1)
            / (design.n - plan.n1_fold1 - plan.n0_fold1),
        }
        for q in (1, 2):
            p1[membership == q] = frac[q]
    elif isinstance(plan, SplitByTreatmentSRE):
        sizes = design.stratum_sizes
        for k in range(1, design.n_strata + 1):
            a, b = plan.fold1[k - 1]
            nk1 = design.treated[k - 1]
            nk0 = sizes[k - 1] - nk1
            units = design.units_in(k)
            in1 = membership[units] == 1
            p1[units[in1]] = a / (a + b)
            p1[units[~in1]] = (nk1 - a) / (nk1 + nk0 - a - b)
    elif isinstance(plan, SplitByStratum):
        if isinstance(design, MatchedPairs):
            p1[:] = 0.5
        else:
            sizes = design.stratum_sizes
            for k in range(1, design.n_strata + 1):
                p1[design.units_in(k)] = design.treated[k - 1] / sizes[k - 1]
    elif isinstance(plan, Hybrid):
        sizes = design.stratum_sizes
        by_t = {k: (a, b) for k, a, b in plan.by_treatment}
        for k in range(1, design.n_strata + 1):
            units = design.units_in(k)
            nk1 = design.treated[k - 1]
            nk0 = sizes[k - 1] - nk1
            if k in by_t:
                a, b = by_t[k]
                in1 = membership[units] == 1
                p1[units[in1]] = a / (a + b)
                p1[units[~in1]] = (nk1 - a) / (nk1 + nk0 - a - b)
            else:
                p1[units] = nk1 / sizes[k - 1]
    else:
        raise PlanIncompatible(f"unsupported plan: {plan!r}")
    return np.column_stack([1.0 - p1, p1])


def _fold_design(plan: SplitPlan, design: Design, membership: np.ndarray, q: int) -> Design:
    idx = np.flatnonzero(membership == q)
    nq = idx.shape[0]
    if isinstance(plan, BernoulliSplit):
        return Bernoulli(n=nq, r1=design.r1)
    if isinstance(plan, SplitByTreatmentCRE):
        nq1 = plan.n1_fold1 if q == 1 else design.n1 - plan.n1_fold1
        return CompleteRandomization(n=nq, n1=nq1)
    if isinstance(plan, SplitByTreatmentSRE):
        labels = tuple(design.strata[i] for i in idx)
        order = sorted(set(labels), key=labels.index)
        treated = tuple(
            plan.fold1[k - 1][0] if q == 1 else design.treated[k - 1] - plan.fold1[k - 1][0]
            for k in order
        )
        return Stratified(strata=labels, treated=treated)
    if isinstance(plan, SplitByStratum):
        if isinstance(design, MatchedPairs):
            return MatchedPairs(pairs=tuple(design.pairs[i] for i in idx))
        labels = tuple(design.strata[i] for i in idx)
        order = sorted(set(labels), key=labels.index)
        treated = tuple(design.treated[k - 1] for k in order)
        return Stratified(strata=labels, treated=treated)
    if isinstance(plan, Hybrid):
        by_t = {k: (a, b) for k, a, b in plan.by_treatment}
        labels = tuple(design.strata[i] for i in idx)
        order = sorted(set(labels), key=labels.index)
        treated = []
        for k in order:
            if k in by_t:
                a = by_t[k][0]
                treated.append(a if q == 1 else design.treated[k - 1] - a)
            else:
                treated.append(design.treated[k - 1])
        return Stratified(strata=labels, treated=tuple(treated))
    raise PlanIncompatible(f"unsupported plan: {plan!r}")


def split_from_membership(
    plan: SplitPlan, design: Design, z, membership
) -> SplitResult:
    """Assemble a SplitResult for an externally supplied fold labeling."""
    membership = np.asarray(membership, dtype=np.int8)
    if membership.shape != (design.n,) or not np.all((membership == 1) | (membership == 2)):
        raise PlanIncompatible("membership must label every unit with fold 1 or 2")
    fold_designs = (
        _fold_design(plan, design, membership, 1),
        _fold_design(plan, design, membership, 2),
    )
    cond = _cond_prob_table(plan, design, membership)
    return SplitResult(
        membership=membership,
        fold_designs=fold_designs,
        cond_prob=cond,
        plan=plan,
        design=design,
    )


def split(plan: SplitPlan, design: Design, z, rng: np.random.Generator) -> SplitResult:
    """Draw one fold labeling from the plan's law and package the result.

    Plans that ignore the realized assignment (``BernoulliSplit``,
    ``SplitByStratum``) still take ``z`` so every plan shares one call
    surface; by-treatment plans check that the realized arm counts match
    the design before splitting.
    """
    validate_plan(plan, design)
    z = np.asarray(z, dtype=np.int8)
    _check_realized_counts(plan, design, z)
    n = design.n
    membership = np.full(n, 2, dtype=np.int8)
    if isinstance(plan, BernoulliSplit):
        membership = np.where(rng.random(n) < plan.pi, 1, 2).astype(np.int8)
    elif isinstance(plan, SplitByTreatmentCRE):
        treated = np.flatnonzero(z == 1)
        control = np.flatnonzero(z == 0)
        membership[_draw_without_replacement(rng, treated, plan.n1_fold1)] = 1
        membership[_draw_without_replacement(rng, control, plan.n0_fold1)] = 1
    elif isinstance(plan, SplitByTreatmentSRE):
        for k in range(1, design.n_strata + 1):
            units = design.units_in(k)
            a, b = plan.fold1[k - 1]
            treated = units[z[units] == 1]
            control = units[z[units] == 0]
            membership[_draw_without_replacement(rng, treated, a)] = 1
            membership[_draw_without_replacement(rng, control, b)] = 1
    elif isinstance(plan, SplitByStratum):
        if isinstance(design, MatchedPairs):
            n_groups, units_in = design.n_pairs, design.units_in
        else:
            n_groups, units_in = design.n_strata, design.units_in
        chosen = _draw_without_replacement(rng, np.arange(1, n_groups + 1), plan.k_fold1)
        for k in chosen:
            membership[units_in(int(k))] = 1
    elif isinstance(plan, Hybrid):
        for k, a, b in plan.by_treatment:
            units = design.units_in(k)
            treated = units[z[units] == 1]
            control = units[z[units] == 0]
            membership[_draw_without_replacement(rng, treated, a)] = 1
            membership[_draw_without_replacement(rng, control, b)] = 1
        whole = np.array(_hybrid_whole(plan, design))
        if whole.size:
            for k in _draw_without_replacement(rng, whole, plan.whole_fold1):
                membership[design.units_in(int(k))] = 1
    else:
        raise PlanIncompatible(f"unsupported plan: {plan!r}")
    return split_from_membership(plan, design, z, membership)


def split_support_size(plan: SplitPlan, design: Design) -> int:
    """Number of distinct fold labelings the plan can produce."""
    if isinstance(plan, BernoulliSplit):
        return 2 ** design.n
    if isinstance(plan, SplitByTreatmentCRE):
        return math.comb(design.n1, plan.n1_fold1) * math.comb(design.n0, plan.n0_fold1)
    if isinstance(plan, SplitByTreatmentSRE):
        total = 1
        sizes = design.stratum_sizes
        for k, (a, b) in enumerate(plan.fold1, start=1):
            nk1 = design.treated[k - 1]
            nk0 = sizes[k - 1] - nk1
            total *= math.comb(nk1, a) * math.comb(nk0, b)
        return total
    if isinstance(plan, SplitByStratum):
        n_groups = design.n_pairs if isinstance(design, MatchedPairs) else design.n_strata
        return math.comb(n_groups, plan.k_fold1)
    if isinstance(plan, Hybrid):
        total = math.comb(len(_hybrid_whole(plan, design)), plan.whole_fold1)
        sizes = design.stratum_sizes
        for k, a, b in plan.by_treatment:
            nk1 = design.treated[k - 1]
            nk0 = sizes[k - 1] - nk1
            total *= math.comb(nk1, a) * math.comb(nk0, b)
        return total
    raise PlanIncompatible(f"unsupported plan: {plan!r}")


def enumerate_splits(plan: SplitPlan, design: Design, z, cap: int = DEFAULT_SPLIT_CAP):
    """Yield every (membership, probability) pair given the realized z.

    The probabilities are the plan's conditional split law P(folds | z);
    they sum to one over the yielded labelings.
    """
    validate_plan(plan, design)
    count = split_support_size(plan, design)
    if count > cap:
        raise SupportTooLarge(count, cap)
    n = design.n
    if isinstance(plan, BernoulliSplit):
        for bits in itertools.product((1, 2), repeat=n):
            m = np.array(bits, dtype=np.int8)
            a = int(np.sum(m == 1))
            yield m, plan.pi ** a * (1.0 - plan.pi) ** (n - a)
        return
    z = np.asarray(z, dtype=np.int8)
    _check_realized_counts(plan, design, z)
    if isinstance(plan, SplitByTreatmentCRE):
        treated = np.flatnonzero(z == 1)
        control = np.flatnonzero(z == 0)
        p = 1.0 / count
        for t_pick in itertools.combinations(treated.tolist(), plan.n1_fold1):
            for c_pick in itertools.combinations(control.tolist(), plan.n0_fold1):
                m = np.full(n, 2, dtype=np.int8)
                m[list(t_pick)] = 1
                m[list(c_pick)] = 1
                yield m, p
        return
    if isinstance(plan, SplitByTreatmentSRE):
        per_stratum = []
        for k in range(1, design.n_strata + 1):
            units = design.units_in(k)
            a, b = plan.fold1[k - 1]
            treated = units[z[units] == 1].tolist()
            control = units[z[units] == 0].tolist()
            picks = [
                list(tp) + list(cp)
                for tp in itertools.combinations(treated, a)
                for cp in itertools.combinations(control, b)
            ]
            per_stratum.append(picks)
        p = 1.0 / count
        for combo in itertools.product(*per_stratum):
            m = np.full(n, 2, dtype=np.int8)
            for pick in combo:
                m[pick] = 1
            yield m, p
        return
    if isinstance(plan, SplitByStratum):
        if isinstance(design, MatchedPairs):
            n_groups, units_in = design.n_pairs, design.units_in
        else:
            n_groups, units_in = design.n_strata, design.units_in
        p = 1.0 / count
        for chosen in itertools.combinations(range(1, n_groups + 1), plan.k_fold1):
            m = np.full(n, 2, dtype=np.int8)
            for k in chosen:
                m[units_in(k)] = 1
            yield m, p
        return
    if isinstance(plan, Hybrid):
        per_bt = []
        for k, a, b in plan.by_treatment:
            units = design.units_in(k)
            treated = units[z[units] == 1].tolist()
            control = units[z[units] == 0].tolist()
            per_bt.append(
                [
                    list(tp) + list(cp)
                    for tp in itertools.combinations(treated, a)
                    for cp in itertools.combinations(control, b)
                ]
            )
        whole = _hybrid_whole(plan, design)
        whole_subsets = list(itertools.combinations(whole, plan.whole_fold1))
        p = 1.0 / count
        for combo in itertools.product(*per_bt):
            for chosen in whole_subsets:
                m = np.full(n, 2, dtype=np.int8)
                for pick in combo:
                    m[pick] = 1
                for k in chosen:
                    m[design.units_in(k)] = 1
                yield m, p
        return
    raise PlanIncompatible(f"unsupported plan: {plan!r}")


def inclusion_probs(plan: SplitPlan, design: Design) -> np.ndarray:
    """Exact P(unit in fold q and Z = z), shape (2, n, 2) indexed [q-1, i, z].

    These are the weights' denominators when fitting a prediction
    function on one fold (the empirical loss reweights each unit by the
    inverse probability of it landing in that fold with that arm).
    Plans outside the shipped family may supply their own table via an
    ``inclusion_probs(design)`` method.
    """
    if not isinstance(plan, SplitPlan) and hasattr(plan, "inclusion_probs"):
        return np.asarray(plan.inclusion_probs(design), dtype=float)
    validate_plan(plan, design)
    n = design.n
    out = np.empty((2, n, 2), dtype=float)
    if isinstance(plan, BernoulliSplit):
        for qi, pq in enumerate((plan.pi, 1.0 - plan.pi)):
            out[qi, :, 1] = pq * design.r1
            out[qi, :, 0] = pq * (1.0 - design.r1)
        return out
    if isinstance(plan, SplitByTreatmentCRE):
        counts = {
            (1, 1): plan.n1_fold1,
            (1, 0): plan.n0_fold1,
            (2, 1): design.n1 - plan.n1_fold1,
            (2, 0): design.n0 - plan.n0_fold1,
        }
        for q in (1, 2):
            for zarm in (0, 1):
                out[q - 1, :, zarm] = counts[(q, zarm)] / design.n
        return out
    if isinstance(plan, SplitByTreatmentSRE):
        sizes = design.stratum_sizes
        for k in range(1, design.n_strata + 1):
            units = design.units_in(k)
            a, b = plan.fold1[k - 1]
            nk = sizes[k - 1]
            nk1 = design.treated[k - 1]
            counts = {(1, 1): a, (1, 0): b, (2, 1): nk1 - a, (2, 0): nk - nk1 - b}
            for q in (1, 2):
                for zarm in (0, 1):
                    out[q - 1, units, zarm] = counts[(q, zarm)] / nk
        return out
    if isinstance(plan, SplitByStratum):
        if isinstance(design, MatchedPairs):
            n_groups = design.n_pairs
            for q, kq in ((1, plan.k_fold1), (2, n_groups - plan.k_fold1)):
                out[q - 1, :, :] = (kq / n_groups) * 0.5
            return out
        n_groups = design.n_strata
        sizes = design.stratum_sizes
        for k in range(1, n_groups + 1):
            units = design.units_in(k)
            p1 = design.treated[k - 1] / sizes[k - 1]
            for q, kq in ((1, plan.k_fold1), (2, n_groups - plan.k_fold1)):
                out[q - 1, units, 1] = (kq / n_groups) * p1
                out[q - 1, units, 0] = (kq / n_groups) * (1.0 - p1)
        return out
    if isinstance(plan, Hybrid):
        by_t = {k: (a, b) for k, a, b in plan.by_treatment}
        whole = _hybrid_whole(plan, design)
        w = len(whole)
        sizes = design.stratum_sizes
        for k in range(1, design.n_strata + 1):
            units = design.units_in(k)
            nk = sizes[k - 1]
            nk1 = design.treated[k - 1]
            if k in by_t:
                a, b = by_t[k]
                counts = {(1, 1): a, (1, 0): b, (2, 1): nk1 - a, (2, 0): nk - nk1 - b}
                for q in (1, 2):
                    for zarm in (0, 1):
                        out[q - 1, units, zarm] = counts[(q, zarm)] / nk
            else:
                p1 = nk1 / nk
                for q, wq in ((1, plan.whole_fold1), (2, w - plan.whole_fold1)):
                    out[q - 1, units, 1] = (wq / w) * p1
                    out[q - 1, units, 0] = (wq / w) * (1.0 - p1)
        return out
    raise PlanIncompatible(f"unsupported plan: {plan!r}")


def check_positivity(result: SplitResult) -> bool:
    """True iff every conditional treatment probability lies strictly in (0,1)."""
    cp = result.cond_prob
    return bool(np.all(cp > 0.0) and np.all(cp < 1.0))


def is_optimal_plan(plan: SplitPlan, design: Design) -> bool:
    """True iff the split leaves every unit's treatment probability unchanged.

    Splits with this property attain the oracle-adjusted variance; the
    comparison is exact integer arithmetic on the fold counts.
    """
    validate_plan(plan, design)
    if isinstance(plan, (BernoulliSplit, SplitByStratum)):
        return True
    if isinstance(plan, SplitByTreatmentCRE):
        a, b = plan.n1_fold1, plan.n0_fold1
        return a * design.n == design.n1 * (a + b)
    if isinstance(plan, SplitByTreatmentSRE):
        sizes = design.stratum_sizes
        return all(
            a * sizes[k - 1] == design.treated[k - 1] * (a + b)
            for k, (a, b) in enumerate(plan.fold1, start=1)
        )
    if isinstance(plan, Hybrid):
        sizes = design.stratum_sizes
        return all(
            a * sizes[k - 1] == design.treated[k - 1] * (a + b)
            for k, a, b in plan.by_treatment
        )
    raise PlanIncompatible(f"unsupported plan: {plan!r}")


def _balanced_arm_split(n1: int, n0: int) -> tuple:
    """Most balanced fold-1 arm sizes; prefers an exactly optimal fraction.

    Searches all admissible (a, b) for one with a/(a+b) equal to the
    design fraction n1/n; among those, picks the most balanced fold
    sizes, breaking ties toward a larger fold 1. Falls back to the
    rounded-up half split when no admissible pair is exactly optimal.
    """
    n = n1 + n0
    candidates = [
        (a, b)
        for a in range(1, n1)
        for b in range(1, n0)
        if a * n == n1 * (a + b)
    ]
    if candidates:
        return min(candidates, key=lambda ab: (abs(2 * (ab[0] + ab[1]) - n), -(ab[0] + ab[1])))
    return (math.ceil(n1 / 2), math.ceil(n0 / 2))


def default_plan(design: Design) -> SplitPlan:
    """The plan a user gets when they do not choose one.

    Bernoulli designs split with a fair coin; complete randomizations
    split each arm as evenly as possible while keeping the fold treated
    fractions equal to the design's when achievable; stratified designs
    split by treatment where strata are large enough, wholesale where
    they are not; matched pairs always split wholesale.
    """
    if isinstance(design, Bernoulli):
        return BernoulliSplit(pi=0.5)
    if isinstance(design, CompleteRandomization):
        if min(design.n1, design.n0) < 2:
            raise PlanIncompatible("both arms need at least 2 units to split by treatment")
        a, b = _balanced_arm_split(design.n1, design.n0)
        return SplitByTreatmentCRE(n1_fold1=a, n0_fold1=b)
    if isinstance(design, MatchedPairs):
        if design.n_pairs < 2:
            raise PlanIncompatible("need at least 2 pairs to split")
        return SplitByStratum(k_fold1=math.ceil(design.n_pairs / 2))
    if isinstance(design, Stratified):
        sizes = design.stratum_sizes
        large = [
            k
            for k in range(1, design.n_strata + 1)
            if min(design.treated[k - 1], sizes[k - 1] - design.treated[k - 1]) >= 2
        ]
        small = [k for k in range(1, design.n_strata + 1) if k not in large]
        if not small:
            fold1 = tuple(
                _balanced_arm_split(design.treated[k - 1], sizes[k - 1] - design.treated[k - 1])
                for k in range(1, design.n_strata + 1)
            )
            return SplitByTreatmentSRE(fold1=fold1)
        if not large:
            if design.n_strata < 2:
                raise PlanIncompatible("a single small stratum cannot be split")
            return SplitByStratum(k_fold1=math.ceil(design.n_strata / 2))
        by_t = tuple(
            (k, *_balanced_arm_split(design.treated[k - 1], sizes[k - 1] - design.treated[k - 1]))
            for k in large
        )
        return Hybrid(by_treatment=by_t, whole_fold1=math.ceil(len(small) / 2))
    raise PlanIncompatible(f"unsupported design: {design!r}")
