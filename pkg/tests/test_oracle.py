import numpy as np
import pytest

from condcf import (
    Bernoulli,
    BernoulliSplit,
    CompleteRandomization,
    InsufficientReplication,
    MatchedPairs,
    SplitByStratum,
    SplitByTreatmentCRE,
    SplitByTreatmentSRE,
    Stratified,
    SupportTooLarge,
    predictor_from_functions,
)
from condcf.oracle import (
    Kahan,
    verify_conditional_independence,
    verify_gram_expectation,
    verify_unbiasedness,
    verify_variance_identity_cre,
    verify_variance_ordering,
)
from condcf.population import Population
from condcf.splitters import SplitResult


def _pop(design, seed=0, with_x=True):
    rng = np.random.default_rng(seed)
    strata = getattr(design, "strata", getattr(design, "pairs", None))
    return Population(
        y1=rng.normal(size=design.n),
        y0=rng.normal(size=design.n),
        x=rng.normal(size=(design.n, 1)) if with_x else np.zeros((design.n, 0)),
        strata=strata,
    )


class NaiveFixedSplit:
    """The classic i.i.d.-style split: a fixed half partition that ignores
    the design's dependence structure. Under complete randomization the two
    folds' assignments stay dependent given this split."""

    def enumerate_splits(self, design, z):
        n = design.n
        m = np.array([1] * (n // 2) + [2] * (n - n // 2), dtype=np.int8)
        yield m, 1.0

    def inclusion_probs(self, design):
        n = design.n
        p1 = design.n1 / design.n
        m = np.array([1] * (n // 2) + [2] * (n - n // 2))
        out = np.empty((2, n, 2))
        for q in (1, 2):
            out[q - 1, :, 1] = np.where(m == q, p1, 0.0)
            out[q - 1, :, 0] = np.where(m == q, 1 - p1, 0.0)
        return np.clip(out, 1e-12, None)

    def split_result(self, design, z, membership):
        n = design.n
        p1 = np.full(n, design.n1 / design.n)
        return SplitResult(
            membership=membership,
            fold_designs=(
                CompleteRandomization(n // 2, design.n1 // 2),
                CompleteRandomization(n - n // 2, design.n1 - design.n1 // 2),
            ),
            cond_prob=np.column_stack([1 - p1, p1]),
            plan=self,
            design=design,
        )


CASES = [
    (Bernoulli(4, 0.5), BernoulliSplit(0.5)),
    (Bernoulli(5, 0.3), BernoulliSplit(0.4)),
    (CompleteRandomization(6, 3), SplitByTreatmentCRE(1, 2)),
    (CompleteRandomization(6, 3), SplitByTreatmentCRE(1, 1)),
    (Stratified(strata=(1, 1, 1, 1, 2, 2, 2, 2), treated=(2, 2)),
     SplitByTreatmentSRE(fold1=((1, 1), (1, 1)))),
    (Stratified(strata=(1, 1, 1, 2, 2, 2), treated=(1, 1)), SplitByStratum(1)),
    (MatchedPairs(pairs=(1, 1, 2, 2, 3, 3, 4, 4)), SplitByStratum(2)),
]


@pytest.mark.parametrize("design,plan", CASES)
@pytest.mark.parametrize("predictor", ["zero", "mean", "adversarial"])
def test_unbiasedness_across_designs_and_predictors(design, plan, predictor):
    report = verify_unbiasedness(_pop(design), design, plan, predictor)
    assert report.passed, report.values
    assert report.max_deviation <= 1e-10


@pytest.mark.parametrize("design,plan", CASES)
def test_conditional_independence_and_fold_laws(design, plan):
    report = verify_conditional_independence(design, plan)
    assert report.passed
    assert report.max_deviation <= 1e-12


def test_naive_split_breaks_unbiasedness_with_data_dependent_fit():
    design = CompleteRandomization(4, 2)
    pop = Population(
        y1=np.array([1.0, 2.0, 3.0, 4.0]), y0=np.zeros(4), x=np.zeros((4, 1))
    )
    biased = verify_unbiasedness(pop, design, NaiveFixedSplit(), "mean")
    assert not biased.passed
    assert biased.max_deviation > 1e-6
    # with a data-free predictor the same broken split is still unbiased
    assert verify_unbiasedness(pop, design, NaiveFixedSplit(), "zero").passed
    ci = verify_conditional_independence(design, NaiveFixedSplit())
    assert not ci.passed


def test_variance_ordering_equality_only_for_optimal_plans():
    design = CompleteRandomization(8, 4)
    pop = _pop(design, seed=3)
    f_star = predictor_from_functions(lambda x: 0.7 * x[:, 0], lambda x: 0.1 * x[:, 0])
    plans = [SplitByTreatmentCRE(2, 2), SplitByTreatmentCRE(1, 3)]
    report = verify_variance_ordering(pop, design, plans, f_star)
    assert report.passed, report.values
    assert report.values["optimal_plan_0"] is True
    assert report.values["optimal_plan_1"] is False
    assert report.values["var_plan_0"] == pytest.approx(
        report.values["var_adjusted"], abs=1e-10
    )
    assert report.values["var_plan_1"] > report.values["var_adjusted"] + 1e-10


def test_variance_ordering_zero_predictor_matches_ht():
    design = CompleteRandomization(6, 3)
    pop = _pop(design, seed=4)
    zero = predictor_from_functions(
        lambda x: np.zeros(x.shape[0]), lambda x: np.zeros(x.shape[0])
    )
    report = verify_variance_ordering(pop, design, [SplitByTreatmentCRE(1, 1)], zero)
    assert report.passed


def test_variance_identity_cre():
    design = CompleteRandomization(8, 4)
    pop = _pop(design, seed=5)
    f_star = predictor_from_functions(lambda x: 0.5 * x[:, 0], lambda x: -0.3 * x[:, 0])
    report = verify_variance_identity_cre(pop, design, SplitByTreatmentCRE(2, 2), f_star)
    assert report.passed, report.values
    assert report.max_deviation <= 1e-9


def test_variance_identity_zero_when_effect_constant():
    design = CompleteRandomization(8, 4)
    rng = np.random.default_rng(6)
    y0 = rng.normal(size=8)
    pop = Population(y1=y0 + 2.0, y0=y0, x=np.zeros((8, 1)))
    zero = predictor_from_functions(
        lambda x: np.zeros(x.shape[0]), lambda x: np.zeros(x.shape[0])
    )
    report = verify_variance_identity_cre(pop, design, SplitByTreatmentCRE(2, 2), zero)
    assert report.passed
    assert report.values["rhs"] == pytest.approx(0.0, abs=1e-12)
    assert abs(report.values["lhs"]) <= 1e-9


def test_variance_identity_scales_quadratically():
    design = CompleteRandomization(8, 4)
    pop = _pop(design, seed=7)
    zero = predictor_from_functions(
        lambda x: np.zeros(x.shape[0]), lambda x: np.zeros(x.shape[0])
    )
    base = verify_variance_identity_cre(pop, design, SplitByTreatmentCRE(2, 2), zero)
    scaled_pop = Population(y1=2.0 * pop.y1, y0=2.0 * pop.y0, x=pop.x)
    scaled = verify_variance_identity_cre(
        scaled_pop, design, SplitByTreatmentCRE(2, 2), zero
    )
    assert scaled.values["lhs"] == pytest.approx(4.0 * base.values["lhs"], rel=1e-9)
    assert scaled.values["rhs"] == pytest.approx(4.0 * base.values["rhs"], rel=1e-12)


def test_variance_identity_requires_two_per_cell():
    design = CompleteRandomization(6, 3)
    pop = _pop(design, seed=8)
    zero = predictor_from_functions(
        lambda x: np.zeros(x.shape[0]), lambda x: np.zeros(x.shape[0])
    )
    with pytest.raises(InsufficientReplication):
        verify_variance_identity_cre(pop, design, SplitByTreatmentCRE(1, 2), zero)


def test_gram_expectation_unbiased():
    design = Stratified(strata=(1,) * 8 + (2,) * 8, treated=(4, 4))
    rng = np.random.default_rng(9)
    pop = Population(
        y1=rng.normal(size=16),
        y0=rng.normal(size=16),
        x=rng.normal(size=(16, 2)),
        strata=design.strata,
    )
    plan = SplitByTreatmentSRE(fold1=((2, 2), (2, 2)))
    for fold in (1, 2):
        for arm in (0, 1):
            report = verify_gram_expectation(pop, design, plan, fold, arm)
            assert report.passed, (fold, arm, report.max_deviation)
            assert report.max_deviation <= 1e-10


def test_support_cap_raises():
    design = Bernoulli(12, 0.5)
    with pytest.raises(SupportTooLarge):
        verify_unbiasedness(_pop(design), design, BernoulliSplit(0.5), "zero", cap=1000)


def test_kahan_handles_many_small_terms():
    acc = Kahan()
    for _ in range(10**6):
        acc.add(1e-6)
    assert acc.total == pytest.approx(1.0, abs=1e-12)


def test_reports_are_reproducible():
    design = CompleteRandomization(6, 3)
    plan = SplitByTreatmentCRE(1, 2)
    pop = _pop(design, seed=10)
    a = verify_unbiasedness(pop, design, plan, "mean")
    b = verify_unbiasedness(pop, design, plan, "mean")
    assert a == b
