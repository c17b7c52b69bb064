import math

import numpy as np
import pytest
from scipy import stats

from condcf import (
    Bernoulli,
    CompleteRandomization,
    DataError,
    MatchedPairs,
    Stratified,
    SupportTooLarge,
    assignment_prob,
    enumerate_assignments,
    sample_assignment,
    treatment_prob,
)
from condcf.designs import from_json


def test_cre_sampler_respects_count():
    rng = np.random.default_rng(0)
    d = CompleteRandomization(4, 2)
    for _ in range(50):
        z = sample_assignment(d, rng)
        assert int(z.sum()) == 2


def test_mpe_sampler_one_treated_per_pair():
    rng = np.random.default_rng(1)
    d = MatchedPairs(pairs=(1, 1, 2, 2, 3, 3))
    for _ in range(50):
        z = sample_assignment(d, rng)
        for k in (1, 2, 3):
            assert int(z[d.units_in(k)].sum()) == 1


def test_bre_law_of_large_numbers():
    rng = np.random.default_rng(2)
    d = Bernoulli(n=10**5, r1=0.3)
    means = [sample_assignment(d, rng).mean() for _ in range(200)]
    assert abs(np.mean(means) - 0.3) < 0.01


def test_treatment_prob_examples():
    assert treatment_prob(CompleteRandomization(10, 4), 0, 1) == pytest.approx(0.4)
    d = MatchedPairs(pairs=(1, 1, 2, 2))
    assert treatment_prob(d, 2, 1) == 0.5
    sre = Stratified(strata=(1,) * 5 + (2,) * 4, treated=(2, 2))
    assert treatment_prob(sre, 0, 0) == pytest.approx(0.6)


def test_assignment_prob_cre():
    d = CompleteRandomization(4, 2)
    assert assignment_prob(d, [1, 1, 0, 0]) == pytest.approx(1 / 6, abs=1e-15)
    assert assignment_prob(d, [1, 1, 1, 0]) == 0.0


def test_assignment_prob_sre_product():
    sre = Stratified(strata=(1, 1, 2, 2), treated=(1, 1))
    assert assignment_prob(sre, [1, 0, 0, 1]) == pytest.approx(0.25, abs=1e-15)


def test_enumeration_counts_and_probs():
    d = CompleteRandomization(4, 2)
    support = list(enumerate_assignments(d))
    assert len(support) == 6
    assert all(p == pytest.approx(1 / 6, abs=1e-15) for _, p in support)

    b = Bernoulli(2, 0.5)
    support = list(enumerate_assignments(b))
    assert len(support) == 4
    assert all(p == pytest.approx(0.25) for _, p in support)

    m = MatchedPairs(pairs=(1, 1, 2, 2))
    support = list(enumerate_assignments(m))
    assert len(support) == 4
    assert all(p == pytest.approx(0.25) for _, p in support)


@pytest.mark.parametrize(
    "design",
    [
        Bernoulli(5, 0.3),
        CompleteRandomization(6, 2),
        Stratified(strata=(1, 1, 1, 2, 2, 2, 2), treated=(1, 2)),
        MatchedPairs(pairs=(1, 1, 2, 2, 3, 3)),
    ],
)
def test_enumeration_probabilities_sum_to_one(design):
    total = math.fsum(p for _, p in enumerate_assignments(design))
    assert abs(total - 1.0) <= 1e-12


@pytest.mark.parametrize(
    "design",
    [
        Bernoulli(6, 0.4),
        CompleteRandomization(8, 3),
        Stratified(strata=(1, 1, 1, 1, 2, 2, 2), treated=(2, 1)),
        MatchedPairs(pairs=(1, 1, 2, 2, 3, 3, 4, 4)),
    ],
)
def test_marginal_matches_enumeration(design):
    for i in range(design.n):
        marginal = math.fsum(
            p for z, p in enumerate_assignments(design) if z[i] == 1
        )
        assert abs(marginal - treatment_prob(design, i, 1)) <= 1e-12


def test_enumeration_matches_assignment_prob():
    design = Stratified(strata=(1, 1, 1, 2, 2), treated=(1, 1))
    for z, p in enumerate_assignments(design):
        assert assignment_prob(design, z) == pytest.approx(p, abs=1e-15)


def test_sampler_goodness_of_fit_cre():
    rng = np.random.default_rng(42)
    d = CompleteRandomization(4, 2)
    support = {z.tobytes(): j for j, (z, _) in enumerate(enumerate_assignments(d))}
    counts = np.zeros(6)
    n_draws = 10**5
    for _ in range(n_draws):
        counts[support[sample_assignment(d, rng).tobytes()]] += 1
    _, pvalue = stats.chisquare(counts)
    assert pvalue > 0.001


def test_support_cap():
    with pytest.raises(SupportTooLarge):
        list(enumerate_assignments(Bernoulli(30, 0.5), cap=10**6))


def test_json_round_trip():
    for design in (
        Bernoulli(7, 0.25),
        CompleteRandomization(9, 4),
        Stratified(strata=(1, 1, 1, 2, 2), treated=(1, 1)),
        MatchedPairs(pairs=(1, 1, 2, 2)),
    ):
        assert from_json(design.to_json()) == design


def test_validation():
    with pytest.raises(DataError):
        Bernoulli(4, 1.0)
    with pytest.raises(DataError):
        CompleteRandomization(4, 4)
    with pytest.raises(DataError):
        Stratified(strata=(1, 1, 2, 2), treated=(2, 1))
    with pytest.raises(DataError):
        MatchedPairs(pairs=(1, 1, 2))


def test_mpe_reduces_to_sre():
    m = MatchedPairs(pairs=(1, 1, 2, 2))
    s = m.as_stratified()
    for z, p in enumerate_assignments(m):
        assert assignment_prob(s, z) == pytest.approx(p, abs=1e-15)
