import math

import numpy as np
import pytest

from semibandit.diagnostics import (CoverageReport, check_estimator_confidence,
                                    check_matrix_freedman, check_potential_and_det,
                                    check_self_normalized_general,
                                    check_self_normalized_symmetric, ols_bias_demo,
                                    ols_closed_form, potential_bound, wilson_interval)
from semibandit.environments import EnvKind


def test_wilson_matches_closed_form():
    k, n, z = 7, 200, 1.959963984540054
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    lo, hi = wilson_interval(k, n)
    assert lo == pytest.approx(centre - half, rel=1e-9)
    assert hi == pytest.approx(centre + half, rel=1e-9)


def test_coverage_report_within():
    assert CoverageReport("x", 1000, 50, 0.1).within()
    assert not CoverageReport("x", 1000, 120, 0.1).within()
    with pytest.raises(ValueError):
        CoverageReport("x", 5, 6, 0.1)


def test_estimator_confidence_small(rng):
    rep = check_estimator_confidence(2, 2, 500, 0.1, EnvKind.CONFOUNDED_SPHERE, 200, rng)
    assert rep.empirical_rate <= 0.1


def test_estimator_confidence_t_zero(rng):
    rep = check_estimator_confidence(3, 3, 0, 0.1, EnvKind.CONFOUNDED_SPHERE, 20, rng)
    assert rep.violations == 0
    assert rep.extra["worst_ratio"] <= 1


def test_estimator_confidence_negative_control(rng):
    rep = check_estimator_confidence(2, 2, 300, 0.1, EnvKind.CONFOUNDED_SPHERE, 20, rng,
                                     threshold_scale=0.01)
    assert rep.violations >= 1


def test_self_normalized_zeta_zero(rng):
    for rep in check_self_normalized_symmetric(2, 50, trials=100, rng=rng, zeta_zero=True):
        assert rep.violations == 0
    for rep in check_self_normalized_general(2, 50, trials=100, rng=rng, zeta_zero=True):
        assert rep.violations == 0


def test_self_normalized_symmetric_scalar(rng):
    (rep,) = check_self_normalized_symmetric(1, 100, trials=10_000, rng=rng, deltas=(0.1,))
    assert rep.empirical_rate <= 0.1
    (neg,) = check_self_normalized_symmetric(1, 100, trials=200, rng=rng, deltas=(0.1,),
                                             threshold_scale=0.01)
    assert neg.violations >= 1


def test_self_normalized_shifted_runs(rng):
    (rep,) = check_self_normalized_symmetric(2, 100, trials=200, rng=rng, deltas=(0.1,), shift=0.5)
    assert rep.name.endswith("shifted") and 0 <= rep.empirical_rate <= 1


@pytest.mark.parametrize("d", [1, 2])
def test_self_normalized_general(d, rng):
    reps = check_self_normalized_general(d, 100, trials=1000, rng=rng)
    for rep in reps:
        assert rep.empirical_rate <= rep.delta


def test_matrix_freedman(rng):
    assert check_matrix_freedman(3, 1000, 0.1, 100, rng).empirical_rate <= 0.1
    assert check_matrix_freedman(3, 50, 0.1, 10, rng, zero=True).violations == 0
    assert check_matrix_freedman(3, 5, 0.1, 50, rng, additive=False).violations >= 1


def test_potential_examples():
    audit = check_potential_and_det(np.array([[1.0]]), 1.0)
    assert audit.potential == pytest.approx(1 / math.sqrt(2))
    assert audit.potential_bound == pytest.approx(math.sqrt(2 * math.log(2)))
    assert audit.ok
    assert check_potential_and_det(np.zeros((30, 3)), 2.0).potential == 0.0


def test_potential_flags_violation():
    # norms far above the admissible range break the determinant bound
    audit = check_potential_and_det(np.full((10, 2), 50.0), 1.0)
    assert not audit.ok and audit.dump


def test_potential_matches_incremental(rng):
    from semibandit.estimation import RegularizedGram
    Z = rng.uniform(-1, 1, (300, 3)) / 2
    g = RegularizedGram(3, 1.5)
    total = 0.0
    for z in Z:
        g.add(z)
        total += math.sqrt(z @ g.gram_inv @ z)
    assert check_potential_and_det(Z, 1.5).potential == pytest.approx(total, rel=1e-10)
    assert total <= potential_bound(3, 300, 1.5)


@pytest.mark.parametrize("alpha, want", [(0.0, (1, -5)), (1.0, (1, -1)), (0.5, (2 / 3, -1))])
def test_ols_closed_form(alpha, want):
    np.testing.assert_allclose(ols_closed_form(alpha), want, atol=1e-14)


def test_ols_closed_form_signs():
    a = np.linspace(0, 1, 1001)
    assert np.all(-4 * a**2 + 12 * a + 1 > 0) and np.all(4 * a**2 - 12 * a - 1 < 0)
    assert all(ols_closed_form(x)[1] < 0 for x in a)
    with pytest.raises(ValueError):
        ols_closed_form(1.5)


def test_ols_bias_demo():
    rep = ols_bias_demo(10_000, np.random.default_rng(0))
    assert rep["alpha"] == 0.5
    assert abs(rep["ridge_w"][1] + 1) <= 1e-3
    assert rep["oful_regret_after_burn_in"] >= rep["linear_regret_floor"]
    assert rep["bose_theta"][1] > 0


def test_ols_bias_demo_minimal():
    rep = ols_bias_demo(2)
    assert np.all(np.isfinite(rep["ridge_w"]))
    with pytest.raises(ValueError):
        ols_bias_demo(3)
