import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dscovr.data import make_problem, synth_problem
from dscovr.errors import DegenerateDataError, InfeasiblePlanError
from dscovr.stepsizes import (
    SamplingScheme,
    accel_delta,
    accel_plan,
    accel_stages,
    condition_numbers,
    gamma_delta,
    gamma_delta_uniform,
    gamma_saga,
    gamma_svrg,
    plan_theorem1,
    practical_plan,
    stepsizes_saga,
    stepsizes_theorem1,
    stepsizes_theorem2,
)

U22 = SamplingScheme.uniform(2, 2)


def test_f1_condition_numbers(f1):
    kn = condition_numbers(f1)
    assert kn.kappa_rand == pytest.approx(32.0)
    assert kn.kappa_dprime == pytest.approx(15.0)
    assert kn.kappa_prime == pytest.approx(25.0)
    assert kn.kappa_bat == pytest.approx((15 + math.sqrt(221)) / 2, rel=1e-8)


def test_f1_theorem1(f1):
    assert gamma_svrg(f1, U22) == pytest.approx(290.0)
    plan = plan_theorem1(f1, U22)
    assert plan.sigma == pytest.approx([1 / 288, 1 / 288])
    assert plan.tau == pytest.approx([1 / 288, 1 / 288])
    assert plan.M == math.ceil(math.log(3) * 290)
    with pytest.raises(InfeasiblePlanError):
        stepsizes_theorem1(2.0, U22, f1)


def test_f1_theorem2(f1):
    plan = stepsizes_theorem2(f1, U22)
    assert plan.Lambda == 16.0
    assert plan.Gamma == pytest.approx(1154.0)
    t1 = stepsizes_theorem1(plan.Gamma, U22, f1)
    assert plan.sigma == pytest.approx(2 * t1.sigma)
    assert plan.tau == pytest.approx(2 * t1.tau)


def test_f1_saga(f1):
    plan = stepsizes_saga(f1, U22)
    assert plan.Gamma == pytest.approx(290.0)
    assert plan.M == math.ceil(3 * 290 * math.log(40 / 3))
    single = make_problem(np.array([[0.0]]), np.array([0.0]), 1, 1, "quadratic", 1.0)
    assert gamma_saga(single, SamplingScheme.uniform(1, 1)) >= 1.0


def test_zero_matrix_gamma():
    pr = make_problem(np.zeros((3, 4)), np.zeros(3), 3, 4, "quadratic", 1.0)
    assert gamma_svrg(pr, SamplingScheme.uniform(3, 4)) == 4.0
    sch = SamplingScheme.frobenius(pr.data)
    assert np.allclose(sch.p, 1 / 3) and np.all(sch.q > 0)


def test_frobenius_scheme_closed_form():
    pr = synth_problem(60, 12, 3, 4, "quadratic", 0.05, seed=2)
    sch = SamplingScheme.frobenius(pr.data)
    kn = condition_numbers(pr)
    expect = (1 / min(sch.p.min(), sch.q.min())) * (1 + 4.5 * kn.kappa_dprime)
    assert gamma_svrg(pr, sch, "frobenius") == pytest.approx(expect, rel=1e-12)


def test_uniform_saga_bound():
    pr = synth_problem(60, 12, 3, 4, "smoothed_hinge", 0.05, seed=2)
    kn = condition_numbers(pr)
    assert gamma_saga(pr, SamplingScheme.uniform(3, 4)) <= 4 * (1 + 4.5 * kn.kappa_rand) + 12 + 1e-9


def test_accel_constants(f1):
    assert accel_delta(32.0, 2) == pytest.approx(math.sqrt(32 / 3) - 1)
    assert accel_stages(3.0) == 11
    assert accel_delta(3.0, 2) == 0.0
    plan = accel_plan(f1, U22, "svrg")
    assert plan.delta == pytest.approx(2.2659863, rel=1e-6)
    assert plan.S == 10 and plan.M == 32
    assert accel_plan(f1, U22, "saga").M == 377
    # balanced delta: kappa_rand = (1 + delta)^2 (1 + m)
    for m, n in [(2, 3), (4, 5), (8, 10)]:
        d = 2.5
        assert gamma_delta_uniform((1 + d) ** 2 * (1 + m), d, m, n) == pytest.approx(5.5 * (m + 1) * n)


def test_accel_single_round():
    pr = synth_problem(40, 6, 2, 3, "quadratic", 10.0, seed=0)
    plan = accel_plan(pr, SamplingScheme.uniform(2, 3))
    assert plan.delta == 0.0 and plan.single_round


def test_gamma_delta_bracketed_by_uniform_closed_form():
    # the closed form adds the 1/(pq) term where the exact value takes a max
    pr = synth_problem(60, 12, 3, 4, "quadratic", 0.01, seed=5)
    sch = SamplingScheme.uniform(3, 4)
    kn = condition_numbers(pr)
    for d in (0.0, 1.0, 3.0):
        exact = gamma_delta(pr, sch, d, "saga")
        svrg_part = 4 * (1 + 4.5 * kn.kappa_rand / (1 + d) ** 2)
        assert max(svrg_part, 12) == pytest.approx(exact, rel=1e-12)
        assert exact <= gamma_delta_uniform(kn.kappa_rand, d, 3, 4)


def test_practical_plan():
    pr = synth_problem(50, 10, 2, 5, "logistic", 0.01, seed=1)
    R = pr.data.row_norms().max()
    plan = practical_plan(pr, 1 / 9, 1 / 9)
    assert plan.sigma == pytest.approx(np.full(2, pr.lam * 2 / (9 * R * R * 50)))
    assert plan.tau == pytest.approx(np.full(5, pr.nu / (9 * R * R)))
    # unit rows: tau = eta_p * nu
    assert practical_plan(pr, 20, 20).tau == pytest.approx(np.full(5, 20 * 4.0))
    zero = make_problem(np.zeros((2, 3)), np.ones(2), 1, 3, "quadratic", 1.0)
    with pytest.raises(DegenerateDataError):
        practical_plan(zero)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), lam=st.floats(1e-3, 1.0),
       loss=st.sampled_from(["quadratic", "smoothed_hinge", "logistic"]))
def test_plans_satisfy_their_defining_inequalities(seed, lam, loss):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 4)), int(rng.integers(1, 5))
    pr = synth_problem(6 * m, 3 * n, m, n, loss, lam, seed=seed)
    kn = condition_numbers(pr)
    assert kn.kappa_bat <= min(kn.kappa_rand, kn.kappa_prime, kn.kappa_dprime) * (1 + 1e-9)
    for sch in (SamplingScheme.uniform(m, n), SamplingScheme.frobenius(pr.data)):
        for plan in (plan_theorem1(pr, sch), stepsizes_theorem2(pr, sch), stepsizes_saga(pr, sch),
                     accel_plan(pr, sch, "saga")):
            assert np.all(sch.p * plan.Gamma > 1) and np.all(sch.q * plan.Gamma > 1)
            assert np.all(plan.sigma > 0) and np.all(plan.tau > 0)
        # independent recomputation of the spectral-form maximum
        sq = pr.data.spectral ** 2
        lg = pr.lam * pr.gamma[:, None]
        P, Q = sch.p[:, None], sch.q[None, :]
        ref = max((1 / P * (1 + 9 * sq / (2 * Q * lg))).max(), (1 / Q * (1 + 9 * n * sq / (2 * m * P * lg))).max())
        assert gamma_svrg(pr, sch) == pytest.approx(ref, rel=1e-12)
        assert gamma_saga(pr, sch) >= 1 / (sch.p[:, None] * sch.q[None, :]).min()


def test_kappa_dprime_row_norm_bound():
    pr = synth_problem(80, 10, 4, 2, "smoothed_hinge", 0.1, seed=3)
    kn = condition_numbers(pr)
    assert kn.kappa_dprime <= 1.0 / (pr.lam * pr.nu) * (1 + 1e-12)
